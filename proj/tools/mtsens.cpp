// mtsens command-line tool. Exit codes: 0 success, 2 configuration error,
// 3 numerical infeasibility, 4 I/O error.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtsens/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

template <class F>
int guarded(F&& f) {
  try {
    f();
    return kExitOk;
  } catch (const mtsens::Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << " (R2_min = " << e.r2_min() << ")\n";
    return kExitInfeasible;
  } catch (const mtsens::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const mtsens::Incompatible& e) {
    std::cerr << "incompatible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const mtsens::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const mtsens::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = mtsens::cli;
  CLI::App app{"Sensitivity analysis for multi-treatment causal effects under latent confounding"};
  app.set_version_flag("--version", MTSENS_VERSION);
  app.set_config("--config", "", "TOML/INI file with option values");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  cli::SimulateConfig sim;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic dataset and its ground truth");
  s->add_option("--n", sim.n, "Rows")->check(CLI::PositiveNumber);
  s->add_option("--k", sim.k, "Treatments")->check(CLI::PositiveNumber);
  s->add_option("--m", sim.m, "Confounders")->check(CLI::PositiveNumber);
  s->add_option("--r2", sim.r2, "Target partial R^2 of the confounders");
  s->add_option("--variant", sim.variant, "null-effects | no-confounding | opposite-bias");
  s->add_option("--seed", sim.seed, "RNG seed");
  s->add_option("--sigma2-t-u", sim.sigma2_t_u, "Treatment noise variance");
  s->add_option("--signal-fraction", sim.signal_fraction, "Second-block signal share of treatment variance");
  s->add_option("--nc-r2-fraction", sim.nc_r2_fraction, "R2_min / r2 for a control on treatment 1");
  s->add_option("--loadings", sim.loadings, "JSON k x m loading matrix (custom pattern)");
  s->add_option("--sigma2-y-tu", sim.sigma2_y_tu, "Outcome noise variance for custom loadings");
  s->add_option("--out-dir", sim.out_dir, "Output directory");

  cli::ScreeConfig scr;
  std::string scree_outcome;
  auto* sc = app.add_subcommand("scree", "Eigenvalues of the treatment covariance");
  sc->add_option("--input", scr.input, "Treatment CSV")->required();
  sc->add_option("--outcome-col", scree_outcome, "Column to exclude");
  sc->add_flag("--standardize", scr.standardize, "Use the correlation matrix");
  sc->add_option("--out-dir", scr.out_dir, "Output directory");

  cli::BoundsConfig bnd;
  auto* b = app.add_subcommand("bounds", "Worst-case and negative-control effect intervals");
  b->add_option("--input", bnd.input, "Dataset CSV")->required();
  b->add_option("--outcome-col", bnd.outcome_col, "Outcome column name");
  b->add_option("--m", bnd.m, "Latent confounders")->check(CLI::PositiveNumber);
  b->add_option("--r2", bnd.r2, "Sensitivity grid value (repeatable)")->take_all();
  b->add_option("--contrasts", bnd.contrasts, "Contrast spec JSON");
  b->add_option("--nc-spec", bnd.nc_spec, "Negative-control spec JSON");
  b->add_option("--tol", bnd.tol, "Relative compatibility tolerance");
  b->add_flag("--standardize", bnd.standardize, "Fit the factor model on standardized treatments");
  b->add_option("--out-dir", bnd.out_dir, "Output directory");

  cli::SampleConfig smp;
  auto* p = app.add_subcommand("sample", "Posterior draws under a prior regime");
  p->add_option("--input", smp.input, "Dataset CSV")->required();
  p->add_option("--outcome-col", smp.outcome_col, "Outcome column name");
  p->add_option("--m", smp.m, "Latent confounders")->check(CLI::PositiveNumber);
  p->add_option("--regime", smp.regime, "flat-gamma | r2-uniform | negative-control | horseshoe | horseshoe-nc");
  p->add_option("--r2-upper", smp.r2_upper, "Upper end of the R^2 prior");
  p->add_option("--nc-spec", smp.nc_spec, "Negative-control spec JSON");
  p->add_option("--iters", smp.iters, "Iterations per chain")->check(CLI::PositiveNumber);
  p->add_option("--warmup", smp.warmup, "Warmup iterations per chain (default iters/2)");
  p->add_option("--chains", smp.chains, "Chains")->check(CLI::PositiveNumber);
  p->add_option("--seed", smp.seed, "RNG seed");
  p->add_option("--horseshoe-scale", smp.horseshoe_scale, "Global shrinkage scale");
  p->add_option("--horseshoe-slab", smp.horseshoe_slab, "Slab scale");
  p->add_flag("--horseshoe-fixed-scales", smp.horseshoe_fixed_scales, "Hold the global scale fixed and local scales at 1");
  p->add_option("--nonnull-fraction", smp.nonnull_fraction, "Expected share of nonzero effects");
  p->add_option("--tol", smp.tol, "Relative compatibility tolerance");
  p->add_flag("--standardize", smp.standardize, "Fit the factor model on standardized treatments");
  bool no_loglik = false;
  p->add_flag("--no-loglik", no_loglik, "Skip the pointwise log-likelihood output");
  p->add_option("--out-dir", smp.out_dir, "Output directory");

  cli::Prop1Config pr;
  auto* q = app.add_subcommand("prop1", "Bias draws under a uniform direction with a KS check");
  q->add_option("--input", pr.input, "Dataset CSV (canonical model when absent)");
  q->add_option("--outcome-col", pr.outcome_col, "Outcome column name");
  q->add_option("--m", pr.m, "Latent confounders")->check(CLI::PositiveNumber);
  q->add_option("--r2", pr.r2, "Sensitivity value");
  q->add_option("--draws", pr.draws, "Number of draws")->check(CLI::PositiveNumber);
  q->add_option("--contrasts", pr.contrasts, "Contrast spec JSON (first entry used)");
  q->add_option("--seed", pr.seed, "RNG seed");
  q->add_flag("--standardize", pr.standardize, "Fit the factor model on standardized treatments");
  q->add_option("--out-dir", pr.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (*s) {
    return guarded([&] {
      const auto r = cli::cmd_simulate(sim);
      std::cout << "wrote " << r.data_csv.string() << '\n';
    });
  }
  if (*sc) {
    if (!scree_outcome.empty()) scr.outcome_col = scree_outcome;
    return guarded([&] {
      const auto r = cli::cmd_scree(scr);
      for (mtsens::Index i = 0; i < r.eigenvalues.size(); ++i) {
        std::cout << (i + 1) << '\t' << r.eigenvalues(i) << '\t' << r.cumulative_fraction(i) << '\n';
      }
    });
  }
  if (*b) {
    return guarded([&] {
      const auto r = cli::cmd_bounds(bnd);
      if (r.nc) {
        std::cout << "R2_min = " << r.nc->r2_min << (r.nc->compatible ? "" : " (controls projected: incompatible)")
                  << '\n';
        if (!r.nc->compatible) std::cerr << "warning: negative controls incompatible, residual " << r.nc->residual_norm << '\n';
      }
      std::cout << r.robustness.dump(2) << '\n';
    });
  }
  if (*p) {
    smp.write_loglik = !no_loglik;
    return guarded([&] {
      const auto r = cli::cmd_sample(smp);
      for (const auto& ps : r.summary) {
        std::cout << ps.name << '\t' << ps.mean << '\t' << ps.q025 << '\t' << ps.q975 << (ps.significant ? "\t*" : "")
                  << '\n';
      }
    });
  }
  if (*q) {
    return guarded([&] {
      const auto r = cli::cmd_prop1(pr);
      std::cout << "KS D = " << r.ks.statistic << ", p = " << r.ks.p_value << '\n';
    });
  }
  return kExitConfig;
}
