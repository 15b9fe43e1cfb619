#pragma once

// Analyst workflows behind the command-line tool. Each command validates its
// configuration, runs the library, and writes its outputs plus a metadata
// record into the output directory.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include <boost/version.hpp>

#include "mtsens/bounds.hpp"
#include "mtsens/errors.hpp"
#include "mtsens/factor_fit.hpp"
#include "mtsens/io.hpp"
#include "mtsens/posterior.hpp"
#include "mtsens/prior_geometry.hpp"
#include "mtsens/rng.hpp"
#include "mtsens/sim.hpp"
#include "mtsens/stats.hpp"

#ifndef MTSENS_VERSION
#define MTSENS_VERSION "0.1.0"
#endif

namespace mtsens::cli {

namespace fs = std::filesystem;
using io::json;

inline constexpr const char* kOutDirEnv = "MTSENS_OUT_DIR";

/// Output directory used when none is given on the command line.
inline fs::path default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return (env && *env) ? fs::path(env) : fs::path("mtsens-out");
}

inline std::vector<double> default_r2_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

inline json metadata(const std::string& command, const json& config, const json& seeds) {
  return json{{"command", command},
              {"version", MTSENS_VERSION},
              {"config", config},
              {"seeds", seeds},
              {"rng", RngStream::kAlgorithm},
              {"libraries",
               {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"boost", BOOST_LIB_VERSION}}}};
}

inline void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

inline json opt_json(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }
template <class T>
inline json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---------------------------------------------------------------- simulate

struct SimulateConfig {
  Index n = 1000;
  Index k = 10;
  Index m = 2;
  double r2 = 0.5;
  std::string variant = "null-effects";
  std::uint64_t seed = 1;
  double sigma2_t_u = 1.0;
  double signal_fraction = 0.5;
  double nc_r2_fraction = 2.0 / 3.0;
  std::optional<fs::path> loadings;  // JSON k x m matrix; switches to custom loadings
  double sigma2_y_tu = 1.0;
  fs::path out_dir = default_out_dir();

  DGPConfig to_dgp() const {
    DGPConfig c;
    c.n = n;
    c.k = k;
    c.m = m;
    c.r2_target = r2;
    c.variant = variant_from_string(variant);
    c.seed = seed;
    c.sigma2_t_u = sigma2_t_u;
    c.signal_fraction = signal_fraction;
    c.nc_r2_fraction = nc_r2_fraction;
    c.sigma2_y_tu = sigma2_y_tu;
    if (loadings) {
      const json j = io::read_json_file(*loadings);
      const auto rows = j.get<std::vector<std::vector<double>>>();
      if (static_cast<Index>(rows.size()) != k) throw DimensionMismatch("loadings must have k rows");
      MatrixXd b(k, m);
      for (Index i = 0; i < k; ++i) {
        if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != m) {
          throw DimensionMismatch("loadings must have m columns");
        }
        for (Index j2 = 0; j2 < m; ++j2) b(i, j2) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j2)];
      }
      c.loading_pattern = LoadingPattern::Custom;
      c.custom_loadings = b;
    }
    c.validate();
    return c;
  }

  json to_json() const {
    return {{"n", n}, {"k", k}, {"m", m}, {"r2", r2}, {"variant", variant}, {"seed", seed},
            {"sigma2_t_u", sigma2_t_u}, {"signal_fraction", signal_fraction}, {"nc_r2_fraction", nc_r2_fraction},
            {"loadings", opt_json(loadings)}, {"sigma2_y_tu", sigma2_y_tu}, {"out_dir", out_dir.string()}};
  }
};

struct SimulateResult {
  SimulatedData data;
  fs::path data_csv;
};

inline SimulateResult cmd_simulate(const SimulateConfig& cfg) {
  const DGPConfig dgp = cfg.to_dgp();
  SimulateResult r;
  r.data = generate(dgp);
  r.data_csv = cfg.out_dir / "data.csv";
  io::write_atomic(r.data_csv, io::dataset_csv(r.data.dataset));
  write_json(cfg.out_dir / "truth.json", io::truth_json(r.data.truth));
  write_json(cfg.out_dir / "metadata.json", metadata("simulate", cfg.to_json(), {{"data", cfg.seed}}));
  return r;
}

// ------------------------------------------------------------------- scree

struct ScreeConfig {
  fs::path input;
  std::optional<std::string> outcome_col;  // dropped from the treatment matrix when present
  bool standardize = false;
  fs::path out_dir = default_out_dir();

  json to_json() const {
    return {{"input", input.string()}, {"outcome_col", opt_json(outcome_col)}, {"standardize", standardize},
            {"out_dir", out_dir.string()}};
  }
};

inline ScreeResult cmd_scree(const ScreeConfig& cfg) {
  const io::Table t = io::read_csv_file(cfg.input);
  const TreatmentMatrix tm = io::treatments_from_table(t, cfg.outcome_col);
  const ScreeResult s = scree(tm, FitOptions{cfg.standardize});
  io::write_atomic(cfg.out_dir / "scree.csv", io::scree_csv(s));
  write_json(cfg.out_dir / "metadata.json", metadata("scree", cfg.to_json(), json::object()));
  return s;
}

// ------------------------------------------------------------------ bounds

/// Shared inputs: data, fitted factor model and identified regression.
struct FittedInputs {
  Dataset data;
  FactorModel model;
  ConfounderPosterior posterior;
  stats::OlsFit ols;
};

inline FittedInputs fit_inputs(const fs::path& input, const std::string& outcome_col, Index m, bool standardize) {
  const io::Table t = io::read_csv_file(input);
  Dataset ds = io::dataset_from_table(t, outcome_col);
  FactorModel fm = fit_ppca(ds.treatments, m, FitOptions{standardize});
  ConfounderPosterior cp = confounder_posterior(fm);
  stats::OlsFit fit = stats::ols(ds.treatments.data, ds.outcome);
  return {std::move(ds), std::move(fm), std::move(cp), std::move(fit)};
}

inline std::vector<io::NamedContrast> load_contrasts(const std::optional<fs::path>& path, Index k) {
  if (path) return io::parse_contrasts(io::read_json_file(*path), k);
  std::vector<io::NamedContrast> out;
  for (Index i = 0; i < k; ++i) {
    out.push_back({"t_" + std::to_string(i + 1), Contrast::unit(k, i), i});
  }
  return out;
}

inline std::vector<io::NamedContrast> load_negative_controls(const fs::path& path, Index k) {
  auto out = io::parse_contrasts(io::read_json_file(path), k, "negative_controls");
  if (out.empty()) throw InvalidArgument("negative-control spec lists no contrasts");
  return out;
}

struct BoundsConfig {
  fs::path input;
  std::string outcome_col = "y";
  Index m = 2;
  std::vector<double> r2 = default_r2_grid();
  std::optional<fs::path> contrasts;
  std::optional<fs::path> nc_spec;
  double tol = kCompatTol;
  bool standardize = false;
  fs::path out_dir = default_out_dir();

  void validate() const {
    if (m < 1) throw InvalidArgument("--m must be positive");
    if (r2.empty()) throw InvalidArgument("r2 grid is empty");
    for (double v : r2) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("r2 grid values must lie in [0, 1]");
    }
    if (!(tol > 0.0)) throw InvalidArgument("--tol must be positive");
  }

  json to_json() const {
    return {{"input", input.string()}, {"outcome_col", outcome_col}, {"m", m}, {"r2", r2},
            {"contrasts", opt_json(contrasts)}, {"nc_spec", opt_json(nc_spec)}, {"tol", tol},
            {"standardize", standardize}, {"out_dir", out_dir.string()}};
  }
};

/// One (contrast, r2) row of the bounds output.
struct BoundsRecord {
  std::string contrast_id;
  bool constrained = false;
  double naive_effect = 0.0;
  double r2 = 0.0;
  bool feasible = true;
  BiasInterval interval;
  std::optional<double> r2_min;
  std::optional<double> width_factor;
  std::optional<bool> compatible;
  std::optional<double> residual_norm;

  json to_json() const {
    json j{{"contrast_id", contrast_id},
           {"constrained", constrained},
           {"naive_effect", naive_effect},
           {"r2", r2},
           {"feasible", feasible},
           {"r2_min", opt_json(r2_min)},
           {"width_factor", opt_json(width_factor)},
           {"compatible", opt_json(compatible)},
           {"residual_norm", opt_json(residual_norm)}};
    if (feasible) {
      j["center"] = interval.center;
      j["half_width"] = interval.half_width;
      j["pate_lo"] = interval.pate_lo();
      j["pate_hi"] = interval.pate_hi();
    } else {
      j["center"] = nullptr;
      j["half_width"] = nullptr;
      j["pate_lo"] = nullptr;
      j["pate_hi"] = nullptr;
    }
    return j;
  }
};

struct NcDiagnostics {
  bool compatible = true;
  double residual_norm = 0.0;
  double r2_min = 0.0;
  Index rank = 0;
  Index controls = 0;
};

struct BoundsResult {
  std::vector<BoundsRecord> records;
  std::optional<NcDiagnostics> nc;
  json robustness;
};

/// Smallest grid r2 whose effect interval contains zero.
inline std::optional<double> robust_r2(const std::vector<BoundsRecord>& recs, const std::string& id, bool constrained) {
  std::optional<double> best;
  for (const auto& r : recs) {
    if (r.contrast_id != id || r.constrained != constrained || !r.feasible) continue;
    if (r.interval.pate_covers_zero() && (!best || r.r2 < *best)) best = r.r2;
  }
  return best;
}

inline BoundsResult cmd_bounds(const BoundsConfig& cfg) {
  cfg.validate();
  const FittedInputs in = fit_inputs(cfg.input, cfg.outcome_col, cfg.m, cfg.standardize);
  const Index k = in.data.treatment_count();
  const auto contrasts = load_contrasts(cfg.contrasts, k);
  if (contrasts.empty()) throw InvalidArgument("no contrasts to evaluate");
  const double s2 = in.ols.sigma2;
  const auto naive = [&](const Contrast& c) { return in.ols.coef.dot(c.delta()); };

  BoundsResult out;
  std::optional<NCGeometry> geo;
  VectorXd tau;
  if (cfg.nc_spec) {
    const auto ncs = load_negative_controls(*cfg.nc_spec, k);
    std::vector<Contrast> cs;
    tau.resize(static_cast<Index>(ncs.size()));
    for (std::size_t i = 0; i < ncs.size(); ++i) {
      cs.push_back(ncs[i].contrast);
      tau(static_cast<Index>(i)) = naive(ncs[i].contrast);
    }
    geo = nc_geometry(in.posterior, cs);
    const Compatibility comp = nc_compatible(*geo, tau, cfg.tol);
    // Incompatible controls are projected onto the row space and flagged.
    tau = project_to_row_space(*geo, tau);
    NcDiagnostics d;
    d.compatible = comp.compatible;
    d.residual_norm = comp.residual_norm;
    d.r2_min = r2_min(*geo, tau, s2);
    d.rank = geo->rank;
    d.controls = geo->controls();
    out.nc = d;
  }

  std::vector<std::future<std::vector<BoundsRecord>>> jobs;
  for (const auto& nc : contrasts) {
    jobs.push_back(std::async(std::launch::async, [&, nc]() {
      std::vector<BoundsRecord> recs;
      const double tau_hat = naive(nc.contrast);
      for (double r2 : cfg.r2) {
        BoundsRecord r;
        r.contrast_id = nc.id;
        r.naive_effect = tau_hat;
        r.r2 = r2;
        r.interval = worst_case_interval(in.posterior, nc.contrast, s2, r2, tau_hat);
        r.width_factor = 1.0;
        recs.push_back(r);
      }
      if (geo) {
        const double floor_r2 = out.nc->r2_min;
        const bool informative = scaled_mu_delta(in.posterior, nc.contrast).norm() > 0.0;
        for (double r2 : cfg.r2) {
          BoundsRecord r;
          r.contrast_id = nc.id;
          r.constrained = true;
          r.naive_effect = tau_hat;
          r.r2 = r2;
          r.r2_min = floor_r2;
          r.compatible = out.nc->compatible;
          r.residual_norm = out.nc->residual_norm;
          r.feasible = r2 >= floor_r2 - kR2Slack * (1.0 + floor_r2);
          if (r.feasible) {
            r.interval = nc_interval(*geo, in.posterior, nc.contrast, tau, s2, r2, tau_hat);
            if (r2 > 0.0 && informative) r.width_factor = width_reduction(*geo, in.posterior, nc.contrast, r2, std::min(floor_r2, r2));
          }
          recs.push_back(r);
        }
      }
      return recs;
    }));
  }
  for (auto& j : jobs) {
    auto part = j.get();
    out.records.insert(out.records.end(), part.begin(), part.end());
  }

  if (out.nc) {
    const bool any_feasible = std::any_of(out.records.begin(), out.records.end(),
                                          [](const BoundsRecord& r) { return r.constrained && r.feasible; });
    if (out.nc->r2_min > 1.0 || !any_feasible) {
      throw Infeasible("negative controls imply R2_min = " + std::to_string(out.nc->r2_min) +
                           ", above every r2 on the grid",
                       out.nc->r2_min);
    }
  }

  out.robustness = json::array();
  for (const auto& nc : contrasts) {
    json row{{"contrast_id", nc.id}, {"robust_r2", opt_json(robust_r2(out.records, nc.id, false))}};
    if (out.nc) row["robust_r2_constrained"] = opt_json(robust_r2(out.records, nc.id, true));
    out.robustness.push_back(row);
  }

  json records = json::array();
  for (const auto& r : out.records) records.push_back(r.to_json());
  json doc{{"sigma2_y_t", s2}, {"records", records}, {"robustness", out.robustness}};
  if (out.nc) {
    doc["negative_controls"] = {{"compatible", out.nc->compatible}, {"residual_norm", out.nc->residual_norm},
                                {"r2_min", out.nc->r2_min}, {"rank", out.nc->rank},
                                {"controls", out.nc->controls}, {"projected", !out.nc->compatible}};
  }
  write_json(cfg.out_dir / "bounds.json", doc);
  write_json(cfg.out_dir / "metadata.json", metadata("bounds", cfg.to_json(), json::object()));
  return out;
}

// ------------------------------------------------------------------ sample

struct SampleConfig {
  fs::path input;
  std::string outcome_col = "y";
  Index m = 2;
  std::string regime = "r2-uniform";
  double r2_upper = 1.0;
  std::optional<fs::path> nc_spec;
  Index iters = 2000;
  std::optional<Index> warmup;
  int chains = 4;
  std::uint64_t seed = 1;
  std::optional<double> horseshoe_scale;
  double horseshoe_slab = 2.0;
  bool horseshoe_fixed_scales = false;
  double nonnull_fraction = 0.1;
  double tol = kCompatTol;
  bool standardize = false;
  bool write_loglik = true;
  fs::path out_dir = default_out_dir();

  json to_json() const {
    return {{"input", input.string()}, {"outcome_col", outcome_col}, {"m", m}, {"regime", regime},
            {"r2_upper", r2_upper}, {"nc_spec", opt_json(nc_spec)}, {"iters", iters}, {"warmup", opt_json(warmup)},
            {"chains", chains}, {"seed", seed}, {"horseshoe_scale", opt_json(horseshoe_scale)},
            {"horseshoe_slab", horseshoe_slab},
            {"horseshoe_fixed_scales", horseshoe_fixed_scales}, {"nonnull_fraction", nonnull_fraction}, {"tol", tol},
            {"standardize", standardize}, {"write_loglik", write_loglik}, {"out_dir", out_dir.string()}};
  }
};

struct SampleResult {
  PosteriorDraws draws;
  std::vector<ParamSummary> summary;
};

inline SampleResult cmd_sample(const SampleConfig& cfg) {
  if (cfg.chains < 1) throw InvalidArgument("--chains must be positive");
  const FittedInputs in = fit_inputs(cfg.input, cfg.outcome_col, cfg.m, cfg.standardize);
  const Index k = in.data.treatment_count();

  PriorRegime regime;
  regime.kind = regime_from_string(cfg.regime);
  regime.r2_upper = cfg.r2_upper;
  regime.horseshoe_scale = cfg.horseshoe_scale;
  regime.horseshoe_slab = cfg.horseshoe_slab;
  regime.fix_scales = cfg.horseshoe_fixed_scales;
  regime.nonnull_fraction = cfg.nonnull_fraction;
  regime.compat_tol = cfg.tol;
  if (cfg.nc_spec) {
    for (const auto& nc : load_negative_controls(*cfg.nc_spec, k)) {
      if (!nc.coordinate) throw InvalidArgument("negative control '" + nc.id + "' must change a single treatment");
      regime.nc_indices.push_back(*nc.coordinate);
    }
  }
  regime.validate(k);

  SamplerOptions opt;
  opt.n_iter = cfg.iters;
  opt.n_warmup = cfg.warmup;
  opt.validate();

  SampleResult r;
  r.draws = sample_chains(in.data, in.model, regime, opt, cfg.chains, cfg.seed);
  r.summary = summarize(r.draws);

  json rhat = json::object();
  if (cfg.chains > 1 && (opt.n_iter - opt.warmup()) >= 4) {
    for (Index j = 0; j < k; ++j) rhat["beta_" + std::to_string(j + 1)] = split_rhat(r.draws, r.draws.beta.col(j));
    rhat["r2"] = split_rhat(r.draws, r.draws.r2);
    rhat["sigma2"] = split_rhat(r.draws, r.draws.sigma2_y_t);
  }
  const auto& d = r.draws.diagnostics;
  json doc{{"regime", cfg.regime},
           {"draws", r.draws.size()},
           {"parameters", io::summary_json(r.summary)},
           {"split_rhat", rhat},
           {"diagnostics",
            {{"rejected_updates", d.rejected_updates},
             {"mh_proposals", d.mh_proposals},
             {"mh_accepts", d.mh_accepts},
             {"infeasible_redraws", d.infeasible_redraws},
             {"nc_incompatible", d.nc_incompatible},
             {"nc_residual_norm", d.nc_residual_norm},
             {"global_scale", d.global_scale}}}};

  io::write_atomic(cfg.out_dir / "draws.csv", io::draws_csv(r.draws));
  write_json(cfg.out_dir / "summary.json", doc);
  if (cfg.write_loglik) io::write_atomic(cfg.out_dir / "loglik.csv", io::loglik_csv(pointwise_loglik(r.draws, in.data)));
  json seeds = json::array();
  for (int c = 0; c < cfg.chains; ++c) seeds.push_back({{"chain", c}, {"seed", cfg.seed}, {"stream", c + 1}});
  write_json(cfg.out_dir / "metadata.json", metadata("sample", cfg.to_json(), seeds));
  return r;
}

// ------------------------------------------------------------------- prop1

struct Prop1Config {
  std::optional<fs::path> input;  // canonical model when absent
  std::string outcome_col = "y";
  Index m = 3;
  double r2 = 0.5;
  Index draws = 100000;
  std::optional<fs::path> contrasts;  // first contrast is used
  std::uint64_t seed = 1;
  bool standardize = false;
  fs::path out_dir = default_out_dir();

  json to_json() const {
    return {{"input", opt_json(input)}, {"outcome_col", outcome_col}, {"m", m}, {"r2", r2}, {"draws", draws},
            {"contrasts", opt_json(contrasts)}, {"seed", seed}, {"standardize", standardize},
            {"out_dir", out_dir.string()}};
  }
};

struct Prop1Result {
  BiasSample sample;
  stats::KsResult ks;
  std::string contrast_id;
};

inline Prop1Result cmd_prop1(const Prop1Config& cfg) {
  if (cfg.m < 2) throw InvalidArgument("--m must be at least 2");
  if (cfg.draws < 2) throw InvalidArgument("--draws must be at least 2");
  if (!(cfg.r2 > 0.0 && cfg.r2 <= 1.0)) throw InvalidArgument("--r2 must lie in (0, 1]");

  std::optional<ConfounderPosterior> cp;
  double s2 = 1.0;
  Index k = 0;
  if (cfg.input) {
    const FittedInputs in = fit_inputs(*cfg.input, cfg.outcome_col, cfg.m, cfg.standardize);
    cp = in.posterior;
    s2 = in.ols.sigma2;
    k = in.data.treatment_count();
  } else {
    // B = [I_m; 0] with one extra null treatment, unit noise.
    k = cfg.m + 1;
    MatrixXd b = MatrixXd::Zero(k, cfg.m);
    b.topRows(cfg.m).setIdentity();
    cp = confounder_posterior(FactorModel(b, 1.0));
  }
  const auto contrasts = load_contrasts(cfg.contrasts, k);
  const io::NamedContrast& c = contrasts.front();

  Prop1Result r;
  r.contrast_id = c.id;
  RngStream rng(cfg.seed);
  r.sample = bias_prior_draws(*cp, c.contrast, s2, cfg.r2, cfg.draws, rng);
  if (!(r.sample.half_width > 0.0)) throw InvalidArgument("contrast has no confounder mean difference");
  const double b = r.sample.half_width;
  const int m = static_cast<int>(cfg.m);
  r.ks = stats::ks_one_sample(r.sample.draws, [m, b](double x) { return beta_bias_cdf(x, m, b); });

  io::write_atomic(cfg.out_dir / "prop1_draws.csv", io::bias_sample_csv(r.sample, m, cfg.r2, c.id, cfg.seed));
  write_json(cfg.out_dir / "prop1_ks.json", {{"m", cfg.m}, {"r2", cfg.r2}, {"contrast_id", c.id},
                                             {"half_width", b}, {"draws", cfg.draws},
                                             {"statistic", r.ks.statistic}, {"p_value", r.ks.p_value},
                                             {"sample_mean", stats::mean(r.sample.draws)}});
  write_json(cfg.out_dir / "metadata.json", metadata("prop1", cfg.to_json(), {{"draws", cfg.seed}}));
  return r;
}

}  // namespace mtsens::cli
