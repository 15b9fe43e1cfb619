// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mtsens/mtsens.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mtsens;
using namespace mtsens::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0.0 && secs > time_limit_s) {
    o.pass = false;
    o.detail += " (time limit " + std::to_string(time_limit_s) + " s exceeded)";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %-34s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

MatrixXd control_rows(const ConfounderPosterior& cp, const std::vector<Contrast>& cs) {
  MatrixXd a(static_cast<Index>(cs.size()), cp.confounders());
  for (std::size_t i = 0; i < cs.size(); ++i) a.row(static_cast<Index>(i)) = mu_delta(cp, cs[i]).transpose();
  return a;
}

struct Instance {
  FactorModel fm;
  ConfounderPosterior cp;
  std::vector<Contrast> controls;
  VectorXd tau;
  double s2;
  double r2;
  Contrast target;
};

/// Compatible random instance with r2 between the implied floor and 1.
Instance random_instance(RngStream& rng, Index k, Index m, Index c) {
  FactorModel fm = random_factor_model(k, m, rng);
  ConfounderPosterior cp = confounder_posterior(fm);
  std::vector<Contrast> controls;
  for (Index i = 0; i < c; ++i) controls.push_back({random_vector(k, rng), random_vector(k, rng)});
  const double s2 = 0.5 + 2.0 * rng.uniform();
  const VectorXd g = gamma_from_spec(SensitivitySpec::normalized(0.8 * rng.uniform(), random_vector(m, rng)), s2, cp);
  VectorXd tau = control_rows(cp, controls) * g;
  const double floor_r2 = implied_r2(g, s2, cp);
  const double r2 = floor_r2 + (1.0 - floor_r2) * rng.uniform();
  return {std::move(fm), std::move(cp), std::move(controls), std::move(tau), s2, r2,
          Contrast{random_vector(k, rng), random_vector(k, rng)}};
}

Instance random_small_instance(RngStream& rng) {
  const Index m = 1 + static_cast<Index>(rng.uniform() * 3.0);
  const Index k = std::max<Index>(m, 2) + static_cast<Index>(rng.uniform() * static_cast<double>(7 - std::max<Index>(m, 2)));
  const Index c = 1 + static_cast<Index>(rng.uniform() * 2.0);
  return random_instance(rng, std::min<Index>(k, 6), m, c);
}

double col_mean(const MatrixXd& a, Index j) { return a.col(j).mean(); }

Outcome naive_coefficients() {
  const auto sim = generate(DGPConfig{});
  const auto fit = stats::ols(sim.dataset.treatments.data, sim.dataset.outcome);
  const VectorXd se = fit.std_err();
  double worst = 0.0;
  for (Index j = 0; j < 10; ++j) worst = std::max(worst, std::abs(fit.coef(j) - (j < 5 ? 1.0 : -1.0)) / se(j));
  return {worst < 3.0, "max |coef - target| / se = " + num(worst)};
}

Outcome r2_min_reproduction() {
  const auto [obs, cp] = population_params(DGPConfig{});
  const auto geo = nc_geometry(cp, {Contrast::unit(10, 0)});
  const double v = r2_min(geo, obs.beta_check.head(1), obs.sigma2_y_t);
  return {std::abs(v - 0.33) <= 0.01, "R2_min = " + num(v)};
}

Outcome bias_law() {
  std::string detail;
  bool ok = true;
  for (Index m : {2, 3, 5, 10}) {
    MatrixXd b = MatrixXd::Zero(m + 1, m);
    b.topRows(m).setIdentity();
    const auto cp = confounder_posterior(FactorModel(b, 1.0));
    RngStream rng(2024, static_cast<std::uint64_t>(m));
    const auto s = bias_prior_draws(cp, Contrast::unit(m + 1, 0), 1.0, 0.5, 100000, rng);
    const double hw = s.half_width;
    const auto ks = stats::ks_one_sample(s.draws, [m, hw](double x) { return beta_bias_cdf(x, static_cast<int>(m), hw); });
    ok = ok && ks.p_value > 0.01;
    detail += "m=" + std::to_string(m) + " p=" + num(ks.p_value) + " ";
  }
  return {ok, detail};
}

Outcome constrained_oracle() {
  RngStream rng(404);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Instance in = random_small_instance(rng);
    const auto geo = nc_geometry(in.cp, in.controls);
    const auto iv = nc_interval(geo, in.cp, in.target, in.tau, in.s2, in.r2, 0.0);
    const auto ref = oracle::constrained_bias_range(in.cp.cov(), control_rows(in.cp, in.controls), in.tau,
                                                    mu_delta(in.cp, in.target), in.s2, in.r2);
    const double scale = std::max(std::max(std::abs(ref.lo), std::abs(ref.hi)), 1e-12);
    worst = std::max({worst, std::abs(iv.bias_lo() - ref.lo) / scale, std::abs(iv.bias_hi() - ref.hi) / scale});
  }
  return {worst < 1e-3, "max relative endpoint error = " + num(worst)};
}

Outcome width_reduction_consistency() {
  RngStream rng(505);
  double worst = 0.0;
  bool in_range = true;
  int used = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Instance in = random_small_instance(rng);
    const auto geo = nc_geometry(in.cp, in.controls);
    const double floor_r2 = r2_min(geo, in.tau, in.s2);
    if (!(in.r2 > 0.0)) continue;
    const double f = width_reduction(geo, in.cp, in.target, in.r2, floor_r2);
    const double ratio = nc_interval(geo, in.cp, in.target, in.tau, in.s2, in.r2, 0.0).half_width /
                         worst_case_interval(in.cp, in.target, in.s2, in.r2, 0.0).half_width;
    in_range = in_range && f >= 0.0 && f <= 1.0;
    worst = std::max(worst, std::abs(f - ratio));
    ++used;
  }
  return {in_range && worst < 1e-10, std::to_string(used) + " instances, max |factor - ratio| = " + num(worst)};
}

Outcome ellipsoid_attainment() {
  RngStream rng(606);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index m = 1 + rep % 3;
    const Index k = m + 1 + rep % 4;
    const auto cp = confounder_posterior(random_factor_model(k, m, rng));
    const Contrast c{random_vector(k, rng), random_vector(k, rng)};
    const double s2 = 0.3 + 2.0 * rng.uniform();
    const double r2 = 0.05 + 0.95 * rng.uniform();
    const double hw = worst_case_interval(cp, c, s2, r2, 0.0).half_width;
    const double ref = oracle::ellipsoid_max_bias(cp.cov(), mu_delta(cp, c), s2, r2);
    worst = std::max(worst, std::abs(hw - ref) / std::max(ref, 1e-12));
  }
  return {worst < 1e-4, "max relative error = " + num(worst)};
}

Outcome rotation_invariance() {
  RngStream rng(707);
  const Instance in = random_instance(rng, 6, 3, 2);
  const auto geo = nc_geometry(in.cp, in.controls);
  const OutcomeModel om{random_vector(6, rng), random_vector(3, rng), 0.7};
  const auto obs = observed_params(om, in.fm);
  const auto wc = worst_case_interval(in.cp, in.target, in.s2, in.r2, 0.3);
  const auto iv = nc_interval(geo, in.cp, in.target, in.tau, in.s2, in.r2, 0.3);
  const double floor_r2 = r2_min(geo, in.tau, in.s2);
  const double wr = width_reduction(geo, in.cp, in.target, in.r2, floor_r2);
  const double resid = nc_compatible(geo, in.tau).residual_norm;
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd q = random_orthogonal(3, rng);
    const FactorModel fq(in.fm.loadings() * q, in.fm.noise_variance());
    const auto cq = confounder_posterior(fq);
    const auto gq = nc_geometry(cq, in.controls);
    const auto obs_q = observed_params({om.beta, q.transpose() * om.gamma, om.sigma2_y_tu}, fq);
    const auto iv_q = nc_interval(gq, cq, in.target, in.tau, in.s2, in.r2, 0.3);
    const double fr = r2_min(gq, in.tau, in.s2);
    worst = std::max({worst, (obs_q.beta_check - obs.beta_check).cwiseAbs().maxCoeff(),
                      std::abs(obs_q.sigma2_y_t - obs.sigma2_y_t),
                      std::abs(worst_case_interval(cq, in.target, in.s2, in.r2, 0.3).half_width - wc.half_width),
                      std::abs(iv_q.center - iv.center), std::abs(iv_q.half_width - iv.half_width),
                      std::abs(fr - floor_r2), std::abs(width_reduction(gq, cq, in.target, in.r2, fr) - wr),
                      std::abs(nc_compatible(gq, in.tau).residual_norm - resid)});
  }
  return {worst < 1e-10, "max deviation over 20 rotations = " + num(worst)};
}

Outcome flat_gamma_pathology() {
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DGPConfig cfg;
    cfg.seed = seed;
    const auto sim = generate(cfg);
    const FactorModel fm = fit_ppca(sim.dataset.treatments, 2);
    SamplerOptions opt;
    opt.n_iter = 4000;
    RngStream r1(seed, 1), r2(seed, 2);
    const double flat = sample_flat_gamma(sim.dataset, fm, opt, r1).r2.mean();
    PriorRegime reg;
    reg.kind = RegimeKind::R2Uniform;
    const double transparent = sample_transparent(sim.dataset, fm, reg, opt, r2).r2.mean();
    ok = ok && flat > transparent && flat > 0.5;
    detail += num(flat) + ">" + num(transparent) + " ";
  }
  return {ok, "mean r2 flat>transparent: " + detail};
}

Outcome horseshoe_recovery() {
  std::string detail;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DGPConfig cfg;
    cfg.seed = 100 + seed;
    const auto sim = generate(cfg);
    const FactorModel fm = fit_ppca(sim.dataset.treatments, 2);
    SamplerOptions opt;
    opt.n_iter = 3000;
    PriorRegime reg;
    reg.kind = RegimeKind::Horseshoe;
    RngStream r1(seed, 1), r2(seed, 2);
    const auto hs = sample_horseshoe(sim.dataset, fm, reg, opt, r1);
    const auto fl = sample_flat_gamma(sim.dataset, fm, opt, r2);
    double e_hs = 0.0, e_fl = 0.0;
    for (Index j = 0; j < 10; ++j) {
      e_hs += std::pow(col_mean(hs.beta, j) - sim.truth.beta(j), 2);
      e_fl += std::pow(col_mean(fl.beta, j) - sim.truth.beta(j), 2);
    }
    e_hs = std::sqrt(e_hs / 10.0);
    e_fl = std::sqrt(e_fl / 10.0);
    wins += e_hs < e_fl;
    detail += num(e_hs) + "<" + num(e_fl) + " ";
  }
  return {wins == 5, std::to_string(wins) + "/5 RMSE horseshoe<flat: " + detail};
}

Outcome observational_equivalence() {
  DGPConfig a;
  a.variant = DgpVariant::NullEffects;
  a.n = 5000;
  a.seed = 71;
  DGPConfig b = a;
  b.variant = DgpVariant::OppositeBias;
  b.seed = 72;
  const auto ta = population_truth(a);
  const auto tb = population_truth(b);
  const bool exact = ta.observed.beta_check == tb.observed.beta_check && ta.observed.sigma2_y_t == tb.observed.sigma2_y_t;
  // The variants differ in (beta, gamma) but must imply the same observed law.
  const auto oa = observed_params(ta.outcome_model(), ta.factor_model());
  const auto ob = observed_params(tb.outcome_model(), tb.factor_model());
  const double implied = std::max((oa.beta_check - ob.beta_check).cwiseAbs().maxCoeff(), std::abs(oa.sigma2_y_t - ob.sigma2_y_t));
  const auto sa = generate(a);
  const auto sb = generate(b);
  const auto to_vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  const auto fa = stats::ols(sa.dataset.treatments.data, sa.dataset.outcome);
  const auto fb = stats::ols(sb.dataset.treatments.data, sb.dataset.outcome);
  const auto resid = [](const Dataset& ds, const stats::OlsFit& f) {
    VectorXd r = ds.outcome - ds.treatments.data * f.coef;
    return VectorXd(r.array() - f.intercept);
  };
  const double p_y = stats::ks_two_sample(to_vec(sa.dataset.outcome), to_vec(sb.dataset.outcome)).p_value;
  const double p_t = stats::ks_two_sample(to_vec(sa.dataset.treatments.data.col(0)),
                                          to_vec(sb.dataset.treatments.data.col(0))).p_value;
  const double p_r = stats::ks_two_sample(to_vec(resid(sa.dataset, fa)), to_vec(resid(sb.dataset, fb))).p_value;
  const bool ok = exact && implied < 1e-10 && p_y > 0.01 && p_t > 0.01 && p_r > 0.01;
  return {ok, std::string("exact=") + (exact ? "yes" : "no") + " implied diff=" + num(implied) + " KS p(Y)=" + num(p_y) +
                  " p(T1)=" + num(p_t) + " p(resid)=" + num(p_r)};
}

Outcome transparent_identity() {
  RngStream rng(1111);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index m = 1 + rep % 4;
    const Index k = m + rep % 5;
    const MatrixXd b = random_matrix(k, m, rng);
    const double s2t = 0.2 + rng.uniform();
    const FactorModel fm(b, s2t);
    const OutcomeModel om{random_vector(k, rng), random_vector(m, rng), 0.1 + rng.uniform()};
    const auto obs = observed_params(om, fm);
    // Joint Gaussian regression of Y on T, computed from scratch.
    const MatrixXd ct = b * b.transpose() + s2t * MatrixXd::Identity(k, k);
    const VectorXd cty = ct * om.beta + b * om.gamma;
    const Eigen::LDLT<MatrixXd> ldlt(ct);
    const VectorXd beta_check = ldlt.solve(cty);
    const double var_y = om.beta.dot(ct * om.beta) + 2.0 * om.beta.dot(b * om.gamma) + om.gamma.squaredNorm() + om.sigma2_y_tu;
    const double s2_y_t = var_y - cty.dot(beta_check);
    // Conditional confounder covariance for the identity.
    const MatrixXd sigma = MatrixXd::Identity(m, m) - b.transpose() * ldlt.solve(b);
    const double identity_rhs = om.sigma2_y_tu + om.gamma.dot(sigma * om.gamma);
    worst = std::max({worst, (obs.beta_check - beta_check).cwiseAbs().maxCoeff() / (1.0 + beta_check.cwiseAbs().maxCoeff()),
                      std::abs(obs.sigma2_y_t - identity_rhs) / (1.0 + identity_rhs),
                      std::abs(obs.sigma2_y_t - s2_y_t) / (1.0 + s2_y_t)});
  }
  return {worst < 1e-10, "max relative deviation = " + num(worst)};
}

}  // namespace

int main() {
  run(1, "naive coefficients", 5.0, naive_coefficients);
  run(2, "R2_min with one negative control", 1.0, r2_min_reproduction);
  run(3, "bias law under uniform direction", 10.0, bias_law);
  run(4, "constrained interval vs oracle", 60.0, constrained_oracle);
  run(5, "width reduction factor", 0.0, width_reduction_consistency);
  run(6, "worst-case attainment", 0.0, ellipsoid_attainment);
  run(7, "rotation invariance", 0.0, rotation_invariance);
  run(8, "flat-gamma R2 inflation", 0.0, flat_gamma_pathology);
  run(9, "horseshoe recovery", 0.0, horseshoe_recovery);
  run(10, "observational equivalence", 0.0, observational_equivalence);
  run(11, "observed-parameter identity", 0.0, transparent_identity);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
