#pragma once

// Synthetic data from the Gaussian factor / linear outcome model.
//
// The two-block loading pattern splits the treatments into two blocks: the
// first ceil(k/2) rows of B equal a*e1 and the rest equal b*e2 (m = 2).
// gamma is pinned by beta_check - beta = (+1, ..., +1, -1, ..., -1) and the
// residual variance by the target R^2. The second block carries
// `signal_fraction` of its treatment variance; the first-block loading a is
// chosen so that a negative control on treatment 1 yields
// R2_min = nc_r2_fraction * r2_target.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtsens/errors.hpp"
#include "mtsens/model.hpp"
#include "mtsens/posterior.hpp"
#include "mtsens/rng.hpp"

namespace mtsens {

enum class LoadingPattern { TwoBlock, Custom };
enum class DgpVariant { NullEffects, NoConfounding, OppositeBias };

inline const char* to_string(DgpVariant v) {
  switch (v) {
    case DgpVariant::NullEffects: return "null-effects";
    case DgpVariant::NoConfounding: return "no-confounding";
    case DgpVariant::OppositeBias: return "opposite-bias";
  }
  return "unknown";
}

inline DgpVariant variant_from_string(const std::string& s) {
  for (auto v : {DgpVariant::NullEffects, DgpVariant::NoConfounding, DgpVariant::OppositeBias}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidArgument("unknown DGP variant '" + s + "'");
}

struct DGPConfig {
  Index n = 1000;
  Index k = 10;
  Index m = 2;
  std::optional<VectorXd> beta_true;  // base effects, default zero
  double r2_target = 0.5;
  LoadingPattern loading_pattern = LoadingPattern::TwoBlock;
  std::optional<MatrixXd> custom_loadings;  // required for Custom
  DgpVariant variant = DgpVariant::NullEffects;
  std::uint64_t seed = 1;

  double sigma2_t_u = 1.0;
  double signal_fraction = 0.5;        // TwoBlock second block: b^2 / (b^2 + s2)
  double nc_r2_fraction = 2.0 / 3.0;   // TwoBlock: R2_min / r2_target for an NC on treatment 1
  double sigma2_y_tu = 1.0;            // Custom: residual variance of the base model
  std::optional<VectorXd> direction;   // Custom: whitened gamma direction, default e1

  void validate() const {
    if (n < 1 || k < 1 || m < 1 || m > k) throw InvalidArgument("DGPConfig: need n, k, m >= 1 and m <= k");
    if (!(r2_target >= 0.0 && r2_target < 1.0)) throw InvalidArgument("DGPConfig: r2_target must lie in [0, 1)");
    if (!(sigma2_t_u > 0.0)) throw InvalidArgument("DGPConfig: sigma2_t_u must be positive");
    if (beta_true && beta_true->size() != k) throw DimensionMismatch("DGPConfig: beta_true length must equal k");
    if (loading_pattern == LoadingPattern::TwoBlock) {
      if (m != 2 || k < 2) throw InvalidArgument("DGPConfig: the two-block pattern needs m = 2 and k >= 2");
      if (!(signal_fraction > 0.0 && signal_fraction < 1.0)) throw InvalidArgument("DGPConfig: signal_fraction in (0, 1)");
      if (!(nc_r2_fraction > 0.0 && nc_r2_fraction < 1.0)) throw InvalidArgument("DGPConfig: nc_r2_fraction in (0, 1)");
    } else {
      if (!custom_loadings) throw InvalidArgument("DGPConfig: custom loadings required");
      if (custom_loadings->rows() != k || custom_loadings->cols() != m) {
        throw DimensionMismatch("DGPConfig: custom loadings must be k x m");
      }
      if (!(sigma2_y_tu > 0.0)) throw InvalidArgument("DGPConfig: sigma2_y_tu must be positive");
      if (direction && direction->size() != m) throw DimensionMismatch("DGPConfig: direction length must equal m");
    }
  }
};

struct GroundTruth {
  MatrixXd loadings;
  VectorXd gamma;
  VectorXd beta;
  double sigma2_y_tu = 0.0;
  double sigma2_t_u = 0.0;
  ObservedOutcomeParams observed;  // shared by all variants of a config

  FactorModel factor_model() const { return FactorModel(loadings, sigma2_t_u); }
  OutcomeModel outcome_model() const { return {beta, gamma, sigma2_y_tu}; }
};

struct SimulatedData {
  Dataset dataset;
  GroundTruth truth;
};

/// Loadings for the two-block pattern.
inline MatrixXd two_block_loadings(const DGPConfig& cfg) {
  const Index k = cfg.k;
  const Index h = (k + 1) / 2;
  const double s2 = cfg.sigma2_t_u;
  const double b2 = s2 * cfg.signal_fraction / (1.0 - cfg.signal_fraction);
  const double y = s2 / b2;
  const double rho = cfg.nc_r2_fraction;
  // cos^2 between Sigma^{1/2} gamma and the control direction equals
  // (h + x) / (k + x + y) with x = s2 / a^2; solve for x.
  const double x = (rho * (static_cast<double>(k) + y) - static_cast<double>(h)) / (1.0 - rho);
  if (!(x > 0.0)) {
    throw Infeasible("DGPConfig: nc_r2_fraction is not attainable with this signal_fraction and k");
  }
  const double a = std::sqrt(s2 / x);
  const double b = std::sqrt(b2);
  MatrixXd loadings = MatrixXd::Zero(k, 2);
  loadings.col(0).head(h).setConstant(a);
  loadings.col(1).tail(k - h).setConstant(b);
  return loadings;
}

/// Exact population parameters of the configured model.
inline GroundTruth population_truth(const DGPConfig& cfg) {
  cfg.validate();
  GroundTruth t;
  t.sigma2_t_u = cfg.sigma2_t_u;
  t.loadings = cfg.loading_pattern == LoadingPattern::TwoBlock ? two_block_loadings(cfg) : *cfg.custom_loadings;
  const FactorModel fm(t.loadings, t.sigma2_t_u);
  const ConfounderPosterior cp = confounder_posterior(fm);
  const MatrixXd adjust = cp.mean_map().transpose();
  const VectorXd beta0 = cfg.beta_true.value_or(VectorXd::Zero(cfg.k));

  VectorXd gamma0;
  double v0 = 0.0;
  if (cfg.loading_pattern == LoadingPattern::TwoBlock) {
    if (!(cfg.r2_target > 0.0)) {
      throw Infeasible("DGPConfig: the two-block bias pattern needs r2_target > 0");
    }
    const Index h = (cfg.k + 1) / 2;
    const double a = t.loadings(0, 0);
    const double b = t.loadings(cfg.k - 1, 1);
    gamma0.resize(2);
    gamma0(0) = (static_cast<double>(h) * a * a + cfg.sigma2_t_u) / a;
    gamma0(1) = -(static_cast<double>(cfg.k - h) * b * b + cfg.sigma2_t_u) / b;
    const double q = gamma0.dot(cp.cov() * gamma0);
    v0 = q * (1.0 - cfg.r2_target) / cfg.r2_target;
  } else {
    v0 = cfg.sigma2_y_tu;
    VectorXd d = cfg.direction.value_or(VectorXd::Unit(cfg.m, 0));
    if (!(d.norm() > 0.0)) throw InvalidArgument("DGPConfig: zero direction");
    d /= d.norm();
    gamma0 = std::sqrt(cfg.r2_target / (1.0 - cfg.r2_target) * v0) * (cp.cov_inv_sqrt() * d);
  }
  const VectorXd bias0 = adjust * gamma0;
  const double q0 = gamma0.dot(cp.cov() * gamma0);

  // All variants share the observed-data law of the base model.
  t.observed.beta_check = beta0 + bias0;
  t.observed.sigma2_y_t = v0 + q0;
  switch (cfg.variant) {
    case DgpVariant::NullEffects:
      t.beta = beta0;
      t.gamma = gamma0;
      t.sigma2_y_tu = v0;
      break;
    case DgpVariant::NoConfounding:
      t.beta = beta0 + bias0;
      t.gamma = VectorXd::Zero(cfg.m);
      t.sigma2_y_tu = v0 + q0;
      break;
    case DgpVariant::OppositeBias:
      t.beta = beta0 + 2.0 * bias0;
      t.gamma = -gamma0;
      t.sigma2_y_tu = v0;
      break;
  }
  return t;
}

inline std::pair<ObservedOutcomeParams, ConfounderPosterior> population_params(const DGPConfig& cfg) {
  const GroundTruth t = population_truth(cfg);
  return {t.observed, confounder_posterior(t.factor_model())};
}

/// Draws U ~ N(0, I), T = B U + eps_t, Y = beta' T + gamma' U + eps_y row by row.
inline SimulatedData generate(const DGPConfig& cfg, RngStream& rng) {
  SimulatedData out;
  out.truth = population_truth(cfg);
  const GroundTruth& t = out.truth;
  const double sd_t = std::sqrt(t.sigma2_t_u);
  const double sd_y = std::sqrt(t.sigma2_y_tu);
  MatrixXd tm(cfg.n, cfg.k);
  VectorXd y(cfg.n);
  VectorXd u(cfg.m);
  VectorXd row(cfg.k);
  for (Index i = 0; i < cfg.n; ++i) {
    for (Index j = 0; j < cfg.m; ++j) u(j) = rng.normal();
    for (Index j = 0; j < cfg.k; ++j) row(j) = rng.normal() * sd_t;
    row += t.loadings * u;
    tm.row(i) = row.transpose();
    y(i) = t.beta.dot(row) + t.gamma.dot(u) + sd_y * rng.normal();
  }
  out.dataset.treatments.data = std::move(tm);
  for (Index j = 0; j < cfg.k; ++j) out.dataset.treatments.column_names.push_back("t_" + std::to_string(j + 1));
  out.dataset.outcome = std::move(y);
  return out;
}

inline SimulatedData generate(const DGPConfig& cfg) {
  RngStream rng(cfg.seed);
  return generate(cfg, rng);
}

/// The k in {5, 10, 20} by n in {100, 1000} grid of simulation settings.
inline std::vector<DGPConfig> sweep_configs(const DGPConfig& base = {}) {
  std::vector<DGPConfig> out;
  for (Index k : {5, 10, 20}) {
    for (Index n : {100, 1000}) {
      DGPConfig c = base;
      c.k = k;
      c.n = n;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace mtsens
