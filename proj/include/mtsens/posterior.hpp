#pragma once

// Posterior samplers for the linear outcome model under four prior regimes.
//
// Every sampler works with the marginal model Y | T ~ N(beta_check' T,
// sigma2_y_t) after centring, and recovers the scientific parameters through
// beta = beta_check - (B B' + s2 I)^{-1} B gamma. The confounder effect is
// always carried as gamma = sigma_y|t * Sigma^{-1/2} w with |w|^2 = R^2.

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "mtsens/bounds.hpp"
#include "mtsens/errors.hpp"
#include "mtsens/factor_fit.hpp"
#include "mtsens/model.hpp"
#include "mtsens/prior_geometry.hpp"
#include "mtsens/rng.hpp"
#include "mtsens/stats.hpp"

namespace mtsens {

struct Dataset {
  TreatmentMatrix treatments;
  VectorXd outcome;

  Index rows() const noexcept { return outcome.size(); }
  Index treatment_count() const noexcept { return treatments.cols(); }

  void validate() const {
    if (treatments.rows() != outcome.size()) throw DimensionMismatch("Dataset: treatment/outcome row mismatch");
    if (!treatments.data.allFinite() || !outcome.allFinite()) throw InvalidArgument("Dataset: non-finite entries");
  }
};

enum class RegimeKind { FlatGamma, R2Uniform, NegativeControl, Horseshoe, HorseshoeNc };

inline const char* to_string(RegimeKind k) {
  switch (k) {
    case RegimeKind::FlatGamma: return "flat-gamma";
    case RegimeKind::R2Uniform: return "r2-uniform";
    case RegimeKind::NegativeControl: return "negative-control";
    case RegimeKind::Horseshoe: return "horseshoe";
    case RegimeKind::HorseshoeNc: return "horseshoe-nc";
  }
  return "unknown";
}

inline RegimeKind regime_from_string(const std::string& s) {
  for (auto k : {RegimeKind::FlatGamma, RegimeKind::R2Uniform, RegimeKind::NegativeControl,
                 RegimeKind::Horseshoe, RegimeKind::HorseshoeNc}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown prior regime '" + s + "'");
}

struct PriorRegime {
  RegimeKind kind = RegimeKind::R2Uniform;
  double r2_upper = 1.0;
  std::vector<Index> nc_indices;            // zero-based treatment indices
  std::optional<double> horseshoe_scale;    // global scale tau0; derived when unset
  double horseshoe_slab = 2.0;
  double nonnull_fraction = 0.1;
  bool fix_scales = false;                  // hold tau = horseshoe_scale and every lambda = 1
  double compat_tol = kCompatTol;

  void validate(Index k) const {
    if (!(r2_upper >= 0.0 && r2_upper <= 1.0)) throw InvalidArgument("PriorRegime: r2_upper must lie in [0, 1]");
    const bool needs_nc = kind == RegimeKind::NegativeControl || kind == RegimeKind::HorseshoeNc;
    if (needs_nc && nc_indices.empty()) throw InvalidArgument("PriorRegime: nc_indices required for this regime");
    for (Index j : nc_indices) {
      if (j < 0 || j >= k) throw InvalidArgument("PriorRegime: nc index out of range");
    }
    if (horseshoe_scale && !(*horseshoe_scale > 0.0)) throw InvalidArgument("PriorRegime: horseshoe_scale must be positive");
    if (!(horseshoe_slab > 0.0)) throw InvalidArgument("PriorRegime: horseshoe_slab must be positive");
    if (!(nonnull_fraction > 0.0 && nonnull_fraction < 1.0)) {
      throw InvalidArgument("PriorRegime: nonnull_fraction must lie in (0, 1)");
    }
  }
};

struct SamplerOptions {
  Index n_iter = 2000;
  std::optional<Index> n_warmup;  // default n_iter / 2
  int chain = 0;

  Index warmup() const { return n_warmup.value_or(n_iter / 2); }
  void validate() const {
    if (n_iter < 1) throw InvalidArgument("SamplerOptions: n_iter must be positive");
    if (warmup() < 0 || warmup() >= n_iter) throw InvalidArgument("SamplerOptions: need 0 <= warmup < n_iter");
  }
};

struct SamplerDiagnostics {
  std::size_t rejected_updates = 0;    // non-finite scale updates that were redrawn
  std::size_t mh_proposals = 0;
  std::size_t mh_accepts = 0;
  std::size_t infeasible_redraws = 0;  // NC: identified draws with R2_min above r2_upper
  bool nc_incompatible = false;
  double nc_residual_norm = 0.0;
  double global_scale = 0.0;           // horseshoe tau0 actually used
};

struct PosteriorDraws {
  MatrixXd beta;        // draws x k
  MatrixXd beta_check;  // draws x k
  MatrixXd gamma;       // draws x m
  VectorXd r2;
  VectorXd sigma2_y_t;
  std::vector<int> chain;
  std::vector<Index> iteration;
  MatrixXd pointwise_loglik;  // draws x n, filled by pointwise_loglik()
  SamplerDiagnostics diagnostics;

  Index size() const noexcept { return r2.size(); }

  void reserve(Index draws, Index k, Index m) {
    beta.resize(draws, k);
    beta_check.resize(draws, k);
    gamma.resize(draws, m);
    r2.resize(draws);
    sigma2_y_t.resize(draws);
    chain.assign(static_cast<std::size_t>(draws), 0);
    iteration.assign(static_cast<std::size_t>(draws), 0);
  }
};

namespace detail {

/// Centred regression pieces shared by every sampler.
struct Regression {
  MatrixXd x;
  VectorXd y;
  stats::OlsFit fit;
  Eigen::LLT<MatrixXd> chol;
  Index n_eff = 0;  // n - 1 after absorbing the intercept

  explicit Regression(const Dataset& ds) {
    ds.validate();
    const Index n = ds.rows();
    const Index k = ds.treatment_count();
    if (n <= k + 1) throw InvalidArgument("sampler: need n > k + 1 observations for a proper posterior");
    fit = stats::ols(ds.treatments.data, ds.outcome);
    x = ds.treatments.data.rowwise() - ds.treatments.data.colwise().mean();
    y = ds.outcome.array() - ds.outcome.mean();
    chol.compute(fit.xtx);
    n_eff = n - 1;
  }

  Index k() const { return x.cols(); }

  /// beta_check ~ N(coef, s2 (X'X)^{-1}).
  VectorXd draw_beta_check(double s2, RngStream& rng) const {
    VectorXd z(k());
    for (Index j = 0; j < k(); ++j) z(j) = rng.normal();
    return fit.coef + std::sqrt(s2) * chol.matrixU().solve(z);
  }
};

inline void check_model(const Dataset& ds, const FactorModel& fm) {
  if (fm.treatments() != ds.treatment_count()) {
    throw DimensionMismatch("sampler: factor model and dataset disagree on the number of treatments");
  }
}

inline void store(PosteriorDraws& d, Index row, const VectorXd& beta, const VectorXd& beta_check,
                  const VectorXd& gamma, double r2, double s2, int chain, Index it) {
  d.beta.row(row) = beta.transpose();
  d.beta_check.row(row) = beta_check.transpose();
  d.gamma.row(row) = gamma.transpose();
  d.r2(row) = r2;
  d.sigma2_y_t(row) = s2;
  d.chain[static_cast<std::size_t>(row)] = chain;
  d.iteration[static_cast<std::size_t>(row)] = it;
}

inline double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

}  // namespace detail

/// R^2-parameterization with a uniform prior on R^2 in [0, r2_upper] and a
/// uniform direction. (beta_check, sigma2_y_t) come from the conjugate
/// posterior under flat priors on beta_check and log sigma2.
inline PosteriorDraws sample_transparent(const Dataset& ds, const FactorModel& fm, const PriorRegime& regime,
                                         const SamplerOptions& opt, RngStream& rng) {
  if (regime.kind != RegimeKind::R2Uniform) throw InvalidArgument("sample_transparent: regime must be r2-uniform");
  regime.validate(ds.treatment_count());
  opt.validate();
  detail::check_model(ds, fm);
  const detail::Regression reg(ds);
  const Index k = reg.k();
  if (reg.n_eff <= k) throw InvalidArgument("sample_transparent: need n > k + 1");
  const ConfounderPosterior cp = confounder_posterior(fm);
  const Index m = cp.confounders();
  const MatrixXd adjust = cp.mean_map().transpose();

  PosteriorDraws out;
  out.reserve(opt.n_iter - opt.warmup(), k, m);
  const double shape = 0.5 * static_cast<double>(reg.n_eff - k);
  for (Index it = 0; it < opt.n_iter; ++it) {
    const double s2 = rng.inv_gamma(shape, 0.5 * reg.fit.rss);
    const VectorXd bc = reg.draw_beta_check(s2, rng);
    const double r2 = regime.r2_upper > 0.0 ? rng.uniform(0.0, regime.r2_upper) : 0.0;
    const VectorXd d = sample_direction(m, rng);
    const VectorXd gamma = std::sqrt(s2 * r2) * (cp.cov_inv_sqrt() * d);
    if (it >= opt.warmup()) {
      detail::store(out, it - opt.warmup(), bc - adjust * gamma, bc, gamma, r2, s2, opt.chain, it);
    }
  }
  return out;
}

/// Flat priors on beta, gamma and the residual standard deviation
/// sigma_y|t,u. Marginalizing U gives closed-form conditionals:
///   sigma2_y_t ~ IG((n_eff - k - m - 1)/2, RSS/2),
///   beta_check | sigma2 ~ N(OLS, sigma2 (X'X)^{-1}),
///   R^2 | rest ~ Beta(m/2, 1/2), direction uniform,
/// so the chain draws each block exactly. The Beta(m/2, 1/2) law piles mass
/// near R^2 = 1.
inline PosteriorDraws sample_flat_gamma(const Dataset& ds, const FactorModel& fm, const SamplerOptions& opt,
                                        RngStream& rng) {
  opt.validate();
  detail::check_model(ds, fm);
  const detail::Regression reg(ds);
  const Index k = reg.k();
  const ConfounderPosterior cp = confounder_posterior(fm);
  const Index m = cp.confounders();
  if (reg.n_eff - k - m - 1 <= 0) {
    throw InvalidArgument("sample_flat_gamma: augmented design rank-deficient (need n > k + m + 2)");
  }
  const MatrixXd adjust = cp.mean_map().transpose();
  const double shape = 0.5 * static_cast<double>(reg.n_eff - k - m - 1);

  PosteriorDraws out;
  out.reserve(opt.n_iter - opt.warmup(), k, m);
  for (Index it = 0; it < opt.n_iter; ++it) {
    const double s2 = rng.inv_gamma(shape, 0.5 * reg.fit.rss);
    const VectorXd bc = reg.draw_beta_check(s2, rng);
    const double r2 = rng.beta(0.5 * static_cast<double>(m), 0.5);
    const VectorXd d = sample_direction(m, rng);
    const VectorXd gamma = std::sqrt(s2 * r2) * (cp.cov_inv_sqrt() * d);
    if (it >= opt.warmup()) {
      detail::store(out, it - opt.warmup(), bc - adjust * gamma, bc, gamma, r2, s2, opt.chain, it);
    }
  }
  return out;
}

/// Point-mass-at-zero priors on the negative-control coefficients. Each
/// iteration draws the identified regression, projects the control effects
/// onto the row space of M, truncates R^2 to [R2_min, r2_upper] and draws
/// gamma on the feasible set. Identified draws whose R2_min exceeds
/// r2_upper are redrawn (counted in diagnostics).
inline PosteriorDraws sample_negative_control(const Dataset& ds, const FactorModel& fm, const PriorRegime& regime,
                                              const SamplerOptions& opt, RngStream& rng) {
  if (regime.kind != RegimeKind::NegativeControl) {
    throw InvalidArgument("sample_negative_control: regime must be negative-control");
  }
  regime.validate(ds.treatment_count());
  opt.validate();
  detail::check_model(ds, fm);
  const detail::Regression reg(ds);
  const Index k = reg.k();
  if (reg.n_eff <= k) throw InvalidArgument("sample_negative_control: need n > k + 1");
  const ConfounderPosterior cp = confounder_posterior(fm);
  const Index m = cp.confounders();
  const MatrixXd adjust = cp.mean_map().transpose();

  std::vector<Contrast> controls;
  for (Index j : regime.nc_indices) controls.push_back(Contrast::unit(k, j));
  const NCGeometry geo = nc_geometry(cp, controls);
  const auto control_effects = [&](const VectorXd& bc) {
    VectorXd tau(static_cast<Index>(regime.nc_indices.size()));
    for (std::size_t i = 0; i < regime.nc_indices.size(); ++i) tau(static_cast<Index>(i)) = bc(regime.nc_indices[i]);
    return tau;
  };

  PosteriorDraws out;
  out.reserve(opt.n_iter - opt.warmup(), k, m);
  const Compatibility at_mean = nc_compatible(geo, control_effects(reg.fit.coef), regime.compat_tol);
  out.diagnostics.nc_incompatible = !at_mean.compatible;
  out.diagnostics.nc_residual_norm = at_mean.residual_norm;

  constexpr std::size_t kMaxRedraws = 10000;
  const double shape = 0.5 * static_cast<double>(reg.n_eff - k);
  for (Index it = 0; it < opt.n_iter; ++it) {
    double s2 = 0.0;
    VectorXd bc;
    VectorXd tau;
    double floor_r2 = 0.0;
    for (std::size_t attempt = 0;; ++attempt) {
      s2 = rng.inv_gamma(shape, 0.5 * reg.fit.rss);
      bc = reg.draw_beta_check(s2, rng);
      tau = project_to_row_space(geo, control_effects(bc));
      floor_r2 = r2_min(geo, tau, s2);
      if (floor_r2 <= regime.r2_upper) break;
      ++out.diagnostics.infeasible_redraws;
      if (attempt + 1 >= kMaxRedraws) {
        throw Infeasible("sample_negative_control: R2_min exceeds r2_upper for every posterior draw", floor_r2);
      }
    }
    const bool determined = geo.complement_basis.cols() == 0;
    const double r2 = determined ? floor_r2 : rng.uniform(floor_r2, regime.r2_upper);
    const NcGammaSampler gs(geo, cp, tau, s2, r2, 1e-6);
    const VectorXd gamma = gs.draw(rng);
    VectorXd beta = bc - adjust * gamma;
    for (Index j : regime.nc_indices) beta(j) = 0.0;
    if (it >= opt.warmup()) detail::store(out, it - opt.warmup(), beta, bc, gamma, r2, s2, opt.chain, it);
  }
  return out;
}

/// Regularized horseshoe on beta (all coefficients, or only nc_indices for
/// HorseshoeNc with flat priors elsewhere), uniform R^2 in [0, r2_upper] and
/// a uniform direction for gamma. The slab enters as an extra N(0, c^2)
/// factor on each shrunk coefficient, so the local and global scales keep
/// their inverse-gamma auxiliary-variable conditionals.
///
/// State: beta_check, sigma2_y_t, w (gamma = sigma Sigma^{-1/2} w), and the
/// scale mixture. Each sweep updates (sigma2, w) twice: once with beta_check
/// held fixed and once with beta held fixed, the second moving beta_check
/// along with them. beta_check and the scales are Gibbs updates; the rest
/// are Metropolis-Hastings steps.
inline PosteriorDraws sample_horseshoe(const Dataset& ds, const FactorModel& fm, const PriorRegime& regime,
                                       const SamplerOptions& opt, RngStream& rng) {
  if (regime.kind != RegimeKind::Horseshoe && regime.kind != RegimeKind::HorseshoeNc) {
    throw InvalidArgument("sample_horseshoe: regime must be horseshoe or horseshoe-nc");
  }
  regime.validate(ds.treatment_count());
  opt.validate();
  detail::check_model(ds, fm);
  const detail::Regression reg(ds);
  const Index k = reg.k();
  const ConfounderPosterior cp = confounder_posterior(fm);
  const Index m = cp.confounders();
  const MatrixXd adjust = cp.mean_map().transpose();
  const MatrixXd g_map = adjust * cp.cov_inv_sqrt();  // beta_check - beta = sigma * g_map * w
  const VectorXd xty = reg.x.transpose() * reg.y;
  const double yy = reg.y.squaredNorm();
  const MatrixXd gxxg = g_map.transpose() * reg.fit.xtx * g_map;
  const double n_eff = static_cast<double>(reg.n_eff);

  std::vector<Index> shrunk;
  if (regime.kind == RegimeKind::Horseshoe) {
    for (Index j = 0; j < k; ++j) shrunk.push_back(j);
  } else {
    shrunk = regime.nc_indices;
  }
  const Index p = static_cast<Index>(shrunk.size());
  const double expected_nonnull = regime.nonnull_fraction * static_cast<double>(p);
  const double tau0 = regime.horseshoe_scale.value_or(
      expected_nonnull / (static_cast<double>(p) - expected_nonnull) * std::sqrt(reg.fit.sigma2) /
      std::sqrt(static_cast<double>(ds.rows())));
  const double slab_prec = 1.0 / (regime.horseshoe_slab * regime.horseshoe_slab);
  const double r2u = regime.r2_upper;
  const double md = static_cast<double>(m);
  // log of the sphere surface area 2 pi^{m/2} / Gamma(m/2)
  const double log_area = std::log(2.0) + 0.5 * md * std::log(std::numbers::pi) - std::lgamma(0.5 * md);

  PosteriorDraws out;
  out.reserve(opt.n_iter - opt.warmup(), k, m);
  out.diagnostics.global_scale = tau0;

  // Initial state.
  VectorXd bc = reg.fit.coef;
  double s2 = reg.fit.sigma2;
  VectorXd w = VectorXd::Zero(m);
  if (r2u > 0.0) w = std::sqrt(0.5 * r2u) * sample_direction(m, rng);
  VectorXd lambda2 = VectorXd::Ones(p);
  VectorXd nu = VectorXd::Ones(p);
  double tau2 = tau0 * tau0;
  double xi = 1.0;

  const auto prior_prec = [&]() {
    VectorXd prec(p);
    for (Index i = 0; i < p; ++i) prec(i) = 1.0 / (tau2 * lambda2(i)) + slab_prec;
    return prec;
  };
  const auto shrunk_of = [&](const VectorXd& v) {
    VectorXd s(p);
    for (Index i = 0; i < p; ++i) s(i) = v(shrunk[static_cast<std::size_t>(i)]);
    return s;
  };
  const auto rss_of = [&](const VectorXd& b) { return yy - 2.0 * b.dot(xty) + b.dot(reg.fit.xtx * b); };
  // log p(y | beta_check, s2) + log p(s2) with p(s2) proportional to 1 / s2
  const auto log_lik = [&](const VectorXd& b, double v) {
    return -(0.5 * n_eff + 1.0) * std::log(v) - rss_of(b) / (2.0 * v);
  };
  const auto penalty = [&](const VectorXd& prec, double sigma, const VectorXd& wv) {
    const VectorXd r = shrunk_of(bc - sigma * (g_map * wv));
    return r.dot(prec.asDiagonal() * r);
  };
  const auto log_prior_w = [&](const VectorXd& wv) {
    const double r2 = wv.squaredNorm();
    if (r2 > r2u) return -std::numeric_limits<double>::infinity();
    if (m == 2) return 0.0;
    return (2.0 - md) * 0.5 * std::log(r2);
  };
  const auto log_prior_w_density = [&](const VectorXd& wv) {
    return std::log(2.0) + log_prior_w(wv) - std::log(r2u) - log_area;
  };
  // Independence MH for w: proposals mix the prior with N(mean, lam^{-1}).
  const auto update_w = [&](MatrixXd lam, const VectorXd& lin, const auto& log_target) {
    lam.diagonal().array() += md / r2u;
    const Eigen::LLT<MatrixXd> llt(lam);
    if (llt.info() != Eigen::Success) throw NumericalError("sample_horseshoe: proposal precision not PD");
    const VectorXd mean = llt.solve(lin);
    const MatrixXd u = llt.matrixU();
    const double log_det_half = u.diagonal().array().log().sum();
    const auto log_gauss = [&](const VectorXd& wv) {
      const VectorXd r = u * (wv - mean);
      return -0.5 * md * std::log(2.0 * std::numbers::pi) + log_det_half - 0.5 * r.squaredNorm();
    };
    const auto log_proposal = [&](const VectorXd& wv) {
      const double lp = wv.squaredNorm() <= r2u ? log_prior_w_density(wv) : -std::numeric_limits<double>::infinity();
      return detail::log_sum_exp(lp, log_gauss(wv)) - std::log(2.0);
    };
    double current = log_target(w);
    for (int rep = 0; rep < 3; ++rep) {
      VectorXd cand(m);
      if (rng.uniform() < 0.5) {
        cand = std::sqrt(rng.uniform(0.0, r2u)) * sample_direction(m, rng);
      } else {
        VectorXd z(m);
        for (Index j = 0; j < m; ++j) z(j) = rng.normal();
        cand = mean + u.triangularView<Eigen::Upper>().solve(z);
      }
      ++out.diagnostics.mh_proposals;
      const double lt = log_target(cand);
      if (!std::isfinite(lt)) continue;
      if (std::log(rng.uniform()) < lt + log_proposal(w) - current - log_proposal(cand)) {
        w = cand;
        current = lt;
        ++out.diagnostics.mh_accepts;
      }
    }
  };
  const double log_step = 2.4 * std::sqrt(2.0 / n_eff);

  for (Index it = 0; it < opt.n_iter; ++it) {
    const VectorXd prec = prior_prec();

    // beta_check | sigma2, w, scales
    {
      MatrixXd q = reg.fit.xtx / s2;
      VectorXd rhs = xty / s2;
      const VectorXd sh = shrunk_of(std::sqrt(s2) * (g_map * w));
      for (Index i = 0; i < p; ++i) {
        const Index j = shrunk[static_cast<std::size_t>(i)];
        q(j, j) += prec(i);
        rhs(j) += prec(i) * sh(i);
      }
      Eigen::LLT<MatrixXd> llt(q);
      if (llt.info() != Eigen::Success) throw NumericalError("sample_horseshoe: conditional precision not PD");
      VectorXd z(k);
      for (Index j = 0; j < k; ++j) z(j) = rng.normal();
      bc = llt.solve(rhs) + llt.matrixU().solve(z);
    }

    // sigma2 | beta_check, w, scales: proposal from the likelihood part.
    {
      const double cand = rng.inv_gamma(0.5 * n_eff, 0.5 * rss_of(bc));
      const double log_ratio = -0.5 * (penalty(prec, std::sqrt(cand), w) - penalty(prec, std::sqrt(s2), w));
      ++out.diagnostics.mh_proposals;
      if (std::isfinite(cand) && cand > 0.0 && std::log(rng.uniform()) < log_ratio) {
        s2 = cand;
        ++out.diagnostics.mh_accepts;
      }
    }

    if (r2u > 0.0) {
      // w | beta_check, sigma2, scales
      const double sigma = std::sqrt(s2);
      MatrixXd h(p, m);
      for (Index i = 0; i < p; ++i) h.row(i) = sigma * g_map.row(shrunk[static_cast<std::size_t>(i)]);
      update_w(h.transpose() * prec.asDiagonal() * h, h.transpose() * (prec.asDiagonal() * shrunk_of(bc)),
               [&](const VectorXd& wv) { return log_prior_w(wv) - 0.5 * penalty(prec, sigma, wv); });

      // w | beta, sigma2: beta_check = beta + sigma g_map w moves with w.
      const VectorXd beta = bc - sigma * (g_map * w);
      const VectorXd lin = g_map.transpose() * (xty - reg.fit.xtx * beta) / sigma;
      update_w(gxxg, lin, [&](const VectorXd& wv) {
        return log_prior_w(wv) + log_lik(beta + sigma * (g_map * wv), s2);
      });
      bc = beta + sigma * (g_map * w);
    }

    // sigma2 | beta, w: random walk on log sigma2.
    {
      const VectorXd beta = bc - std::sqrt(s2) * (g_map * w);
      const double cand = s2 * std::exp(log_step * rng.normal());
      const VectorXd bc_cand = beta + std::sqrt(cand) * (g_map * w);
      const double log_ratio = log_lik(bc_cand, cand) + std::log(cand) - log_lik(bc, s2) - std::log(s2);
      ++out.diagnostics.mh_proposals;
      if (std::isfinite(log_ratio) && std::log(rng.uniform()) < log_ratio) {
        s2 = cand;
        bc = bc_cand;
        ++out.diagnostics.mh_accepts;
      }
    }

    // Scale mixture on the shrunk coefficients.
    if (!regime.fix_scales) {
      const VectorXd beta_s = shrunk_of(bc - std::sqrt(s2) * (g_map * w));
      for (Index i = 0; i < p; ++i) {
        const double b2 = beta_s(i) * beta_s(i);
        double l2 = 0.0;
        int tries = 0;
        do {
          l2 = rng.inv_gamma(1.0, 1.0 / nu(i) + b2 / (2.0 * tau2));
          if (std::isfinite(l2) && l2 > 0.0 && std::isfinite(1.0 / (tau2 * l2))) break;
          ++out.diagnostics.rejected_updates;
        } while (++tries < 10);
        if (tries < 10) lambda2(i) = l2;
        const double nv = rng.inv_gamma(1.0, 1.0 + 1.0 / lambda2(i));
        if (std::isfinite(nv) && nv > 0.0) nu(i) = nv; else ++out.diagnostics.rejected_updates;
      }
      const double rate = 1.0 / xi + 0.5 * (beta_s.array().square() / lambda2.array()).sum();
      double t2 = 0.0;
      int tries = 0;
      do {
        t2 = rng.inv_gamma(0.5 * static_cast<double>(p + 1), rate);
        if (std::isfinite(t2) && t2 > 0.0) break;
        ++out.diagnostics.rejected_updates;
      } while (++tries < 10);
      if (tries < 10) tau2 = t2;
      const double x = rng.inv_gamma(1.0, 1.0 / (tau0 * tau0) + 1.0 / tau2);
      if (std::isfinite(x) && x > 0.0) xi = x; else ++out.diagnostics.rejected_updates;
    }

    if (it >= opt.warmup()) {
      const double sigma = std::sqrt(s2);
      const VectorXd gamma = sigma * (cp.cov_inv_sqrt() * w);
      detail::store(out, it - opt.warmup(), bc - adjust * gamma, bc, gamma, w.squaredNorm(), s2, opt.chain, it);
    }
  }
  return out;
}

/// Dispatch on the regime.
inline PosteriorDraws sample_posterior(const Dataset& ds, const FactorModel& fm, const PriorRegime& regime,
                                       const SamplerOptions& opt, RngStream& rng) {
  switch (regime.kind) {
    case RegimeKind::FlatGamma: return sample_flat_gamma(ds, fm, opt, rng);
    case RegimeKind::R2Uniform: return sample_transparent(ds, fm, regime, opt, rng);
    case RegimeKind::NegativeControl: return sample_negative_control(ds, fm, regime, opt, rng);
    case RegimeKind::Horseshoe:
    case RegimeKind::HorseshoeNc: return sample_horseshoe(ds, fm, regime, opt, rng);
  }
  throw InvalidArgument("sample_posterior: unknown regime");
}

/// Concatenates per-chain draws in chain order.
inline PosteriorDraws concat_draws(const std::vector<PosteriorDraws>& parts) {
  if (parts.empty()) return {};
  Index total = 0;
  for (const auto& p : parts) total += p.size();
  PosteriorDraws out;
  out.reserve(total, parts.front().beta.cols(), parts.front().gamma.cols());
  Index row = 0;
  for (const auto& p : parts) {
    const Index n = p.size();
    out.beta.middleRows(row, n) = p.beta;
    out.beta_check.middleRows(row, n) = p.beta_check;
    out.gamma.middleRows(row, n) = p.gamma;
    out.r2.segment(row, n) = p.r2;
    out.sigma2_y_t.segment(row, n) = p.sigma2_y_t;
    std::copy(p.chain.begin(), p.chain.end(), out.chain.begin() + row);
    std::copy(p.iteration.begin(), p.iteration.end(), out.iteration.begin() + row);
    auto& d = out.diagnostics;
    d.rejected_updates += p.diagnostics.rejected_updates;
    d.mh_proposals += p.diagnostics.mh_proposals;
    d.mh_accepts += p.diagnostics.mh_accepts;
    d.infeasible_redraws += p.diagnostics.infeasible_redraws;
    d.nc_incompatible = d.nc_incompatible || p.diagnostics.nc_incompatible;
    d.nc_residual_norm = std::max(d.nc_residual_norm, p.diagnostics.nc_residual_norm);
    d.global_scale = p.diagnostics.global_scale;
    row += n;
  }
  return out;
}

/// Runs independent chains concurrently; chain c uses RngStream(seed, c + 1).
inline PosteriorDraws sample_chains(const Dataset& ds, const FactorModel& fm, const PriorRegime& regime,
                                    SamplerOptions opt, int chains, std::uint64_t seed) {
  if (chains < 1) throw InvalidArgument("sample_chains: need at least one chain");
  std::vector<std::future<PosteriorDraws>> jobs;
  for (int c = 0; c < chains; ++c) {
    SamplerOptions o = opt;
    o.chain = c;
    jobs.push_back(std::async(std::launch::async, [&ds, &fm, &regime, o, seed, c]() {
      RngStream rng(seed, static_cast<std::uint64_t>(c) + 1);
      return sample_posterior(ds, fm, regime, o, rng);
    }));
  }
  std::vector<PosteriorDraws> parts;
  for (auto& j : jobs) parts.push_back(j.get());
  return concat_draws(parts);
}

/// Gaussian log density of each centred observation under each draw's
/// observed-data parameters (beta_check, sigma2_y_t).
inline MatrixXd pointwise_loglik(const PosteriorDraws& draws, const Dataset& ds) {
  ds.validate();
  if (draws.beta_check.cols() != ds.treatment_count()) throw DimensionMismatch("pointwise_loglik: k mismatch");
  const MatrixXd x = ds.treatments.data.rowwise() - ds.treatments.data.colwise().mean();
  const VectorXd y = ds.outcome.array() - ds.outcome.mean();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  MatrixXd out(draws.size(), ds.rows());
  for (Index i = 0; i < draws.size(); ++i) {
    const double s2 = draws.sigma2_y_t(i);
    const VectorXd resid = y - x * draws.beta_check.row(i).transpose();
    out.row(i) = (-0.5 * (log2pi + std::log(s2)) - resid.array().square() / (2.0 * s2)).matrix().transpose();
  }
  return out;
}

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  bool significant = false;  // 95% interval excludes zero
};

inline ParamSummary summarize_column(const std::string& name, const VectorXd& col) {
  std::vector<double> v(col.data(), col.data() + col.size());
  ParamSummary s;
  s.name = name;
  s.mean = stats::mean(v);
  s.q025 = stats::quantile(v, 0.025);
  s.q50 = stats::quantile(v, 0.5);
  s.q975 = stats::quantile(v, 0.975);
  s.significant = s.q025 > 0.0 || s.q975 < 0.0;
  return s;
}

inline std::vector<ParamSummary> summarize(const PosteriorDraws& d) {
  std::vector<ParamSummary> out;
  for (Index j = 0; j < d.beta.cols(); ++j) out.push_back(summarize_column("beta_" + std::to_string(j + 1), d.beta.col(j)));
  for (Index j = 0; j < d.gamma.cols(); ++j) out.push_back(summarize_column("gamma_" + std::to_string(j + 1), d.gamma.col(j)));
  out.push_back(summarize_column("r2", d.r2));
  out.push_back(summarize_column("sigma2", d.sigma2_y_t));
  return out;
}

/// Split-R-hat of one column across chains.
inline double split_rhat(const PosteriorDraws& d, const VectorXd& column) {
  int chains = 0;
  for (int c : d.chain) chains = std::max(chains, c + 1);
  std::vector<std::vector<double>> per(static_cast<std::size_t>(chains));
  for (Index i = 0; i < column.size(); ++i) per[static_cast<std::size_t>(d.chain[static_cast<std::size_t>(i)])].push_back(column(i));
  return stats::split_rhat(per);
}

}  // namespace mtsens
