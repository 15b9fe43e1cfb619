#pragma once

// Gaussian factor model for the treatments, linear outcome model, and the
// closed-form identities relating the scientific parameters (beta, gamma)
// to the observed-data regression (beta_check, sigma2_y_t).

#include <cmath>
#include <string>
#include <utility>

#include "mtsens/errors.hpp"
#include "mtsens/linalg.hpp"

namespace mtsens {

/// T = B U + eps, eps ~ N(0, sigma2_t_u I_k), U ~ N(0, I_m).
class FactorModel {
 public:
  FactorModel(MatrixXd loadings, double noise_variance)
      : loadings_(std::move(loadings)), noise_variance_(noise_variance) {
    const Index k = loadings_.rows();
    const Index m = loadings_.cols();
    if (k < 1 || m < 1 || m > k) {
      throw InvalidArgument("FactorModel: require k >= 1, 1 <= m <= k (got k=" +
                            std::to_string(k) + ", m=" + std::to_string(m) + ")");
    }
    if (!loadings_.allFinite()) throw InvalidArgument("FactorModel: non-finite loadings");
    if (!(noise_variance_ > 0.0) || !std::isfinite(noise_variance_)) {
      throw InvalidArgument("FactorModel: noise variance must be positive");
    }
  }

  const MatrixXd& loadings() const noexcept { return loadings_; }
  double noise_variance() const noexcept { return noise_variance_; }
  Index treatments() const noexcept { return loadings_.rows(); }
  Index confounders() const noexcept { return loadings_.cols(); }

  /// Marginal treatment covariance B B' + sigma2 I.
  MatrixXd treatment_covariance() const {
    MatrixXd c = loadings_ * loadings_.transpose();
    c.diagonal().array() += noise_variance_;
    return c;
  }

 private:
  MatrixXd loadings_;
  double noise_variance_;
};

/// U | T = t ~ N(mean_map * t, cov).
class ConfounderPosterior {
 public:
  ConfounderPosterior(MatrixXd mean_map, MatrixXd cov)
      : mean_map_(std::move(mean_map)), cov_(linalg::symmetrize(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_map_.rows()) {
      throw DimensionMismatch("ConfounderPosterior: mean map and covariance disagree on m");
    }
    auto es = linalg::spd_eigen(cov_, "ConfounderPosterior covariance");
    const MatrixXd& v = es.eigenvectors();
    const VectorXd root = es.eigenvalues().cwiseSqrt();
    cov_sqrt_ = v * root.asDiagonal() * v.transpose();
    cov_inv_sqrt_ = v * root.cwiseInverse().asDiagonal() * v.transpose();
    eigenvalues_ = es.eigenvalues();
    if (eigenvalues_.size() > 0 && eigenvalues_.maxCoeff() > 1.0 + 1e-9) {
      throw NumericalError("ConfounderPosterior: covariance eigenvalue exceeds 1");
    }
  }

  /// m x k matrix mapping t to E[U | T = t].
  const MatrixXd& mean_map() const noexcept { return mean_map_; }
  const MatrixXd& cov() const noexcept { return cov_; }
  const MatrixXd& cov_sqrt() const noexcept { return cov_sqrt_; }
  const MatrixXd& cov_inv_sqrt() const noexcept { return cov_inv_sqrt_; }
  /// Ascending eigenvalues of cov.
  const VectorXd& cov_eigenvalues() const noexcept { return eigenvalues_; }
  Index confounders() const noexcept { return mean_map_.rows(); }
  Index treatments() const noexcept { return mean_map_.cols(); }

 private:
  MatrixXd mean_map_;
  MatrixXd cov_;
  MatrixXd cov_sqrt_;
  MatrixXd cov_inv_sqrt_;
  VectorXd eigenvalues_;
};

/// Y = beta' T + gamma' U + eps, eps ~ N(0, sigma2_y_tu).
struct OutcomeModel {
  VectorXd beta;
  VectorXd gamma;
  double sigma2_y_tu = 1.0;
};

/// Observed regression of Y on T under no unobserved confounding.
struct ObservedOutcomeParams {
  VectorXd beta_check;
  double sigma2_y_t = 1.0;
};

/// Partial R^2 of the confounders plus a unit direction on the (m-1)-sphere.
class SensitivitySpec {
 public:
  SensitivitySpec(double r2, VectorXd direction) : r2_(r2), direction_(std::move(direction)) {
    if (!(r2_ >= 0.0 && r2_ <= 1.0)) throw InvalidArgument("SensitivitySpec: r2 must lie in [0, 1]");
    if (direction_.size() < 1) throw InvalidArgument("SensitivitySpec: empty direction");
    if (std::abs(direction_.norm() - 1.0) > 1e-12) {
      throw InvalidArgument("SensitivitySpec: direction must be a unit vector");
    }
  }

  /// Normalizes an arbitrary non-zero direction before validation.
  static SensitivitySpec normalized(double r2, const VectorXd& direction) {
    const double nrm = direction.norm();
    if (!(nrm > 0.0)) throw InvalidArgument("SensitivitySpec: zero direction");
    return SensitivitySpec(r2, direction / nrm);
  }

  double r2() const noexcept { return r2_; }
  const VectorXd& direction() const noexcept { return direction_; }

 private:
  double r2_;
  VectorXd direction_;
};

/// Treatment contrast t1 versus t2.
struct Contrast {
  VectorXd t1;
  VectorXd t2;

  VectorXd delta() const { return t1 - t2; }

  /// Treatment i (zero-based) set to x, every other treatment at 0, versus
  /// the all-zero baseline.
  static Contrast unit(Index k, Index i, double x = 1.0) {
    if (i < 0 || i >= k) throw InvalidArgument("Contrast::unit: treatment index out of range");
    Contrast c{VectorXd::Zero(k), VectorXd::Zero(k)};
    c.t1(i) = x;
    return c;
  }
};

inline ConfounderPosterior confounder_posterior(const FactorModel& fm) {
  const MatrixXd& b = fm.loadings();
  const MatrixXd k_inv = linalg::inv_spd(fm.treatment_covariance());
  MatrixXd mean_map = b.transpose() * k_inv;  // m x k
  MatrixXd cov = MatrixXd::Identity(fm.confounders(), fm.confounders()) - mean_map * b;
  return ConfounderPosterior(std::move(mean_map), std::move(cov));
}

/// mu_{u|t1} - mu_{u|t2}.
inline VectorXd mu_delta(const ConfounderPosterior& cp, const Contrast& c) {
  if (c.t1.size() != cp.treatments() || c.t2.size() != cp.treatments()) {
    throw DimensionMismatch("mu_delta: contrast length does not match the number of treatments");
  }
  return cp.mean_map() * (c.t1 - c.t2);
}

/// gamma = sigma_y|t * sqrt(r2) * Sigma^{-1/2} d.
inline VectorXd gamma_from_spec(const SensitivitySpec& spec, double sigma2_y_t,
                                const ConfounderPosterior& cp) {
  if (!(sigma2_y_t > 0.0)) throw InvalidArgument("gamma_from_spec: sigma2_y_t must be positive");
  if (spec.direction().size() != cp.confounders()) {
    throw DimensionMismatch("gamma_from_spec: direction length does not match m");
  }
  return std::sqrt(sigma2_y_t * spec.r2()) * (cp.cov_inv_sqrt() * spec.direction());
}

inline double bias_of(const VectorXd& gamma, const VectorXd& mu_d) {
  if (gamma.size() != mu_d.size()) throw DimensionMismatch("bias_of: length mismatch");
  return gamma.dot(mu_d);
}

/// Partial R^2 implied by gamma: gamma' Sigma gamma / sigma2_y_t.
inline double implied_r2(const VectorXd& gamma, double sigma2_y_t, const ConfounderPosterior& cp) {
  return gamma.dot(cp.cov() * gamma) / sigma2_y_t;
}

inline ObservedOutcomeParams observed_params(const OutcomeModel& om, const FactorModel& fm) {
  if (om.beta.size() != fm.treatments() || om.gamma.size() != fm.confounders()) {
    throw DimensionMismatch("observed_params: beta/gamma lengths do not match the factor model");
  }
  if (!(om.sigma2_y_tu > 0.0)) throw InvalidArgument("observed_params: sigma2_y_tu must be positive");
  const ConfounderPosterior cp = confounder_posterior(fm);
  ObservedOutcomeParams out;
  out.beta_check = om.beta + cp.mean_map().transpose() * om.gamma;
  out.sigma2_y_t = om.sigma2_y_tu + om.gamma.dot(cp.cov() * om.gamma);
  return out;
}

/// beta = beta_check - (B B' + sigma2 I)^{-1} B gamma.
inline VectorXd recover_beta(const VectorXd& beta_check, const VectorXd& gamma,
                             const ConfounderPosterior& cp) {
  if (beta_check.size() != cp.treatments() || gamma.size() != cp.confounders()) {
    throw DimensionMismatch("recover_beta: length mismatch");
  }
  return beta_check - cp.mean_map().transpose() * gamma;
}

}  // namespace mtsens
