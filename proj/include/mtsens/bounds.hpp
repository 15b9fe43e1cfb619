#pragma once

// Closed-form partial-identification quantities: worst-case bias intervals,
// negative-control geometry and compatibility, the implied lower bound on
// confounding strength, constrained intervals and width-reduction factors.

#include <cmath>
#include <string>
#include <vector>

#include "mtsens/errors.hpp"
#include "mtsens/linalg.hpp"
#include "mtsens/model.hpp"

namespace mtsens {

struct ContrastSet {
  std::vector<Contrast> contrasts;
  std::vector<bool> is_negative_control;

  std::vector<Contrast> negative_controls() const {
    if (is_negative_control.size() != contrasts.size()) {
      throw DimensionMismatch("ContrastSet: flag count does not match contrast count");
    }
    std::vector<Contrast> out;
    for (std::size_t i = 0; i < contrasts.size(); ++i) {
      if (is_negative_control[i]) out.push_back(contrasts[i]);
    }
    return out;
  }
};

/// Geometry of the negative-control constraint gamma' Sigma^{1/2} M = tau_check_C.
struct NCGeometry {
  MatrixXd M;                 // m x c, columns Sigma^{-1/2} mu_{u|dt_i}
  MatrixXd M_pinv;            // c x m
  MatrixXd P_perp;            // m x m projector onto col(M)^perp
  MatrixXd complement_basis;  // m x q orthonormal basis of col(M)^perp
  Index rank = 0;

  Index confounders() const noexcept { return M.rows(); }
  Index controls() const noexcept { return M.cols(); }
};

/// Bias interval [center - half_width, center + half_width]; the effect
/// interval is naive_effect minus that interval.
struct BiasInterval {
  double center = 0.0;
  double half_width = 0.0;
  double naive_effect = 0.0;

  double bias_lo() const noexcept { return center - half_width; }
  double bias_hi() const noexcept { return center + half_width; }
  double pate_lo() const noexcept { return naive_effect - bias_hi(); }
  double pate_hi() const noexcept { return naive_effect - bias_lo(); }
  bool pate_covers_zero() const noexcept { return pate_lo() <= 0.0 && pate_hi() >= 0.0; }
};

struct Compatibility {
  bool compatible = true;
  double residual_norm = 0.0;
};

/// Default relative tolerance for compatibility of exact (population) inputs.
inline constexpr double kCompatTol = 1e-8;

namespace detail {

inline void check_r2(double r2, const char* who) {
  if (!(r2 >= 0.0 && r2 <= 1.0)) throw InvalidArgument(std::string(who) + ": r2 must lie in [0, 1]");
}

inline void check_sigma2(double s2, const char* who) {
  if (!(s2 > 0.0) || !std::isfinite(s2)) {
    throw InvalidArgument(std::string(who) + ": sigma2_y_t must be positive");
  }
}

inline void check_tau(const NCGeometry& geo, const VectorXd& tau, const char* who) {
  if (tau.size() != geo.controls()) {
    throw DimensionMismatch(std::string(who) + ": tau_check_C length does not match the number of controls");
  }
}

}  // namespace detail

/// Sigma^{-1/2} mu_{u|dt}.
inline VectorXd scaled_mu_delta(const ConfounderPosterior& cp, const Contrast& c) {
  return cp.cov_inv_sqrt() * mu_delta(cp, c);
}

inline BiasInterval worst_case_interval(const ConfounderPosterior& cp, const Contrast& c,
                                        double sigma2_y_t, double r2, double naive_effect) {
  detail::check_r2(r2, "worst_case_interval");
  detail::check_sigma2(sigma2_y_t, "worst_case_interval");
  BiasInterval out;
  out.naive_effect = naive_effect;
  out.half_width = std::sqrt(sigma2_y_t * r2) * scaled_mu_delta(cp, c).norm();
  return out;
}

/// A gamma on the boundary of the ellipsoid gamma' Sigma gamma <= r2 sigma2
/// whose bias equals the upper worst-case endpoint.
inline VectorXd worst_case_gamma(const ConfounderPosterior& cp, const Contrast& c, double sigma2_y_t,
                                 double r2) {
  detail::check_r2(r2, "worst_case_gamma");
  detail::check_sigma2(sigma2_y_t, "worst_case_gamma");
  const VectorXd v = scaled_mu_delta(cp, c);
  const double nrm = v.norm();
  if (!(nrm > 0.0)) return VectorXd::Zero(cp.confounders());
  return std::sqrt(sigma2_y_t * r2) * (cp.cov_inv_sqrt() * v) / nrm;
}

inline NCGeometry nc_geometry(const ConfounderPosterior& cp, const std::vector<Contrast>& controls) {
  const Index m = cp.confounders();
  NCGeometry g;
  g.M.resize(m, static_cast<Index>(controls.size()));
  for (std::size_t i = 0; i < controls.size(); ++i) {
    g.M.col(static_cast<Index>(i)) = scaled_mu_delta(cp, controls[i]);
  }
  auto p = linalg::pinv_svd(g.M);
  g.M_pinv = std::move(p.pinv);
  g.rank = p.rank;
  g.complement_basis = std::move(p.left_null);
  g.P_perp = linalg::symmetrize(MatrixXd::Identity(m, m) - g.M * g.M_pinv);
  return g;
}

inline NCGeometry nc_geometry(const ConfounderPosterior& cp, const ContrastSet& cs) {
  return nc_geometry(cp, cs.negative_controls());
}

/// Residual of tau_check_C from the row space of M.
inline Compatibility nc_compatible(const NCGeometry& geo, const VectorXd& tau_check_c,
                                   double tol = kCompatTol) {
  detail::check_tau(geo, tau_check_c, "nc_compatible");
  Compatibility out;
  const VectorXd projected = geo.M.transpose() * (geo.M_pinv.transpose() * tau_check_c);
  out.residual_norm = (tau_check_c - projected).norm();
  out.compatible = out.residual_norm <= tol * (1.0 + tau_check_c.norm());
  return out;
}

/// Orthogonal projection of tau_check_C onto the row space of M.
inline VectorXd project_to_row_space(const NCGeometry& geo, const VectorXd& tau_check_c) {
  detail::check_tau(geo, tau_check_c, "project_to_row_space");
  return geo.M.transpose() * (geo.M_pinv.transpose() * tau_check_c);
}

/// Minimum-norm whitened confounder effect (M^+)' tau_check_C, i.e. the
/// Sigma^{1/2} gamma that reproduces the control effects with the least
/// confounding.
inline VectorXd nc_anchor(const NCGeometry& geo, const VectorXd& tau_check_c) {
  detail::check_tau(geo, tau_check_c, "nc_anchor");
  return geo.M_pinv.transpose() * tau_check_c;
}

/// Lower bound on R^2_{Y~U|T}. Values above 1 are returned unclamped: no
/// gamma satisfying the variance constraint can explain the controls.
inline double r2_min(const NCGeometry& geo, const VectorXd& tau_check_c, double sigma2_y_t) {
  detail::check_sigma2(sigma2_y_t, "r2_min");
  return nc_anchor(geo, tau_check_c).squaredNorm() / sigma2_y_t;
}

/// Slack used when comparing r2 against R^2_min computed from the same inputs.
inline constexpr double kR2Slack = 1e-12;

inline BiasInterval nc_interval(const NCGeometry& geo, const ConfounderPosterior& cp, const Contrast& c,
                                const VectorXd& tau_check_c, double sigma2_y_t, double r2,
                                double naive_effect) {
  detail::check_sigma2(sigma2_y_t, "nc_interval");
  if (!(r2 >= 0.0)) throw InvalidArgument("nc_interval: r2 must be non-negative");
  if (geo.confounders() != cp.confounders()) throw DimensionMismatch("nc_interval: geometry/model mismatch");
  const VectorXd anchor = nc_anchor(geo, tau_check_c);
  const double r2min = anchor.squaredNorm() / sigma2_y_t;
  if (r2 < r2min - kR2Slack * (1.0 + r2min)) {
    throw Infeasible("nc_interval: r2 = " + std::to_string(r2) + " is below R2_min = " + std::to_string(r2min),
                     r2min);
  }
  const VectorXd v = scaled_mu_delta(cp, c);
  BiasInterval out;
  out.naive_effect = naive_effect;
  out.center = anchor.dot(v);
  out.half_width = std::sqrt(sigma2_y_t * std::max(r2 - r2min, 0.0)) * (geo.P_perp * v).norm();
  return out;
}

/// Ratio of the constrained to the unconstrained ignorance-region width.
inline double width_reduction(const NCGeometry& geo, const ConfounderPosterior& cp, const Contrast& c,
                              double r2, double r2_min_val) {
  if (!(r2 > 0.0 && r2 <= 1.0)) throw InvalidArgument("width_reduction: require 0 < r2 <= 1");
  if (!(r2_min_val >= 0.0 && r2_min_val <= r2 + kR2Slack * (1.0 + r2))) {
    throw InvalidArgument("width_reduction: require 0 <= r2_min <= r2");
  }
  const VectorXd v = scaled_mu_delta(cp, c);
  const double nrm = v.norm();
  if (!(nrm > 0.0)) throw InvalidArgument("width_reduction: contrast has no confounder mean difference");
  return std::sqrt(std::max(1.0 - r2_min_val / r2, 0.0)) * (geo.P_perp * v).norm() / nrm;
}

}  // namespace mtsens
