#pragma once

// Sampling and densities for the unidentified confounder direction: uniform
// directions on the sphere, the induced rescaled-Beta law of the bias, and
// draws of gamma on the negative-control feasible set.

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "mtsens/bounds.hpp"
#include "mtsens/errors.hpp"
#include "mtsens/model.hpp"
#include "mtsens/rng.hpp"

namespace mtsens {

struct BiasSample {
  std::vector<double> draws;
  double half_width = 0.0;  // worst-case bound b for the generating (r2, contrast)
};

/// One uniform direction on the (m-1)-sphere (normalized Gaussian).
inline VectorXd sample_direction(Index m, RngStream& rng) {
  if (m < 1) throw InvalidArgument("sample_direction: m must be positive");
  VectorXd d(m);
  double nrm = 0.0;
  do {
    for (Index j = 0; j < m; ++j) d(j) = rng.normal();
    nrm = d.norm();
  } while (!(nrm > 0.0));
  return d / nrm;
}

/// n x m matrix whose rows are uniform on the (m-1)-sphere.
inline MatrixXd sample_sphere(Index m, Index n, RngStream& rng) {
  if (m < 1 || n < 0) throw InvalidArgument("sample_sphere: need m >= 1, n >= 0");
  MatrixXd out(n, m);
  for (Index i = 0; i < n; ++i) out.row(i) = sample_direction(m, rng).transpose();
  return out;
}

inline BiasSample bias_prior_draws(const ConfounderPosterior& cp, const Contrast& c, double sigma2_y_t,
                                   double r2, Index n, RngStream& rng) {
  const VectorXd mu = mu_delta(cp, c);
  BiasSample out;
  out.half_width = worst_case_interval(cp, c, sigma2_y_t, r2, 0.0).half_width;
  out.draws.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const SensitivitySpec spec(r2, sample_direction(cp.confounders(), rng));
    out.draws.push_back(bias_of(gamma_from_spec(spec, sigma2_y_t, cp), mu));
  }
  return out;
}

/// CDF at x of 2b(Z - 1/2), Z ~ Beta((m-1)/2, (m-1)/2): the law of the bias
/// under a uniform direction. Values outside [-b, b] clamp to 0 or 1.
inline double beta_bias_cdf(double x, int m, double b) {
  if (m < 2) throw InvalidArgument("beta_bias_cdf: m must be at least 2");
  if (!(b > 0.0)) throw InvalidArgument("beta_bias_cdf: b must be positive");
  if (x <= -b) return 0.0;
  if (x >= b) return 1.0;
  const double a = 0.5 * (m - 1);
  const double z = 0.5 * (x / b + 1.0);
  return boost::math::ibeta(a, a, z);
}

/// Feasible-set sampler for gamma given negative controls. Each draw is
/// gamma = Sigma^{-1/2} (anchor + radius * Q u), with anchor = (M^+)' tau,
/// Q an orthonormal basis of col(M)^perp, u uniform on the sphere of that
/// complement, and radius^2 = r2 sigma2 - |anchor|^2.
class NcGammaSampler {
 public:
  NcGammaSampler(const NCGeometry& geo, const ConfounderPosterior& cp, const VectorXd& tau_check_c,
                 double sigma2_y_t, double r2, double compat_tol = kCompatTol)
      : cov_inv_sqrt_(cp.cov_inv_sqrt()), basis_(geo.complement_basis) {
    if (geo.confounders() != cp.confounders()) throw DimensionMismatch("NcGammaSampler: geometry/model mismatch");
    if (!(r2 >= 0.0 && r2 <= 1.0)) throw InvalidArgument("NcGammaSampler: r2 must lie in [0, 1]");
    const Compatibility comp = nc_compatible(geo, tau_check_c, compat_tol);
    if (!comp.compatible) {
      throw Incompatible("NcGammaSampler: negative-control effects are not in the row space of M",
                         comp.residual_norm);
    }
    anchor_ = nc_anchor(geo, tau_check_c);
    r2_min_ = mtsens::r2_min(geo, tau_check_c, sigma2_y_t);
    if (r2 < r2_min_ - kR2Slack * (1.0 + r2_min_)) {
      throw Infeasible("NcGammaSampler: r2 below R2_min", r2_min_);
    }
    if (basis_.cols() == 0) {
      if (r2 > r2_min_ + kR2Slack * (1.0 + r2_min_)) {
        throw Infeasible("NcGammaSampler: controls determine gamma uniquely; r2 must equal R2_min", r2_min_);
      }
    } else {
      radius_ = std::sqrt(std::max(sigma2_y_t * r2 - anchor_.squaredNorm(), 0.0));
    }
  }

  double r2_min() const noexcept { return r2_min_; }
  Index free_dimension() const noexcept { return basis_.cols(); }

  VectorXd draw(RngStream& rng) const {
    VectorXd z = anchor_;
    if (basis_.cols() > 0 && radius_ > 0.0) {
      z += radius_ * (basis_ * sample_direction(basis_.cols(), rng));
    }
    return cov_inv_sqrt_ * z;
  }

 private:
  MatrixXd cov_inv_sqrt_;
  MatrixXd basis_;
  VectorXd anchor_;
  double r2_min_ = 0.0;
  double radius_ = 0.0;
};

/// n x m matrix of gamma draws satisfying the negative-control constraint
/// and gamma' Sigma gamma = r2 sigma2_y_t.
inline MatrixXd sample_gamma_nc(const NCGeometry& geo, const ConfounderPosterior& cp,
                                const VectorXd& tau_check_c, double sigma2_y_t, double r2, Index n,
                                RngStream& rng) {
  const NcGammaSampler sampler(geo, cp, tau_check_c, sigma2_y_t, r2);
  MatrixXd out(n, cp.confounders());
  for (Index i = 0; i < n; ++i) out.row(i) = sampler.draw(rng).transpose();
  return out;
}

}  // namespace mtsens
