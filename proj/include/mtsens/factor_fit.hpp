#pragma once

// Closed-form maximum-likelihood probabilistic PCA and scree diagnostics.

#include <optional>
#include <string>
#include <vector>

#include "mtsens/errors.hpp"
#include "mtsens/linalg.hpp"
#include "mtsens/model.hpp"

namespace mtsens {

struct TreatmentMatrix {
  MatrixXd data;                          // n x k
  std::vector<std::string> column_names;  // empty or k labels

  Index rows() const noexcept { return data.rows(); }
  Index cols() const noexcept { return data.cols(); }
};

struct ScreeResult {
  VectorXd eigenvalues;          // descending
  VectorXd cumulative_fraction;  // ends at 1
};

struct FitOptions {
  bool standardize = false;
};

namespace detail {

inline void check_treatments(const TreatmentMatrix& tm, const char* who) {
  if (!tm.column_names.empty() && static_cast<Index>(tm.column_names.size()) != tm.cols()) {
    throw DimensionMismatch(std::string(who) + ": column_names length does not match k");
  }
  if (!tm.data.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite treatment values");
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
inline std::pair<VectorXd, MatrixXd> descending_eigen(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrize(s));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

}  // namespace detail

/// Column-centred (optionally standardized) copy of the treatments.
inline MatrixXd centered_treatments(const TreatmentMatrix& tm, bool standardize = false) {
  MatrixXd x = tm.data.rowwise() - tm.data.colwise().mean();
  if (standardize) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(x.rows() - 1));
      if (!(sd > 0.0)) throw InvalidArgument("standardize: column " + std::to_string(j) + " is constant");
      x.col(j) /= sd;
    }
  }
  return x;
}

/// Sample covariance with the (n - 1) normalization.
inline MatrixXd sample_covariance(const TreatmentMatrix& tm, bool standardize = false) {
  detail::check_treatments(tm, "sample_covariance");
  if (tm.rows() < 2) throw InvalidArgument("sample_covariance: need at least two rows");
  const MatrixXd x = centered_treatments(tm, standardize);
  return linalg::symmetrize(x.transpose() * x / static_cast<double>(tm.rows() - 1));
}

/// ML-PPCA fit from a covariance matrix: B = U_m diag(sqrt(lambda_j - s2)),
/// s2 = mean of the trailing k - m eigenvalues.
inline FactorModel fit_ppca_covariance(const MatrixXd& cov, Index m) {
  const Index k = cov.rows();
  if (cov.cols() != k) throw DimensionMismatch("fit_ppca: covariance must be square");
  if (m < 1 || m >= k) {
    throw InvalidArgument("fit_ppca: require 1 <= m < k (got m=" + std::to_string(m) +
                          ", k=" + std::to_string(k) + ")");
  }
  if (!cov.allFinite()) throw InvalidArgument("fit_ppca: non-finite covariance");
  auto [lambda, u] = detail::descending_eigen(cov);
  const double s2 = lambda.tail(k - m).mean();
  if (!(s2 > 0.0)) throw NumericalError("fit_ppca: trailing eigenvalue mean is not positive (degenerate data)");
  const VectorXd scale = (lambda.head(m).array() - s2).max(0.0).sqrt();
  MatrixXd b = u.leftCols(m) * scale.asDiagonal();
  return FactorModel(std::move(b), s2);
}

inline FactorModel fit_ppca(const TreatmentMatrix& tm, Index m, const FitOptions& opt = {}) {
  detail::check_treatments(tm, "fit_ppca");
  if (tm.rows() < tm.cols() + 1) throw InvalidArgument("fit_ppca: need n >= k + 1 rows");
  return fit_ppca_covariance(sample_covariance(tm, opt.standardize), m);
}

inline ScreeResult scree_covariance(const MatrixXd& cov) {
  ScreeResult out;
  out.eigenvalues = detail::descending_eigen(cov).first.cwiseMax(0.0);
  const double total = out.eigenvalues.sum();
  out.cumulative_fraction.resize(out.eigenvalues.size());
  double acc = 0.0;
  for (Index i = 0; i < out.eigenvalues.size(); ++i) {
    acc += out.eigenvalues(i);
    out.cumulative_fraction(i) = total > 0.0 ? acc / total : 1.0;
  }
  if (out.cumulative_fraction.size() > 0) out.cumulative_fraction(out.cumulative_fraction.size() - 1) = 1.0;
  return out;
}

inline ScreeResult scree(const TreatmentMatrix& tm, const FitOptions& opt = {}) {
  detail::check_treatments(tm, "scree");
  if (tm.rows() < 2) throw InvalidArgument("scree: need n > 1");
  return scree_covariance(sample_covariance(tm, opt.standardize));
}

}  // namespace mtsens
