#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "mtsens/errors.hpp"

namespace mtsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace linalg {

/// Relative threshold on the smallest eigenvalue for positive definiteness.
inline constexpr double kPdRelTol = 1e-10;
/// Relative threshold on singular values treated as zero by pinv().
inline constexpr double kPinvRelTol = 1e-10;

inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

inline bool all_finite(const MatrixXd& a) { return a.allFinite(); }

/// Eigendecomposition of a symmetric matrix that must be positive definite.
/// Throws NumericalError when the smallest eigenvalue is not above
/// kPdRelTol times the largest.
inline Eigen::SelfAdjointEigenSolver<MatrixXd> spd_eigen(const MatrixXd& a, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
  if (es.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": eigendecomposition failed");
  }
  const VectorXd& ev = es.eigenvalues();
  if (ev.size() == 0) return es;
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0) || !(ev.minCoeff() > kPdRelTol * hi)) {
    throw NumericalError(std::string(what) + ": matrix is not positive definite");
  }
  return es;
}

/// Unique symmetric positive definite square root of an SPD matrix.
inline MatrixXd sqrt_spd(const MatrixXd& a) {
  auto es = spd_eigen(a, "sqrt_spd");
  const MatrixXd& v = es.eigenvectors();
  return v * es.eigenvalues().cwiseSqrt().asDiagonal() * v.transpose();
}

/// Symmetric inverse square root of an SPD matrix.
inline MatrixXd inv_sqrt_spd(const MatrixXd& a) {
  auto es = spd_eigen(a, "inv_sqrt_spd");
  const MatrixXd& v = es.eigenvectors();
  return v * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
}

inline MatrixXd inv_spd(const MatrixXd& a) {
  auto es = spd_eigen(a, "inv_spd");
  const MatrixXd& v = es.eigenvectors();
  return symmetrize(v * es.eigenvalues().cwiseInverse().asDiagonal() * v.transpose());
}

struct PseudoInverse {
  MatrixXd pinv;           // cols x rows of the input
  Index rank = 0;
  MatrixXd left_null;      // orthonormal basis of the complement of col(A)
};

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// rel_tol * (largest singular value) are treated as zero. Also returns an
/// orthonormal basis for the orthogonal complement of the column space.
inline PseudoInverse pinv_svd(const MatrixXd& a, double rel_tol = kPinvRelTol) {
  const Index rows = a.rows();
  const Index cols = a.cols();
  PseudoInverse out;
  out.pinv = MatrixXd::Zero(cols, rows);
  if (rows == 0) {
    out.left_null.resize(0, 0);
    return out;
  }
  if (cols == 0 || a.isZero(0.0)) {
    out.left_null = MatrixXd::Identity(rows, rows);
    return out;
  }
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  const double cutoff = rel_tol * s(0);
  Index r = 0;
  while (r < s.size() && s(r) > cutoff) ++r;
  out.rank = r;
  const MatrixXd& u = svd.matrixU();
  const MatrixXd& v = svd.matrixV();
  for (Index i = 0; i < r; ++i) {
    out.pinv.noalias() += (v.col(i) / s(i)) * u.col(i).transpose();
  }
  out.left_null = u.rightCols(rows - r);
  return out;
}

inline MatrixXd pinv(const MatrixXd& a, double rel_tol = kPinvRelTol) {
  return pinv_svd(a, rel_tol).pinv;
}

}  // namespace linalg
}  // namespace mtsens
