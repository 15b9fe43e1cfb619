#pragma once

// Shared fixtures for the unit tests: random models and orthogonal matrices.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mtsens/model.hpp"
#include "mtsens/rng.hpp"

namespace mtsens::testing {

inline MatrixXd random_matrix(Index r, Index c, RngStream& rng, double scale = 1.0) {
  MatrixXd a(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) a(i, j) = scale * rng.normal();
  }
  return a;
}

inline VectorXd random_vector(Index n, RngStream& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale).col(0);
}

/// Haar-ish orthogonal matrix from the QR of a Gaussian matrix.
inline MatrixXd random_orthogonal(Index m, RngStream& rng) {
  const MatrixXd a = random_matrix(m, m, rng);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m, m);
  const VectorXd d = qr.matrixQR().diagonal();
  for (Index j = 0; j < m; ++j) {
    if (d(j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

inline FactorModel random_factor_model(Index k, Index m, RngStream& rng) {
  return FactorModel(random_matrix(k, m, rng), 0.2 + rng.uniform());
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace mtsens::testing
