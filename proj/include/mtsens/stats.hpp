#pragma once

// Small statistical toolbox: least squares, Kolmogorov-Smirnov tests,
// quantiles and split-chain potential scale reduction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mtsens/errors.hpp"
#include "mtsens/linalg.hpp"

namespace mtsens::stats {

/// Ordinary least squares of y on x with an intercept absorbed by centring.
struct OlsFit {
  VectorXd coef;        // slopes, length k
  double intercept = 0.0;
  double rss = 0.0;
  Index dof = 0;        // n - 1 - k
  double sigma2 = 0.0;  // rss / dof
  MatrixXd xtx;         // centred cross product
  MatrixXd xtx_inv;
  VectorXd std_err() const { return (sigma2 * xtx_inv.diagonal()).cwiseSqrt(); }
};

inline OlsFit ols(const MatrixXd& x, const VectorXd& y) {
  const Index n = x.rows();
  const Index k = x.cols();
  if (y.size() != n) throw DimensionMismatch("ols: row count mismatch");
  if (n <= k + 1) throw InvalidArgument("ols: need n > k + 1 observations");
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const double ybar = y.mean();
  const MatrixXd xc = x.rowwise() - xbar;
  const VectorXd yc = y.array() - ybar;
  OlsFit f;
  f.xtx = xc.transpose() * xc;
  Eigen::LLT<MatrixXd> llt(f.xtx);
  if (llt.info() != Eigen::Success) throw NumericalError("ols: design is rank deficient");
  f.coef = llt.solve(xc.transpose() * yc);
  f.xtx_inv = llt.solve(MatrixXd::Identity(k, k));
  f.intercept = ybar - xbar.dot(f.coef);
  f.rss = (yc - xc * f.coef).squaredNorm();
  f.dof = n - 1 - k;
  f.sigma2 = f.rss / static_cast<double>(f.dof);
  return f;
}

/// Asymptotic Kolmogorov survival function Q(lambda) = P(K > lambda).
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample two-sided KS test of `sample` against a continuous CDF.
inline KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidArgument("ks_one_sample: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)};
}

/// Two-sample two-sided KS test.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)};
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw InvalidArgument("quantile: empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double mu = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size() - 1);
}

/// Split-chain potential scale reduction factor. Each inner vector is one
/// chain; chains are split in half before pooling.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) throw InvalidArgument("split_rhat: chains too short");
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  const double n = static_cast<double>(halves.front().size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& h : halves) {
    means.push_back(mean(h));
    w += variance(h);
  }
  w /= static_cast<double>(halves.size());
  const double b = n * variance(means);
  if (!(w > 0.0)) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

}  // namespace mtsens::stats
