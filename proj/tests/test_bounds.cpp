#include <gtest/gtest.h>

#include <cmath>

#include "mtsens/bounds.hpp"
#include "mtsens/sim.hpp"
#include "mtsens/stats.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mtsens;
using namespace mtsens::testing;

namespace {

struct Instance {
  FactorModel fm;
  ConfounderPosterior cp;
  std::vector<Contrast> controls;
  VectorXd tau;
  double s2;
  double r2;
  Contrast target;
};

MatrixXd control_rows(const ConfounderPosterior& cp, const std::vector<Contrast>& cs) {
  MatrixXd a(static_cast<Index>(cs.size()), cp.confounders());
  for (std::size_t i = 0; i < cs.size(); ++i) a.row(static_cast<Index>(i)) = mu_delta(cp, cs[i]).transpose();
  return a;
}

/// Random compatible instance: tau is generated from a gamma inside the
/// ellipsoid, and r2 lies between the implied R2_min and 1.
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

}  // namespace

TEST(WorstCase, NullContrastAndZeroR2) {
  RngStream rng(1);
  const auto cp = confounder_posterior(random_factor_model(4, 2, rng));
  const VectorXd t = random_vector(4, rng);
  EXPECT_EQ(worst_case_interval(cp, {t, t}, 1.0, 0.7, 0.3).half_width, 0.0);
  const auto i0 = worst_case_interval(cp, Contrast::unit(4, 1), 1.0, 0.0, 0.3);
  EXPECT_EQ(i0.half_width, 0.0);
  EXPECT_EQ(i0.pate_lo(), 0.3);
  EXPECT_EQ(i0.pate_hi(), 0.3);
}

TEST(WorstCase, ScalarGridSearch) {
  const auto cp = confounder_posterior(FactorModel(MatrixXd::Ones(1, 1), 1.0));
  const auto iv = worst_case_interval(cp, Contrast::unit(1, 0), 1.0, 0.5, 0.0);
  // Grid over gamma with gamma^2 / 2 <= 0.5, maximizing gamma * 0.5.
  double best = 0.0;
  for (int i = -200000; i <= 200000; ++i) {
    const double g = i * 1e-5;
    if (g * g * 0.5 <= 0.5) best = std::max(best, g * 0.5);
  }
  EXPECT_NEAR(iv.half_width, 0.5, 1e-15);
  EXPECT_NEAR(best, 0.5, 1e-5);
  EXPECT_EQ(iv.center, 0.0);
}

TEST(WorstCase, RejectsBadR2) {
  const auto cp = confounder_posterior(FactorModel(MatrixXd::Ones(2, 1), 1.0));
  EXPECT_THROW(worst_case_interval(cp, Contrast::unit(2, 0), 1.0, 1.2, 0.0), InvalidArgument);
  EXPECT_THROW(worst_case_interval(cp, Contrast::unit(2, 0), 1.0, -0.1, 0.0), InvalidArgument);
  EXPECT_THROW(worst_case_interval(cp, Contrast::unit(2, 0), 0.0, 0.5, 0.0), InvalidArgument);
}

TEST(WorstCase, AttainedOnEllipsoidAndMatchesSweep) {
  RngStream rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    const Index m = 1 + rep % 3;
    const Index k = m + 1 + rep % 3;
    const auto cp = confounder_posterior(random_factor_model(k, m, rng));
    const Contrast c{random_vector(k, rng), random_vector(k, rng)};
    const double s2 = 0.3 + rng.uniform();
    const double r2 = rng.uniform();
    const auto iv = worst_case_interval(cp, c, s2, r2, 0.0);
    const VectorXd g = worst_case_gamma(cp, c, s2, r2);
    EXPECT_NEAR(bias_of(g, mu_delta(cp, c)), iv.half_width, 1e-10 * std::max(1.0, iv.half_width));
    EXPECT_NEAR(g.dot(cp.cov() * g), r2 * s2, 1e-10);
    const double sweep = oracle::ellipsoid_max_bias(cp.cov(), mu_delta(cp, c), s2, r2);
    EXPECT_LT(std::abs(sweep - iv.half_width), 1e-6 * std::max(1e-12, iv.half_width));
  }
}

TEST(NcGeometry, ZeroColumnGivesIdentityProjector) {
  // Treatment 3 has no loading: its confounder mean difference vanishes.
  MatrixXd b(3, 2);
  b << 1, 0, 0, 1, 0, 0;
  const auto cp = confounder_posterior(FactorModel(b, 1.0));
  const auto geo = nc_geometry(cp, {Contrast::unit(3, 2)});
  EXPECT_EQ(geo.rank, 0);
  EXPECT_LT((geo.P_perp - MatrixXd::Identity(2, 2)).norm(), 1e-15);
  EXPECT_EQ(geo.complement_basis.cols(), 2);
}

TEST(NcGeometry, FullColumnSpaceGivesZeroProjector) {
  RngStream rng(3);
  const auto cp = confounder_posterior(random_factor_model(5, 2, rng));
  const auto geo = nc_geometry(cp, {Contrast::unit(5, 0), Contrast::unit(5, 1)});
  EXPECT_EQ(geo.rank, 2);
  EXPECT_LT(geo.P_perp.norm(), 1e-10);
  EXPECT_EQ(geo.complement_basis.cols(), 0);
}

TEST(NcGeometry, PenroseConditionsAndProjectorInvariants) {
  RngStream rng(4);
  for (int rep = 0; rep < 40; ++rep) {
    const Index m = 1 + rep % 3;
    const Index c = 1 + rep % 4;
    const auto cp = confounder_posterior(random_factor_model(m + 2, m, rng));
    std::vector<Contrast> cs;
    for (Index i = 0; i < c; ++i) cs.push_back({random_vector(m + 2, rng), random_vector(m + 2, rng)});
    if (c > 1 && rep % 2) cs[1] = cs[0];  // duplicated control
    const auto geo = nc_geometry(cp, cs);
    EXPECT_LT((geo.M_pinv * geo.M * geo.M_pinv - geo.M_pinv).norm(), 1e-10);
    EXPECT_LT((geo.M * geo.M_pinv * geo.M - geo.M).norm(), 1e-10);
    EXPECT_LT((geo.P_perp * geo.P_perp - geo.P_perp).norm(), 1e-10);
    EXPECT_LT((geo.P_perp * geo.M).norm(), 1e-10);
    EXPECT_LE(geo.rank, std::min(m, c));
    const MatrixXd svd_pinv = Eigen::CompleteOrthogonalDecomposition<MatrixXd>(geo.M).pseudoInverse();
    EXPECT_LT((geo.M_pinv - svd_pinv).norm(), 1e-8);
  }
}

TEST(NcGeometry, ContrastSetAndMismatch) {
  RngStream rng(5);
  const auto cp = confounder_posterior(random_factor_model(4, 2, rng));
  ContrastSet cs{{Contrast::unit(4, 0), Contrast::unit(4, 1), Contrast::unit(4, 2)}, {true, false, true}};
  const auto geo = nc_geometry(cp, cs);
  EXPECT_EQ(geo.controls(), 2);
  ContrastSet bad{{Contrast::unit(4, 0)}, {true, false}};
  EXPECT_THROW(nc_geometry(cp, bad), DimensionMismatch);
  EXPECT_THROW(nc_geometry(cp, {Contrast::unit(3, 0)}), DimensionMismatch);
}

TEST(NcCompatible, ZeroTauAndFullRank) {
  RngStream rng(6);
  const auto cp = confounder_posterior(random_factor_model(5, 2, rng));
  const auto geo = nc_geometry(cp, {Contrast::unit(5, 0), Contrast::unit(5, 3)});
  const auto z = nc_compatible(geo, VectorXd::Zero(2));
  EXPECT_TRUE(z.compatible);
  EXPECT_EQ(z.residual_norm, 0.0);
  for (int rep = 0; rep < 10; ++rep) EXPECT_TRUE(nc_compatible(geo, random_vector(2, rng, 5.0)).compatible);
  EXPECT_THROW(nc_compatible(geo, VectorXd::Zero(3)), DimensionMismatch);
}

TEST(NcCompatible, ConstructedIncompatibleTau) {
  RngStream rng(7);
  const auto cp = confounder_posterior(random_factor_model(6, 1, rng));
  const auto geo = nc_geometry(cp, {Contrast::unit(6, 0), Contrast::unit(6, 1), Contrast::unit(6, 2)});
  ASSERT_EQ(geo.rank, 1);
  // A vector orthogonal to the single row of M.
  const VectorXd row = geo.M.row(0).transpose();
  VectorXd tau = random_vector(3, rng);
  tau -= row * (row.dot(tau) / row.squaredNorm());
  const auto r = nc_compatible(geo, tau);
  EXPECT_FALSE(r.compatible);
  EXPECT_NEAR(r.residual_norm, tau.norm(), 1e-10);
  // Projection restores compatibility.
  EXPECT_TRUE(nc_compatible(geo, project_to_row_space(geo, tau + 2.0 * row)).compatible);
}

TEST(NcCompatible, ManyEstimatedControlsAreGenericallyIncompatible) {
  // 20 null treatments, m = 3, naive effects estimated from a sample.
  RngStream rng(8);
  const Index k = 25;
  DGPConfig cfg;
  cfg.k = k;
  cfg.m = 3;
  cfg.n = 2000;
  cfg.loading_pattern = LoadingPattern::Custom;
  cfg.custom_loadings = random_matrix(k, 3, rng);
  cfg.r2_target = 0.5;
  cfg.seed = 8;
  const auto sim = generate(cfg);
  const FactorModel fm = sim.truth.factor_model();
  const auto cp = confounder_posterior(fm);
  const auto fit = stats::ols(sim.dataset.treatments.data, sim.dataset.outcome);
  std::vector<Contrast> cs;
  VectorXd tau(20);
  for (Index i = 0; i < 20; ++i) {
    cs.push_back(Contrast::unit(k, i));
    tau(i) = fit.coef(i);
  }
  const auto geo = nc_geometry(cp, cs);
  EXPECT_EQ(geo.rank, 3);
  const auto r = nc_compatible(geo, tau);
  EXPECT_FALSE(r.compatible);
  EXPECT_GT(r.residual_norm, 1e-3);
  // The population naive effects are compatible.
  VectorXd tau_pop(20);
  for (Index i = 0; i < 20; ++i) tau_pop(i) = sim.truth.observed.beta_check(i);
  EXPECT_TRUE(nc_compatible(geo, tau_pop).compatible);
}

TEST(R2Min, ZeroTauAndScalarFormula) {
  RngStream rng(9);
  const auto cp = confounder_posterior(random_factor_model(4, 2, rng));
  const auto geo = nc_geometry(cp, {Contrast::unit(4, 0)});
  EXPECT_EQ(r2_min(geo, VectorXd::Zero(1), 1.3), 0.0);

  const auto c1 = confounder_posterior(FactorModel(MatrixXd::Constant(2, 1, 0.7), 0.9));
  const auto g1 = nc_geometry(c1, {Contrast::unit(2, 0)});
  const double mu = mu_delta(c1, Contrast::unit(2, 0))(0);
  const double sig = c1.cov()(0, 0);
  const double tau = 0.4, s2 = 1.7;
  // Minimize gamma^2 Sigma / s2 subject to gamma mu = tau: gamma = tau / mu.
  EXPECT_NEAR(r2_min(g1, VectorXd::Constant(1, tau), s2), tau * tau * sig / (mu * mu * s2), 1e-12);
}

TEST(R2Min, TwoBlockPopulationValue) {
  const auto [obs, cp] = population_params(DGPConfig{});
  const auto geo = nc_geometry(cp, {Contrast::unit(10, 0)});
  EXPECT_NEAR(r2_min(geo, obs.beta_check.head(1), obs.sigma2_y_t), 1.0 / 3.0, 1e-10);
}

TEST(R2Min, ReportedAboveOneUnclamped) {
  const auto cp = confounder_posterior(FactorModel(MatrixXd::Constant(2, 1, 0.5), 1.0));
  const auto geo = nc_geometry(cp, {Contrast::unit(2, 0)});
  const double v = r2_min(geo, VectorXd::Constant(1, 50.0), 1.0);
  EXPECT_GT(v, 1.0);
  EXPECT_THROW(nc_interval(geo, cp, Contrast::unit(2, 1), VectorXd::Constant(1, 50.0), 1.0, 1.0, 0.0), Infeasible);
}

TEST(NcInterval, IdentifiedWhenContrastInColumnSpace) {
  DGPConfig cfg;
  const auto [obs, cp] = population_params(cfg);
  const auto geo = nc_geometry(cp, {Contrast::unit(10, 0)});
  const VectorXd tau = obs.beta_check.head(1);
  // Treatment 2 shares treatment 1's loading row.
  const auto iv = nc_interval(geo, cp, Contrast::unit(10, 1), tau, obs.sigma2_y_t, 0.8, obs.beta_check(1));
  EXPECT_LT(iv.half_width, 1e-10);
  // The bias equals the naive effect: the true effect (zero) is identified.
  EXPECT_NEAR(iv.pate_lo(), 0.0, 1e-10);
}

TEST(NcInterval, ZeroTauReducesToComplementBound) {
  RngStream rng(10);
  const auto cp = confounder_posterior(random_factor_model(5, 3, rng));
  const auto geo = nc_geometry(cp, {Contrast::unit(5, 0)});
  const Contrast c = Contrast::unit(5, 3);
  const auto iv = nc_interval(geo, cp, c, VectorXd::Zero(1), 1.2, 0.6, 0.0);
  EXPECT_EQ(iv.center, 0.0);
  EXPECT_NEAR(iv.half_width, std::sqrt(1.2 * 0.6) * (geo.P_perp * scaled_mu_delta(cp, c)).norm(), 1e-12);
  EXPECT_LE(iv.half_width, worst_case_interval(cp, c, 1.2, 0.6, 0.0).half_width + 1e-12);
}

TEST(NcInterval, InfeasibleCarriesR2Min) {
  DGPConfig cfg;
  const auto [obs, cp] = population_params(cfg);
  const auto geo = nc_geometry(cp, {Contrast::unit(10, 0)});
  try {
    nc_interval(geo, cp, Contrast::unit(10, 5), obs.beta_check.head(1), obs.sigma2_y_t, 0.2, 0.0);
    FAIL() << "expected Infeasible";
  } catch (const Infeasible& e) {
    EXPECT_NEAR(e.r2_min(), 1.0 / 3.0, 1e-10);
  }
}

TEST(NcInterval, NoControlsReproducesWorstCase) {
  RngStream rng(11);
  const auto cp = confounder_posterior(random_factor_model(4, 2, rng));
  const auto geo = nc_geometry(cp, std::vector<Contrast>{});
  const Contrast c{random_vector(4, rng), random_vector(4, rng)};
  const auto a = nc_interval(geo, cp, c, VectorXd(0), 0.9, 0.4, 1.0);
  const auto b = worst_case_interval(cp, c, 0.9, 0.4, 1.0);
  EXPECT_EQ(a.center, 0.0);
  EXPECT_NEAR(a.half_width, b.half_width, 1e-14);
}

TEST(NcInterval, NestedInR2) {
  RngStream rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    const Instance in = random_instance(rng, 5, 3, 1);
    const auto geo = nc_geometry(in.cp, in.controls);
    const double lo_r2 = r2_min(geo, in.tau, in.s2);
    const auto small = nc_interval(geo, in.cp, in.target, in.tau, in.s2, lo_r2 + 0.5 * (1.0 - lo_r2) * 0.5, 0.0);
    const auto large = nc_interval(geo, in.cp, in.target, in.tau, in.s2, 1.0, 0.0);
    EXPECT_LE(large.bias_lo(), small.bias_lo() + 1e-12);
    EXPECT_GE(large.bias_hi(), small.bias_hi() - 1e-12);
  }
}

TEST(NcInterval, MatchesBruteForceSweep) {
  RngStream rng(13);
  for (int rep = 0; rep < 30; ++rep) {
    const Instance in = random_instance(rng, 5, 3, 1);
    const auto geo = nc_geometry(in.cp, in.controls);
    const auto iv = nc_interval(geo, in.cp, in.target, in.tau, in.s2, in.r2, 0.0);
    const auto ref = oracle::constrained_bias_range(in.cp.cov(), control_rows(in.cp, in.controls), in.tau,
                                                    mu_delta(in.cp, in.target), in.s2, in.r2);
    const double scale = std::max(std::abs(iv.center) + iv.half_width, 1e-12);
    EXPECT_LT(std::abs(iv.bias_lo() - ref.lo) / scale, 1e-4);
    EXPECT_LT(std::abs(iv.bias_hi() - ref.hi) / scale, 1e-4);
    EXPECT_NEAR(r2_min(geo, in.tau, in.s2), ref.r2_min, 1e-10);
  }
}

TEST(WidthReduction, Examples) {
  MatrixXd b(3, 2);
  b << 1, 0, 0, 1, 0.5, 0;
  const auto cp = confounder_posterior(FactorModel(b, 1.0));
  const auto geo = nc_geometry(cp, {Contrast::unit(3, 0)});
  // Treatment 2 loads only on the second factor: orthogonal to col(M).
  EXPECT_NEAR(width_reduction(geo, cp, Contrast::unit(3, 1), 0.5, 0.0), 1.0, 1e-12);
  // Treatment 3 is parallel to treatment 1: identified.
  EXPECT_NEAR(width_reduction(geo, cp, Contrast::unit(3, 2), 0.5, 0.1), 0.0, 1e-12);
  EXPECT_THROW(width_reduction(geo, cp, Contrast{VectorXd::Ones(3), VectorXd::Ones(3)}, 0.5, 0.0), InvalidArgument);
  EXPECT_THROW(width_reduction(geo, cp, Contrast::unit(3, 1), 0.0, 0.0), InvalidArgument);
  EXPECT_THROW(width_reduction(geo, cp, Contrast::unit(3, 1), 0.5, 0.6), InvalidArgument);
}

TEST(WidthReduction, TwoBlockGeometry) {
  const auto [obs, cp] = population_params(DGPConfig{});
  const auto geo = nc_geometry(cp, {Contrast::unit(10, 0)});
  const double floor_r2 = r2_min(geo, obs.beta_check.head(1), obs.sigma2_y_t);
  for (double r2 : {0.4, 0.5, 0.8, 1.0}) {
    EXPECT_NEAR(width_reduction(geo, cp, Contrast::unit(10, 1), r2, floor_r2), 0.0, 1e-10);
    EXPECT_NEAR(width_reduction(geo, cp, Contrast::unit(10, 5), r2, floor_r2), std::sqrt(1.0 - floor_r2 / r2), 1e-10);
    // Midpoint unchanged for the orthogonal block.
    const auto iv = nc_interval(geo, cp, Contrast::unit(10, 5), obs.beta_check.head(1), obs.sigma2_y_t, r2, -1.0);
    EXPECT_NEAR(iv.center, 0.0, 1e-10);
  }
}

TEST(WidthReduction, RatioOfHalfWidthsOnRandomInstances) {
  RngStream rng(14);
  for (int rep = 0; rep < 50; ++rep) {
    const Index m = 1 + rep % 3;
    const Instance in = random_instance(rng, m + 3, m, 1 + rep % 2);
    const auto geo = nc_geometry(in.cp, in.controls);
    const double floor_r2 = r2_min(geo, in.tau, in.s2);
    const double f = width_reduction(geo, in.cp, in.target, in.r2, floor_r2);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0 + 1e-12);
    const double ratio = nc_interval(geo, in.cp, in.target, in.tau, in.s2, in.r2, 0.0).half_width /
                         worst_case_interval(in.cp, in.target, in.s2, in.r2, 0.0).half_width;
    EXPECT_NEAR(f, ratio, 1e-10);
  }
}

TEST(Bounds, RotationInvariance) {
  RngStream rng(15);
  const Instance in = random_instance(rng, 6, 3, 2);
  const auto geo = nc_geometry(in.cp, in.controls);
  const auto base = nc_interval(geo, in.cp, in.target, in.tau, in.s2, in.r2, 0.2);
  const auto wc = worst_case_interval(in.cp, in.target, in.s2, in.r2, 0.2);
  const double floor_r2 = r2_min(geo, in.tau, in.s2);
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd q = random_orthogonal(3, rng);
    const auto cq = confounder_posterior(FactorModel(in.fm.loadings() * q, in.fm.noise_variance()));
    const auto gq = nc_geometry(cq, in.controls);
    const auto iv = nc_interval(gq, cq, in.target, in.tau, in.s2, in.r2, 0.2);
    EXPECT_NEAR(iv.center, base.center, 1e-10);
    EXPECT_NEAR(iv.half_width, base.half_width, 1e-10);
    EXPECT_NEAR(worst_case_interval(cq, in.target, in.s2, in.r2, 0.2).half_width, wc.half_width, 1e-10);
    EXPECT_NEAR(r2_min(gq, in.tau, in.s2), floor_r2, 1e-10);
    EXPECT_NEAR(nc_compatible(gq, in.tau).residual_norm, nc_compatible(geo, in.tau).residual_norm, 1e-10);
  }
}
