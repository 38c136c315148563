#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "funcox/inference.hpp"
#include "funcox/simgen.hpp"
#include "support/test_support.hpp"

using namespace funcox;
using namespace funcox::testing;

namespace {

errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const error& e) {
    return e.code();
  }
  return errc::io_failure;
}

CoefficientCurve flat_curve(Index L, double estimate, const MatrixXd& factor) {
  CoefficientCurve c;
  c.grid = VectorXd::LinSpaced(L, 1.0, static_cast<double>(L));
  c.estimate = VectorXd::Constant(L, estimate);
  c.factor = factor;
  c.se = factor.rowwise().norm();
  return c;
}

// Smooth random curve: B-spline basis on L points times a random coefficient
// vector with a random PSD covariance.
CoefficientCurve random_curve(Index L, int K, std::mt19937_64& rng, double signal) {
  SplineSpec s;
  s.K = K;
  const VectorXd grid = VectorXd::LinSpaced(L, 0.0, 1.0);
  const MatrixXd phi = SplineBasis::create(s).evaluate(grid);
  const MatrixXd A = random_matrix(K, K, rng, 0.3);
  return curve_from_basis(grid, phi, random_vector(K, rng, signal), A * A.transpose());
}

PenalizedFitResult small_fit() {
  const Index n = 300, L = 40;
  FunctionalDataset X = synthetic_activity_curves(n, L, 5, false);
  VectorXd beta(L);
  for (Index g = 0; g < L; ++g) beta[g] = std::sin(6.0 * (g + 0.5) / L);
  std::mt19937_64 rng(5);
  CohortDataset c;
  c.survival = outcomes_for_eta(X.values() * beta / static_cast<double>(L), 0.4, 5);
  c.linear = random_vector(n, rng);
  c.linear_labels = {"z"};
  c.additive = random_vector(n, rng);
  c.additive_labels = {"v"};
  c.functional.push_back({"x", std::move(X)});
  ModelSpec spec;
  spec.linear_terms = {"z"};
  SmoothTermSpec v;
  v.label = "v";
  v.type = TermType::additive;
  v.K = 6;
  spec.additive_terms.push_back(v);
  SmoothTermSpec x;
  x.label = "x";
  x.K = 10;
  spec.functional_terms.push_back(x);
  static const CohortDataset cohort = c;
  return fit(cohort, spec);
}

}  // namespace

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------
TEST(CurveCovariance, IdentityStub) {
  const VectorXd grid = VectorXd::LinSpaced(6, 0.0, 1.0);
  const MatrixXd I = MatrixXd::Identity(6, 6);
  VectorXd coef(6);
  coef << 1, -2, 3, -4, 5, -6;
  const CoefficientCurve c = curve_from_basis(grid, I, coef, I);
  EXPECT_EQ(c.estimate, coef);
  EXPECT_LT((c.cov() - I).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((c.se.array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(CurveCovariance, DiagonalMatchesPerPointQuadraticForm) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 4 + trial % 9;
    SplineSpec s;
    s.K = K;
    const VectorXd grid = VectorXd::LinSpaced(73, 0.0, 1.0);
    const MatrixXd phi = SplineBasis::create(s).evaluate(grid);
    const MatrixXd A = random_matrix(K, K, rng);
    const MatrixXd V = A * A.transpose();
    const CoefficientCurve c = curve_from_basis(grid, phi, random_vector(K, rng), V);
    for (Index l = 0; l < grid.size(); ++l) {
      double q = 0.0;
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) q += phi(l, a) * V(a, b) * phi(l, b);
      EXPECT_NEAR(c.se[l] * c.se[l], q, 1e-10 * std::max(1.0, q));
      EXPECT_NEAR(c.cov()(l, l), q, 1e-10 * std::max(1.0, q));
    }
  }
}

TEST(CurveCovariance, RankBoundedByBlockSize) {
  std::mt19937_64 rng(2);
  const CoefficientCurve c = random_curve(200, 8, rng, 1.0);
  EXPECT_LE(c.factor.cols(), 8);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(c.cov());
  const double top = es.eigenvalues().maxCoeff();
  EXPECT_LE((es.eigenvalues().array() > 1e-10 * top).count(), 8);
}

TEST(CurveCovariance, FromFitComposesConstraint) {
  const PenalizedFitResult f = small_fit();
  const FittedTerm& v = f.term("v");
  ASSERT_TRUE(v.constraint.has_value());
  const CoefficientCurve c = curve_covariance(f, "v");
  const MatrixXd raw = v.basis->evaluate(v.grid);
  EXPECT_LT((c.estimate - raw * (*v.constraint * f.block(v))).cwiseAbs().maxCoeff(), 1e-12);
  const MatrixXd phi = raw * *v.constraint;
  EXPECT_LT(rel_error(c.cov(), phi * f.block_cov(v) * phi.transpose()), 1e-10);

  const CoefficientCurve x = curve_covariance(f, "x");
  EXPECT_EQ(x.size(), 40);
  EXPECT_GT(x.se.minCoeff(), 0.0);
  const VectorXd coarse = VectorXd::LinSpaced(7, 1.0, 40.0);
  EXPECT_EQ(curve_covariance(f, "x", coarse).size(), 7);
}

TEST(CurveCovariance, UnknownTerm) {
  const PenalizedFitResult f = small_fit();
  EXPECT_EQ(code_of([&] { curve_covariance(f, "nope"); }), errc::unknown_term);
  EXPECT_EQ(code_of([&] { curve_covariance(f, "z"); }), errc::unknown_term);
}

TEST(PsdFactor, ClipsTinyNegativesAndRejectsLargeOnes) {
  MatrixXd V = MatrixXd::Ones(3, 3);
  V(0, 0) -= 1e-10;
  const MatrixXd R = psd_factor(V);
  EXPECT_LT((R * R.transpose() - V).cwiseAbs().maxCoeff(), 1e-9);
  MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  EXPECT_EQ(code_of([&] { psd_factor(bad); }), errc::not_psd_after_clip);
  EXPECT_EQ(code_of([&] { cma_critical_value(bad, 0.05, 1000, 1); }), errc::not_psd_after_clip);
}

// ---------------------------------------------------------------------------
// Pointwise bands
// ---------------------------------------------------------------------------
TEST(PointwiseBand, StandardNormalQuantile) {
  const CoefficientCurve c = flat_curve(5, 0.0, MatrixXd::Identity(5, 5));
  const Band b = pointwise_band(c, 0.05);
  for (Index l = 0; l < 5; ++l) {
    EXPECT_NEAR(b.lower[l], -1.959964, 1e-6);
    EXPECT_NEAR(b.upper[l], 1.959964, 1e-6);
  }
}

TEST(PointwiseBand, NarrowerAtLargerAlphaAndDegenerateAtZeroSe) {
  std::mt19937_64 rng(3);
  CoefficientCurve c = random_curve(30, 6, rng, 1.0);
  c.se[4] = 0.0;
  const Band wide = pointwise_band(c, 0.05), narrow = pointwise_band(c, 0.32);
  for (Index l = 0; l < 30; ++l) {
    EXPECT_LE(wide.lower[l], narrow.lower[l]);
    EXPECT_GE(wide.upper[l], narrow.upper[l]);
  }
  EXPECT_EQ(wide.lower[4], c.estimate[4]);
  EXPECT_EQ(wide.upper[4], c.estimate[4]);
}

// ---------------------------------------------------------------------------
// CMA critical values
// ---------------------------------------------------------------------------
TEST(CmaCriticalValue, SinglePointIsNormalQuantile) {
  const CmaCritical c = cma_critical_value(MatrixXd::Ones(1, 1), 0.05, 100000, 11);
  EXPECT_NEAR(c.q_raw, 1.959964, 0.02);
}

TEST(CmaCriticalValue, PerfectCorrelationIsNormalQuantile) {
  for (Index L : {2, 10, 50}) {
    const CmaCritical c = cma_critical_value(MatrixXd::Ones(L, L), 0.05, 100000, 12);
    EXPECT_NEAR(c.q, 1.959964, 0.02) << "L=" << L;
  }
}

TEST(CmaCriticalValue, IndependentPointsMatchSidak) {
  // the closed form gives 2.7996; 2.807 is the Bonferroni value z_{1-0.05/20}
  const double want = sidak_critical(10, 0.05);
  EXPECT_NEAR(want, 2.7996, 1e-4);
  EXPECT_NEAR(normal_quantile(1.0 - 0.05 / 20.0), 2.807, 1e-3);
  const CmaCritical c = cma_critical_value(MatrixXd::Identity(10, 10), 0.05, 100000, 13);
  EXPECT_NEAR(c.q, want, 0.03);
}

TEST(CmaCriticalValue, QuantilesMonotoneInLevel) {
  const CmaCritical c = cma_critical_value(MatrixXd::Identity(8, 8), 0.05, 5000, 3);
  double prev = -1.0;
  for (double alpha : {0.5, 0.3, 0.2, 0.1, 0.05, 0.01, 0.001}) {
    const double q = empirical_quantile(c.r_sorted, 1.0 - alpha);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(CmaCriticalValue, RejectsSmallBAndBadAlpha) {
  const MatrixXd I = MatrixXd::Identity(3, 3);
  EXPECT_EQ(code_of([&] { cma_critical_value(I, 0.05, 999, 1); }), errc::invalid_argument);
  EXPECT_EQ(code_of([&] { cma_critical_value(I, 0.0, 1000, 1); }), errc::invalid_argument);
  EXPECT_EQ(code_of([&] { cma_critical_value(I, 1.0, 1000, 1); }), errc::invalid_argument);
}

TEST(CmaCriticalValue, SampleIndependentOfThreadCount) {
  std::mt19937_64 rng(4);
  const CoefficientCurve c = random_curve(60, 10, rng, 1.0);
  const MatrixXd f = correlation_factor(c);
  const CmaCritical one = cma_critical_value_from_factor(f, 0.05, 5000, 99, 1);
  for (unsigned t : {2u, 3u, 8u}) {
    const CmaCritical many = cma_critical_value_from_factor(f, 0.05, 5000, 99, t);
    EXPECT_EQ(one.r_sorted, many.r_sorted);
    EXPECT_EQ(one.q, many.q);
  }
}

// ---------------------------------------------------------------------------
// Bands and p-values
// ---------------------------------------------------------------------------
TEST(CmaBand, ContainsPointwiseBandExactly) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const CoefficientCurve c = random_curve(50, 4 + trial % 10, rng, 2.0);
    const CmaBand b = cma_band(c, trial % 2 ? 0.05 : 0.2, 2000, static_cast<std::uint64_t>(trial));
    EXPECT_GE(b.q, b.z);
    for (Index l = 0; l < 50; ++l) {
      EXPECT_LE(b.lower[l], b.lower_pointwise[l]);
      EXPECT_GE(b.upper[l], b.upper_pointwise[l]);
      EXPECT_GE(b.p_cma[l], b.p_unadj[l]);
    }
    EXPECT_EQ(b.p_global, b.p_cma.minCoeff());
  }
}

TEST(CmaBand, ZeroEstimateIsSymmetric) {
  std::mt19937_64 rng(6);
  CoefficientCurve c = random_curve(40, 8, rng, 1.0);
  c.estimate.setZero();
  const CmaBand b = cma_band(c, 0.05, 5000, 1);
  EXPECT_EQ(b.lower, -b.upper);
  EXPECT_GE(b.p_cma.minCoeff(), 0.999);
  EXPECT_EQ(b.p_unadj.minCoeff(), 1.0);
}

TEST(CmaBand, BitIdenticalOnRerun) {
  std::mt19937_64 rng(7);
  const CoefficientCurve c = random_curve(80, 12, rng, 1.0);
  const CmaBand a = cma_band(c, 0.05, 10000, 2024), b = cma_band(c, 0.05, 10000, 2024);
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_EQ(a.p_cma, b.p_cma);
  EXPECT_EQ(a.p_global, b.p_global);
  EXPECT_EQ(a.seed, 2024u);
  EXPECT_EQ(a.B, 10000);
  const CmaBand other = cma_band(c, 0.05, 10000, 2025);
  EXPECT_NE(a.q_raw, other.q_raw);
}

TEST(CmaPvalues, SinglePointMatchesNormalTail) {
  for (double t : {0.5, 1.0, 1.96, 2.5}) {
    const CoefficientCurve c = flat_curve(1, t, MatrixXd::Ones(1, 1));
    const CmaCritical crit = cma_critical_value_from_factor(correlation_factor(c), 0.05, 100000, 21);
    const CmaPvalues p = cma_pvalues(c, crit.r_sorted);
    EXPECT_NEAR(p.p_cma[0], 2.0 * (1.0 - phi(t)), 0.01) << "t=" << t;
  }
}

TEST(CmaPvalues, ZeroSeWithNonzeroEstimate) {
  CoefficientCurve c = flat_curve(3, 1.0, MatrixXd::Identity(3, 3));
  c.se[1] = 0.0;
  EXPECT_EQ(code_of([&] { cma_pvalues(c, {1.0, 2.0}); }), errc::zero_se);
  c.estimate[1] = 0.0;
  EXPECT_NO_THROW(cma_pvalues(c, {1.0, 2.0}));
}

TEST(CmaPvalues, GlobalPValueAgreesWithBandExclusion) {
  std::mt19937_64 rng(8);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = 0.05;
    const CoefficientCurve c = random_curve(30, 6, rng, 0.6);
    const CmaBand b = cma_band(c, alpha, 2000, static_cast<std::uint64_t>(trial));
    const CmaCritical crit = cma_critical_value_from_factor(correlation_factor(c), alpha, 2000, static_cast<std::uint64_t>(trial));
    double tmax = 0.0;
    for (Index l = 0; l < c.size(); ++l) tmax = std::max(tmax, std::abs(c.estimate[l]) / c.se[l]);
    // between the interpolated quantile and the next order statistics the
    // add-one tail and the band can disagree; skip those ties
    const double h = (static_cast<double>(crit.r_sorted.size()) - 1.0) * (1.0 - alpha);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double tie_lo = crit.r_sorted[lo] - 1e-9, tie_hi = crit.r_sorted[std::min(lo + 2, crit.r_sorted.size() - 1)] + 1e-9;
    if (tmax >= std::min(tie_lo, b.q - 1e-9) && tmax <= std::max(tie_hi, b.q + 1e-9)) continue;
    ++checked;
    bool excludes = false;
    for (Index l = 0; l < c.size(); ++l) excludes = excludes || b.lower[l] > 0.0 || b.upper[l] < 0.0;
    EXPECT_EQ(b.p_global < alpha, excludes) << "trial " << trial;
  }
  EXPECT_GT(checked, 150);
}

TEST(CmaPvalues, ScaleEquivariance) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const CoefficientCurve c = random_curve(40, 7, rng, 1.0);
    CoefficientCurve s = c;
    const double k = std::exp(random_vector(1, rng, 2.0)[0]);
    s.estimate *= k;
    s.factor *= k;
    s.se *= k;
    const CmaBand a = cma_band(c, 0.05, 3000, 5), b = cma_band(s, 0.05, 3000, 5);
    EXPECT_NEAR(a.q, b.q, 1e-12);
    EXPECT_LT((a.p_cma - b.p_cma).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.p_unadj - b.p_unadj).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((b.upper - k * a.upper).cwiseAbs().maxCoeff(), 1e-10 * k);
  }
}
