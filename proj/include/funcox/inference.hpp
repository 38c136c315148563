#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "funcox/coxfit.hpp"
#include "funcox/errors.hpp"
#include "funcox/parallel.hpp"

namespace funcox {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, errc::invalid_argument, "normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Two-sided unadjusted p-value 2(1 - Phi(|t|)).
inline double two_sided_p(double t) { return std::erfc(std::abs(t) / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Coefficient curves
// ---------------------------------------------------------------------------
struct CoefficientCurve {
  VectorXd grid;
  VectorXd estimate;
  VectorXd se;
  MatrixXd factor;  // L x r with cov = factor * factor^T

  Index size() const noexcept { return grid.size(); }
  MatrixXd cov() const { return factor * factor.transpose(); }
};

// Square root R of a symmetric PSD matrix (V = R R^T), dropping null
// directions. Eigenvalues in [floor, 0) are clipped to zero; anything more
// negative is rejected.
inline MatrixXd psd_factor(const MatrixXd& V, double floor = -1e-8) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (V + V.transpose()));
  require(es.info() == Eigen::Success, errc::not_psd_after_clip, "eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();
  if (ev.size() > 0 && ev.minCoeff() < floor)
    fail(errc::not_psd_after_clip, "matrix has eigenvalue " + std::to_string(ev.minCoeff()) + " below tolerance");
  const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  std::vector<Index> keep;
  for (Index k = ev.size() - 1; k >= 0; --k)
    if (ev[k] > 1e-13 * top && ev[k] > 0.0) keep.push_back(k);
  MatrixXd R(V.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    R.col(static_cast<Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(ev[keep[c]]);
  return R;
}

// Curve phi(s)^T b with covariance Phi Vb Phi^T.
inline CoefficientCurve curve_from_basis(const VectorXd& grid, const MatrixXd& phi, const VectorXd& coef,
                                         const MatrixXd& vb) {
  require(phi.rows() == grid.size() && phi.cols() == coef.size() && vb.rows() == coef.size(),
          errc::invalid_argument, "curve evaluation dimensions do not agree");
  CoefficientCurve c;
  c.grid = grid;
  c.estimate = phi * coef;
  c.factor = phi * psd_factor(vb);
  c.se = c.factor.rowwise().norm();
  return c;
}

// Curve for one smooth term of a fit on eval_grid (default: the term's own grid).
inline CoefficientCurve curve_covariance(const PenalizedFitResult& fit, const std::string& label,
                                         const std::optional<VectorXd>& eval_grid = std::nullopt) {
  const FittedTerm& t = fit.term(label);
  const VectorXd grid = eval_grid.value_or(t.grid);
  return curve_from_basis(grid, t.evaluation(grid), fit.block(t), fit.block_cov(t));
}

struct Band {
  VectorXd lower;
  VectorXd upper;
};

inline Band pointwise_band(const CoefficientCurve& c, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, errc::invalid_argument, "alpha must lie in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return {c.estimate - z * c.se, c.estimate + z * c.se};
}

// ---------------------------------------------------------------------------
// Max-statistic Monte Carlo
// ---------------------------------------------------------------------------

// Correlation factor of a curve: rows of its covariance factor divided by se.
// Points without support (se = 0) get zero rows.
inline MatrixXd correlation_factor(const CoefficientCurve& c) {
  MatrixXd f = c.factor;
  for (Index l = 0; l < f.rows(); ++l) {
    if (c.se[l] > 0.0)
      f.row(l) /= c.se[l];
    else
      f.row(l).setZero();
  }
  return f;
}

// r^(b) = max_l |z_l^(b)| for z^(b) = factor * N(0, I). Draws come in
// fixed-size chunks, each with its own stream keyed by (seed, chunk), so the
// sample does not depend on the thread count.
inline std::vector<double> sample_max_statistic(const MatrixXd& factor, int B, std::uint64_t seed, unsigned threads = 1) {
  require(B >= 1, errc::invalid_argument, "need at least one Monte Carlo draw");
  constexpr int chunk = 1024;
  const int chunks = (B + chunk - 1) / chunk;
  std::vector<double> r(static_cast<std::size_t>(B), 0.0);
  const Index rank = factor.cols();
  parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
    const int first = static_cast<int>(c) * chunk;
    const int count = std::min(chunk, B - first);
    auto eng = make_stream(seed, stream_tag::cma_draws, c);
    std::normal_distribution<double> normal;
    MatrixXd z(rank, count);
    for (int b = 0; b < count; ++b)
      for (Index k = 0; k < rank; ++k) z(k, b) = normal(eng);
    if (rank == 0) return;
    const MatrixXd draws = factor * z;
    for (int b = 0; b < count; ++b) r[static_cast<std::size_t>(first + b)] = draws.col(b).cwiseAbs().maxCoeff();
  });
  return r;
}

// Empirical quantile with linear interpolation between order statistics.
inline double empirical_quantile(const std::vector<double>& sorted, double prob) {
  require(!sorted.empty(), errc::invalid_argument, "empty sample");
  return interpolated_quantile(sorted, prob);
}

struct CmaCritical {
  double q = 0.0;      // max(q_raw, z)
  double q_raw = 0.0;  // empirical quantile of the max statistic
  double z = 0.0;      // z_{1 - alpha/2}
  double alpha = 0.05;
  int B = 0;
  std::uint64_t seed = 0;
  std::vector<double> r_sorted;
};

inline CmaCritical cma_critical_value_from_factor(const MatrixXd& corr_factor, double alpha, int B, std::uint64_t seed,
                                                  unsigned threads = 1) {
  require(alpha > 0.0 && alpha < 1.0, errc::invalid_argument, "alpha must lie in (0,1)");
  require(B >= 1000, errc::invalid_argument, "CMA critical value needs B >= 1000 draws");
  CmaCritical out;
  out.alpha = alpha;
  out.B = B;
  out.seed = seed;
  out.r_sorted = sample_max_statistic(corr_factor, B, seed, threads);
  std::sort(out.r_sorted.begin(), out.r_sorted.end());
  out.q_raw = empirical_quantile(out.r_sorted, 1.0 - alpha);
  out.z = normal_quantile(1.0 - alpha / 2.0);
  out.q = std::max(out.q_raw, out.z);
  return out;
}

// From an L x L correlation matrix, via its eigen square root.
inline CmaCritical cma_critical_value(const MatrixXd& corr, double alpha, int B = 10000, std::uint64_t seed = 1,
                                      unsigned threads = 1) {
  require(corr.rows() == corr.cols(), errc::invalid_argument, "correlation matrix must be square");
  return cma_critical_value_from_factor(psd_factor(corr), alpha, B, seed, threads);
}

struct CmaPvalues {
  VectorXd p_unadj;
  VectorXd p_cma;
  double p_global = 1.0;
};

// p_pCMA(s_l) = max{(1 + #{r >= t_l}) / (B + 1), 2(1 - Phi(t_l))}: the
// add-one empirical tail of the max statistic, floored at the unadjusted
// p-value (the level-alpha band uses max(q, z)).
inline CmaPvalues cma_pvalues(const CoefficientCurve& c, const std::vector<double>& r_sorted) {
  require(!r_sorted.empty(), errc::invalid_argument, "empty max-statistic sample");
  const auto B = static_cast<double>(r_sorted.size());
  CmaPvalues out;
  out.p_unadj.resize(c.size());
  out.p_cma.resize(c.size());
  for (Index l = 0; l < c.size(); ++l) {
    double t = 0.0;
    if (c.se[l] > 0.0) {
      t = std::abs(c.estimate[l]) / c.se[l];
    } else if (c.estimate[l] != 0.0) {
      fail(errc::zero_se, "zero standard error at grid point " + std::to_string(c.grid[l]) + " with nonzero estimate");
    }
    const auto above = static_cast<double>(r_sorted.end() - std::lower_bound(r_sorted.begin(), r_sorted.end(), t));
    out.p_unadj[l] = two_sided_p(t);
    out.p_cma[l] = std::max((1.0 + above) / (B + 1.0), out.p_unadj[l]);
  }
  out.p_global = c.size() ? out.p_cma.minCoeff() : 1.0;
  return out;
}

struct CmaBand {
  double alpha = 0.05;
  double q = 0.0;
  double q_raw = 0.0;
  double z = 0.0;
  VectorXd lower;
  VectorXd upper;
  VectorXd lower_pointwise;
  VectorXd upper_pointwise;
  VectorXd p_unadj;
  VectorXd p_cma;
  double p_global = 1.0;
  int B = 0;
  std::uint64_t seed = 0;
};

inline CmaBand cma_band(const CoefficientCurve& c, double alpha, int B = 10000, std::uint64_t seed = 1,
                        unsigned threads = 1) {
  const CmaCritical crit = cma_critical_value_from_factor(correlation_factor(c), alpha, B, seed, threads);
  CmaBand band;
  band.alpha = alpha;
  band.q = crit.q;
  band.q_raw = crit.q_raw;
  band.z = crit.z;
  band.B = B;
  band.seed = seed;
  band.lower = c.estimate - crit.q * c.se;
  band.upper = c.estimate + crit.q * c.se;
  band.lower_pointwise = c.estimate - crit.z * c.se;
  band.upper_pointwise = c.estimate + crit.z * c.se;
  CmaPvalues pv = cma_pvalues(c, crit.r_sorted);
  band.p_unadj = std::move(pv.p_unadj);
  band.p_cma = std::move(pv.p_cma);
  band.p_global = pv.p_global;
  return band;
}

}  // namespace funcox
