#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "funcox/coxfit.hpp"
#include "funcox/data_model.hpp"
#include "funcox/errors.hpp"
#include "funcox/inference.hpp"
#include "funcox/parallel.hpp"

namespace funcox {

// ===========================================================================
// FPCA
// ===========================================================================
struct FpcaModel {
  VectorXd grid;
  bool cyclic = false;
  VectorXd mu;
  MatrixXd eigenfunctions;      // L x M, orthonormal under 1/L quadrature
  VectorXd eigenvalues;         // M, non-increasing, >= 0
  VectorXd variance_explained;  // cumulative fraction, length M
  double total_variance = 0.0;
  std::vector<std::string> warnings;

  Index components() const noexcept { return eigenvalues.size(); }
};

// Mean, sample covariance and its eigendecomposition; keeps the smallest
// number of components reaching var_threshold of the total variance.
inline FpcaModel fpca_fit(const FunctionalDataset& data, double var_threshold = 0.99) {
  require(var_threshold > 0.0 && var_threshold <= 1.0, errc::invalid_argument, "variance threshold must be in (0,1]");
  const Index n = data.rows(), L = data.points();
  require(n >= 2, errc::degenerate_data, "FPCA needs at least two curves");
  FpcaModel m;
  m.grid = data.grid();
  m.cyclic = data.cyclic();
  if (n <= L)
    m.warnings.push_back("FPCA with N=" + std::to_string(n) + " curves on " + std::to_string(L) +
                         " grid points; covariance estimate is rank deficient");
  m.mu = data.values().colwise().mean().transpose();
  const MatrixXd centered = data.values().rowwise() - m.mu.transpose();
  MatrixXd C = MatrixXd::Zero(L, L);
  C.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n - 1));
  C = C.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
  require(es.info() == Eigen::Success, errc::degenerate_data, "covariance eigendecomposition failed");
  const VectorXd ev = es.eigenvalues().reverse();
  const MatrixXd vecs = es.eigenvectors().rowwise().reverse();
  const double top = ev.size() ? ev[0] : 0.0;
  const double scale = std::max(1.0, C.diagonal().cwiseAbs().maxCoeff());
  require(top > 1e-12 * scale && top > 0.0, errc::degenerate_data, "functional data have zero variance");

  Index positive = 0;
  double total = 0.0;
  for (Index k = 0; k < ev.size(); ++k) {
    if (ev[k] > 1e-10 * top) {
      total += ev[k];
      positive = k + 1;
    } else {
      break;
    }
  }
  Index M = 0;
  double cum = 0.0;
  while (M < positive) {
    cum += ev[M];
    ++M;
    if (cum >= var_threshold * total * (1.0 - 1e-12)) break;
  }
  const double rootL = std::sqrt(static_cast<double>(L));
  m.eigenfunctions.resize(L, M);
  m.eigenvalues.resize(M);
  m.variance_explained.resize(M);
  cum = 0.0;
  for (Index k = 0; k < M; ++k) {
    VectorXd v = vecs.col(k);
    if (v.sum() < 0.0) v = -v;
    m.eigenfunctions.col(k) = rootL * v;
    m.eigenvalues[k] = ev[k] / static_cast<double>(L);
    cum += ev[k];
    m.variance_explained[k] = cum / total;
  }
  m.total_variance = total / static_cast<double>(L);
  return m;
}

// Curves mu + sum_k xi_k phi_k with xi_k ~ N(0, lambda_k); optionally mapped
// back to the activity scale by x -> max(e^x - 1, 0).
inline FunctionalDataset simulate_functional(const FpcaModel& model, Index n, std::uint64_t seed,
                                             bool backtransform = false, unsigned threads = 1) {
  require(n >= 1, errc::invalid_argument, "need at least one simulated curve");
  const Index M = model.components(), L = model.grid.size();
  MatrixXd scores(n, M);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    auto eng = make_stream(seed, stream_tag::fpca_scores, i);
    std::normal_distribution<double> normal;
    for (Index k = 0; k < M; ++k)
      scores(static_cast<Index>(i), k) = std::sqrt(std::max(model.eigenvalues[k], 0.0)) * normal(eng);
  });
  MatrixXd X = scores * model.eigenfunctions.transpose();
  X.rowwise() += model.mu.transpose();
  if (backtransform) X = X.unaryExpr([](double x) { return std::max(std::expm1(x), 0.0); });
  (void)L;
  return FunctionalDataset(std::move(X), model.grid, model.cyclic);
}

// ===========================================================================
// Survival outcomes from a baseline hazard and linear predictor
// ===========================================================================
enum class BeyondFollowup {
  // The event falls after the last baseline event time: T = +inf, so the
  // subject is censored at its drawn censoring time.
  censor_at_max,
};

struct SurvivalSimConfig {
  Index N = 0;
  VectorXd beta_grid;   // grid of beta_true; must match the simulated curves
  VectorXd beta_true;
  BaselineHazard baseline;
  std::vector<double> censoring_pool;
  std::uint64_t seed = 1;
  BeyondFollowup beyond_followup_rule = BeyondFollowup::censor_at_max;
};

// Smallest baseline event time t_(j) with exp(-e^eta Lambda0(t_(j))) <= u,
// or +inf when the survival curve never drops to u.
inline double draw_event_time(double eta, double u, const BaselineHazard& h) {
  if (!(u > 0.0)) return std::numeric_limits<double>::infinity();
  const double target = -std::log(u) * std::exp(-eta);
  auto it = std::lower_bound(h.cumulative.begin(), h.cumulative.end(), target);
  if (it == h.cumulative.end()) return std::numeric_limits<double>::infinity();
  return h.event_times[static_cast<std::size_t>(it - h.cumulative.begin())];
}

struct SimulatedOutcomes {
  SurvivalData survival;
  VectorXd eta;
  VectorXd event_time;   // +inf beyond follow-up
  VectorXd censor_time;

  double event_fraction() const {
    return survival.size() ? static_cast<double>(survival.events()) / static_cast<double>(survival.size()) : 0.0;
  }
};

inline SimulatedOutcomes simulate_survival_from_eta(const VectorXd& eta, const BaselineHazard& baseline,
                                                    const std::vector<double>& censoring_pool, std::uint64_t seed) {
  require(!censoring_pool.empty(), errc::invalid_argument, "censoring pool is empty");
  require(!baseline.event_times.empty(), errc::invalid_argument, "baseline hazard has no event times");
  const Index n = eta.size();
  SimulatedOutcomes out;
  out.eta = eta;
  out.event_time.resize(n);
  out.censor_time.resize(n);
  out.survival.time.resize(n);
  out.survival.status.resize(n);
  std::uniform_int_distribution<std::size_t> pick(0, censoring_pool.size() - 1);
  for (Index i = 0; i < n; ++i) {
    auto eng = make_stream(seed, stream_tag::survival, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(eng);
    const double c = censoring_pool[pick(eng)];
    const double t = draw_event_time(eta[i], u, baseline);
    out.event_time[i] = t;
    out.censor_time[i] = c;
    out.survival.status[i] = t <= c ? 1 : 0;
    out.survival.time[i] = std::min(t, c);
  }
  return out;
}

// Quadrature linear predictor sum_g X[i,g] beta(s_g) / L.
inline VectorXd functional_linear_predictor(const FunctionalDataset& X, const VectorXd& beta_grid, const VectorXd& beta) {
  require(beta.size() == beta_grid.size() && same_grid(beta_grid, X.grid()), errc::grid_mismatch,
          "true coefficient and simulated curves are on different grids");
  return X.values() * beta / static_cast<double>(X.points());
}

inline SimulatedOutcomes simulate_survival(const SurvivalSimConfig& cfg, const FunctionalDataset& X_sim) {
  require(cfg.N == 0 || cfg.N == X_sim.rows(), errc::invalid_argument, "N does not match the simulated curves");
  return simulate_survival_from_eta(functional_linear_predictor(X_sim, cfg.beta_grid, cfg.beta_true), cfg.baseline,
                                    cfg.censoring_pool, cfg.seed);
}

// ===========================================================================
// Generative truth
// ===========================================================================
struct GenerativeTruth {
  FpcaModel fpca;
  VectorXd beta_true;  // on fpca.grid
  BaselineHazard baseline;
  std::vector<double> censoring_pool;
  double source_event_fraction = 0.0;
  std::string description;
};

enum class BetaShape { null, smooth, linear };

inline BetaShape parse_beta_shape(const std::string& s) {
  if (s == "null" || s == "zero") return BetaShape::null;
  if (s == "smooth") return BetaShape::smooth;
  if (s == "linear") return BetaShape::linear;
  fail(errc::config, "unknown beta shape '" + s + "' (expected null, smooth or linear)");
}

inline std::string to_string(BetaShape b) {
  switch (b) {
    case BetaShape::null: return "null";
    case BetaShape::smooth: return "smooth";
    case BetaShape::linear: return "linear";
  }
  return "?";
}

struct SyntheticTruthSettings {
  Index L = 144;               // 10-minute bins
  bool cyclic = true;
  BetaShape beta = BetaShape::smooth;
  double beta_scale = 1.0;
  double event_fraction = 0.08;
  Index source_n = 4000;
  double var_threshold = 0.99;
  Index baseline_times = 200;
  double follow_up = 10.0;
  Index censoring_pool_size = 2000;
  std::uint64_t seed = 20240601;
};

// Day-fraction position of grid point s = 1..L.
inline double day_fraction(double s, Index L) { return (s - 0.5) / static_cast<double>(L); }

// Log-activity-like curves: a diurnal mean, a subject level shift, and
// Fourier deviations with geometrically decaying variances.
inline FunctionalDataset synthetic_activity_curves(Index n, Index L, std::uint64_t seed, bool cyclic = true) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr int freqs = 12;
  VectorXd grid = VectorXd::LinSpaced(L, 1.0, static_cast<double>(L));
  MatrixXd X(n, L);
  for (Index i = 0; i < n; ++i) {
    auto eng = make_stream(seed, stream_tag::source, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    const double level = 0.5 * normal(eng);
    std::vector<double> cs(freqs), sn(freqs);
    for (int f = 0; f < freqs; ++f) {
      const double sd = std::sqrt(0.30 * std::pow(0.65, f));
      cs[static_cast<std::size_t>(f)] = sd * normal(eng);
      sn[static_cast<std::size_t>(f)] = sd * normal(eng);
    }
    for (Index g = 0; g < L; ++g) {
      const double t = day_fraction(grid[g], L);
      double x = 1.6 - 0.9 * std::cos(two_pi * t) - 0.3 * std::cos(2.0 * two_pi * t - 0.5) + level;
      for (int f = 0; f < freqs; ++f) {
        const double w = two_pi * (f + 1) * t;
        x += std::sqrt(2.0) * (cs[static_cast<std::size_t>(f)] * std::cos(w) + sn[static_cast<std::size_t>(f)] * std::sin(w));
      }
      X(i, g) = x + 0.03 * normal(eng);
    }
  }
  return FunctionalDataset(std::move(X), std::move(grid), cyclic);
}

inline VectorXd synthetic_beta(BetaShape shape, const VectorXd& grid, double scale) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const Index L = grid.size();
  VectorXd b(L);
  for (Index g = 0; g < L; ++g) {
    const double t = day_fraction(grid[g], L);
    switch (shape) {
      case BetaShape::null: b[g] = 0.0; break;
      case BetaShape::smooth: b[g] = scale * (std::cos(two_pi * (t - 0.55)) - 0.5 * std::sin(2.0 * two_pi * t)); break;
      case BetaShape::linear: b[g] = scale * 2.0 * (t - 0.5); break;
    }
  }
  return b;
}

// Expected event fraction when every linear predictor in `eta` is paired
// with every censoring time in the pool.
inline double expected_event_fraction(const VectorXd& eta, const BaselineHazard& h, const std::vector<double>& pool) {
  std::map<double, double> levels;  // Lambda0(C) -> weight
  for (double c : pool) levels[h.cumulative_at(c)] += 1.0 / static_cast<double>(pool.size());
  const VectorXd r = eta.array().exp();
  double total = 0.0;
  for (const auto& [lam, w] : levels) total += w * (1.0 - (-r.array() * lam).exp()).mean();
  return total;
}

// Desk-scale stand-in for a fitted source model: FPCA of a synthetic source
// population, a known beta, a baseline hazard scaled so the expected event
// fraction hits the target, and a uniform administrative censoring pool.
inline GenerativeTruth make_synthetic_truth(const SyntheticTruthSettings& s) {
  require(s.event_fraction > 0.0 && s.event_fraction < 1.0, errc::config, "event fraction must lie in (0,1)");
  GenerativeTruth truth;
  const FunctionalDataset source = synthetic_activity_curves(s.source_n, s.L, s.seed, s.cyclic);
  truth.fpca = fpca_fit(source, s.var_threshold);
  truth.beta_true = synthetic_beta(s.beta, source.grid(), s.beta_scale);

  auto eng = make_stream(s.seed, stream_tag::source, 0xC0FFEEULL);
  std::uniform_real_distribution<double> unif(0.4 * s.follow_up, s.follow_up);
  truth.censoring_pool.resize(static_cast<std::size_t>(s.censoring_pool_size));
  for (auto& c : truth.censoring_pool) c = unif(eng);

  const VectorXd eta = functional_linear_predictor(source, source.grid(), truth.beta_true);
  auto baseline_for = [&](double rate) {
    BaselineHazard h;
    const double dt = s.follow_up / static_cast<double>(s.baseline_times);
    for (Index j = 1; j <= s.baseline_times; ++j) {
      h.event_times.push_back(dt * static_cast<double>(j));
      h.increments.push_back(rate * dt);
      h.cumulative.push_back(rate * dt * static_cast<double>(j));
    }
    return h;
  };
  double lo = -20.0, hi = 10.0;  // log rate
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (expected_event_fraction(eta, baseline_for(std::exp(mid)), truth.censoring_pool) < s.event_fraction)
      lo = mid;
    else
      hi = mid;
  }
  truth.baseline = baseline_for(std::exp(0.5 * (lo + hi)));
  truth.source_event_fraction = expected_event_fraction(eta, truth.baseline, truth.censoring_pool);
  truth.description = "synthetic: L=" + std::to_string(s.L) + ", beta=" + to_string(s.beta) +
                      ", event fraction target " + std::to_string(s.event_fraction);
  return truth;
}

// The data-driven pipeline: FPCA of a real functional predictor, the fitted
// curve of that term as beta, the Breslow baseline of the fit, and the
// censoring times of the censored subjects.
inline GenerativeTruth truth_from_fit(const PenalizedFitResult& fit, const CohortDataset& cohort,
                                      const std::string& term_label, double var_threshold = 0.99) {
  const FittedTerm& t = fit.term(term_label);
  require(t.type == TermType::functional, errc::config, "term '" + term_label + "' is not a functional term");
  const FunctionalDataset* X = cohort.find_functional(t.source);
  require(X != nullptr, errc::config, "functional predictor '" + t.source + "' missing from cohort");
  GenerativeTruth truth;
  truth.fpca = fpca_fit(*X, var_threshold);
  truth.beta_true = t.evaluation(X->grid()) * fit.block(t);
  truth.baseline = breslow_baseline(fit, cohort);
  for (Index i = 0; i < cohort.size(); ++i)
    if (cohort.survival.status[i] == 0) truth.censoring_pool.push_back(cohort.survival.time[i]);
  require(!truth.censoring_pool.empty(), errc::config, "source cohort has no censored subjects to resample");
  truth.source_event_fraction =
      static_cast<double>(cohort.survival.events()) / static_cast<double>(cohort.size());
  truth.description = "fitted term '" + term_label + "'";
  return truth;
}

// ===========================================================================
// Coverage studies
// ===========================================================================
struct CoverageSettings {
  Index N = 2000;
  int n_reps = 200;
  SplineKind fit_kind = SplineKind::cyclic_cubic_bspline;
  int K = 20;
  int penalty_order = 2;
  LambdaGrid grid;
  double alpha = 0.05;
  int B = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double max_failure_fraction = 0.05;
};

struct CoverageReport {
  Index N = 0;
  int n_reps = 0;
  int n_failed = 0;
  std::vector<std::string> failures;
  double mse = 0.0;
  double mean_pointwise_coverage = 0.0;
  double cma_coverage = 0.0;
  double rejection_rate = 0.0;   // fraction of replicates with global CMA p < alpha
  double mean_event_fraction = 0.0;
  double source_event_fraction = 0.0;
  double alpha = 0.05;
  int B = 0;
  std::uint64_t seed = 0;
  VectorXd grid;
  VectorXd beta_true;
  VectorXd mean_estimate;
  VectorXd pointwise_coverage_curve;
  std::vector<double> ise;            // NaN for failed replicates
  std::vector<double> p_global;
  std::vector<double> event_fraction;
  std::vector<int> cma_covered;
};

struct ReplicateResult {
  bool ok = false;
  std::string failure;
  double ise = std::numeric_limits<double>::quiet_NaN();
  double p_global = std::numeric_limits<double>::quiet_NaN();
  double event_fraction = std::numeric_limits<double>::quiet_NaN();
  bool cma_covered = false;
  VectorXd pointwise_covered;  // 0/1 per grid point
  VectorXd estimate;
};

inline CohortDataset single_functional_cohort(const std::string& label, FunctionalDataset X, SurvivalData s) {
  CohortDataset c;
  c.survival = std::move(s);
  c.functional.push_back({label, std::move(X)});
  return c;
}

inline ReplicateResult run_replicate(const GenerativeTruth& truth, const CoverageSettings& cs, int rep) {
  ReplicateResult r;
  const std::uint64_t seed = derive_seed(cs.seed, static_cast<std::uint64_t>(rep));
  try {
    FunctionalDataset X = simulate_functional(truth.fpca, cs.N, derive_seed(seed, 1));
    SurvivalSimConfig sc;
    sc.N = cs.N;
    sc.beta_grid = truth.fpca.grid;
    sc.beta_true = truth.beta_true;
    sc.baseline = truth.baseline;
    sc.censoring_pool = truth.censoring_pool;
    sc.seed = derive_seed(seed, 2);
    SimulatedOutcomes out = simulate_survival(sc, X);
    r.event_fraction = out.event_fraction();

    ModelSpec spec;
    SmoothTermSpec term;
    term.label = "X";
    term.type = TermType::functional;
    term.kind = cs.fit_kind;
    term.K = cs.K;
    term.penalty_order = cs.penalty_order;
    spec.functional_terms.push_back(term);
    FitOptions fo;
    fo.grid = cs.grid;
    const CohortDataset cohort = single_functional_cohort("X", std::move(X), std::move(out.survival));
    const PenalizedFitResult f = fit(cohort, spec, fo);

    const CoefficientCurve curve = curve_covariance(f, "X");
    const CmaBand band = cma_band(curve, cs.alpha, cs.B, derive_seed(seed, 3));
    const VectorXd err = curve.estimate - truth.beta_true;
    r.ise = err.squaredNorm() / static_cast<double>(err.size());
    r.p_global = band.p_global;
    r.pointwise_covered.resize(err.size());
    r.cma_covered = true;
    for (Index l = 0; l < err.size(); ++l) {
      r.pointwise_covered[l] = std::abs(err[l]) <= band.z * curve.se[l] ? 1.0 : 0.0;
      r.cma_covered = r.cma_covered && std::abs(err[l]) <= band.q * curve.se[l];
    }
    r.estimate = curve.estimate;
    r.ok = true;
  } catch (const error& e) {
    r.failure = "replicate " + std::to_string(rep) + ": " + e.what();
  }
  return r;
}

inline CoverageReport coverage_study(const GenerativeTruth& truth, const CoverageSettings& cs) {
  require(cs.n_reps >= 2, errc::config, "coverage study needs at least 2 replicates");
  require(cs.N >= 2, errc::config, "coverage study needs N >= 2");
  std::vector<ReplicateResult> reps(static_cast<std::size_t>(cs.n_reps));
  parallel_for(reps.size(), cs.threads,
               [&](std::size_t r) { reps[r] = run_replicate(truth, cs, static_cast<int>(r)); });

  CoverageReport rep;
  rep.N = cs.N;
  rep.n_reps = cs.n_reps;
  rep.alpha = cs.alpha;
  rep.B = cs.B;
  rep.seed = cs.seed;
  rep.grid = truth.fpca.grid;
  rep.beta_true = truth.beta_true;
  rep.source_event_fraction = truth.source_event_fraction;
  const Index L = truth.fpca.grid.size();
  rep.pointwise_coverage_curve = VectorXd::Zero(L);
  rep.mean_estimate = VectorXd::Zero(L);
  int ok = 0, cma_ok = 0, rejected = 0;
  double ise_sum = 0.0, ef_sum = 0.0;
  for (const auto& r : reps) {
    rep.ise.push_back(r.ise);
    rep.p_global.push_back(r.p_global);
    rep.event_fraction.push_back(r.event_fraction);
    rep.cma_covered.push_back(r.ok && r.cma_covered ? 1 : 0);
    if (!r.ok) {
      rep.failures.push_back(r.failure);
      continue;
    }
    ++ok;
    ise_sum += r.ise;
    ef_sum += r.event_fraction;
    cma_ok += r.cma_covered ? 1 : 0;
    rejected += r.p_global < cs.alpha ? 1 : 0;
    rep.pointwise_coverage_curve += r.pointwise_covered;
    rep.mean_estimate += r.estimate;
  }
  rep.n_failed = cs.n_reps - ok;
  if (static_cast<double>(rep.n_failed) > cs.max_failure_fraction * cs.n_reps)
    fail(errc::too_many_failures, std::to_string(rep.n_failed) + " of " + std::to_string(cs.n_reps) +
                                      " replicates failed" + (rep.failures.empty() ? "" : "; first: " + rep.failures.front()));
  const double denom = static_cast<double>(ok);
  rep.mse = ise_sum / denom;
  rep.mean_event_fraction = ef_sum / denom;
  rep.cma_coverage = cma_ok / denom;
  rep.rejection_rate = rejected / denom;
  rep.pointwise_coverage_curve /= denom;
  rep.mean_estimate /= denom;
  rep.mean_pointwise_coverage = rep.pointwise_coverage_curve.mean();
  return rep;
}

}  // namespace funcox
