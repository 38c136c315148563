#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "funcox/basis.hpp"
#include "funcox/data_model.hpp"
#include "funcox/design.hpp"
#include "funcox/errors.hpp"

namespace funcox {

// ===========================================================================
// Risk sets
// ===========================================================================

// Subjects ordered by follow-up time plus, for every distinct event time,
// the first sorted position whose time is >= that event time. The risk set
// of event time j is then the sorted suffix starting at start[j]; tied events
// share it (Breslow).
class RiskSets {
 public:
  explicit RiskSets(const SurvivalData& s) : n_(s.size()) {
    require(s.status.size() == s.time.size(), errc::invalid_argument, "time and status lengths differ");
    order_.resize(static_cast<std::size_t>(n_));
    std::iota(order_.begin(), order_.end(), Index{0});
    std::stable_sort(order_.begin(), order_.end(), [&](Index a, Index b) { return s.time[a] < s.time[b]; });

    std::vector<double> sorted(order_.size());
    for (std::size_t p = 0; p < order_.size(); ++p) sorted[p] = s.time[order_[p]];
    for (Index i = 0; i < n_; ++i)
      if (s.status[i] == 1) events_.push_back(i);
    require(!events_.empty(), errc::no_events, "partial likelihood needs at least one event");

    std::vector<double> ev_times;
    for (Index i : events_) ev_times.push_back(s.time[i]);
    std::sort(ev_times.begin(), ev_times.end());
    for (std::size_t e = 0; e < ev_times.size(); ++e) {
      if (e == 0 || ev_times[e] != ev_times[e - 1]) {
        times_.push_back(ev_times[e]);
        counts_.push_back(0);
        start_.push_back(static_cast<Index>(std::lower_bound(sorted.begin(), sorted.end(), ev_times[e]) - sorted.begin()));
      }
      ++counts_.back();
    }
  }

  Index size() const noexcept { return n_; }
  std::size_t distinct_event_times() const noexcept { return times_.size(); }
  const std::vector<Index>& order() const noexcept { return order_; }
  const std::vector<Index>& events() const noexcept { return events_; }
  const std::vector<double>& event_times() const noexcept { return times_; }
  const std::vector<int>& event_counts() const noexcept { return counts_; }
  const std::vector<Index>& start() const noexcept { return start_; }

 private:
  Index n_ = 0;
  std::vector<Index> order_;
  std::vector<Index> events_;
  std::vector<double> times_;
  std::vector<int> counts_;
  std::vector<Index> start_;
};

namespace detail {

// Suffix sums of w over the time-sorted order, read at each event start.
inline VectorXd risk_set_totals(const VectorXd& w, const RiskSets& rs) {
  const auto& order = rs.order();
  const auto& start = rs.start();
  VectorXd s0(static_cast<Index>(start.size()));
  double acc = 0.0;
  auto j = static_cast<std::ptrdiff_t>(start.size()) - 1;
  for (auto pos = static_cast<std::ptrdiff_t>(order.size()) - 1; pos >= 0; --pos) {
    acc += w[order[static_cast<std::size_t>(pos)]];
    while (j >= 0 && start[static_cast<std::size_t>(j)] == pos) s0[j--] = acc;
  }
  return s0;
}

}  // namespace detail

// Breslow partial log-likelihood.
inline double partial_loglik(const VectorXd& eta, const RiskSets& rs) {
  require(eta.size() == rs.size(), errc::invalid_argument, "linear predictor length does not match survival data");
  const double c = eta.maxCoeff();
  const VectorXd w = (eta.array() - c).exp().matrix();
  const VectorXd s0 = detail::risk_set_totals(w, rs);
  double ll = 0.0;
  for (Index i : rs.events()) ll += eta[i];
  const auto& d = rs.event_counts();
  for (std::size_t j = 0; j < d.size(); ++j) ll -= d[j] * (std::log(s0[static_cast<Index>(j)]) + c);
  return ll;
}

inline double partial_loglik(const VectorXd& eta, const SurvivalData& s) { return partial_loglik(eta, RiskSets(s)); }

struct CoxDerivatives {
  double loglik = 0.0;
  VectorXd gradient;
  MatrixXd hessian;  // negative semidefinite
};

// Log-likelihood, score and Hessian with respect to theta, where eta = X theta.
inline CoxDerivatives loglik_grad_hess(const VectorXd& eta, const MatrixXd& X, const RiskSets& rs) {
  require(eta.size() == rs.size() && X.rows() == rs.size(), errc::invalid_argument,
          "design rows do not match survival data");
  const Index p = X.cols();
  const auto& order = rs.order();
  const auto& start = rs.start();
  const auto& d = rs.event_counts();
  const auto m = static_cast<Index>(start.size());

  const double c = eta.maxCoeff();
  const VectorXd w = (eta.array() - c).exp().matrix();

  VectorXd s0(m);
  MatrixXd s1(m, p);
  double acc0 = 0.0;
  VectorXd acc1 = VectorXd::Zero(p);
  auto j = static_cast<std::ptrdiff_t>(m) - 1;
  for (auto pos = static_cast<std::ptrdiff_t>(order.size()) - 1; pos >= 0; --pos) {
    const Index i = order[static_cast<std::size_t>(pos)];
    acc0 += w[i];
    acc1.noalias() += w[i] * X.row(i).transpose();
    while (j >= 0 && start[static_cast<std::size_t>(j)] == pos) {
      s0[j] = acc0;
      s1.row(j) = acc1.transpose();
      --j;
    }
  }

  CoxDerivatives out;
  out.loglik = 0.0;
  out.gradient = VectorXd::Zero(p);
  for (Index i : rs.events()) {
    out.loglik += eta[i];
    out.gradient += X.row(i).transpose();
  }
  MatrixXd means(m, p);  // sqrt(d_j) * S1_j / S0_j
  for (Index jj = 0; jj < m; ++jj) {
    const double dj = d[static_cast<std::size_t>(jj)];
    out.loglik -= dj * (std::log(s0[jj]) + c);
    const VectorXd mean = s1.row(jj).transpose() / s0[jj];
    out.gradient -= dj * mean;
    means.row(jj) = std::sqrt(dj) * mean.transpose();
  }

  // a_i = sum over event times t_j <= Y_i of d_j / S0_j
  VectorXd weight(rs.size());
  double cum = 0.0;
  std::size_t next = 0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    while (next < start.size() && start[next] <= static_cast<Index>(pos)) {
      cum += d[next] / s0[static_cast<Index>(next)];
      ++next;
    }
    weight[order[pos]] = w[order[pos]] * cum;
  }
  MatrixXd info = X.transpose() * (X.array().colwise() * weight.array()).matrix();
  info.noalias() -= means.transpose() * means;
  out.hessian = -0.5 * (info + info.transpose());
  return out;
}

// ===========================================================================
// Penalized Newton-Raphson
// ===========================================================================
struct NewtonOptions {
  double grad_tol = 1e-8;
  double rel_tol = 1e-10;
  int max_iter = 200;
  int max_halvings = 30;
};

struct NewtonResult {
  VectorXd theta;
  VectorXd penalized_gradient;
  MatrixXd hessian;     // unpenalized, at theta
  double loglik = 0.0;
  double pll = 0.0;     // loglik - theta' S theta / 2
  int iterations = 0;
  std::vector<double> pll_trace;  // iterates accepted by the ascent test
  std::vector<Index> fixed_at_zero;  // all-zero, unpenalized columns
};

// Maximizes l(X theta) - theta' S theta / 2 from `init`, with step halving.
inline NewtonResult newton_fit(const MatrixXd& X, const MatrixXd& S, const RiskSets& rs, const VectorXd& init,
                               const NewtonOptions& opt = {}) {
  const Index p = X.cols();
  require(S.rows() == p && S.cols() == p && init.size() == p, errc::invalid_argument,
          "penalty/initial value dimensions do not match the design");

  NewtonResult res;
  std::vector<Index> active;
  for (Index k = 0; k < p; ++k) {
    const bool zero_col = X.col(k).cwiseAbs().maxCoeff() == 0.0;
    const bool unpenalized = S.row(k).cwiseAbs().maxCoeff() == 0.0;
    if (zero_col && unpenalized)
      res.fixed_at_zero.push_back(k);
    else
      active.push_back(k);
  }
  const auto q = static_cast<Index>(active.size());
  MatrixXd Xa(X.rows(), q);
  MatrixXd Sa(q, q);
  VectorXd theta(q);
  for (Index a = 0; a < q; ++a) {
    Xa.col(a) = X.col(active[static_cast<std::size_t>(a)]);
    theta[a] = init[active[static_cast<std::size_t>(a)]];
    for (Index b = 0; b < q; ++b) Sa(a, b) = S(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
  }
  // Column centering shifts eta by a constant, which the partial likelihood ignores.
  const Eigen::RowVectorXd centers = Xa.colwise().mean();
  Xa.rowwise() -= centers;

  auto penalized = [&](const VectorXd& th, double ll) { return ll - 0.5 * th.dot(Sa * th); };

  CoxDerivatives der = loglik_grad_hess(Xa * theta, Xa, rs);
  double pll = penalized(theta, der.loglik);
  res.pll_trace.push_back(pll);
  bool converged = false;
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    const VectorXd grad = der.gradient - Sa * theta;
    if (q == 0 || grad.cwiseAbs().maxCoeff() < opt.grad_tol) {
      converged = true;
      break;
    }
    MatrixXd M = Sa - der.hessian;
    Eigen::LLT<MatrixXd> llt(M);
    VectorXd step;
    if (llt.info() == Eigen::Success) {
      step = llt.solve(grad);
    } else {
      Eigen::LDLT<MatrixXd> ldlt(M);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()))
        fail(errc::singular_hessian, "penalized information matrix is singular");
      step = ldlt.solve(grad);
    }

    // Once the predicted gain is below what the objective can resolve, value
    // comparisons are rounding noise: take the full step while it still
    // shrinks the gradient, and stop otherwise.
    if (0.5 * grad.dot(step) <= 1e-13 * (std::abs(pll) + 1.0)) {
      const VectorXd next = theta + step;
      CoxDerivatives dn = loglik_grad_hess(Xa * next, Xa, rs);
      if (!((dn.gradient - Sa * next).cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff())) {
        converged = true;
        break;
      }
      theta = next;
      der = std::move(dn);
      pll = penalized(theta, der.loglik);
      continue;
    }

    double t = 1.0;
    bool accepted = false;
    VectorXd cand;
    double cand_pll = 0.0;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      cand = theta + t * step;
      cand_pll = penalized(cand, partial_loglik(Xa * cand, rs));
      if (std::isfinite(cand_pll) && cand_pll >= pll) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {  // no ascent left at machine precision
      converged = true;
      break;
    }
    const double change = std::abs(cand_pll - pll) / (std::abs(pll) + 1e-10);
    theta = cand;
    pll = cand_pll;
    res.pll_trace.push_back(pll);
    der = loglik_grad_hess(Xa * theta, Xa, rs);
    // A tiny change in the objective ends the iteration unless the gradient
    // is still shrinking fast, which it does until rounding takes over.
    const double new_grad = (der.gradient - Sa * theta).cwiseAbs().maxCoeff();
    if (change < opt.rel_tol && new_grad > 0.5 * grad.cwiseAbs().maxCoeff()) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged) fail(errc::divergence, "Newton iteration cap (" + std::to_string(opt.max_iter) + ") reached");

  res.iterations = iter;
  res.theta = VectorXd::Zero(p);
  res.penalized_gradient = VectorXd::Zero(p);
  res.hessian = MatrixXd::Zero(p, p);
  const VectorXd grad = der.gradient - Sa * theta;
  for (Index a = 0; a < q; ++a) {
    const Index ka = active[static_cast<std::size_t>(a)];
    res.theta[ka] = theta[a];
    res.penalized_gradient[ka] = grad[a];
    for (Index b = 0; b < q; ++b) res.hessian(ka, active[static_cast<std::size_t>(b)]) = der.hessian(a, b);
  }
  res.loglik = der.loglik;
  res.pll = penalized(theta, der.loglik);
  return res;
}

// ===========================================================================
// Model specification and assembly
// ===========================================================================
enum class TermType { linear, additive, functional, distributional };

inline std::string to_string(TermType t) {
  switch (t) {
    case TermType::linear: return "linear";
    case TermType::additive: return "additive";
    case TermType::functional: return "functional";
    case TermType::distributional: return "distributional";
  }
  return "?";
}

struct SmoothTermSpec {
  std::string label;   // term name, unique within a model
  std::string source;  // covariate or functional dataset; defaults to label
  TermType type = TermType::functional;
  SplineKind kind = SplineKind::cubic_bspline;
  int K = 30;
  KnotRule knot_rule = KnotRule::equally_spaced;
  int penalty_order = 2;
  std::optional<std::pair<double, double>> domain;  // default: from the data
  Index quantile_points = 100;                       // distributional only
  double quantile_lo = 0.005;
  double quantile_hi = 0.995;

  const std::string& source_label() const { return source.empty() ? label : source; }
};

struct ModelSpec {
  std::vector<std::string> linear_terms;
  std::vector<SmoothTermSpec> additive_terms;
  std::vector<SmoothTermSpec> functional_terms;  // functional or distributional

  std::vector<std::string> labels() const {
    std::vector<std::string> out = linear_terms;
    for (const auto& t : additive_terms) out.push_back(t.label);
    for (const auto& t : functional_terms) out.push_back(t.label);
    return out;
  }

  void validate() const {
    auto all = labels();
    require(!all.empty(), errc::config, "model needs at least one term");
    std::sort(all.begin(), all.end());
    auto dup = std::adjacent_find(all.begin(), all.end());
    require(dup == all.end(), errc::config, dup == all.end() ? "" : "duplicate term label '" + *dup + "'");
    for (const auto& t : additive_terms)
      require(t.type == TermType::additive, errc::config, "term '" + t.label + "' listed as additive has another type");
    for (const auto& t : functional_terms)
      require(t.type == TermType::functional || t.type == TermType::distributional, errc::config,
              "term '" + t.label + "' listed as functional has another type");
  }
};

// One coefficient block of a fitted model, with what is needed to evaluate
// its curve later.
struct FittedTerm {
  std::string label;
  std::string source;
  TermType type = TermType::linear;
  Index offset = 0;
  Index size = 0;
  std::optional<SplineBasis> basis;
  std::optional<MatrixXd> constraint;
  MatrixXd penalty;   // size x size; empty for linear terms
  VectorXd grid;      // default evaluation grid
  int penalty_order = 2;
  double lambda = 0.0;
  double edf = 0.0;

  bool penalized() const noexcept { return penalty.size() > 0; }

  // Evaluation matrix of the term's curve at points x (size columns).
  MatrixXd evaluation(const VectorXd& x) const {
    require(type != TermType::linear && basis.has_value(), errc::unknown_term,
            "term '" + label + "' is linear and has no curve");
    MatrixXd phi = basis->evaluate(x);
    if (constraint) phi = phi * *constraint;
    return phi;
  }
};

struct ModelMatrix {
  MatrixXd X;
  std::vector<FittedTerm> terms;
};

inline ModelMatrix build_model_matrix(const CohortDataset& c, const ModelSpec& spec) {
  spec.validate();
  const Index n = c.size();
  std::vector<MatrixXd> pieces;
  ModelMatrix mm;
  Index offset = 0;

  auto scalar = [&](const std::string& label) {
    auto v = c.find_scalar(label);
    require(v.has_value(), errc::config, "covariate '" + label + "' not found in cohort");
    return *v;
  };

  for (const auto& label : spec.linear_terms) {
    FittedTerm t;
    t.label = t.source = label;
    t.type = TermType::linear;
    t.offset = offset;
    t.size = 1;
    pieces.push_back(MatrixXd(scalar(label)));
    offset += 1;
    mm.terms.push_back(std::move(t));
  }

  for (const auto& ts : spec.additive_terms) {
    const VectorXd v = scalar(ts.source_label());
    BasisRealization br;
    if (ts.domain) {
      SplineSpec s{SplineKind::cubic_bspline, ts.K, ts.domain->first, ts.domain->second, ts.knot_rule};
      std::vector<double> data(v.data(), v.data() + v.size());
      br = build_basis(s, VectorXd::LinSpaced(100, s.lower, s.upper), ts.penalty_order, data);
    } else {
      br = additive_basis(v, ts.K, ts.knot_rule, ts.penalty_order);
    }
    TermDesign td = additive_term_design(v, br, ts.label);
    FittedTerm t;
    t.label = ts.label;
    t.source = ts.source_label();
    t.type = TermType::additive;
    t.offset = offset;
    t.size = td.columns.cols();
    t.basis = br.basis;
    t.constraint = td.constraint;
    t.penalty = td.penalty;
    t.grid = br.grid;
    t.penalty_order = ts.penalty_order;
    offset += t.size;
    pieces.push_back(std::move(td.columns));
    mm.terms.push_back(std::move(t));
  }

  for (const auto& ts : spec.functional_terms) {
    const FunctionalDataset* X = c.find_functional(ts.source_label());
    require(X != nullptr, errc::config, "functional predictor '" + ts.source_label() + "' not found in cohort");
    TermDesign td;
    if (ts.type == TermType::distributional) {
      require(ts.kind == SplineKind::cubic_bspline, errc::config,
              "distributional term '" + ts.label + "' needs a non-cyclic basis");
      const VectorXd probs = probability_grid(ts.quantile_points, ts.quantile_lo, ts.quantile_hi);
      SplineSpec s{ts.kind, ts.K, probs[0], probs[probs.size() - 1], KnotRule::equally_spaced};
      BasisRealization br = build_basis(s, probs, ts.penalty_order);
      td = distributional_term_design(quantile_transform(*X, probs), br, ts.label);
    } else {
      require(!(ts.kind == SplineKind::cyclic_cubic_bspline && !X->cyclic()), errc::config,
              "cyclic basis requested for non-cyclic predictor '" + ts.source_label() + "'");
      auto dom = ts.domain.value_or(X->domain());
      SplineSpec s{ts.kind, ts.K, dom.first, dom.second, KnotRule::equally_spaced};
      BasisRealization br = build_basis(s, X->grid(), ts.penalty_order);
      td = functional_term_design(*X, br, ts.label);
    }
    FittedTerm t;
    t.label = ts.label;
    t.source = ts.source_label();
    t.type = ts.type;
    t.offset = offset;
    t.size = td.columns.cols();
    t.basis = td.basis.basis;
    t.penalty = td.penalty;
    t.grid = td.basis.grid;
    t.penalty_order = ts.penalty_order;
    offset += t.size;
    pieces.push_back(std::move(td.columns));
    mm.terms.push_back(std::move(t));
  }

  mm.X.resize(n, offset);
  Index col = 0;
  for (auto& piece : pieces) {
    mm.X.middleCols(col, piece.cols()) = piece;
    col += piece.cols();
  }
  return mm;
}

// ===========================================================================
// Smoothing parameter selection
// ===========================================================================
struct LambdaGrid {
  double log10_min = -4.0;
  double log10_max = 8.0;
  double step = 1.0;
  int sweeps = 2;

  std::vector<double> exponents() const {
    std::vector<double> out;
    for (double e = log10_min; e <= log10_max + 1e-9; e += step) out.push_back(e);
    return out;
  }
};

inline MatrixXd assemble_penalty(Index p, const std::vector<FittedTerm>& terms, const std::vector<double>& lambdas) {
  MatrixXd S = MatrixXd::Zero(p, p);
  std::size_t b = 0;
  for (const auto& t : terms) {
    if (!t.penalized()) continue;
    S.block(t.offset, t.offset, t.size, t.size) = lambdas[b++] * t.penalty;
  }
  return S;
}

// F = (I + S)^{-1} I with I = -H. Columns of unpenalized coordinates use
// Id - (I + S)^{-1} S, which puts exactly 1 on their diagonal; penalized
// columns use the direct product, which stays accurate when S is huge.
inline MatrixXd influence_matrix(const MatrixXd& hessian, const MatrixXd& S) {
  const Index p = S.rows();
  MatrixXd M = S - hessian;
  Eigen::LDLT<MatrixXd> ldlt(M);
  MatrixXd F = ldlt.solve(-hessian);
  const MatrixXd G = MatrixXd::Identity(p, p) - ldlt.solve(S);
  for (Index k = 0; k < p; ++k)
    if (S.col(k).cwiseAbs().maxCoeff() == 0.0) F.col(k) = G.col(k);
  return F;
}

struct LambdaTrial {
  std::vector<double> lambdas;
  double aic = 0.0;
  double edf = 0.0;
  double loglik = 0.0;
  bool failed = false;
};

struct LambdaSelection {
  std::vector<double> lambdas;  // one per penalized term, in term order
  double aic = 0.0;
  NewtonResult fit;
  std::vector<LambdaTrial> trials;
};

// Coordinate-wise grid search minimizing AIC = -2 l + 2 edf. Penalized terms
// are visited in label order so that the result does not depend on how the
// model spec lists them. Ties prefer the larger smoothing parameter.
inline LambdaSelection select_lambdas(const MatrixXd& X, const std::vector<FittedTerm>& terms, const RiskSets& rs,
                                      const LambdaGrid& grid = {}, const NewtonOptions& nopt = {}) {
  std::vector<std::size_t> blocks;  // indices into penalized-term list
  std::vector<const FittedTerm*> pen;
  for (const auto& t : terms)
    if (t.penalized()) pen.push_back(&t);
  require(!pen.empty(), errc::invalid_argument, "no penalized terms to select smoothing parameters for");
  blocks.resize(pen.size());
  std::iota(blocks.begin(), blocks.end(), std::size_t{0});
  std::sort(blocks.begin(), blocks.end(), [&](std::size_t a, std::size_t b) { return pen[a]->label < pen[b]->label; });

  const std::vector<double> exps = grid.exponents();
  require(!exps.empty(), errc::config, "empty smoothing parameter grid");
  const std::size_t mid = exps.size() / 2;
  std::vector<std::size_t> current(pen.size(), mid);

  struct Eval {
    double aic = std::numeric_limits<double>::infinity();
    NewtonResult fit;
    bool ok = false;
  };
  std::map<std::vector<std::size_t>, Eval> cache;
  LambdaSelection out;
  VectorXd warm = VectorXd::Zero(X.cols());
  std::optional<error> last_error;

  auto to_lambdas = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> l(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) l[b] = std::pow(10.0, exps[idx[b]]);
    return l;
  };
  auto evaluate = [&](const std::vector<std::size_t>& idx) -> const Eval& {
    auto it = cache.find(idx);
    if (it != cache.end()) return it->second;
    Eval e;
    LambdaTrial trial;
    trial.lambdas = to_lambdas(idx);
    try {
      const MatrixXd S = assemble_penalty(X.cols(), terms, trial.lambdas);
      e.fit = newton_fit(X, S, rs, warm, nopt);
      const double edf = influence_matrix(e.fit.hessian, S).trace() - static_cast<double>(e.fit.fixed_at_zero.size());
      e.aic = -2.0 * e.fit.loglik + 2.0 * edf;
      e.ok = std::isfinite(e.aic);
      trial.aic = e.aic;
      trial.edf = edf;
      trial.loglik = e.fit.loglik;
    } catch (const error& err) {
      if (err.code() != errc::divergence && err.code() != errc::singular_hessian) throw;
      last_error = err;
      trial.failed = true;
      trial.aic = std::numeric_limits<double>::infinity();
    }
    out.trials.push_back(trial);
    return cache.emplace(idx, std::move(e)).first->second;
  };

  const Eval* best = &evaluate(current);
  if (best->ok) warm = best->fit.theta;
  const int sweeps = pen.size() == 1 ? 1 : std::max(1, grid.sweeps);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t b : blocks) {
      std::size_t best_idx = current[b];
      for (std::size_t g = 0; g < exps.size(); ++g) {
        std::vector<std::size_t> trial = current;
        trial[b] = g;
        const Eval& e = evaluate(trial);
        if (!e.ok) continue;
        const double tol = 1e-9 * std::max(1.0, std::abs(e.aic));
        if (!best->ok || e.aic < best->aic - tol || (std::abs(e.aic - best->aic) <= tol && g > best_idx)) {
          best = &e;
          best_idx = g;
          warm = e.fit.theta;
        }
      }
      if (best_idx != current[b]) changed = true;
      current[b] = best_idx;
    }
    if (!changed) break;
  }
  if (!best->ok) {
    if (last_error) throw *last_error;
    fail(errc::divergence, "no smoothing parameter on the grid gave a usable fit");
  }
  out.lambdas = to_lambdas(current);
  out.aic = best->aic;
  out.fit = best->fit;
  return out;
}

// ===========================================================================
// Full fit
// ===========================================================================
struct FitOptions {
  LambdaGrid grid;
  NewtonOptions newton;
  // When set, used instead of grid search (one value per penalized term, in
  // model order).
  std::optional<std::vector<double>> fixed_lambdas;
};

struct PenalizedFitResult {
  VectorXd coef;
  MatrixXd Vb;
  std::vector<FittedTerm> terms;
  double loglik = 0.0;
  double pll = 0.0;
  double aic = 0.0;
  double edf_total = 0.0;
  VectorXd linear_predictor;  // X coef on the uncentered design
  int iterations = 0;
  Index n = 0;
  Index events = 0;
  std::vector<LambdaTrial> lambda_trials;
  std::vector<std::string> warnings;

  std::vector<double> lambdas() const {
    std::vector<double> out;
    for (const auto& t : terms)
      if (t.penalized()) out.push_back(t.lambda);
    return out;
  }

  const FittedTerm& term(const std::string& label) const {
    for (const auto& t : terms)
      if (t.label == label) return t;
    fail(errc::unknown_term, "no term labelled '" + label + "' in fit");
  }

  VectorXd block(const FittedTerm& t) const { return coef.segment(t.offset, t.size); }
  MatrixXd block_cov(const FittedTerm& t) const { return Vb.block(t.offset, t.offset, t.size, t.size); }
};

inline PenalizedFitResult finish_fit(const ModelMatrix& mm, const NewtonResult& nr, const std::vector<double>& lambdas) {
  PenalizedFitResult r;
  r.terms = mm.terms;
  const Index p = mm.X.cols();
  if (!nr.fixed_at_zero.empty()) {
    for (const auto& t : r.terms)
      if (nr.fixed_at_zero.front() >= t.offset && nr.fixed_at_zero.front() < t.offset + t.size)
        fail(errc::singular_hessian, "term '" + t.label + "' has an all-zero design column");
  }
  const MatrixXd S = assemble_penalty(p, r.terms, lambdas);
  const MatrixXd M = S - nr.hessian;
  Eigen::LLT<MatrixXd> llt(M);
  require(llt.info() == Eigen::Success, errc::singular_hessian, "penalized information is not positive definite");
  MatrixXd Vb = llt.solve(MatrixXd::Identity(p, p));
  r.Vb = 0.5 * (Vb + Vb.transpose());
  const MatrixXd F = influence_matrix(nr.hessian, S);
  std::size_t b = 0;
  for (auto& t : r.terms) {
    t.edf = F.diagonal().segment(t.offset, t.size).sum();
    if (t.penalized()) t.lambda = lambdas[b++];
  }
  r.coef = nr.theta;
  r.loglik = nr.loglik;
  r.pll = nr.pll;
  r.edf_total = F.trace();
  r.aic = -2.0 * r.loglik + 2.0 * r.edf_total;
  r.linear_predictor = mm.X * r.coef;
  r.iterations = nr.iterations;
  r.n = mm.X.rows();
  if (p >= r.n)
    r.warnings.push_back("model has " + std::to_string(p) + " coefficients for " + std::to_string(r.n) + " subjects");
  return r;
}

inline PenalizedFitResult fit(const CohortDataset& cohort, const ModelSpec& spec, const FitOptions& opt = {}) {
  const ValidationReport rep = validate_cohort(cohort);
  require(rep.ok(), rep.has(Violation::Kind::no_events) ? errc::no_events : errc::validation_failed, rep.summary());
  ModelMatrix mm = build_model_matrix(cohort, spec);
  const RiskSets rs(cohort.survival);

  std::size_t n_pen = 0;
  for (const auto& t : mm.terms) n_pen += t.penalized() ? 1 : 0;

  PenalizedFitResult r;
  if (n_pen == 0) {
    NewtonResult nr = newton_fit(mm.X, MatrixXd::Zero(mm.X.cols(), mm.X.cols()), rs, VectorXd::Zero(mm.X.cols()), opt.newton);
    r = finish_fit(mm, nr, {});
  } else if (opt.fixed_lambdas) {
    require(opt.fixed_lambdas->size() == n_pen, errc::config, "fixed smoothing parameters do not match penalized terms");
    const MatrixXd S = assemble_penalty(mm.X.cols(), mm.terms, *opt.fixed_lambdas);
    NewtonResult nr = newton_fit(mm.X, S, rs, VectorXd::Zero(mm.X.cols()), opt.newton);
    r = finish_fit(mm, nr, *opt.fixed_lambdas);
  } else {
    LambdaSelection sel = select_lambdas(mm.X, mm.terms, rs, opt.grid, opt.newton);
    r = finish_fit(mm, sel.fit, sel.lambdas);
    r.lambda_trials = std::move(sel.trials);
  }
  r.events = cohort.survival.events();
  return r;
}

// ===========================================================================
// Breslow baseline hazard
// ===========================================================================
struct BaselineHazard {
  std::vector<double> event_times;
  std::vector<double> increments;
  std::vector<double> cumulative;

  // Right-continuous step function value at t.
  double cumulative_at(double t) const {
    auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
    if (it == event_times.begin()) return 0.0;
    return cumulative[static_cast<std::size_t>(it - event_times.begin()) - 1];
  }
};

inline BaselineHazard breslow_baseline(const VectorXd& eta, const SurvivalData& s) {
  const RiskSets rs(s);
  require(eta.size() == rs.size(), errc::invalid_argument, "linear predictor length does not match survival data");
  const double c = eta.maxCoeff();
  const VectorXd s0 = detail::risk_set_totals((eta.array() - c).exp().matrix(), rs);
  BaselineHazard h;
  h.event_times = rs.event_times();
  double cum = 0.0;
  for (std::size_t j = 0; j < h.event_times.size(); ++j) {
    // d_j / sum_{risk set} e^eta, with the max shift undone
    const double inc = rs.event_counts()[j] * std::exp(-c) / s0[static_cast<Index>(j)];
    h.increments.push_back(inc);
    cum += inc;
    h.cumulative.push_back(cum);
  }
  return h;
}

inline BaselineHazard breslow_baseline(const PenalizedFitResult& f, const CohortDataset& cohort) {
  return breslow_baseline(f.linear_predictor, cohort.survival);
}

}  // namespace funcox
