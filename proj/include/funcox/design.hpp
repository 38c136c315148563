#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "funcox/basis.hpp"
#include "funcox/data_model.hpp"
#include "funcox/errors.hpp"

namespace funcox {

// Design columns contributed by one smooth term.
struct TermDesign {
  std::string label;
  MatrixXd columns;                     // N x K (K-1 when constrained)
  BasisRealization basis;
  MatrixXd penalty;                     // matches columns
  std::optional<MatrixXd> constraint;   // K x (K-1) reparameterization Z
};

// Riemann-sum integrals W[i,k] = sum_g X[i,g] phi_k(s_g) / L, i.e. the domain
// is normalized to unit length.
inline TermDesign functional_term_design(const FunctionalDataset& X, const BasisRealization& basis,
                                         std::string label = {}) {
  require(same_grid(X.grid(), basis.grid), errc::grid_mismatch,
          "functional predictor" + (label.empty() ? std::string() : " '" + label + "'") +
              " and basis are evaluated on different grids");
  TermDesign t;
  t.label = std::move(label);
  t.columns = X.values() * basis.B / static_cast<double>(X.points());
  t.basis = basis;
  t.penalty = basis.P;
  return t;
}

// Orthonormal basis of the complement of span(c): the last K-1 columns of
// the Householder Q of c.
inline MatrixXd sum_to_zero_constraint(const VectorXd& column_sums) {
  const MatrixXd c = column_sums;
  Eigen::HouseholderQR<MatrixXd> qr(c);
  MatrixXd Q = qr.householderQ();
  return Q.rightCols(column_sums.size() - 1);
}

// Smooth additive effect f(v) = psi(v)^T Z u with sum_i f(v_i) = 0 for every u.
inline TermDesign additive_term_design(const VectorXd& v, const BasisRealization& basis, std::string label = {}) {
  MatrixXd psi;
  try {
    psi = basis.basis.evaluate(v);
  } catch (const error& e) {
    if (e.code() == errc::grid_outside_domain) fail(errc::value_outside_domain, e.what());
    throw;
  }
  const VectorXd sums = psi.colwise().sum().transpose();
  TermDesign t;
  t.label = std::move(label);
  MatrixXd Z = sum_to_zero_constraint(sums);
  t.columns = psi * Z;
  t.penalty = Z.transpose() * basis.P * Z;
  t.constraint = std::move(Z);
  t.basis = basis;
  return t;
}

// Basis for an additive covariate: domain [min v, max v], realized on an
// evenly spaced plotting grid.
inline BasisRealization additive_basis(const VectorXd& v, int K, KnotRule rule = KnotRule::equally_spaced,
                                       int penalty_order = 2, Index plot_points = 100) {
  require(v.size() > 0 && v.allFinite(), errc::invalid_argument, "additive covariate must be finite and non-empty");
  SplineSpec spec;
  spec.kind = SplineKind::cubic_bspline;
  spec.K = K;
  spec.lower = v.minCoeff();
  spec.upper = v.maxCoeff();
  spec.knot_rule = rule;
  require(spec.lower < spec.upper, errc::invalid_argument, "additive covariate is constant");
  VectorXd grid = VectorXd::LinSpaced(plot_points, spec.lower, spec.upper);
  std::vector<double> data(v.data(), v.data() + v.size());
  return build_basis(spec, grid, penalty_order, data);
}

// ---------------------------------------------------------------------------
// Distributional predictors
// ---------------------------------------------------------------------------
struct QuantilePredictor {
  VectorXd probs;  // P strictly increasing values in (0,1)
  MatrixXd Q;      // N x P, row i is the empirical quantile function of subject i
};

inline VectorXd probability_grid(Index points = 100, double lo = 0.005, double hi = 0.995) {
  require(points >= 2 && lo > 0.0 && hi < 1.0 && lo < hi, errc::invalid_argument, "invalid probability grid");
  return VectorXd::LinSpaced(points, lo, hi);
}

// Linear interpolation between order statistics: h = (L-1)p (0-based),
// Q = x_(floor h) + frac(h) (x_(floor h + 1) - x_(floor h)).
inline double interpolated_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - std::floor(h)) * (sorted[lo + 1] - sorted[lo]);
}

inline QuantilePredictor quantile_transform(const FunctionalDataset& X, const VectorXd& probs) {
  require(probs.size() >= 2, errc::invalid_argument, "need at least 2 probabilities");
  for (Index j = 0; j < probs.size(); ++j) {
    require(probs[j] > 0.0 && probs[j] < 1.0, errc::invalid_argument, "probabilities must lie in (0,1)");
    require(j == 0 || probs[j] > probs[j - 1], errc::invalid_argument, "probabilities must be strictly increasing");
  }
  QuantilePredictor q;
  q.probs = probs;
  q.Q.resize(X.rows(), probs.size());
  std::vector<double> row(static_cast<std::size_t>(X.points()));
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index g = 0; g < X.points(); ++g) row[static_cast<std::size_t>(g)] = X.values()(i, g);
    std::sort(row.begin(), row.end());
    for (Index j = 0; j < probs.size(); ++j) q.Q(i, j) = interpolated_quantile(row, probs[j]);
  }
  return q;
}

// The quantile functions as curves on the probability grid.
inline FunctionalDataset as_functional(const QuantilePredictor& q) {
  return FunctionalDataset(q.Q, q.probs, false, 1.0);
}

inline TermDesign distributional_term_design(const QuantilePredictor& q, const BasisRealization& basis,
                                             std::string label = {}) {
  require(!basis.spec().cyclic(), errc::invalid_argument, "distributional terms use a non-cyclic basis");
  require(same_grid(q.probs, basis.grid), errc::grid_mismatch,
          "quantile predictor and basis are evaluated on different probability grids");
  TermDesign t;
  t.label = std::move(label);
  t.columns = q.Q * basis.B / static_cast<double>(q.probs.size());
  t.basis = basis;
  t.penalty = basis.P;
  return t;
}

}  // namespace funcox
