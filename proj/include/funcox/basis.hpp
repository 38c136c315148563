#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "funcox/errors.hpp"

namespace funcox {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SplineKind { cubic_bspline, cyclic_cubic_bspline };
enum class KnotRule { equally_spaced, quantile_of_data };

inline std::string to_string(SplineKind k) {
  return k == SplineKind::cyclic_cubic_bspline ? "cyclic-cubic-bspline" : "cubic-bspline";
}
inline std::string to_string(KnotRule r) {
  return r == KnotRule::quantile_of_data ? "quantile-of-data" : "equally-spaced";
}

struct SplineSpec {
  SplineKind kind = SplineKind::cubic_bspline;
  int K = 10;  // number of basis functions
  double lower = 0.0;
  double upper = 1.0;
  KnotRule knot_rule = KnotRule::equally_spaced;

  bool cyclic() const noexcept { return kind == SplineKind::cyclic_cubic_bspline; }
};

inline void check_spec(const SplineSpec& s) {
  require(s.K >= 4, errc::too_few_knots, "spline needs K >= 4 basis functions, got " + std::to_string(s.K));
  require(s.lower < s.upper, errc::invalid_argument, "spline domain needs lower < upper");
  require(!(s.cyclic() && s.knot_rule == KnotRule::quantile_of_data), errc::invalid_argument,
          "cyclic splines use equally spaced knots");
}

// Cubic B-spline basis of K functions on [lower, upper].
//
// Non-cyclic, equally spaced: uniform knots extended three spacings past
// both ends (the usual P-spline construction). Non-cyclic, quantile knots:
// clamped ends with interior knots at data quantiles. Cyclic: K+3 uniform
// B-splines whose last three are folded onto the first three, so every
// function is periodic with period upper - lower.
class SplineBasis {
 public:
  SplineBasis() = default;

  SplineBasis(SplineSpec spec, std::vector<double> knots) : spec_(spec), knots_(std::move(knots)) {
    check_spec(spec_);
    const std::size_t expected = static_cast<std::size_t>(spec_.K) + (spec_.cyclic() ? 7 : 4);
    require(knots_.size() == expected, errc::invalid_argument,
            "knot vector has " + std::to_string(knots_.size()) + " entries, expected " + std::to_string(expected));
    require(std::is_sorted(knots_.begin(), knots_.end()), errc::invalid_argument, "knots must be non-decreasing");
  }

  static SplineBasis create(const SplineSpec& spec, std::span<const double> data = {}) {
    check_spec(spec);
    const double a = spec.lower, b = spec.upper;
    std::vector<double> t;
    if (spec.cyclic()) {
      const double h = (b - a) / spec.K;
      for (int j = 0; j < spec.K + 7; ++j) t.push_back(a + (j - 3) * h);
      t[3] = a;
      t[static_cast<std::size_t>(spec.K) + 3] = b;
    } else if (spec.knot_rule == KnotRule::equally_spaced || data.empty()) {
      const double h = (b - a) / (spec.K - 3);
      for (int j = 0; j < spec.K + 4; ++j) t.push_back(a + (j - 3) * h);
      t[3] = a;
      t[static_cast<std::size_t>(spec.K)] = b;
    } else {
      std::vector<double> sorted(data.begin(), data.end());
      std::sort(sorted.begin(), sorted.end());
      const int interior = spec.K - 4;
      std::vector<double> inner;
      for (int j = 1; j <= interior; ++j) {
        double p = static_cast<double>(j) / (interior + 1);
        double h = p * static_cast<double>(sorted.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(h));
        auto hi = std::min(lo + 1, sorted.size() - 1);
        inner.push_back(sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]));
      }
      bool distinct = true;
      for (std::size_t j = 0; j < inner.size(); ++j) {
        double prev = j == 0 ? a : inner[j - 1];
        distinct = distinct && inner[j] > prev && inner[j] < b;
      }
      if (!distinct) {
        // heavily tied data: fall back to uniform interior knots
        for (int j = 1; j <= interior; ++j) inner[static_cast<std::size_t>(j - 1)] = a + (b - a) * j / (interior + 1);
      }
      t.assign(4, a);
      t.insert(t.end(), inner.begin(), inner.end());
      t.insert(t.end(), 4, b);
    }
    return SplineBasis(spec, std::move(t));
  }

  const SplineSpec& spec() const noexcept { return spec_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  int size() const noexcept { return spec_.K; }

  // Values of the (at most 4) nonzero functions at x. Returns the index of
  // the first one; function first+r has value out[r] (indices wrap mod K for
  // cyclic bases).
  int nonzero(double x, std::array<double, 4>& out) const {
    const int n_funcs = static_cast<int>(knots_.size()) - 4;
    const double a = knots_[3], b = knots_[static_cast<std::size_t>(n_funcs)];
    const double tol = 1e-9 * (b - a);
    if (!(x >= a - tol && x <= b + tol))
      fail(errc::grid_outside_domain, "point " + std::to_string(x) + " outside spline domain [" + std::to_string(a) +
                                          ", " + std::to_string(b) + "]");
    x = std::clamp(x, a, b);
    // span mu: t[mu] <= x < t[mu+1], 3 <= mu <= n_funcs-1
    auto it = std::upper_bound(knots_.begin() + 3, knots_.begin() + n_funcs, x);
    int mu = static_cast<int>(it - knots_.begin()) - 1;
    mu = std::clamp(mu, 3, n_funcs - 1);
    while (mu > 3 && knots_[static_cast<std::size_t>(mu)] == knots_[static_cast<std::size_t>(mu) + 1]) --mu;

    // de Boor's triangular scheme for the order-4 functions N_{mu-3..mu}
    std::array<double, 4> left{}, right{};
    out = {1.0, 0.0, 0.0, 0.0};
    for (int j = 1; j <= 3; ++j) {
      left[static_cast<std::size_t>(j)] = x - knots_[static_cast<std::size_t>(mu + 1 - j)];
      right[static_cast<std::size_t>(j)] = knots_[static_cast<std::size_t>(mu + j)] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
        const double temp = denom > 0.0 ? out[static_cast<std::size_t>(r)] / denom : 0.0;
        out[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
        saved = left[static_cast<std::size_t>(j - r)] * temp;
      }
      out[static_cast<std::size_t>(j)] = saved;
    }
    return mu - 3;
  }

  // Evaluation matrix: row g holds phi_1..phi_K at x[g].
  MatrixXd evaluate(const VectorXd& x) const {
    MatrixXd B = MatrixXd::Zero(x.size(), spec_.K);
    std::array<double, 4> vals{};
    for (Index g = 0; g < x.size(); ++g) {
      const int first = nonzero(x[g], vals);
      for (int r = 0; r < 4; ++r) {
        int k = first + r;
        if (spec_.cyclic()) k %= spec_.K;
        if (k < spec_.K) B(g, k) += vals[static_cast<std::size_t>(r)];
      }
    }
    return B;
  }

 private:
  SplineSpec spec_;
  std::vector<double> knots_;
};

// P-spline roughness penalty D^T D, where D takes order-th differences of the
// coefficient sequence (circularly for cyclic bases).
inline MatrixXd difference_penalty(const SplineSpec& spec, int order = 2) {
  require(order == 1 || order == 2, errc::order_too_high, "difference order must be 1 or 2");
  require(spec.K > order, errc::order_too_high, "difference order must be below K");
  const Index K = spec.K;
  const std::array<double, 3> stencil = order == 1 ? std::array<double, 3>{-1.0, 1.0, 0.0}
                                                   : std::array<double, 3>{1.0, -2.0, 1.0};
  const Index rows = spec.cyclic() ? K : K - order;
  MatrixXd D = MatrixXd::Zero(rows, K);
  for (Index r = 0; r < rows; ++r)
    for (Index s = 0; s <= order; ++s) D(r, (r + s) % K) += stencil[static_cast<std::size_t>(s)];
  return D.transpose() * D;
}

struct BasisRealization {
  SplineBasis basis;
  VectorXd grid;      // G points
  MatrixXd B;         // G x K evaluation matrix
  MatrixXd P;         // K x K penalty
  int penalty_order = 2;

  const SplineSpec& spec() const { return basis.spec(); }
};

inline BasisRealization build_basis(const SplineSpec& spec, const VectorXd& grid, int penalty_order = 2,
                                    std::span<const double> knot_data = {}) {
  for (Index g = 1; g < grid.size(); ++g)
    require(grid[g] > grid[g - 1], errc::invalid_argument, "basis grid must be strictly increasing");
  BasisRealization r;
  r.basis = SplineBasis::create(spec, knot_data);
  r.grid = grid;
  r.B = r.basis.evaluate(grid);
  r.P = difference_penalty(spec, penalty_order);
  r.penalty_order = penalty_order;
  return r;
}

}  // namespace funcox
