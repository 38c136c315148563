#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "funcox/csv.hpp"
#include "funcox/errors.hpp"

namespace funcox {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

inline constexpr Index kMinutesPerDay = 1440;

// ---------------------------------------------------------------------------
// FunctionalDataset: N curves observed on one shared, strictly increasing grid.
// ---------------------------------------------------------------------------
class FunctionalDataset {
 public:
  FunctionalDataset(MatrixXd values, VectorXd grid, bool cyclic = false,
                    std::optional<double> domain_length = std::nullopt)
      : values_(std::move(values)), grid_(std::move(grid)), cyclic_(cyclic) {
    require(grid_.size() >= 4, errc::invalid_argument, "functional grid needs at least 4 points");
    require(values_.cols() == grid_.size(), errc::grid_mismatch,
            "values have " + std::to_string(values_.cols()) + " columns but grid has " +
                std::to_string(grid_.size()) + " points");
    for (Index g = 1; g < grid_.size(); ++g)
      require(grid_[g] > grid_[g - 1], errc::invalid_argument, "functional grid must be strictly increasing");
    require(values_.allFinite(), errc::missing_cell, "functional values must be finite and complete");
    domain_length_ = domain_length.value_or(spacing() * static_cast<double>(grid_.size()));
  }

  // Grid 1..L, the minute-of-day convention of the 1440 format.
  static FunctionalDataset with_default_grid(MatrixXd values, bool cyclic = false) {
    VectorXd grid = VectorXd::LinSpaced(values.cols(), 1.0, static_cast<double>(values.cols()));
    return FunctionalDataset(std::move(values), std::move(grid), cyclic);
  }

  const MatrixXd& values() const noexcept { return values_; }
  const VectorXd& grid() const noexcept { return grid_; }
  bool cyclic() const noexcept { return cyclic_; }
  double domain_length() const noexcept { return domain_length_; }
  Index rows() const noexcept { return values_.rows(); }
  Index points() const noexcept { return grid_.size(); }

  double spacing() const { return (grid_[grid_.size() - 1] - grid_[0]) / static_cast<double>(grid_.size() - 1); }

  // Interval on which a basis for this predictor lives. For cyclic data the
  // upper end is one spacing past the last point, so that point L wraps onto
  // point 1.
  std::pair<double, double> domain() const {
    double hi = grid_[grid_.size() - 1];
    if (cyclic_) hi += spacing();
    return {grid_[0], hi};
  }

  FunctionalDataset with_values(MatrixXd values) const {
    return FunctionalDataset(std::move(values), grid_, cyclic_, domain_length_);
  }

  FunctionalDataset select_rows(const std::vector<Index>& rows) const {
    MatrixXd out(static_cast<Index>(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = values_.row(rows[i]);
    return with_values(std::move(out));
  }

 private:
  MatrixXd values_;
  VectorXd grid_;
  bool cyclic_ = false;
  double domain_length_ = 0.0;
};

inline bool same_grid(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    if (std::abs(a[i] - b[i]) > 1e-12 * scale) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------
inline FunctionalDataset log1p_transform(const FunctionalDataset& d) {
  const MatrixXd& v = d.values();
  for (Index i = 0; i < v.rows(); ++i)
    for (Index j = 0; j < v.cols(); ++j)
      if (!(v(i, j) > -1.0))
        fail(errc::value_out_of_domain, "log1p undefined at row " + std::to_string(i + 1) + ", column " +
                                            std::to_string(j + 1) + " (value " + csv::format_double(v(i, j)) + ")");
  return d.with_values(v.unaryExpr([](double x) { return std::log1p(x); }));
}

inline FunctionalDataset expm1_transform(const FunctionalDataset& d) {
  return d.with_values(d.values().unaryExpr([](double x) { return std::expm1(x); }));
}

// ---------------------------------------------------------------------------
// Multi-day minute-level activity for one subject.
// ---------------------------------------------------------------------------
class MultiDayActivity {
 public:
  MultiDayActivity(std::string subject_id, MatrixXd day_matrix)
      : subject_id_(std::move(subject_id)), days_(std::move(day_matrix)) {
    require(days_.rows() >= 1, errc::invalid_argument, "subject " + subject_id_ + " has no days");
    require(days_.cols() == kMinutesPerDay, errc::invalid_argument,
            "day matrix for " + subject_id_ + " must have 1440 columns, got " + std::to_string(days_.cols()));
    require(days_.allFinite(), errc::missing_cell, "day matrix for " + subject_id_ + " has missing values");
    require((days_.array() >= 0.0).all(), errc::value_out_of_domain,
            "activity values for " + subject_id_ + " must be nonnegative");
  }

  const std::string& subject_id() const noexcept { return subject_id_; }
  const MatrixXd& day_matrix() const noexcept { return days_; }
  Index days() const noexcept { return days_.rows(); }

 private:
  std::string subject_id_;
  MatrixXd days_;
};

struct DaySummary {
  VectorXd mean;
  VectorXd sd;  // empty when not requested
};

// Minute-wise mean and sample sd (denominator D-1) across days.
inline DaySummary across_day_summary(const MultiDayActivity& a, bool transform_first = true, bool with_sd = true) {
  const Index d = a.days();
  if (with_sd && d < 2)
    fail(errc::insufficient_days, "subject " + a.subject_id() + " has " + std::to_string(d) +
                                      " day(s); at least 2 are needed for a standard deviation");
  MatrixXd x = transform_first ? MatrixXd(a.day_matrix().array().log1p()) : a.day_matrix();
  DaySummary out;
  out.mean = x.colwise().mean().transpose();
  if (with_sd) {
    MatrixXd centered = x.rowwise() - out.mean.transpose();
    out.sd = (centered.colwise().squaredNorm().transpose() / static_cast<double>(d - 1)).cwiseSqrt();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Survival outcomes and cohorts
// ---------------------------------------------------------------------------
struct SurvivalRecord {
  double time = 0.0;
  int status = 0;
  VectorXd Z;
  VectorXd V;
};

struct SurvivalData {
  VectorXd time;
  VectorXi status;

  Index size() const noexcept { return time.size(); }
  Index events() const { return status.sum(); }
};

struct LabeledFunctional {
  std::string label;
  FunctionalDataset data;
};

struct CohortDataset {
  SurvivalData survival;
  MatrixXd linear;                          // N x p, columns are Z
  std::vector<std::string> linear_labels;
  MatrixXd additive;                        // N x q, columns are V
  std::vector<std::string> additive_labels;
  std::vector<LabeledFunctional> functional;

  Index size() const noexcept { return survival.size(); }

  SurvivalRecord record(Index i) const {
    SurvivalRecord r;
    r.time = survival.time[i];
    r.status = survival.status[i];
    r.Z = linear.cols() ? VectorXd(linear.row(i).transpose()) : VectorXd();
    r.V = additive.cols() ? VectorXd(additive.row(i).transpose()) : VectorXd();
    return r;
  }

  const FunctionalDataset* find_functional(const std::string& label) const {
    for (const auto& f : functional)
      if (f.label == label) return &f.data;
    return nullptr;
  }

  std::optional<VectorXd> find_scalar(const std::string& label) const {
    for (std::size_t j = 0; j < linear_labels.size(); ++j)
      if (linear_labels[j] == label) return VectorXd(linear.col(static_cast<Index>(j)));
    for (std::size_t j = 0; j < additive_labels.size(); ++j)
      if (additive_labels[j] == label) return VectorXd(additive.col(static_cast<Index>(j)));
    return std::nullopt;
  }

  CohortDataset select_rows(const std::vector<Index>& rows) const {
    CohortDataset out;
    const Index n = static_cast<Index>(rows.size());
    out.survival.time.resize(n);
    out.survival.status.resize(n);
    out.linear.resize(n, linear.cols());
    out.additive.resize(n, additive.cols());
    for (Index i = 0; i < n; ++i) {
      Index r = rows[static_cast<std::size_t>(i)];
      out.survival.time[i] = survival.time[r];
      out.survival.status[i] = survival.status[r];
      if (linear.cols()) out.linear.row(i) = linear.row(r);
      if (additive.cols()) out.additive.row(i) = additive.row(r);
    }
    out.linear_labels = linear_labels;
    out.additive_labels = additive_labels;
    for (const auto& f : functional) out.functional.push_back({f.label, f.data.select_rows(rows)});
    return out;
  }
};

struct Violation {
  enum class Kind { too_few_rows, row_mismatch, no_events, missing_values, bad_time, bad_status, duplicate_label };
  Kind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(Violation::Kind k) const {
    return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
  }
  std::string summary() const {
    std::string s;
    for (const auto& v : violations) s += (s.empty() ? "" : "; ") + v.message;
    return s;
  }
};

inline ValidationReport validate_cohort(const CohortDataset& c) {
  ValidationReport rep;
  auto add = [&](Violation::Kind k, std::string msg) { rep.violations.push_back({k, std::move(msg)}); };
  const Index n = c.survival.time.size();

  if (c.survival.status.size() != n)
    add(Violation::Kind::row_mismatch, "row mismatch: status has " + std::to_string(c.survival.status.size()) +
                                           " rows, time has " + std::to_string(n));
  if (n < 2) add(Violation::Kind::too_few_rows, "cohort needs at least 2 subjects");
  if (c.linear.cols() > 0 && c.linear.rows() != n)
    add(Violation::Kind::row_mismatch, "row mismatch: linear covariates have " + std::to_string(c.linear.rows()) + " rows");
  if (c.additive.cols() > 0 && c.additive.rows() != n)
    add(Violation::Kind::row_mismatch,
        "row mismatch: additive covariates have " + std::to_string(c.additive.rows()) + " rows");
  if (static_cast<std::size_t>(c.linear.cols()) != c.linear_labels.size() ||
      static_cast<std::size_t>(c.additive.cols()) != c.additive_labels.size())
    add(Violation::Kind::row_mismatch, "row mismatch: covariate labels do not match covariate columns");
  for (const auto& f : c.functional)
    if (f.data.rows() != n)
      add(Violation::Kind::row_mismatch, "row mismatch: functional predictor '" + f.label + "' has " +
                                             std::to_string(f.data.rows()) + " rows, expected " + std::to_string(n));

  if (!c.survival.time.allFinite() || !c.linear.allFinite() || !c.additive.allFinite())
    add(Violation::Kind::missing_values, "missing values in survival table or covariates");
  for (Index i = 0; i < n; ++i) {
    if (std::isfinite(c.survival.time[i]) && !(c.survival.time[i] > 0.0)) {
      add(Violation::Kind::bad_time, "non-positive follow-up time at row " + std::to_string(i + 1));
      break;
    }
  }
  if (c.survival.status.size() == n) {
    bool bad = false;
    for (Index i = 0; i < n; ++i) bad = bad || (c.survival.status[i] != 0 && c.survival.status[i] != 1);
    if (bad) add(Violation::Kind::bad_status, "status must be 0 or 1");
    if (n > 0 && c.survival.status.sum() == 0) add(Violation::Kind::no_events, "no events");
  }

  std::vector<std::string> labels = c.linear_labels;
  labels.insert(labels.end(), c.additive_labels.begin(), c.additive_labels.end());
  for (const auto& f : c.functional) labels.push_back(f.label);
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
    add(Violation::Kind::duplicate_label, "duplicate covariate label");
  return rep;
}

// ---------------------------------------------------------------------------
// 1440-format CSV
// ---------------------------------------------------------------------------
namespace detail {

struct RawMatrix {
  MatrixXd values;                     // NaN marks a missing cell
  std::optional<VectorXd> header_grid;
  std::vector<Index> incomplete_rows;
};

// Grid value from a header label such as "MIN12", "s_0.5" or "12".
inline std::optional<double> header_grid_value(std::string_view cell) {
  std::size_t i = 0;
  while (i < cell.size() && (std::isalpha(static_cast<unsigned char>(cell[i])) || cell[i] == '_' || cell[i] == ' ')) ++i;
  return csv::parse_double(cell.substr(i));
}

inline RawMatrix read_raw_matrix(const std::string& path) {
  csv::Table table = csv::read(path);
  std::size_t first = 0;
  RawMatrix out;

  const auto& head = table.rows.front();
  bool is_header = std::any_of(head.begin(), head.end(), [](const std::string& c) {
    return !csv::is_missing_token(c) && !csv::parse_double(c).has_value();
  });
  if (is_header) {
    first = 1;
    VectorXd grid(static_cast<Index>(head.size()));
    bool ok = true;
    for (std::size_t j = 0; j < head.size() && ok; ++j) {
      auto v = header_grid_value(head[j]);
      ok = v.has_value() && (j == 0 || *v > grid[static_cast<Index>(j) - 1]);
      if (ok) grid[static_cast<Index>(j)] = *v;
    }
    if (ok) out.header_grid = grid;
  }
  if (table.rows.size() <= first) fail(errc::empty_file, "'" + path + "' has a header but no data rows");

  const std::size_t width = table.rows[first].size();
  const Index n = static_cast<Index>(table.rows.size() - first);
  out.values.resize(n, static_cast<Index>(width));
  for (std::size_t r = first; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != width)
      fail(errc::ragged_rows, "'" + path + "' line " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                                  " cells, expected " + std::to_string(width));
    const Index i = static_cast<Index>(r - first);
    bool incomplete = false;
    for (std::size_t j = 0; j < width; ++j) {
      if (csv::is_missing_token(row[j])) {
        out.values(i, static_cast<Index>(j)) = std::numeric_limits<double>::quiet_NaN();
        incomplete = true;
        continue;
      }
      auto v = csv::parse_double(row[j]);
      if (!v)
        fail(errc::non_numeric_cell, "'" + path + "' line " + std::to_string(r + 1) + ", column " +
                                         std::to_string(j + 1) + ": '" + row[j] + "' is not numeric");
      out.values(i, static_cast<Index>(j)) = *v;
    }
    if (incomplete) out.incomplete_rows.push_back(i);
  }
  if (out.header_grid && out.header_grid->size() != out.values.cols())
    fail(errc::ragged_rows, "'" + path + "' header has " + std::to_string(out.header_grid->size()) +
                                " labels but rows have " + std::to_string(out.values.cols()) + " cells");
  return out;
}

}  // namespace detail

struct LoadOptions {
  bool cyclic = false;
  bool drop_incomplete = false;  // otherwise a missing cell is an error
};

struct LoadResult {
  FunctionalDataset data;
  std::vector<Index> dropped_rows;  // 0-based data rows removed by drop_incomplete
};

inline LoadResult load_1440_csv_detailed(const std::string& path, LoadOptions opt) {
  detail::RawMatrix raw = detail::read_raw_matrix(path);
  if (!raw.incomplete_rows.empty() && !opt.drop_incomplete)
    fail(errc::missing_cell, "'" + path + "' data row " + std::to_string(raw.incomplete_rows.front() + 1) +
                                 " has a missing cell (use --drop-incomplete to drop such rows)");
  MatrixXd values = std::move(raw.values);
  if (!raw.incomplete_rows.empty()) {
    std::vector<Index> keep;
    std::size_t k = 0;
    for (Index i = 0; i < values.rows(); ++i) {
      if (k < raw.incomplete_rows.size() && raw.incomplete_rows[k] == i) {
        ++k;
        continue;
      }
      keep.push_back(i);
    }
    MatrixXd kept(static_cast<Index>(keep.size()), values.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) kept.row(static_cast<Index>(i)) = values.row(keep[i]);
    values = std::move(kept);
  }
  VectorXd grid = raw.header_grid ? *raw.header_grid
                                  : VectorXd::LinSpaced(values.cols(), 1.0, static_cast<double>(values.cols()));
  return {FunctionalDataset(std::move(values), std::move(grid), opt.cyclic), std::move(raw.incomplete_rows)};
}

inline FunctionalDataset load_1440_csv(const std::string& path, bool cyclic = false) {
  return load_1440_csv_detailed(path, {cyclic, false}).data;
}

// Writes a header of grid labels ("s<value>") followed by one row per curve.
inline void write_1440_csv(const std::string& path, const FunctionalDataset& d) {
  csv::Writer w(path);
  std::vector<std::string> head;
  head.reserve(static_cast<std::size_t>(d.points()));
  for (Index g = 0; g < d.points(); ++g) head.push_back("s" + csv::format_double(d.grid()[g]));
  w.header(head);
  std::vector<double> row(static_cast<std::size_t>(d.points()));
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index g = 0; g < d.points(); ++g) row[static_cast<std::size_t>(g)] = d.values()(i, g);
    w.row(row);
  }
  w.close();
}

}  // namespace funcox
