#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "funcox/csv.hpp"
#include "funcox/data_model.hpp"
#include "funcox/errors.hpp"
#include "funcox/serialize.hpp"

namespace funcox::io {

namespace fs = std::filesystem;

// A cohort on disk:
//   {
//     "survival": {"path": "survival.csv", "time": "time", "status": "status"},
//     "linear": ["sex", "bmi"],
//     "additive": ["age"],
//     "functional": [{"label": "act_mean", "path": "act_mean.csv", "cyclic": true, "log1p": false}]
//   }
// Relative paths resolve against the manifest's directory. Scalar covariates
// are columns of the survival table.
struct FunctionalEntry {
  std::string label;
  std::string path;
  bool cyclic = false;
  bool log1p = false;
};

struct CohortManifest {
  std::string survival_path;
  std::string time_column = "time";
  std::string status_column = "status";
  std::vector<std::string> linear;
  std::vector<std::string> additive;
  std::vector<FunctionalEntry> functional;
};

inline std::string resolve_path(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base_dir / path).lexically_normal().string();
}

inline void require_file(const std::string& path, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) fail(errc::config, what + " '" + path + "' does not exist");
}

inline CohortManifest manifest_from_json(const json& j, const fs::path& base_dir) {
  require(j.is_object() && j.contains("survival"), errc::config, "cohort manifest needs a 'survival' section");
  CohortManifest m;
  const json& s = j.at("survival");
  if (s.is_string()) {
    m.survival_path = resolve_path(base_dir, s.get<std::string>());
  } else {
    m.survival_path = resolve_path(base_dir, s.at("path").get<std::string>());
    m.time_column = s.value("time", m.time_column);
    m.status_column = s.value("status", m.status_column);
  }
  if (j.contains("linear")) m.linear = j.at("linear").get<std::vector<std::string>>();
  if (j.contains("additive")) m.additive = j.at("additive").get<std::vector<std::string>>();
  if (j.contains("functional")) {
    for (const auto& f : j.at("functional")) {
      FunctionalEntry e;
      e.label = f.at("label").get<std::string>();
      e.path = resolve_path(base_dir, f.at("path").get<std::string>());
      e.cyclic = f.value("cyclic", false);
      e.log1p = f.value("log1p", false);
      m.functional.push_back(std::move(e));
    }
  }
  return m;
}

inline json to_json(const CohortManifest& m, const fs::path& relative_to) {
  auto rel = [&](const std::string& p) { return fs::path(p).lexically_relative(relative_to).generic_string(); };
  json j;
  j["survival"] = {{"path", rel(m.survival_path)}, {"time", m.time_column}, {"status", m.status_column}};
  j["linear"] = m.linear;
  j["additive"] = m.additive;
  j["functional"] = json::array();
  for (const auto& f : m.functional)
    j["functional"].push_back({{"label", f.label}, {"path", rel(f.path)}, {"cyclic", f.cyclic}, {"log1p", f.log1p}});
  return j;
}

struct LoadedCohort {
  CohortDataset cohort;
  std::vector<Index> dropped_rows;  // 0-based rows removed because some component was incomplete
};

// Reads all components. Missing cells are an error unless drop_incomplete,
// in which case a subject missing anything is removed from every component.
inline LoadedCohort load_cohort(const CohortManifest& m, bool drop_incomplete = false) {
  require_file(m.survival_path, "survival table");
  for (const auto& f : m.functional) require_file(f.path, "functional predictor '" + f.label + "'");

  const csv::Table t = csv::read(m.survival_path);
  const auto& head = t.rows.front();
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < head.size(); ++c)
      if (head[c] == name) return c;
    fail(errc::config, "column '" + name + "' not found in '" + m.survival_path + "'");
  };
  const std::size_t time_col = column(m.time_column), status_col = column(m.status_column);
  std::vector<std::size_t> lin_cols, add_cols;
  for (const auto& l : m.linear) lin_cols.push_back(column(l));
  for (const auto& a : m.additive) add_cols.push_back(column(a));

  const Index n = static_cast<Index>(t.rows.size()) - 1;
  require(n >= 1, errc::empty_file, "'" + m.survival_path + "' has a header but no data rows");
  std::set<Index> incomplete;
  MatrixXd table(n, static_cast<Index>(head.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i) + 1];
    if (row.size() != head.size())
      fail(errc::ragged_rows, "'" + m.survival_path + "' line " + std::to_string(i + 2) + " has " +
                                  std::to_string(row.size()) + " cells, expected " + std::to_string(head.size()));
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (csv::is_missing_token(row[c])) {
        table(i, static_cast<Index>(c)) = std::numeric_limits<double>::quiet_NaN();
        incomplete.insert(i);
        continue;
      }
      auto v = csv::parse_double(row[c]);
      if (!v)
        fail(errc::non_numeric_cell, "'" + m.survival_path + "' line " + std::to_string(i + 2) + ", column " +
                                         std::to_string(c + 1) + ": '" + row[c] + "' is not numeric");
      table(i, static_cast<Index>(c)) = *v;
    }
  }
  if (!incomplete.empty() && !drop_incomplete)
    fail(errc::missing_cell, "'" + m.survival_path + "' data row " + std::to_string(*incomplete.begin() + 1) +
                                 " has a missing cell (use --drop-incomplete to drop such rows)");

  std::vector<FunctionalDataset> curves;
  for (const auto& f : m.functional) {
    detail::RawMatrix raw = detail::read_raw_matrix(f.path);
    require(raw.values.rows() == n, errc::validation_failed,
            "row mismatch: functional predictor '" + f.label + "' has " + std::to_string(raw.values.rows()) +
                " rows, survival table has " + std::to_string(n));
    if (!raw.incomplete_rows.empty() && !drop_incomplete)
      fail(errc::missing_cell, "'" + f.path + "' data row " + std::to_string(raw.incomplete_rows.front() + 1) +
                                   " has a missing cell (use --drop-incomplete to drop such rows)");
    incomplete.insert(raw.incomplete_rows.begin(), raw.incomplete_rows.end());
    MatrixXd values = raw.values;
    for (Index r : raw.incomplete_rows) values.row(r).setZero();  // placeholder, row is dropped below
    VectorXd grid = raw.header_grid ? *raw.header_grid
                                    : VectorXd::LinSpaced(values.cols(), 1.0, static_cast<double>(values.cols()));
    curves.emplace_back(std::move(values), std::move(grid), f.cyclic);
  }

  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (!incomplete.count(i)) keep.push_back(i);
  LoadedCohort out;
  out.dropped_rows.assign(incomplete.begin(), incomplete.end());
  CohortDataset& c = out.cohort;
  const Index k = static_cast<Index>(keep.size());
  c.survival.time.resize(k);
  c.survival.status.resize(k);
  c.linear.resize(k, static_cast<Index>(lin_cols.size()));
  c.additive.resize(k, static_cast<Index>(add_cols.size()));
  for (Index r = 0; r < k; ++r) {
    const Index i = keep[static_cast<std::size_t>(r)];
    c.survival.time[r] = table(i, static_cast<Index>(time_col));
    const double st = table(i, static_cast<Index>(status_col));
    require(st == 0.0 || st == 1.0, errc::validation_failed,
            "'" + m.survival_path + "' line " + std::to_string(i + 2) + ": status must be 0 or 1");
    c.survival.status[r] = static_cast<int>(st);
    for (std::size_t j = 0; j < lin_cols.size(); ++j) c.linear(r, static_cast<Index>(j)) = table(i, static_cast<Index>(lin_cols[j]));
    for (std::size_t j = 0; j < add_cols.size(); ++j) c.additive(r, static_cast<Index>(j)) = table(i, static_cast<Index>(add_cols[j]));
  }
  c.linear_labels = m.linear;
  c.additive_labels = m.additive;
  for (std::size_t f = 0; f < m.functional.size(); ++f) {
    FunctionalDataset d = curves[f].select_rows(keep);
    if (m.functional[f].log1p) d = log1p_transform(d);
    c.functional.push_back({m.functional[f].label, std::move(d)});
  }
  return out;
}

inline LoadedCohort load_cohort(const std::string& manifest_path, bool drop_incomplete = false) {
  require_file(manifest_path, "cohort manifest");
  return load_cohort(manifest_from_json(read_json(manifest_path), fs::path(manifest_path).parent_path()),
                     drop_incomplete);
}

// Writes survival.csv, one 1440-format CSV per functional predictor and
// cohort.json into dir; returns the manifest path.
inline std::string write_cohort(const std::string& dir, const CohortDataset& c) {
  fs::create_directories(dir);
  CohortManifest m;
  m.survival_path = (fs::path(dir) / "survival.csv").string();
  m.linear = c.linear_labels;
  m.additive = c.additive_labels;
  {
    csv::Writer w(m.survival_path);
    std::vector<std::string> head{"time", "status"};
    head.insert(head.end(), c.linear_labels.begin(), c.linear_labels.end());
    head.insert(head.end(), c.additive_labels.begin(), c.additive_labels.end());
    w.header(head);
    std::vector<double> row;
    for (Index i = 0; i < c.size(); ++i) {
      row.assign({c.survival.time[i], static_cast<double>(c.survival.status[i])});
      for (Index j = 0; j < c.linear.cols(); ++j) row.push_back(c.linear(i, j));
      for (Index j = 0; j < c.additive.cols(); ++j) row.push_back(c.additive(i, j));
      w.row(row);
    }
    w.close();
  }
  for (const auto& f : c.functional) {
    FunctionalEntry e;
    e.label = f.label;
    e.path = (fs::path(dir) / (f.label + ".csv")).string();
    e.cyclic = f.data.cyclic();
    write_1440_csv(e.path, f.data);
    m.functional.push_back(std::move(e));
  }
  const std::string manifest_path = (fs::path(dir) / "cohort.json").string();
  write_json(manifest_path, to_json(m, fs::path(dir)));
  return manifest_path;
}

}  // namespace funcox::io
