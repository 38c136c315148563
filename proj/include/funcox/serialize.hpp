#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "funcox/coxfit.hpp"
#include "funcox/errors.hpp"
#include "funcox/inference.hpp"
#include "funcox/simgen.hpp"

namespace funcox::io {

using json = nlohmann::ordered_json;

inline json to_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(VectorXd(m.row(r).transpose())));
  return rows;
}

inline VectorXd vector_from_json(const json& a) {
  require(a.is_array(), errc::config, "expected a JSON array of numbers");
  VectorXd v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Index>(i)] = a[i].get<double>();
  return v;
}

inline MatrixXd matrix_from_json(const json& a) {
  require(a.is_array(), errc::config, "expected a JSON array of rows");
  if (a.empty()) return MatrixXd();
  MatrixXd m(static_cast<Index>(a.size()), static_cast<Index>(a[0].size()));
  for (std::size_t r = 0; r < a.size(); ++r) {
    require(a[r].size() == a[0].size(), errc::config, "ragged matrix in JSON");
    for (std::size_t c = 0; c < a[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = a[r][c].get<double>();
  }
  return m;
}

inline SplineKind spline_kind_from(const std::string& s) {
  if (s == "cubic-bspline") return SplineKind::cubic_bspline;
  if (s == "cyclic-cubic-bspline") return SplineKind::cyclic_cubic_bspline;
  fail(errc::config, "unknown basis kind '" + s + "'");
}

inline KnotRule knot_rule_from(const std::string& s) {
  if (s == "equally-spaced") return KnotRule::equally_spaced;
  if (s == "quantile-of-data") return KnotRule::quantile_of_data;
  fail(errc::config, "unknown knot rule '" + s + "'");
}

inline TermType term_type_from(const std::string& s) {
  if (s == "linear") return TermType::linear;
  if (s == "additive") return TermType::additive;
  if (s == "functional") return TermType::functional;
  if (s == "distributional") return TermType::distributional;
  fail(errc::config, "unknown term type '" + s + "'");
}

// ---------------------------------------------------------------------------
// Model spec
// ---------------------------------------------------------------------------
inline json to_json(const SmoothTermSpec& t) {
  json j;
  j["label"] = t.label;
  j["source"] = t.source_label();
  j["type"] = to_string(t.type);
  j["basis"] = to_string(t.kind);
  j["K"] = t.K;
  j["knot_rule"] = to_string(t.knot_rule);
  j["penalty_order"] = t.penalty_order;
  if (t.domain) j["domain"] = {t.domain->first, t.domain->second};
  if (t.type == TermType::distributional) {
    j["quantile_points"] = t.quantile_points;
    j["quantile_range"] = {t.quantile_lo, t.quantile_hi};
  }
  return j;
}

inline json to_json(const ModelSpec& m) {
  json j;
  j["linear"] = m.linear_terms;
  j["additive"] = json::array();
  for (const auto& t : m.additive_terms) j["additive"].push_back(to_json(t));
  j["functional"] = json::array();
  for (const auto& t : m.functional_terms) j["functional"].push_back(to_json(t));
  return j;
}

inline SmoothTermSpec smooth_term_from_json(const json& j, TermType default_type, int default_K) {
  require(j.is_object() && j.contains("label"), errc::config, "smooth term needs a label");
  SmoothTermSpec t;
  t.label = j.at("label").get<std::string>();
  t.source = j.value("source", t.label);
  t.type = term_type_from(j.value("type", to_string(default_type)));
  t.kind = spline_kind_from(j.value("basis", to_string(SplineKind::cubic_bspline)));
  t.K = j.value("K", default_K);
  t.knot_rule = knot_rule_from(j.value("knot_rule", to_string(KnotRule::equally_spaced)));
  t.penalty_order = j.value("penalty_order", 2);
  if (j.contains("domain")) {
    const auto& d = j.at("domain");
    require(d.is_array() && d.size() == 2, errc::config, "domain must be [lower, upper]");
    t.domain = std::make_pair(d[0].get<double>(), d[1].get<double>());
  }
  t.quantile_points = j.value("quantile_points", Index{100});
  if (j.contains("quantile_range")) {
    t.quantile_lo = j.at("quantile_range")[0].get<double>();
    t.quantile_hi = j.at("quantile_range")[1].get<double>();
  }
  return t;
}

inline ModelSpec model_spec_from_json(const json& j) {
  require(j.is_object(), errc::config, "model spec must be a JSON object");
  ModelSpec m;
  if (j.contains("linear")) m.linear_terms = j.at("linear").get<std::vector<std::string>>();
  if (j.contains("additive"))
    for (const auto& t : j.at("additive")) m.additive_terms.push_back(smooth_term_from_json(t, TermType::additive, 10));
  if (j.contains("functional"))
    for (const auto& t : j.at("functional"))
      m.functional_terms.push_back(smooth_term_from_json(t, TermType::functional, 30));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Fit results
// ---------------------------------------------------------------------------
inline json to_json(const FittedTerm& t) {
  json j;
  j["label"] = t.label;
  j["source"] = t.source;
  j["type"] = to_string(t.type);
  j["offset"] = t.offset;
  j["size"] = t.size;
  j["lambda"] = t.lambda;
  j["edf"] = t.edf;
  if (t.basis) {
    const SplineSpec& s = t.basis->spec();
    j["basis"] = {{"kind", to_string(s.kind)},  {"K", s.K},
                  {"lower", s.lower},           {"upper", s.upper},
                  {"knot_rule", to_string(s.knot_rule)}, {"knots", t.basis->knots()}};
    j["penalty_order"] = t.penalty_order;
    j["grid"] = to_json(t.grid);
  }
  if (t.constraint) j["constraint"] = to_json(*t.constraint);
  if (t.penalized()) j["penalty"] = to_json(t.penalty);
  return j;
}

inline FittedTerm fitted_term_from_json(const json& j) {
  FittedTerm t;
  t.label = j.at("label").get<std::string>();
  t.source = j.value("source", t.label);
  t.type = term_type_from(j.at("type").get<std::string>());
  t.offset = j.at("offset").get<Index>();
  t.size = j.at("size").get<Index>();
  t.lambda = j.value("lambda", 0.0);
  t.edf = j.value("edf", 0.0);
  if (j.contains("basis")) {
    const json& b = j.at("basis");
    SplineSpec s;
    s.kind = spline_kind_from(b.at("kind").get<std::string>());
    s.K = b.at("K").get<int>();
    s.lower = b.at("lower").get<double>();
    s.upper = b.at("upper").get<double>();
    s.knot_rule = knot_rule_from(b.at("knot_rule").get<std::string>());
    t.basis = SplineBasis(s, b.at("knots").get<std::vector<double>>());
    t.penalty_order = j.value("penalty_order", 2);
    t.grid = vector_from_json(j.at("grid"));
  }
  if (j.contains("constraint")) t.constraint = matrix_from_json(j.at("constraint"));
  if (j.contains("penalty")) t.penalty = matrix_from_json(j.at("penalty"));
  return t;
}

inline json to_json(const PenalizedFitResult& f) {
  json j;
  j["n"] = f.n;
  j["events"] = f.events;
  j["loglik"] = f.loglik;
  j["pll"] = f.pll;
  j["aic"] = f.aic;
  j["edf_total"] = f.edf_total;
  j["iterations"] = f.iterations;
  j["quadrature"] = "riemann, weights 1/L on the normalized domain";
  j["terms"] = json::array();
  for (const auto& t : f.terms) j["terms"].push_back(to_json(t));
  j["coef"] = to_json(f.coef);
  j["Vb"] = to_json(f.Vb);
  j["linear_predictor"] = to_json(f.linear_predictor);
  j["lambda_trials"] = json::array();
  for (const auto& tr : f.lambda_trials) {
    json t;
    t["lambdas"] = tr.lambdas;
    t["aic"] = tr.failed ? json(nullptr) : json(tr.aic);
    t["edf"] = tr.edf;
    t["failed"] = tr.failed;
    j["lambda_trials"].push_back(t);
  }
  j["warnings"] = f.warnings;
  return j;
}

inline PenalizedFitResult fit_from_json(const json& j) {
  PenalizedFitResult f;
  f.n = j.at("n").get<Index>();
  f.events = j.at("events").get<Index>();
  f.loglik = j.at("loglik").get<double>();
  f.pll = j.at("pll").get<double>();
  f.aic = j.at("aic").get<double>();
  f.edf_total = j.at("edf_total").get<double>();
  f.iterations = j.at("iterations").get<int>();
  for (const auto& t : j.at("terms")) f.terms.push_back(fitted_term_from_json(t));
  f.coef = vector_from_json(j.at("coef"));
  f.Vb = matrix_from_json(j.at("Vb"));
  f.linear_predictor = vector_from_json(j.at("linear_predictor"));
  if (j.contains("lambda_trials")) {
    for (const auto& t : j.at("lambda_trials")) {
      LambdaTrial tr;
      tr.lambdas = t.at("lambdas").get<std::vector<double>>();
      tr.failed = t.value("failed", false);
      tr.aic = t.at("aic").is_null() ? std::numeric_limits<double>::infinity() : t.at("aic").get<double>();
      tr.edf = t.at("edf").get<double>();
      f.lambda_trials.push_back(std::move(tr));
    }
  }
  if (j.contains("warnings")) f.warnings = j.at("warnings").get<std::vector<std::string>>();
  require(f.Vb.rows() == f.coef.size() && f.Vb.cols() == f.coef.size(), errc::config,
          "fit artifact: Vb does not match the coefficient vector");
  return f;
}

inline json to_json(const BaselineHazard& h) {
  return {{"event_times", h.event_times}, {"increments", h.increments}, {"cumulative", h.cumulative}};
}

inline BaselineHazard baseline_from_json(const json& j) {
  BaselineHazard h;
  h.event_times = j.at("event_times").get<std::vector<double>>();
  h.increments = j.at("increments").get<std::vector<double>>();
  h.cumulative = j.at("cumulative").get<std::vector<double>>();
  return h;
}

// ---------------------------------------------------------------------------
// Inference and coverage
// ---------------------------------------------------------------------------
inline json band_summary(const std::string& label, const CmaBand& b) {
  json j;
  j["term"] = label;
  j["alpha"] = b.alpha;
  j["q"] = b.q;
  j["q_raw"] = b.q_raw;
  j["z"] = b.z;
  j["B"] = b.B;
  j["seed"] = b.seed;
  j["p_global"] = b.p_global;
  j["notes"] = {"q is max(empirical quantile, z_{1-alpha/2})",
                "p_cma uses the add-one convention (1 + #{r >= t}) / (B + 1), floored at p_unadj"};
  return j;
}

inline json to_json(const CoverageReport& r) {
  json j;
  j["N"] = r.N;
  j["n_reps"] = r.n_reps;
  j["n_failed"] = r.n_failed;
  j["failures"] = r.failures;
  j["mse"] = r.mse;
  j["mean_pointwise_coverage"] = r.mean_pointwise_coverage;
  j["cma_coverage"] = r.cma_coverage;
  j["global_rejection_rate"] = r.rejection_rate;
  j["mean_event_fraction"] = r.mean_event_fraction;
  j["source_event_fraction"] = r.source_event_fraction;
  j["alpha"] = r.alpha;
  j["B"] = r.B;
  j["seed"] = r.seed;
  auto nan_to_null = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
  };
  j["ise"] = nan_to_null(r.ise);
  j["p_global"] = nan_to_null(r.p_global);
  j["event_fraction"] = nan_to_null(r.event_fraction);
  j["cma_covered"] = r.cma_covered;
  return j;
}

inline json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(errc::config, "'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_failure, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) fail(errc::io_failure, "error while writing '" + path + "'");
}

}  // namespace funcox::io
