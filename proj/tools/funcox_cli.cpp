// funcox command-line interface: ingest, fit, infer, simulate, coverage, demo.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "funcox/coxfit.hpp"
#include "funcox/csv.hpp"
#include "funcox/data_model.hpp"
#include "funcox/demo_data.hpp"
#include "funcox/errors.hpp"
#include "funcox/inference.hpp"
#include "funcox/manifest.hpp"
#include "funcox/parallel.hpp"
#include "funcox/serialize.hpp"
#include "funcox/simgen.hpp"
#include "funcox/svg.hpp"

namespace fs = std::filesystem;
using funcox::io::json;
using namespace funcox;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::string out;
  std::string fit_dir;
  std::string input;
  std::uint64_t seed = 1;
  bool seed_given = false;
  unsigned threads = 0;
  bool drop_incomplete = false;
  bool cyclic = false;
  bool log1p = false;
  Index days = 1;
  Index demo_n = 0;
};

// Config file plus the directory its relative paths resolve against.
struct Config {
  json doc = json::object();
  fs::path base = fs::current_path();

  json section(const std::string& name) const {
    return doc.contains(name) && doc.at(name).is_object() ? doc.at(name) : json::object();
  }
  std::string path(const std::string& p) const { return io::resolve_path(base, p); }
};

Config load_config(const Options& o) {
  Config c;
  if (o.config.empty()) return c;
  io::require_file(o.config, "config file");
  c.doc = io::read_json(o.config);
  require(c.doc.is_object(), errc::config, "config '" + o.config + "' must be a JSON object");
  c.base = fs::absolute(o.config).parent_path();
  return c;
}

std::uint64_t resolve_seed(const Options& o, const json& section, const Config& c) {
  if (o.seed_given) return o.seed;
  if (section.contains("seed")) return section.at("seed").get<std::uint64_t>();
  if (c.doc.contains("seed")) return c.doc.at("seed").get<std::uint64_t>();
  return 1;
}

std::string resolve_out(const Options& o, const Config& c, const std::string& fallback) {
  std::string out = o.out;
  if (out.empty()) {
    const json s = c.section("output");
    out = s.contains("dir") ? c.path(s.at("dir").get<std::string>()) : fallback;
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(errc::io_failure, "cannot create output directory '" + out + "': " + ec.message());
  return out;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// run.json holds the fully resolved config; passing it back as --config
// reruns the command with identical numeric output.
void write_run_json(const std::string& out, const std::string& command, json resolved, std::uint64_t seed) {
  resolved["command"] = command;
  resolved["version"] = FUNCOX_VERSION;
  resolved["seed"] = seed;
  io::write_json(join(out, "run.json"), resolved);
}

void write_vector_csv(const std::string& path, const std::vector<std::string>& head,
                      const std::vector<const VectorXd*>& cols) {
  csv::Writer w(path);
  w.header(head);
  std::vector<double> row(cols.size());
  const Index n = cols.empty() ? 0 : cols.front()->size();
  for (Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) row[c] = (*cols[c])[i];
    w.row(row);
  }
  w.close();
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------
int cmd_ingest(const Options& o) {
  const Config c = load_config(o);
  const json s = c.section("ingest");
  std::string input = o.input.empty() ? (s.contains("input") ? c.path(s.at("input").get<std::string>()) : "") : o.input;
  require(!input.empty(), errc::config, "ingest needs --input or ingest.input in the config");
  input = fs::absolute(input).lexically_normal().string();
  io::require_file(input, "input");
  const bool cyclic = o.cyclic || s.value("cyclic", false);
  const bool log1p = o.log1p || s.value("log1p", false);
  const bool drop = o.drop_incomplete || s.value("drop_incomplete", false);
  const Index days = o.days > 1 ? o.days : s.value("days", Index{1});
  const std::string out = resolve_out(o, c, "ingest_out");

  LoadResult lr = load_1440_csv_detailed(input, {cyclic, drop});
  json report;
  report["input"] = input;
  report["rows_read"] = lr.data.rows() + static_cast<Index>(lr.dropped_rows.size());
  report["dropped_rows"] = json::array();
  for (Index r : lr.dropped_rows) report["dropped_rows"].push_back(r + 1);
  report["points"] = lr.data.points();

  if (days > 1) {
    // Consecutive blocks of `days` rows are one subject's days.
    require(lr.dropped_rows.empty(), errc::validation_failed, "day-level input with missing cells cannot be summarized");
    require(lr.data.points() == kMinutesPerDay, errc::validation_failed, "day-level input must have 1440 columns");
    require(lr.data.rows() % days == 0, errc::validation_failed,
            std::to_string(lr.data.rows()) + " day rows are not a multiple of " + std::to_string(days) + " days");
    const Index n = lr.data.rows() / days;
    MatrixXd mean(n, kMinutesPerDay), sd(n, kMinutesPerDay);
    for (Index i = 0; i < n; ++i) {
      MultiDayActivity a("row" + std::to_string(i * days + 1), lr.data.values().middleRows(i * days, days));
      DaySummary ds = across_day_summary(a, log1p);
      mean.row(i) = ds.mean.transpose();
      sd.row(i) = ds.sd.transpose();
    }
    write_1440_csv(join(out, "act_mean.csv"), FunctionalDataset(std::move(mean), lr.data.grid(), cyclic));
    write_1440_csv(join(out, "act_sd.csv"), FunctionalDataset(std::move(sd), lr.data.grid(), cyclic));
    report["subjects"] = n;
    report["days"] = days;
    report["outputs"] = {"act_mean.csv", "act_sd.csv"};
  } else {
    FunctionalDataset d = log1p ? log1p_transform(lr.data) : lr.data;
    write_1440_csv(join(out, "curves.csv"), d);
    report["subjects"] = d.rows();
    report["outputs"] = {"curves.csv"};
  }
  io::write_json(join(out, "ingest.json"), report);
  json resolved;
  resolved["ingest"] = {{"input", input}, {"cyclic", cyclic}, {"log1p", log1p}, {"drop_incomplete", drop}, {"days", days}};
  write_run_json(out, "ingest", resolved, 0);
  std::cout << "ingested " << report["subjects"].get<Index>() << " subjects into " << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------
LambdaGrid lambda_grid_from(const json& j) {
  LambdaGrid g;
  g.log10_min = j.value("log10_min", g.log10_min);
  g.log10_max = j.value("log10_max", g.log10_max);
  g.step = j.value("step", g.step);
  g.sweeps = j.value("sweeps", g.sweeps);
  require(g.step > 0 && g.log10_min <= g.log10_max, errc::config, "invalid lambda grid");
  return g;
}

json to_json(const LambdaGrid& g) {
  return {{"log10_min", g.log10_min}, {"log10_max", g.log10_max}, {"step", g.step}, {"sweeps", g.sweeps}};
}

std::string manifest_path_from(const Config& c) {
  const json d = c.section("data");
  require(d.contains("manifest"), errc::config, "config needs data.manifest (path to the cohort manifest)");
  return fs::absolute(c.path(d.at("manifest").get<std::string>())).lexically_normal().string();
}

int cmd_fit(const Options& o) {
  const Config c = load_config(o);
  require(!o.config.empty(), errc::config, "fit needs --config");
  const std::string manifest = manifest_path_from(c);
  const bool drop = o.drop_incomplete || c.section("data").value("drop_incomplete", false);
  require(c.doc.contains("model"), errc::config, "config needs a 'model' section");
  const ModelSpec spec = io::model_spec_from_json(c.doc.at("model"));
  const json fs_cfg = c.section("fit");
  FitOptions fo;
  fo.grid = lambda_grid_from(fs_cfg.value("lambda_grid", json::object()));
  if (fs_cfg.contains("fixed_lambdas") && !fs_cfg.at("fixed_lambdas").is_null())
    fo.fixed_lambdas = fs_cfg.at("fixed_lambdas").get<std::vector<double>>();

  io::LoadedCohort lc = io::load_cohort(manifest, drop);
  const std::string out = resolve_out(o, c, "fit_out");
  const PenalizedFitResult f = fit(lc.cohort, spec, fo);

  json fj = io::to_json(f);
  fj["dropped_rows"] = lc.dropped_rows;
  fj["model"] = io::to_json(spec);
  io::write_json(join(out, "fit.json"), fj);

  {
    csv::Writer w(join(out, "vb.csv"));
    std::vector<double> row(static_cast<std::size_t>(f.Vb.cols()));
    for (Index r = 0; r < f.Vb.rows(); ++r) {
      for (Index k = 0; k < f.Vb.cols(); ++k) row[static_cast<std::size_t>(k)] = f.Vb(r, k);
      w.row(row);
    }
    w.close();
  }
  {
    csv::Writer w(join(out, "linear_terms.csv"));
    w.raw_line("term,estimate,se,z,p");
    for (const auto& t : f.terms) {
      if (t.type != TermType::linear) continue;
      const double est = f.coef[t.offset], se = std::sqrt(f.Vb(t.offset, t.offset));
      w.raw_line(t.label + "," + csv::format_double(est) + "," + csv::format_double(se) + "," +
                 csv::format_double(est / se) + "," + csv::format_double(two_sided_p(est / se)));
    }
    w.close();
  }
  for (const auto& t : f.terms) {
    if (t.type == TermType::linear) continue;
    const CoefficientCurve curve = curve_covariance(f, t.label);
    write_vector_csv(join(out, "curve_" + t.label + ".csv"), {"grid", "estimate", "se"},
                     {&curve.grid, &curve.estimate, &curve.se});
  }
  const BaselineHazard h = breslow_baseline(f, lc.cohort);
  {
    csv::Writer w(join(out, "baseline.csv"));
    w.header(std::vector<std::string>{"time", "increment", "cumulative"});
    for (std::size_t j = 0; j < h.event_times.size(); ++j)
      w.row(std::vector<double>{h.event_times[j], h.increments[j], h.cumulative[j]});
    w.close();
  }

  json resolved;
  resolved["data"] = {{"manifest", manifest}, {"drop_incomplete", drop}};
  resolved["model"] = io::to_json(spec);
  resolved["fit"] = {{"lambda_grid", to_json(fo.grid)}};
  if (fo.fixed_lambdas) resolved["fit"]["fixed_lambdas"] = *fo.fixed_lambdas;
  write_run_json(out, "fit", resolved, 0);
  for (const auto& w : f.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "fit: N=" << f.n << " events=" << f.events << " loglik=" << f.loglik << " edf=" << f.edf_total
            << " -> " << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------
std::string resolve_fit_dir(const Options& o, const Config& c, const json& section) {
  std::string dir = o.fit_dir;
  if (dir.empty() && section.contains("fit_dir")) dir = c.path(section.at("fit_dir").get<std::string>());
  require(!dir.empty(), errc::config, "need --fit <fit output directory>");
  dir = fs::absolute(dir).lexically_normal().string();
  io::require_file(join(dir, "fit.json"), "fit artifact");
  return dir;
}

int cmd_infer(const Options& o) {
  const Config c = load_config(o);
  const json s = c.section("inference");
  const std::string fit_dir = resolve_fit_dir(o, c, s);
  const PenalizedFitResult f = io::fit_from_json(io::read_json(join(fit_dir, "fit.json")));
  const double alpha = s.value("alpha", 0.05);
  const int B = s.value("B", 10000);
  const Index stride = s.value("stride", Index{1});
  require(stride >= 1, errc::config, "inference.stride must be >= 1");
  const std::uint64_t seed = resolve_seed(o, s, c);
  const unsigned threads = resolve_threads(o.threads);

  std::vector<std::string> terms;
  if (s.contains("terms")) {
    terms = s.at("terms").get<std::vector<std::string>>();
    for (const auto& t : terms) (void)f.term(t);  // UnknownTerm before any output
  } else {
    for (const auto& t : f.terms)
      if (t.type != TermType::linear) terms.push_back(t.label);
  }
  const std::string out = resolve_out(o, c, "infer_out");

  json summary;
  summary["alpha"] = alpha;
  summary["B"] = B;
  summary["seed"] = seed;
  summary["terms"] = json::array();
  for (const auto& label : terms) {
    const FittedTerm& t = f.term(label);
    require(t.type != TermType::linear, errc::unknown_term, "term '" + label + "' is linear and has no curve");
    std::vector<double> g;
    for (Index l = 0; l < t.grid.size(); l += stride) g.push_back(t.grid[l]);
    const VectorXd grid = Eigen::Map<const VectorXd>(g.data(), static_cast<Index>(g.size()));
    const CoefficientCurve curve = curve_covariance(f, label, grid);
    const CmaBand band = cma_band(curve, alpha, B, seed, threads);

    write_vector_csv(join(out, "band_" + label + ".csv"),
                     {"grid", "estimate", "se", "lo_pointwise", "hi_pointwise", "lo_cma", "hi_cma", "p_unadj", "p_cma"},
                     {&curve.grid, &curve.estimate, &curve.se, &band.lower_pointwise, &band.upper_pointwise,
                      &band.lower, &band.upper, &band.p_unadj, &band.p_cma});
    json bj = io::band_summary(label, band);
    bj["type"] = to_string(t.type);
    bj["grid_points"] = curve.size();
    bj["stride"] = stride;
    io::write_json(join(out, "band_" + label + ".json"), bj);
    summary["terms"].push_back(bj);

    const std::string xlabel = t.type == TermType::distributional ? "p" : (t.type == TermType::additive ? t.source : "s");
    svg::Plot p;
    p.title = label + ": estimate with pointwise and CMA " + csv::format_double(100 * (1 - alpha)) + "% bands";
    p.xlabel = xlabel;
    p.ylabel = "coefficient";
    const VectorXd zero = VectorXd::Zero(curve.size());
    p.series = {{"estimate", curve.grid, curve.estimate, "#000000", 2.0, ""},
                {"pointwise lower", curve.grid, band.lower_pointwise, "#555555", 1.2, ""},
                {"pointwise upper", curve.grid, band.upper_pointwise, "#555555", 1.2, ""},
                {"CMA lower", curve.grid, band.lower, "#aaaaaa", 1.2, ""},
                {"CMA upper", curve.grid, band.upper, "#aaaaaa", 1.2, ""},
                {"zero", curve.grid, zero, "#cc0000", 1.0, "4 3"}};
    svg::write(join(out, "band_" + label + ".svg"), p);

    svg::Plot pp;
    pp.title = label + ": pointwise unadjusted and CMA p-values";
    pp.xlabel = xlabel;
    pp.ylabel = "p-value";
    pp.log_y = true;
    const VectorXd alpha_line = VectorXd::Constant(curve.size(), alpha);
    pp.series = {{"unadjusted", curve.grid, band.p_unadj, "#000000", 1.8, ""},
                 {"CMA", curve.grid, band.p_cma, "#999999", 1.8, ""},
                 {"alpha", curve.grid, alpha_line, "#cc0000", 1.0, "4 3"}};
    svg::write(join(out, "pvalues_" + label + ".svg"), pp);
  }
  summary["linear"] = json::array();
  for (const auto& t : f.terms) {
    if (t.type != TermType::linear) continue;
    const double est = f.coef[t.offset], se = std::sqrt(f.Vb(t.offset, t.offset));
    summary["linear"].push_back({{"term", t.label}, {"estimate", est}, {"se", se}, {"hazard_ratio", std::exp(est)},
                                 {"p", two_sided_p(est / se)}});
  }
  io::write_json(join(out, "inference.json"), summary);

  json resolved;
  resolved["inference"] = {{"fit_dir", fit_dir}, {"alpha", alpha}, {"B", B}, {"stride", stride}, {"terms", terms},
                           {"seed", seed}};
  write_run_json(out, "infer", resolved, seed);
  std::cout << "infer: " << terms.size() << " terms -> " << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate / coverage
// ---------------------------------------------------------------------------
SyntheticTruthSettings synthetic_settings_from(const json& j) {
  SyntheticTruthSettings s;
  s.L = j.value("L", s.L);
  s.cyclic = j.value("cyclic", s.cyclic);
  s.beta = parse_beta_shape(j.value("beta", to_string(s.beta)));
  s.beta_scale = j.value("beta_scale", s.beta_scale);
  s.event_fraction = j.value("event_fraction", s.event_fraction);
  s.source_n = j.value("source_n", s.source_n);
  s.var_threshold = j.value("var_threshold", s.var_threshold);
  s.baseline_times = j.value("baseline_times", s.baseline_times);
  s.follow_up = j.value("follow_up", s.follow_up);
  s.censoring_pool_size = j.value("censoring_pool_size", s.censoring_pool_size);
  s.seed = j.value("seed", s.seed);
  return s;
}

json to_json(const SyntheticTruthSettings& s) {
  return {{"L", s.L},
          {"cyclic", s.cyclic},
          {"beta", to_string(s.beta)},
          {"beta_scale", s.beta_scale},
          {"event_fraction", s.event_fraction},
          {"source_n", s.source_n},
          {"var_threshold", s.var_threshold},
          {"baseline_times", s.baseline_times},
          {"follow_up", s.follow_up},
          {"censoring_pool_size", s.censoring_pool_size},
          {"seed", s.seed}};
}

// Either a fitted model (fit_dir + term, cohort from the fit's run.json or
// an explicit manifest) or the bundled synthetic generator.
GenerativeTruth resolve_truth(const Options& o, const Config& c, const json& section, json& resolved) {
  const json t = section.value("truth", json::object());
  const bool from_fit = !o.fit_dir.empty() || t.contains("fit_dir");
  if (from_fit) {
    std::string dir = o.fit_dir.empty() ? c.path(t.at("fit_dir").get<std::string>()) : o.fit_dir;
    dir = fs::absolute(dir).lexically_normal().string();
    io::require_file(join(dir, "fit.json"), "fit artifact");
    const PenalizedFitResult f = io::fit_from_json(io::read_json(join(dir, "fit.json")));
    std::string manifest;
    bool drop = false;
    if (t.contains("manifest")) {
      manifest = fs::absolute(c.path(t.at("manifest").get<std::string>())).lexically_normal().string();
    } else {
      const json run = io::read_json(join(dir, "run.json"));
      manifest = run.at("data").at("manifest").get<std::string>();
      drop = run.at("data").value("drop_incomplete", false);
    }
    std::string term = t.value("term", std::string());
    if (term.empty())
      for (const auto& ft : f.terms)
        if (ft.type == TermType::functional) {
          term = ft.label;
          break;
        }
    require(!term.empty(), errc::config, "fit has no functional term to simulate from");
    const double vt = t.value("var_threshold", 0.99);
    const io::LoadedCohort lc = io::load_cohort(manifest, drop);
    resolved = {{"fit_dir", dir}, {"manifest", manifest}, {"term", term}, {"var_threshold", vt}};
    return truth_from_fit(f, lc.cohort, term, vt);
  }
  const SyntheticTruthSettings s = synthetic_settings_from(t.value("synthetic", json::object()));
  resolved = {{"synthetic", to_json(s)}};
  return make_synthetic_truth(s);
}

json truth_json(const GenerativeTruth& t) {
  json j;
  j["description"] = t.description;
  j["grid"] = io::to_json(t.fpca.grid);
  j["beta_true"] = io::to_json(t.beta_true);
  j["fpca_components"] = t.fpca.components();
  j["fpca_eigenvalues"] = io::to_json(t.fpca.eigenvalues);
  j["source_event_fraction"] = t.source_event_fraction;
  j["baseline"] = io::to_json(t.baseline);
  j["warnings"] = t.fpca.warnings;
  return j;
}

int cmd_simulate(const Options& o) {
  const Config c = load_config(o);
  const json s = c.section("simulate");
  const std::uint64_t seed = resolve_seed(o, s, c);
  const Index N = s.value("N", Index{2000});
  require(N >= 2, errc::config, "simulate.N must be >= 2");
  const std::string label = s.value("label", std::string("X"));
  const bool backtransform = s.value("backtransform", false);
  json truth_resolved;
  const GenerativeTruth truth = resolve_truth(o, c, s, truth_resolved);
  const std::string out = resolve_out(o, c, "simulate_out");

  FunctionalDataset X = simulate_functional(truth.fpca, N, derive_seed(seed, 1), false, resolve_threads(o.threads));
  SurvivalSimConfig sc;
  sc.N = N;
  sc.beta_grid = truth.fpca.grid;
  sc.beta_true = truth.beta_true;
  sc.baseline = truth.baseline;
  sc.censoring_pool = truth.censoring_pool;
  sc.seed = derive_seed(seed, 2);
  SimulatedOutcomes so = simulate_survival(sc, X);
  if (backtransform)
    X = X.with_values(X.values().unaryExpr([](double x) { return std::max(std::expm1(x), 0.0); }));

  CohortDataset cohort;
  cohort.survival = so.survival;
  cohort.functional.push_back({label, std::move(X)});
  io::write_cohort(out, cohort);
  if (backtransform) {
    // the written curves are on the activity scale; ask fit to log them again
    json m = io::read_json(join(out, "cohort.json"));
    m["functional"][0]["log1p"] = true;
    io::write_json(join(out, "cohort.json"), m);
  }
  json tj = truth_json(truth);
  tj["simulated_event_fraction"] = so.event_fraction();
  io::write_json(join(out, "truth.json"), tj);

  json resolved;
  resolved["simulate"] = {{"N", N}, {"label", label}, {"backtransform", backtransform}, {"truth", truth_resolved},
                          {"seed", seed}};
  write_run_json(out, "simulate", resolved, seed);
  std::cout << "simulate: N=" << N << " events=" << so.survival.events() << " -> " << out << "\n";
  return kExitOk;
}

int cmd_coverage(const Options& o) {
  const Config c = load_config(o);
  const json s = c.section("coverage");
  const std::uint64_t seed = resolve_seed(o, s, c);
  std::vector<Index> sizes = s.contains("N") ? (s.at("N").is_array() ? s.at("N").get<std::vector<Index>>()
                                                                     : std::vector<Index>{s.at("N").get<Index>()})
                                             : std::vector<Index>{500, 2000, 4000};
  CoverageSettings cs;
  cs.n_reps = s.value("n_reps", 200);
  cs.fit_kind = io::spline_kind_from(s.value("basis", to_string(cs.fit_kind)));
  cs.K = s.value("K", cs.K);
  cs.penalty_order = s.value("penalty_order", cs.penalty_order);
  cs.grid = lambda_grid_from(s.value("lambda_grid", json::object()));
  cs.alpha = s.value("alpha", cs.alpha);
  cs.B = s.value("B", cs.B);
  cs.threads = resolve_threads(o.threads);
  json truth_resolved;
  const GenerativeTruth truth = resolve_truth(o, c, s, truth_resolved);
  const std::string out = resolve_out(o, c, "coverage_out");

  json report;
  report["truth"] = truth_json(truth);
  report["notes"] = {"MSE is the mean over replicates of (1/L) sum_l (beta_hat(s_l) - beta(s_l))^2",
                     "event fractions at desk scale are richer than the ~1% of the source study"};
  report["studies"] = json::array();
  csv::Writer summary(join(out, "summary.csv"));
  summary.raw_line("N,MSE,pointwise_coverage,cma_coverage");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    cs.N = sizes[k];
    cs.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(sizes[k]));
    const CoverageReport r = coverage_study(truth, cs);
    summary.raw_line(std::to_string(r.N) + "," + csv::format_double(r.mse) + "," +
                     csv::format_double(r.mean_pointwise_coverage) + "," + csv::format_double(r.cma_coverage));
    report["studies"].push_back(io::to_json(r));
    const std::string suffix = "_N" + std::to_string(r.N) + ".csv";
    write_vector_csv(join(out, "coverage_curve" + suffix), {"grid", "beta_true", "mean_estimate", "pointwise_coverage"},
                     {&r.grid, &r.beta_true, &r.mean_estimate, &r.pointwise_coverage_curve});
    csv::Writer ise(join(out, "ise" + suffix));
    ise.raw_line("replicate,ise,cma_covered,p_global,event_fraction");
    for (std::size_t i = 0; i < r.ise.size(); ++i) {
      auto cell = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string("NA"); };
      ise.raw_line(std::to_string(i + 1) + "," + cell(r.ise[i]) + "," + std::to_string(r.cma_covered[i]) + "," +
                   cell(r.p_global[i]) + "," + cell(r.event_fraction[i]));
    }
    ise.close();
    std::cout << "coverage N=" << r.N << ": MSE=" << r.mse << " pointwise=" << r.mean_pointwise_coverage
              << " CMA=" << r.cma_coverage << " failed=" << r.n_failed << "\n";
  }
  summary.close();
  io::write_json(join(out, "coverage_report.json"), report);

  json resolved;
  resolved["coverage"] = {{"N", sizes},
                          {"n_reps", cs.n_reps},
                          {"basis", to_string(cs.fit_kind)},
                          {"K", cs.K},
                          {"penalty_order", cs.penalty_order},
                          {"lambda_grid", to_json(cs.grid)},
                          {"alpha", cs.alpha},
                          {"B", cs.B},
                          {"truth", truth_resolved},
                          {"seed", seed}};
  write_run_json(out, "coverage", resolved, seed);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demo
// ---------------------------------------------------------------------------
int cmd_demo(const Options& o) {
  const Config c = load_config(o);
  const json s = c.section("demo");
  DemoSettings ds;
  ds.N = o.demo_n > 0 ? o.demo_n : s.value("N", ds.N);
  ds.seed = resolve_seed(o, s, c);
  if (!o.seed_given && !s.contains("seed") && !c.doc.contains("seed")) ds.seed = DemoSettings{}.seed;
  ds.event_fraction = s.value("event_fraction", ds.event_fraction);
  const std::string out = resolve_out(o, c, "demo_out");

  const DemoData d = make_demo_cohort(ds);
  io::write_cohort(out, d.cohort);
  write_1440_csv(join(out, "raw_days.csv"), FunctionalDataset::with_default_grid(d.raw_days, true));

  json cfg;
  cfg["data"] = {{"manifest", "cohort.json"}};
  cfg["model"] = io::to_json(d.spec);
  cfg["fit"] = {{"lambda_grid", to_json(LambdaGrid{})}};
  cfg["inference"] = {{"alpha", 0.05}, {"B", 10000}, {"seed", 1}, {"stride", 1}};
  cfg["ingest"] = {{"input", "raw_days.csv"}, {"days", ds.days}, {"log1p", true}, {"cyclic", true}};
  io::write_json(join(out, "config.json"), cfg);

  json resolved;
  resolved["demo"] = {{"N", ds.N}, {"days", ds.days}, {"event_fraction", ds.event_fraction}, {"seed", ds.seed}};
  write_run_json(out, "demo", resolved, ds.seed);
  std::cout << "demo: N=" << ds.N << " events=" << d.cohort.survival.events() << " -> " << out << "\n";
  return kExitOk;
}

int exit_code_for(const error& e) {
  switch (e.category()) {
    case error_category::validation: return kExitValidation;
    case error_category::numerical: return kExitNumerical;
    case error_category::io: return kExitIo;
  }
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"funcox: extended functional Cox models with CMA inference"};
  app.set_version_flag("--version", std::string(FUNCOX_VERSION));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool with_fit) {
    sub->add_option("--config", o.config, "JSON run configuration (a previous run.json also works)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "random seed (overrides the config)")->each([&](const std::string&) {
      o.seed_given = true;
    });
    sub->add_option("--threads", o.threads, "worker threads (default: FUNCOX_THREADS, then all cores)");
    if (with_fit) sub->add_option("--fit", o.fit_dir, "directory holding fit.json");
  };

  auto* ingest = app.add_subcommand("ingest", "load and clean a 1440-format CSV");
  common(ingest, false);
  ingest->add_option("--input", o.input, "1440-format CSV");
  ingest->add_flag("--cyclic", o.cyclic, "grid wraps around (daily cycle)");
  ingest->add_flag("--log1p", o.log1p, "apply log(1 + x)");
  ingest->add_option("--days", o.days, "rows per subject; >1 summarizes days into mean and sd curves");
  ingest->add_flag("--drop-incomplete", o.drop_incomplete, "drop rows with missing cells instead of failing");

  auto* fitc = app.add_subcommand("fit", "fit a penalized functional Cox model");
  common(fitc, false);
  fitc->add_flag("--drop-incomplete", o.drop_incomplete, "drop subjects with missing cells instead of failing");

  auto* infer = app.add_subcommand("infer", "pointwise and CMA bands and p-values for fitted curves");
  common(infer, true);

  auto* simulate = app.add_subcommand("simulate", "simulate a functional survival cohort");
  common(simulate, true);

  auto* coverage = app.add_subcommand("coverage", "coverage / MSE study over replicates");
  common(coverage, true);

  auto* demo = app.add_subcommand("demo", "write the synthetic demo fixture");
  common(demo, false);
  demo->add_option("--n", o.demo_n, "number of subjects");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*ingest) return cmd_ingest(o);
    if (*fitc) return cmd_fit(o);
    if (*infer) return cmd_infer(o);
    if (*simulate) return cmd_simulate(o);
    if (*coverage) return cmd_coverage(o);
    if (*demo) return cmd_demo(o);
  } catch (const error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const json::exception& e) {
    std::cerr << "error [Config]: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [IoFailure]: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitValidation;
}
