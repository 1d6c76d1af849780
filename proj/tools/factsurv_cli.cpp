// factsurv: survival-analysis toolkit for fact learning dynamics during
// LLM fine-tuning. Subcommands cover the whole pipeline: probing a base
// model for latent knowledge, extracting time-to-event records from epoch
// traces, Kaplan-Meier / log-rank / Cox analyses, accumulation velocity,
// synthetic data generation, and figure/table rendering.
//
// Exit codes: 0 success, 1 usage error, 2 data/convergence error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "factsurv/cox.hpp"
#include "factsurv/events.hpp"
#include "factsurv/io.hpp"
#include "factsurv/logrank.hpp"
#include "factsurv/probe.hpp"
#include "factsurv/report.hpp"
#include "factsurv/serialize.hpp"
#include "factsurv/simulate.hpp"
#include "factsurv/survival.hpp"
#include "factsurv/transform.hpp"
#include "factsurv/velocity.hpp"
#include "factsurv/version.hpp"

namespace fs = std::filesystem;
using factsurv::ojson;

namespace {

// ---------------------------------------------------------------------------
// infrastructure
// ---------------------------------------------------------------------------

struct Logger {
  bool json = false;

  void info(const std::string& stage, const std::string& message) const {
    if (json) {
      ojson j;
      j["level"] = "info";
      j["stage"] = stage;
      j["message"] = message;
      std::cerr << j.dump() << '\n';
    } else {
      std::cerr << "[factsurv] " << stage << ": " << message << '\n';
    }
  }
  void warn(const std::string& stage, const std::string& message) const {
    if (json) {
      ojson j;
      j["level"] = "warn";
      j["stage"] = stage;
      j["message"] = message;
      std::cerr << j.dump() << '\n';
    } else {
      std::cerr << "[factsurv] warning: " << stage << ": " << message << '\n';
    }
  }
};

// Exclusive ownership of an output directory for the life of the process.
class DirLock {
public:
  explicit DirLock(const fs::path& dir) {
    fs::create_directories(dir);
    lock_ = dir / ".factsurv.lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) {
      throw factsurv::Error("output directory '" + dir.string() +
                            "' is locked by another run (remove " + lock_.string() +
                            " if stale)");
    }
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

private:
  fs::path lock_;
};

// Temp file + rename so a crash never leaves a half-written artifact.
void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path.parent_path() / (".tmp." + path.filename().string());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw factsurv::Error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out.good()) throw factsurv::Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw factsurv::Error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw factsurv::ParseError("invalid JSON in '" + path.string() + "'");
  return j;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------
// dataset loading
// ---------------------------------------------------------------------------

int infer_max_epoch(const fs::path& traces_path) {
  std::ifstream in(traces_path);
  if (!in) throw factsurv::Error("cannot read '" + traces_path.string() + "'");
  int max_epoch = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("epoch") || !j["epoch"].is_number_integer()) continue;
    max_epoch = std::max(max_epoch, j["epoch"].get<int>());
  }
  if (max_epoch < 0) throw factsurv::ParseError("no trace rows in '" + traces_path.string() + "'");
  return max_epoch;
}

factsurv::Dataset load_dataset_dir(const fs::path& dir, int epochs) {
  fs::path terms_path = dir / "terms.jsonl";
  fs::path traces_path = dir / "traces.jsonl";
  fs::path cov_path = dir / "covariates.csv";
  if (!fs::exists(terms_path)) throw factsurv::Error("missing " + terms_path.string());
  if (!fs::exists(traces_path)) throw factsurv::Error("missing " + traces_path.string());

  factsurv::Dataset ds;
  ds.max_epoch = epochs >= 0 ? epochs : infer_max_epoch(traces_path);
  {
    std::ifstream in(terms_path);
    ds.terms = factsurv::parse_terms(in, factsurv::TermFormat::jsonl);
  }
  {
    std::ifstream in(traces_path);
    ds.traces = factsurv::parse_traces(in, ds.max_epoch);
  }
  if (fs::exists(cov_path)) {
    std::ifstream in(cov_path);
    ds.covariates = factsurv::parse_covariates(in);
  }
  ds.validate();
  return ds;
}

// Events for one kind: prefer an events.jsonl export, otherwise extract from
// the raw dataset in the same directory.
std::vector<factsurv::EventRecord> load_events(const fs::path& in_dir,
                                               const std::string& events_file,
                                               factsurv::EventKind kind,
                                               const std::vector<std::string>& strata,
                                               int epochs) {
  fs::path ev = events_file.empty() ? in_dir / "events.jsonl" : fs::path(events_file);
  if (fs::exists(ev)) {
    std::ifstream in(ev);
    auto all = factsurv::parse_events(in);
    std::vector<factsurv::EventRecord> out;
    for (auto& rec : all) {
      if (rec.kind == kind) out.push_back(std::move(rec));
    }
    return out;
  }
  factsurv::Dataset ds = load_dataset_dir(in_dir, epochs);
  return factsurv::build_cohort(ds, kind, strata);
}

std::vector<std::string> default_strata(const factsurv::Dataset& ds) {
  std::vector<std::string> keys = {"split"};
  if (ds.covariates_cover_all_terms()) {
    keys.push_back("latent");
    keys.push_back("dose_band");
  }
  return keys;
}

// ---------------------------------------------------------------------------
// analysis stages (shared between subcommands and `pipeline`)
// ---------------------------------------------------------------------------

struct AnalysisParams {
  double alpha = 0.05;
  double sigma = 1.0;
  double epsilon = 1e-3;
  double significance = 0.01;
  std::vector<std::string> strata;
  std::string covariates = "term_count,id_count,annotation_count,latent";
  std::string ties = "efron";
  std::string time_transform = "identity";
  int epochs = -1;
  std::uint64_t seed = 0;
};

factsurv::Ties ties_from_string(const std::string& s) {
  if (s == "efron") return factsurv::Ties::efron;
  if (s == "breslow") return factsurv::Ties::breslow;
  throw factsurv::ConfigError("unknown ties method '" + s + "'");
}

factsurv::TimeTransform transform_from_string(const std::string& s) {
  if (s == "identity") return factsurv::TimeTransform::identity;
  if (s == "rank") return factsurv::TimeTransform::rank;
  if (s == "km") return factsurv::TimeTransform::km;
  throw factsurv::ConfigError("unknown time transform '" + s + "'");
}

ojson km_result(const std::vector<factsurv::EventRecord>& cohort,
                const std::vector<std::string>& strata, double alpha,
                factsurv::EventKind kind) {
  if (cohort.empty()) throw factsurv::ValidationError("empty cohort");
  ojson out;
  out["kind"] = to_string(kind);
  out["alpha"] = alpha;
  out["strata"] = ojson::object();
  out["strata"]["all"] = factsurv::survival_curve_to_json(factsurv::km_fit(cohort, alpha));
  if (!strata.empty()) {
    for (const auto& [name, recs] : factsurv::group_by_strata(cohort, strata)) {
      out["strata"][name] = factsurv::survival_curve_to_json(factsurv::km_fit(recs, alpha));
    }
  }
  return out;
}

ojson logrank_result(const std::vector<factsurv::EventRecord>& cohort,
                     const std::vector<std::string>& strata, factsurv::EventKind kind) {
  if (strata.empty()) throw factsurv::ConfigError("logrank requires --strata");
  auto groups = factsurv::group_by_strata(cohort, strata);
  auto test = factsurv::logrank_test(groups);
  ojson out = factsurv::test_result_to_json(test);
  out["kind"] = to_string(kind);
  out["strata_keys"] = strata;
  return out;
}

ojson cox_result(const std::vector<factsurv::EventRecord>& cohort,
                 const std::vector<factsurv::CovariateVector>& raw_covariates,
                 const std::vector<factsurv::CovariateSpec>& specs, double alpha,
                 factsurv::Ties ties, factsurv::TimeTransform transform,
                 factsurv::EventKind kind, const Logger& log) {
  auto transformed = factsurv::transform_covariates(raw_covariates, specs);
  auto data = factsurv::build_design(cohort, transformed);
  if (data.n_events() < 1) throw factsurv::ValidationError("no events in cohort");
  factsurv::CoxOptions options;
  options.ties = ties;
  options.alpha = alpha;
  auto fit = factsurv::cox_fit(data, options);
  if (fit.dropped_missing_covariates > 0) {
    log.warn("cox", std::to_string(fit.dropped_missing_covariates) +
                        " subjects dropped for missing covariates");
  }
  std::optional<factsurv::PHDiagnostics> diag;
  if (data.n_events() >= 2) {
    diag = factsurv::schoenfeld_test(data, fit, transform);
  }
  ojson out = factsurv::cox_to_json(fit, diag ? &*diag : nullptr, transformed.params);
  out["kind"] = to_string(kind);
  return out;
}

ojson velocity_result(const ojson& km_json, double sigma, double epsilon, int epochs) {
  ojson out;
  out["kind"] = km_json.at("kind");
  out["sigma"] = sigma;
  out["epsilon"] = epsilon;
  int grid_max = epochs;
  std::map<std::string, factsurv::SurvivalCurve> curves;
  for (const auto& [name, cj] : km_json.at("strata").items()) {
    curves[name] = factsurv::survival_curve_from_json(cj);
    if (epochs < 0) grid_max = std::max(grid_max, curves[name].max_time());
  }
  if (grid_max < 2) throw factsurv::ValidationError("velocity: epoch grid too short");
  out["strata"] = ojson::object();
  for (const auto& [name, curve] : curves) {
    out["strata"][name] =
        factsurv::velocity_curve_to_json(factsurv::velocity_curve(curve, grid_max, sigma, epsilon));
  }
  return out;
}

// Covariate specs for a kind; degradation models add the seen-during-training
// flag when the data carries it.
std::vector<factsurv::CovariateSpec> covariate_specs_for(const std::string& covariates,
                                                         factsurv::EventKind kind,
                                                         const std::vector<factsurv::CovariateVector>& raw) {
  std::vector<factsurv::CovariateSpec> specs;
  for (const auto& item : split_list(covariates)) {
    specs.push_back(factsurv::covariate_spec_from_string(item));
  }
  if (kind == factsurv::EventKind::degradation) {
    bool has_flag = !raw.empty();
    for (const auto& cv : raw) has_flag = has_flag && cv.seen_flag.has_value();
    bool already = false;
    for (const auto& s : specs) already = already || s.field == "seen_flag";
    if (has_flag && !already) {
      specs.push_back({"seen_flag", factsurv::CovariateKind::binary});
    }
  }
  return specs;
}

// ---------------------------------------------------------------------------
// report stage
// ---------------------------------------------------------------------------

struct ResultSet {
  std::string kind;
  fs::path dir;
};

std::vector<ResultSet> find_result_sets(const fs::path& in_dir) {
  auto has_results = [](const fs::path& d) {
    return fs::exists(d / "km.json") || fs::exists(d / "cox.json") ||
           fs::exists(d / "velocity.json") || fs::exists(d / "logrank.json");
  };
  std::vector<ResultSet> out;
  if (has_results(in_dir)) {
    std::string kind = "analysis";
    if (fs::exists(in_dir / "km.json")) {
      kind = read_json(in_dir / "km.json").value("kind", kind);
    }
    out.push_back({kind, in_dir});
  }
  std::vector<fs::path> subdirs;
  if (fs::exists(in_dir)) {
    for (const auto& entry : fs::directory_iterator(in_dir)) {
      if (entry.is_directory() && has_results(entry.path())) subdirs.push_back(entry.path());
    }
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs) {
    std::string kind = d.filename().string();
    if (fs::exists(d / "km.json")) kind = read_json(d / "km.json").value("kind", kind);
    out.push_back({kind, d});
  }
  return out;
}

std::vector<factsurv::ForestRow> forest_rows_from_json(const nlohmann::json& cox_json) {
  std::vector<factsurv::ForestRow> rows;
  for (const auto& cj : cox_json.at("covariates")) {
    rows.push_back({cj.at("name").get<std::string>(), cj.at("hr").get<double>(),
                    cj.at("ci_low").get<double>(), cj.at("ci_high").get<double>(),
                    cj.at("p").get<double>()});
  }
  return rows;
}

void run_report(const fs::path& in_dir, const fs::path& out_dir, double significance,
                std::uint64_t seed, const Logger& log) {
  auto sets = find_result_sets(in_dir);
  if (sets.empty()) {
    throw factsurv::Error("no result files (km.json/cox.json/velocity.json/logrank.json) under '" +
                          in_dir.string() + "'");
  }

  ojson meta;
  meta["version"] = factsurv::kVersion;
  meta["significance"] = significance;
  meta["seed"] = seed;
  meta["kinds"] = ojson::array();
  meta["inputs"] = ojson::object();
  meta["parameters"] = ojson::object();

  for (const auto& set : sets) {
    meta["kinds"].push_back(set.kind);
    ojson params;

    fs::path km_path = set.dir / "km.json";
    if (fs::exists(km_path)) {
      std::string raw = read_file(km_path);
      std::string hash = factsurv::svg::fnv1a_hex(raw);
      meta["inputs"][km_path.lexically_relative(in_dir).string()] = hash;
      auto km_json = nlohmann::json::parse(raw);
      params["alpha"] = km_json.value("alpha", 0.05);
      std::map<std::string, factsurv::SurvivalCurve> curves;
      int max_epoch = 0;
      for (const auto& [name, cj] : km_json.at("strata").items()) {
        curves[name] = factsurv::survival_curve_from_json(cj);
        max_epoch = std::max(max_epoch, curves[name].max_time());
      }
      factsurv::CurveStyle style;
      style.title = "Fact accumulation (" + set.kind + ")";
      style.max_epoch = std::max(1, max_epoch);
      atomic_write(out_dir / "report" / "figures" / ("accumulation_" + set.kind + ".svg"),
                   factsurv::render_accumulation(curves, style, hash));
    }

    fs::path vel_path = set.dir / "velocity.json";
    if (fs::exists(vel_path)) {
      std::string raw = read_file(vel_path);
      std::string hash = factsurv::svg::fnv1a_hex(raw);
      meta["inputs"][vel_path.lexically_relative(in_dir).string()] = hash;
      auto vel_json = nlohmann::json::parse(raw);
      params["sigma"] = vel_json.value("sigma", 1.0);
      params["epsilon"] = vel_json.value("epsilon", 1e-3);
      std::map<std::string, factsurv::VelocityCurve> curves;
      int max_epoch = 1;
      for (const auto& [name, vj] : vel_json.at("strata").items()) {
        curves[name] = factsurv::velocity_curve_from_json(vj);
        if (!curves[name].epochs.empty()) {
          max_epoch = std::max(max_epoch, curves[name].epochs.back());
        }
      }
      factsurv::CurveStyle style;
      style.title = "Accumulation velocity (" + set.kind + ")";
      style.max_epoch = max_epoch;
      atomic_write(out_dir / "report" / "figures" / ("velocity_" + set.kind + ".svg"),
                   factsurv::render_velocity(curves, style, hash));
    }

    fs::path cox_path = set.dir / "cox.json";
    if (fs::exists(cox_path)) {
      std::string raw = read_file(cox_path);
      std::string hash = factsurv::svg::fnv1a_hex(raw);
      meta["inputs"][cox_path.lexically_relative(in_dir).string()] = hash;
      auto cox_json = nlohmann::json::parse(raw);
      if (cox_json.contains("transforms")) params["transforms"] = cox_json["transforms"];
      auto rows = forest_rows_from_json(cox_json);
      atomic_write(out_dir / "report" / "figures" / ("forest_" + set.kind + ".svg"),
                   factsurv::render_forest(rows, "Hazard ratios (" + set.kind + ")", hash));
      atomic_write(out_dir / "report" / "tables" / ("cox_" + set.kind + ".csv"),
                   factsurv::render_table_csv(rows, significance));
      atomic_write(out_dir / "report" / "tables" / ("cox_" + set.kind + ".json"),
                   factsurv::render_table_json(rows, significance).dump(2) + "\n");
    }

    fs::path lr_path = set.dir / "logrank.json";
    if (fs::exists(lr_path)) {
      std::string raw = read_file(lr_path);
      meta["inputs"][lr_path.lexically_relative(in_dir).string()] = factsurv::svg::fnv1a_hex(raw);
      auto lr_json = nlohmann::json::parse(raw);
      std::string csv = "group,observed,expected,n\n";
      for (const auto& g : lr_json.at("groups")) {
        csv += g.at("name").get<std::string>() + "," +
               factsurv::number_text(g.at("observed").get<double>()) + "," +
               factsurv::number_text(g.at("expected").get<double>()) + "," +
               std::to_string(g.at("n").get<int>()) + "\n";
      }
      csv += "# chi2=" + factsurv::number_text(lr_json.at("chi2").get<double>()) +
             " df=" + std::to_string(lr_json.at("df").get<int>()) +
             " p=" + factsurv::number_text(lr_json.at("p").get<double>()) + "\n";
      atomic_write(out_dir / "report" / "tables" / ("logrank_" + set.kind + ".csv"), csv);
    }

    meta["parameters"][set.kind] = params;
  }

  atomic_write(out_dir / "report" / "meta.json", meta.dump(2) + "\n");
  log.info("report", "wrote report for " + std::to_string(sets.size()) + " result set(s)");
}

// ---------------------------------------------------------------------------
// subcommand runners
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  int n = 800;
  int epochs = 20;
  std::uint64_t seed = 0;
  double baseline_p = 0.08;
  std::string baseline_hazard; // comma list, overrides baseline_p
  std::string beta;            // name=value,...
  std::string covariates = "term_count,id_count,annotation_count,latent";
  double p_latent = 0.3;
  double count_log_mean = 3.0;
  double count_log_sd = 1.5;
  double baseline_correct_frac = 0.0;
  double unseen_frac = 0.0;
  bool degrade_mode = false;
  int flip_epoch = -1;
};

void run_simulate(const SimulateArgs& args, const Logger& log) {
  factsurv::SimConfig config;
  config.n_terms = args.n;
  config.max_epoch = args.epochs;
  config.seed = args.seed;
  config.covariate_model.p_latent = args.p_latent;
  config.covariate_model.count_log_mean = args.count_log_mean;
  config.covariate_model.count_log_sd = args.count_log_sd;
  config.baseline_correct_fraction = args.baseline_correct_frac;
  config.unseen_fraction = args.unseen_frac;
  config.degrade_mode = args.degrade_mode;
  if (args.flip_epoch >= 0) config.flip_epoch = args.flip_epoch;

  if (!args.baseline_hazard.empty()) {
    for (const auto& item : split_list(args.baseline_hazard)) {
      config.baseline_hazard.push_back(std::stod(item));
    }
  } else {
    if (!(args.baseline_p >= 0.0 && args.baseline_p < 1.0)) {
      throw factsurv::ConfigError("--baseline-p must be in [0,1)");
    }
    config.baseline_hazard = {-std::log1p(-args.baseline_p)};
  }

  for (const auto& item : split_list(args.covariates)) {
    config.covariates.push_back(factsurv::covariate_spec_from_string(item));
  }
  config.beta_true.assign(config.covariates.size(), 0.0);
  for (const auto& item : split_list(args.beta)) {
    auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw factsurv::ConfigError("--beta entries must look like name=value");
    }
    std::string name = item.substr(0, eq);
    double value = std::stod(item.substr(eq + 1));
    bool found = false;
    for (std::size_t j = 0; j < config.covariates.size(); ++j) {
      if (config.covariates[j].field == name) {
        config.beta_true[j] = value;
        found = true;
      }
    }
    if (!found) throw factsurv::ConfigError("--beta names unknown covariate '" + name + "'");
  }

  fs::path out_dir(args.out);
  DirLock lock(out_dir);
  auto sim = factsurv::run_simulation(config);

  {
    std::ostringstream ss;
    factsurv::serialize_terms(sim.terms, ss);
    atomic_write(out_dir / "terms.jsonl", ss.str());
  }
  {
    std::ostringstream ss;
    factsurv::serialize_traces(sim.traces, ss);
    atomic_write(out_dir / "traces.jsonl", ss.str());
  }
  {
    std::ostringstream ss;
    factsurv::serialize_covariates(sim.covariates, ss);
    atomic_write(out_dir / "covariates.csv", ss.str());
  }
  ojson truth;
  truth["seed"] = config.seed;
  truth["n_terms"] = config.n_terms;
  truth["max_epoch"] = config.max_epoch;
  truth["baseline_hazard"] = config.baseline_hazard;
  truth["degrade_mode"] = config.degrade_mode;
  truth["baseline_correct_fraction"] = config.baseline_correct_fraction;
  truth["unseen_fraction"] = config.unseen_fraction;
  if (config.flip_epoch) truth["flip_epoch"] = *config.flip_epoch;
  truth["beta_true"] = ojson::object();
  for (std::size_t j = 0; j < config.covariates.size(); ++j) {
    truth["beta_true"][config.covariates[j].field] = config.beta_true[j];
  }
  truth["covariate_model"] = {{"p_latent", config.covariate_model.p_latent},
                              {"count_log_mean", config.covariate_model.count_log_mean},
                              {"count_log_sd", config.covariate_model.count_log_sd},
                              {"latent_n", config.covariate_model.latent_n}};
  atomic_write(out_dir / "truth.json", truth.dump(2) + "\n");
  log.info("simulate", "wrote " + std::to_string(sim.terms.size()) + " terms to " + args.out);
}

struct IoArgs {
  std::string in;
  std::string out;
  std::string events_file;
  std::string covariates_file;
  std::string kind = "acquisition";
  AnalysisParams params;
};

void run_extract_events(const IoArgs& args, const Logger& log) {
  factsurv::Dataset ds = load_dataset_dir(args.in, args.params.epochs);
  std::vector<std::string> strata =
      args.params.strata.empty() ? default_strata(ds) : args.params.strata;
  std::vector<factsurv::EventRecord> all;
  for (auto kind : {factsurv::EventKind::acquisition, factsurv::EventKind::generalization,
                    factsurv::EventKind::degradation}) {
    auto cohort = factsurv::build_cohort(ds, kind, strata);
    all.insert(all.end(), cohort.begin(), cohort.end());
  }
  fs::path out_dir(args.out);
  DirLock lock(out_dir);
  std::ostringstream ss;
  factsurv::serialize_events(all, ss);
  atomic_write(out_dir / "events.jsonl", ss.str());
  log.info("extract-events", "wrote " + std::to_string(all.size()) + " event records");
}

void run_km(const IoArgs& args, const Logger& log) {
  auto kind = factsurv::event_kind_from_string(args.kind);
  auto cohort = load_events(args.in, args.events_file, kind, args.params.strata,
                            args.params.epochs);
  auto result = km_result(cohort, args.params.strata, args.params.alpha, kind);
  fs::path out_dir(args.out);
  DirLock lock(out_dir);
  atomic_write(out_dir / "km.json", result.dump(2) + "\n");
  log.info("km", to_string(kind) + std::string(": ") + std::to_string(cohort.size()) +
                     " subjects");
}

void run_logrank(const IoArgs& args, const Logger& log) {
  auto kind = factsurv::event_kind_from_string(args.kind);
  std::vector<std::string> strata =
      args.params.strata.empty() ? std::vector<std::string>{"latent"} : args.params.strata;
  auto cohort = load_events(args.in, args.events_file, kind, strata, args.params.epochs);
  auto result = logrank_result(cohort, strata, kind);
  fs::path out_dir(args.out);
  DirLock lock(out_dir);
  atomic_write(out_dir / "logrank.json", result.dump(2) + "\n");
  log.info("logrank", "chi2 = " + factsurv::number_text(result["chi2"].get<double>()));
}

void run_cox(const IoArgs& args, const Logger& log) {
  auto kind = factsurv::event_kind_from_string(args.kind);
  auto cohort = load_events(args.in, args.events_file, kind, {}, args.params.epochs);

  fs::path cov_path = args.covariates_file.empty() ? fs::path(args.in) / "covariates.csv"
                                                   : fs::path(args.covariates_file);
  if (!fs::exists(cov_path)) {
    throw factsurv::Error("cox requires covariates (looked for '" + cov_path.string() + "')");
  }
  std::ifstream in(cov_path);
  auto raw = factsurv::parse_covariates(in);
  auto specs = covariate_specs_for(args.params.covariates, kind, raw);
  auto result = cox_result(cohort, raw, specs, args.params.alpha,
                           ties_from_string(args.params.ties),
                           transform_from_string(args.params.time_transform), kind, log);
  fs::path out_dir(args.out);
  DirLock lock(out_dir);
  atomic_write(out_dir / "cox.json", result.dump(2) + "\n");
  log.info("cox", to_string(kind) + std::string(": fit over ") +
                      std::to_string(result["n"].get<int>()) + " subjects");
}

void run_velocity(const IoArgs& args, const Logger& log) {
  fs::path km_path = fs::path(args.in) / "km.json";
  ojson km_json;
  if (fs::exists(km_path)) {
    km_json = ojson::parse(read_file(km_path));
  } else {
    auto kind = factsurv::event_kind_from_string(args.kind);
    auto cohort = load_events(args.in, args.events_file, kind, args.params.strata,
                              args.params.epochs);
    km_json = km_result(cohort, args.params.strata, args.params.alpha, kind);
  }
  auto result = velocity_result(km_json, args.params.sigma, args.params.epsilon,
                                args.params.epochs);
  fs::path out_dir(args.out);
  DirLock lock(out_dir);
  atomic_write(out_dir / "velocity.json", result.dump(2) + "\n");
  log.info("velocity", "sigma = " + factsurv::number_text(args.params.sigma));
}

void run_pipeline(const IoArgs& args, const Logger& log) {
  fs::path in_dir(args.in);
  fs::path out_dir(args.out);
  DirLock lock(out_dir);

  factsurv::Dataset ds = load_dataset_dir(in_dir, args.params.epochs);
  std::vector<std::string> label_keys = default_strata(ds);
  std::vector<std::string> strata = args.params.strata;
  if (strata.empty() && ds.covariates_cover_all_terms()) strata = {"latent"};

  // stage 1: event extraction (all kinds, all available labels)
  std::vector<factsurv::EventRecord> all_events;
  std::map<factsurv::EventKind, std::vector<factsurv::EventRecord>> cohorts;
  for (auto kind : {factsurv::EventKind::acquisition, factsurv::EventKind::generalization,
                    factsurv::EventKind::degradation}) {
    cohorts[kind] = factsurv::build_cohort(ds, kind, label_keys);
    all_events.insert(all_events.end(), cohorts[kind].begin(), cohorts[kind].end());
  }
  {
    std::ostringstream ss;
    factsurv::serialize_events(all_events, ss);
    atomic_write(out_dir / "events.jsonl", ss.str());
  }
  log.info("extract-events", std::to_string(all_events.size()) + " event records");

  // stage 2: per-kind analyses
  for (auto kind : {factsurv::EventKind::acquisition, factsurv::EventKind::generalization,
                    factsurv::EventKind::degradation}) {
    const auto& cohort = cohorts[kind];
    std::string kind_name = to_string(kind);
    if (cohort.empty()) {
      log.info("pipeline", "skipping " + kind_name + " (empty cohort)");
      continue;
    }
    fs::path kind_dir = out_dir / kind_name;

    auto km_json = km_result(cohort, strata, args.params.alpha, kind);
    atomic_write(kind_dir / "km.json", km_json.dump(2) + "\n");

    if (!strata.empty()) {
      try {
        auto lr_json = logrank_result(cohort, strata, kind);
        atomic_write(kind_dir / "logrank.json", lr_json.dump(2) + "\n");
      } catch (const factsurv::ValidationError& e) {
        log.warn("logrank", kind_name + ": skipped (" + e.what() + ")");
      }
    }

    if (!ds.covariates.empty()) {
      try {
        auto specs = covariate_specs_for(args.params.covariates, kind, ds.covariates);
        auto cox_json = cox_result(cohort, ds.covariates, specs, args.params.alpha,
                                   ties_from_string(args.params.ties),
                                   transform_from_string(args.params.time_transform), kind, log);
        atomic_write(kind_dir / "cox.json", cox_json.dump(2) + "\n");
      } catch (const factsurv::ValidationError& e) {
        log.warn("cox", kind_name + ": skipped (" + e.what() + ")");
      }
    }

    try {
      auto vel_json = velocity_result(km_json, args.params.sigma, args.params.epsilon,
                                      args.params.epochs);
      atomic_write(kind_dir / "velocity.json", vel_json.dump(2) + "\n");
    } catch (const factsurv::ValidationError& e) {
      log.warn("velocity", kind_name + ": skipped (" + e.what() + ")");
    }
    log.info("pipeline", kind_name + " analyses complete");
  }

  // stage 3: report over everything written above
  run_report(out_dir, out_dir, args.params.significance, args.params.seed, log);
}

struct ProbeArgs {
  std::string in;
  std::string terms_file;
  std::string out;
  factsurv::ProbeConfig config;
  long timeout_ms = 30000;
  bool audit = false;
};

void run_probe(const ProbeArgs& args, const Logger& log) {
  fs::path terms_path = args.terms_file.empty() ? fs::path(args.in) / "terms.jsonl"
                                                : fs::path(args.terms_file);
  if (!fs::exists(terms_path)) throw factsurv::Error("missing " + terms_path.string());
  std::ifstream in(terms_path);
  auto terms = factsurv::parse_terms(in, factsurv::TermFormat::jsonl);

  factsurv::ProbeConfig config = args.config;
  config.timeout = std::chrono::milliseconds(args.timeout_ms);
  config.validate();

  fs::path out_dir(args.out);
  DirLock lock(out_dir);

  ojson meta;
  meta["version"] = factsurv::kVersion;
  meta["endpoint_url"] = config.endpoint_url;
  meta["model_name"] = config.model_name;
  meta["n_stochastic"] = config.n_stochastic;
  meta["temperature_stochastic"] = config.temperature_stochastic;
  meta["prompt_template"] = config.prompt_template;
  meta["max_tokens"] = config.max_tokens;
  meta["api_style"] = config.api_style;
  meta["audit"] = args.audit;
  atomic_write(out_dir / "probe_meta.json", meta.dump(2) + "\n");

  factsurv::HttpCompletionClient client(config);
  auto report = factsurv::run_campaign(terms, config, client,
                                       out_dir / "probe_results.jsonl", args.audit);
  log.info("probe", "probed " + std::to_string(report.probed) + " terms, skipped " +
                        std::to_string(report.skipped) + " already complete");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"survival analysis of fact learning during model fine-tuning"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; command-line flags win");

  Logger log;
  app.add_flag("--json-logs", log.json, "emit structured progress lines on stderr");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "generate synthetic terms/traces/covariates");
  sim->add_option("--out", sim_args.out, "output directory")->required();
  sim->add_option("--n", sim_args.n, "number of terms");
  sim->add_option("--epochs", sim_args.epochs, "max epoch E");
  sim->add_option("--seed", sim_args.seed, "root seed");
  sim->add_option("--baseline-p", sim_args.baseline_p,
                  "per-epoch baseline event probability (x = 0)");
  sim->add_option("--baseline-hazard", sim_args.baseline_hazard,
                  "comma list of h0(t), 1 or E entries (overrides --baseline-p)");
  sim->add_option("--beta", sim_args.beta, "true effects, name=value[,name=value...]");
  sim->add_option("--covariates", sim_args.covariates, "covariate specs (field[:kind],...)");
  sim->add_option("--p-latent", sim_args.p_latent, "latent-knowledge prevalence");
  sim->add_option("--count-log-mean", sim_args.count_log_mean, "log-normal mean for counts");
  sim->add_option("--count-log-sd", sim_args.count_log_sd, "log-normal sd for counts");
  sim->add_option("--baseline-correct-frac", sim_args.baseline_correct_frac,
                  "fraction correct at epoch 0");
  sim->add_option("--unseen-frac", sim_args.unseen_frac, "fraction of terms held out");
  sim->add_flag("--degrade-mode", sim_args.degrade_mode,
                "simulate degradation of baseline-correct terms");
  sim->add_option("--flip-epoch", sim_args.flip_epoch,
                  "negate covariate effects after this epoch (non-PH scenario)");
  sim->callback([&]() { run_simulate(sim_args, log); });

  IoArgs io_args;
  auto add_io = [&](CLI::App* cmd, bool with_kind) {
    cmd->add_option("--in", io_args.in, "input directory")->required();
    cmd->add_option("--out", io_args.out, "output directory")->required();
    cmd->add_option("--events", io_args.events_file, "events.jsonl path override");
    cmd->add_option("--epochs", io_args.params.epochs, "max epoch (default: infer)");
    cmd->add_option("--strata", io_args.params.strata,
                    "stratum keys among split,latent,dose_band")
        ->delimiter(',');
    if (with_kind) {
      cmd->add_option("--kind", io_args.kind, "acquisition|generalization|degradation");
    }
  };

  auto* extract = app.add_subcommand("extract-events", "trace -> event records (all kinds)");
  add_io(extract, false);

  auto* km = app.add_subcommand("km", "Kaplan-Meier accumulation curves");
  add_io(km, true);
  km->add_option("--alpha", io_args.params.alpha, "CI level (default 0.05)");

  auto* logrank = app.add_subcommand("logrank", "Mantel-Cox test across strata");
  add_io(logrank, true);

  auto* cox = app.add_subcommand("cox", "Cox proportional-hazards regression");
  add_io(cox, true);
  cox->add_option("--alpha", io_args.params.alpha, "CI level");
  cox->add_option("--covariates", io_args.params.covariates, "covariate specs");
  cox->add_option("--covariates-file", io_args.covariates_file, "covariates.csv override");
  cox->add_option("--ties", io_args.params.ties, "efron|breslow");
  cox->add_option("--time-transform", io_args.params.time_transform,
                  "identity|rank|km (Schoenfeld test)");

  auto* velocity = app.add_subcommand("velocity", "dF/dt from Gaussian-smoothed F");
  add_io(velocity, true);
  velocity->add_option("--alpha", io_args.params.alpha, "CI level when computing km");
  velocity->add_option("--sigma", io_args.params.sigma, "Gaussian width in epochs");
  velocity->add_option("--epsilon", io_args.params.epsilon, "convergence threshold");

  auto* report = app.add_subcommand("report", "figures and tables from result files");
  report->add_option("--in", io_args.in, "directory of result files")->required();
  report->add_option("--out", io_args.out, "output directory")->required();
  report->add_option("--significance", io_args.params.significance, "bold threshold");
  report->add_option("--seed", io_args.params.seed, "seed echoed into meta.json");

  auto* pipeline = app.add_subcommand("pipeline",
                                      "extract-events -> km -> logrank -> cox -> velocity -> report");
  add_io(pipeline, false);
  pipeline->add_option("--alpha", io_args.params.alpha, "CI level");
  pipeline->add_option("--sigma", io_args.params.sigma, "velocity smoothing width");
  pipeline->add_option("--epsilon", io_args.params.epsilon, "velocity convergence threshold");
  pipeline->add_option("--covariates", io_args.params.covariates, "covariate specs");
  pipeline->add_option("--ties", io_args.params.ties, "efron|breslow");
  pipeline->add_option("--time-transform", io_args.params.time_transform, "identity|rank|km");
  pipeline->add_option("--significance", io_args.params.significance, "bold threshold");
  pipeline->add_option("--seed", io_args.params.seed, "seed echoed into meta.json");

  extract->callback([&]() { run_extract_events(io_args, log); });
  km->callback([&]() { run_km(io_args, log); });
  logrank->callback([&]() { run_logrank(io_args, log); });
  cox->callback([&]() { run_cox(io_args, log); });
  velocity->callback([&]() { run_velocity(io_args, log); });
  report->callback([&]() {
    DirLock lock{fs::path(io_args.out)};
    run_report(io_args.in, io_args.out, io_args.params.significance, io_args.params.seed, log);
  });
  pipeline->callback([&]() { run_pipeline(io_args, log); });

  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "latent-knowledge probe against an endpoint");
  probe->add_option("--in", probe_args.in, "directory holding terms.jsonl");
  probe->add_option("--terms", probe_args.terms_file, "terms.jsonl path override");
  probe->add_option("--out", probe_args.out, "output directory")->required();
  probe->add_option("--endpoint", probe_args.config.endpoint_url, "completions URL")->required();
  probe->add_option("--model", probe_args.config.model_name, "model name")->required();
  probe->add_option("--n-stochastic", probe_args.config.n_stochastic, "stochastic samples");
  probe->add_option("--temperature", probe_args.config.temperature_stochastic,
                    "stochastic temperature");
  probe->add_option("--template", probe_args.config.prompt_template,
                    "prompt template with {label}");
  probe->add_option("--max-parallel", probe_args.config.max_parallel, "in-flight requests");
  probe->add_option("--retry-limit", probe_args.config.retry_limit, "retries per request");
  probe->add_option("--timeout-ms", probe_args.timeout_ms, "per-request timeout");
  probe->add_option("--max-tokens", probe_args.config.max_tokens, "completion budget");
  probe->add_option("--api-style", probe_args.config.api_style, "chat|completions");
  probe->add_option("--token-env", probe_args.config.token_env,
                    "env var holding the bearer token");
  probe->add_flag("--audit", probe_args.audit, "store raw outputs in results");
  probe->callback([&]() { run_probe(probe_args, log); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const factsurv::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
