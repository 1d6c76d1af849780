#pragma once

// JSON wire formats for the analysis artifacts:
//   events.jsonl  one EventRecord per line
//   km.json       per-stratum arrays times,n,d,c,S,var,ci_lower,ci_upper,H,h,F
//   logrank.json  {chi2, df, p, groups:[...]}
//   cox.json      {covariates:[...], lr:{...}, concordance, n, n_events,
//                  ph_test:{per_covariate, global}, transforms:{...}}
//   velocity.json per-stratum grid, F_raw, F_smooth, V plus summaries
// Keys are emitted in a fixed order so identical inputs serialize to
// identical bytes.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factsurv/cox.hpp"
#include "factsurv/error.hpp"
#include "factsurv/events.hpp"
#include "factsurv/logrank.hpp"
#include "factsurv/survival.hpp"
#include "factsurv/transform.hpp"
#include "factsurv/velocity.hpp"

namespace factsurv {

using ojson = nlohmann::ordered_json;

// --- events.jsonl -----------------------------------------------------------

inline ojson event_to_json(const EventRecord& rec) {
  ojson j;
  j["term_id"] = rec.term_id;
  j["kind"] = to_string(rec.kind);
  j["time"] = rec.time;
  j["observed"] = rec.observed;
  j["labels"] = ojson::object();
  for (const auto& [k, v] : rec.labels) j["labels"][k] = v;
  return j;
}

inline void serialize_events(const std::vector<EventRecord>& records, std::ostream& out) {
  for (const auto& rec : records) out << event_to_json(rec).dump() << '\n';
}

inline std::vector<EventRecord> parse_events(std::istream& in) {
  std::vector<EventRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ParseError("invalid JSON at line " + std::to_string(lineno));
    }
    EventRecord rec;
    try {
      rec.term_id = j.at("term_id").get<std::string>();
      rec.kind = event_kind_from_string(j.at("kind").get<std::string>());
      rec.time = j.at("time").get<int>();
      rec.observed = j.at("observed").get<bool>();
      if (j.contains("labels")) {
        for (const auto& [k, v] : j["labels"].items()) rec.labels[k] = v.get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad event record at line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// --- km.json -----------------------------------------------------------------

inline ojson survival_curve_to_json(const SurvivalCurve& c) {
  ojson j;
  j["times"] = c.times;
  j["n"] = c.at_risk;
  j["d"] = c.events;
  j["c"] = c.censored;
  j["S"] = c.survival;
  j["var"] = c.variance;
  j["ci_lower"] = c.ci_lower;
  j["ci_upper"] = c.ci_upper;
  j["ci_degenerate"] = std::vector<int>(c.ci_degenerate.begin(), c.ci_degenerate.end());
  j["H"] = c.cum_hazard;
  j["h"] = c.hazard;
  j["F"] = c.accumulation;
  j["alpha"] = c.alpha;
  j["n_subjects"] = c.n_subjects;
  return j;
}

inline SurvivalCurve survival_curve_from_json(const nlohmann::json& j) {
  SurvivalCurve c;
  c.times = j.at("times").get<std::vector<int>>();
  c.at_risk = j.at("n").get<std::vector<int>>();
  c.events = j.at("d").get<std::vector<int>>();
  c.censored = j.at("c").get<std::vector<int>>();
  c.survival = j.at("S").get<std::vector<double>>();
  c.variance = j.at("var").get<std::vector<double>>();
  c.ci_lower = j.at("ci_lower").get<std::vector<double>>();
  c.ci_upper = j.at("ci_upper").get<std::vector<double>>();
  for (int b : j.at("ci_degenerate").get<std::vector<int>>()) c.ci_degenerate.push_back(b != 0);
  c.cum_hazard = j.at("H").get<std::vector<double>>();
  c.hazard = j.at("h").get<std::vector<double>>();
  c.accumulation = j.at("F").get<std::vector<double>>();
  c.alpha = j.at("alpha").get<double>();
  c.n_subjects = j.at("n_subjects").get<int>();
  return c;
}

// --- logrank.json ------------------------------------------------------------

inline ojson test_result_to_json(const TestResult& t) {
  ojson j;
  j["chi2"] = t.statistic;
  j["df"] = t.df;
  j["p"] = t.p_value;
  j["no_events"] = t.no_events;
  j["groups"] = ojson::array();
  for (const auto& g : t.groups) {
    ojson gj;
    gj["name"] = g.name;
    gj["observed"] = g.observed;
    gj["expected"] = g.expected;
    gj["n"] = g.n;
    j["groups"].push_back(gj);
  }
  return j;
}

// --- cox.json ----------------------------------------------------------------

inline ojson ph_test_to_json(const PhTest& t) {
  ojson j;
  j["name"] = t.name;
  if (t.defined) {
    j["chi2"] = t.chi2;
    j["df"] = t.df;
    j["p"] = t.p;
  } else {
    j["undefined_reason"] = t.reason;
  }
  return j;
}

inline ojson cox_to_json(const CoxFit& fit, const PHDiagnostics* diag,
                         const std::vector<FieldTransform>& transforms) {
  ojson j;
  j["covariates"] = ojson::array();
  for (std::size_t k = 0; k < fit.names.size(); ++k) {
    ojson cj;
    cj["name"] = fit.names[k];
    cj["beta"] = fit.beta[static_cast<int>(k)];
    cj["hr"] = fit.hazard_ratio[k];
    cj["se"] = fit.se[k];
    cj["ci_low"] = fit.ci_low[k];
    cj["ci_high"] = fit.ci_high[k];
    cj["p"] = fit.wald_p[k];
    j["covariates"].push_back(cj);
  }
  j["lr"] = {{"stat", fit.lr_stat}, {"df", fit.lr_df}, {"p", fit.lr_p}};
  j["concordance"] = fit.concordance;
  j["loglik"] = fit.loglik;
  j["loglik_null"] = fit.loglik_null;
  j["n"] = fit.n;
  j["n_events"] = fit.n_events;
  j["dropped_missing_covariates"] = fit.dropped_missing_covariates;
  j["dropped_baseline_censored"] = fit.dropped_baseline_censored;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["ties"] = fit.ties == Ties::efron ? "efron" : "breslow";
  j["alpha"] = fit.alpha;
  if (diag) {
    ojson pj;
    pj["transform"] = to_string(diag->transform);
    pj["per_covariate"] = ojson::array();
    bool any_reject = false;
    for (const auto& t : diag->per_covariate) {
      pj["per_covariate"].push_back(ph_test_to_json(t));
      any_reject = any_reject || (t.defined && t.p < 0.05);
    }
    pj["global"] = ph_test_to_json(diag->global);
    any_reject = any_reject || (diag->global.defined && diag->global.p < 0.05);
    pj["violated"] = any_reject;
    j["ph_test"] = pj;
    // when proportionality is rejected the fitted HRs summarize an average
    // effect over the training window rather than an epoch-constant one
    j["hr_interpretation"] = any_reject ? "time-averaged" : "proportional";
  }
  j["transforms"] = ojson::object();
  for (const auto& ft : transforms) {
    ojson tj;
    tj["kind"] = ft.kind == CovariateKind::binary ? "binary" : "continuous_count";
    if (ft.kind == CovariateKind::continuous_count) {
      tj["mean"] = ft.mean;
      tj["std"] = ft.stddev;
    }
    j["transforms"][ft.field] = tj;
  }
  return j;
}

// --- velocity.json -----------------------------------------------------------

inline ojson velocity_curve_to_json(const VelocityCurve& vc) {
  ojson j;
  j["epochs"] = vc.epochs;
  j["F_raw"] = vc.f_raw;
  j["F_smooth"] = vc.f_smooth;
  j["V"] = vc.v;
  j["sigma"] = vc.sigma;
  j["epsilon"] = vc.epsilon;
  j["peak_velocity"] = vc.summary.peak_velocity;
  j["peak_epoch"] = vc.summary.peak_epoch;
  if (vc.summary.convergence_epoch) j["convergence_epoch"] = *vc.summary.convergence_epoch;
  else j["convergence_epoch"] = nullptr;
  return j;
}

inline VelocityCurve velocity_curve_from_json(const nlohmann::json& j) {
  VelocityCurve vc;
  vc.epochs = j.at("epochs").get<std::vector<int>>();
  vc.f_raw = j.at("F_raw").get<std::vector<double>>();
  vc.f_smooth = j.at("F_smooth").get<std::vector<double>>();
  vc.v = j.at("V").get<std::vector<double>>();
  vc.sigma = j.at("sigma").get<double>();
  vc.epsilon = j.at("epsilon").get<double>();
  vc.summary.peak_velocity = j.at("peak_velocity").get<double>();
  vc.summary.peak_epoch = j.at("peak_epoch").get<int>();
  if (!j.at("convergence_epoch").is_null()) {
    vc.summary.convergence_epoch = j.at("convergence_epoch").get<int>();
  }
  return vc;
}

} // namespace factsurv
