#pragma once

// Converts epoch traces into right-censored event records for the three
// studied processes. Only the first transition defines an event; traces may
// oscillate afterwards without changing the record.
//
// Censoring rules:
//   acquisition    — correct at epoch 0: censored at 0; otherwise the event is
//                    the first epoch t >= 1 with correct[t]; never correct:
//                    censored at the final epoch.
//   generalization — unseen terms only; baseline-correct terms are excluded
//                    entirely; otherwise the acquisition rule.
//   degradation    — baseline-correct terms only; the event is the first
//                    epoch t >= 1 with !correct[t]; never incorrect: censored
//                    at the final epoch.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "factsurv/error.hpp"
#include "factsurv/types.hpp"

namespace factsurv {

enum class EventKind { acquisition, generalization, degradation };

inline const char* to_string(EventKind k) {
  switch (k) {
  case EventKind::acquisition: return "acquisition";
  case EventKind::generalization: return "generalization";
  case EventKind::degradation: return "degradation";
  }
  return "acquisition";
}

inline EventKind event_kind_from_string(const std::string& s) {
  if (s == "acquisition") return EventKind::acquisition;
  if (s == "generalization") return EventKind::generalization;
  if (s == "degradation") return EventKind::degradation;
  throw ParseError("unknown event kind '" + s + "'");
}

struct EventRecord {
  std::string term_id;
  EventKind kind = EventKind::acquisition;
  int time = 0;          // epoch
  bool observed = false; // false = right-censored
  std::map<std::string, std::string> labels;

  bool operator==(const EventRecord&) const = default;
};

inline EventRecord extract_acquisition(const EpochTrace& trace) {
  EventRecord rec;
  rec.term_id = trace.term_id;
  rec.kind = EventKind::acquisition;
  if (trace.correct[0]) {
    rec.time = 0;
    rec.observed = false;
    return rec;
  }
  for (int t = 1; t <= trace.max_epoch(); ++t) {
    if (trace.correct[t]) {
      rec.time = t;
      rec.observed = true;
      return rec;
    }
  }
  rec.time = trace.max_epoch();
  rec.observed = false;
  return rec;
}

inline std::optional<EventRecord> extract_generalization(const EpochTrace& trace, Split split) {
  if (split != Split::unseen) return std::nullopt;
  if (trace.correct[0]) return std::nullopt; // correct at baseline: excluded
  EventRecord rec = extract_acquisition(trace);
  rec.kind = EventKind::generalization;
  return rec;
}

inline std::optional<EventRecord> extract_degradation(const EpochTrace& trace) {
  if (!trace.correct[0]) return std::nullopt;
  EventRecord rec;
  rec.term_id = trace.term_id;
  rec.kind = EventKind::degradation;
  for (int t = 1; t <= trace.max_epoch(); ++t) {
    if (!trace.correct[t]) {
      rec.time = t;
      rec.observed = true;
      return rec;
    }
  }
  rec.time = trace.max_epoch();
  rec.observed = false;
  return rec;
}

// Stratum labels that can be attached to a record. "split" comes from the
// term; "latent" and "dose_band" need covariates for the term.
inline const std::vector<std::string>& known_strata_keys() {
  static const std::vector<std::string> keys = {"split", "latent", "dose_band"};
  return keys;
}

namespace detail {

inline std::string stratum_value(const Dataset& ds, const TermRecord& term, const std::string& key) {
  if (key == "split") return to_string(term.split);
  const CovariateVector* cv = ds.find_covariates(term.term_id);
  if (!cv) {
    throw ValidationError("stratum '" + key + "' requested but term '" + term.term_id +
                          "' has no covariates");
  }
  if (key == "latent") return cv->latent ? "yes" : "no";
  if (key == "dose_band") return to_string(dose_band_of(cv->latent_hits, cv->latent_n));
  throw ConfigError("unknown stratum key '" + key + "' (known: split, latent, dose_band)");
}

} // namespace detail

inline std::vector<EventRecord> build_cohort(const Dataset& ds, EventKind kind,
                                             const std::vector<std::string>& strata = {}) {
  std::vector<EventRecord> out;
  out.reserve(ds.terms.size());
  for (const auto& term : ds.terms) {
    const EpochTrace* trace = ds.find_trace(term.term_id);
    std::optional<EventRecord> rec;
    switch (kind) {
    case EventKind::acquisition:
      rec = extract_acquisition(*trace);
      break;
    case EventKind::generalization:
      rec = extract_generalization(*trace, term.split);
      break;
    case EventKind::degradation:
      rec = extract_degradation(*trace);
      break;
    }
    if (!rec) continue;
    for (const auto& key : strata) {
      rec->labels[key] = detail::stratum_value(ds, term, key);
    }
    out.push_back(std::move(*rec));
  }
  return out;
}

// Joint group label for stratified analyses, e.g. "latent=yes,split=seen".
inline std::string group_label(const EventRecord& rec, const std::vector<std::string>& strata) {
  std::string out;
  for (const auto& key : strata) {
    auto it = rec.labels.find(key);
    if (it == rec.labels.end()) {
      throw ValidationError("record '" + rec.term_id + "' is missing stratum label '" + key + "'");
    }
    if (!out.empty()) out += ',';
    out += key + "=" + it->second;
  }
  return out;
}

inline std::map<std::string, std::vector<EventRecord>>
group_by_strata(const std::vector<EventRecord>& cohort, const std::vector<std::string>& strata) {
  std::map<std::string, std::vector<EventRecord>> out;
  for (const auto& rec : cohort) {
    out[group_label(rec, strata)].push_back(rec);
  }
  return out;
}

} // namespace factsurv
