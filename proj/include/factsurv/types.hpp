#pragma once

// Shared domain types: ontology facts, per-epoch correctness traces,
// per-term covariates, and the validated dataset bundle.

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "factsurv/error.hpp"

namespace factsurv {

struct Ontology {
  enum class Kind { hpo, go, other };

  Kind kind = Kind::other;
  std::string name; // "HPO", "GO", or a custom nonempty name

  static Ontology hpo() { return {Kind::hpo, "HPO"}; }
  static Ontology go() { return {Kind::go, "GO"}; }
  static Ontology other(std::string n) { return {Kind::other, std::move(n)}; }

  static Ontology from_string(const std::string& s) {
    if (s == "HPO") return hpo();
    if (s == "GO") return go();
    if (s.empty()) throw ParseError("empty ontology name");
    return other(s);
  }

  bool operator==(const Ontology&) const = default;
};

enum class Split { seen, unseen };

inline Split split_from_string(const std::string& s) {
  if (s == "seen") return Split::seen;
  if (s == "unseen") return Split::unseen;
  throw ParseError("invalid split value '" + s + "' (expected seen|unseen)");
}

inline const char* to_string(Split s) {
  return s == Split::seen ? "seen" : "unseen";
}

// HP:/GO: identifiers are a 2-letter prefix, a colon, and exactly 7 digits.
inline bool identifier_matches(const Ontology& ontology, const std::string& id) {
  auto prefixed7 = [&](const char* prefix) {
    if (id.size() != 10) return false;
    if (id[0] != prefix[0] || id[1] != prefix[1] || id[2] != ':') return false;
    for (std::size_t i = 3; i < 10; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
    }
    return true;
  };
  switch (ontology.kind) {
  case Ontology::Kind::hpo:
    return prefixed7("HP");
  case Ontology::Kind::go:
    return prefixed7("GO");
  case Ontology::Kind::other:
    return !id.empty();
  }
  return false;
}

// One ontology fact: a human-readable label mapped to a canonical identifier.
struct TermRecord {
  std::string term_id;
  std::string label;
  std::string identifier;
  Ontology ontology;
  Split split = Split::seen;

  bool operator==(const TermRecord&) const = default;
};

// Per-term correctness under deterministic decoding, epoch 0 (base model)
// through epoch E, dense.
struct EpochTrace {
  std::string term_id;
  std::vector<bool> correct; // size max_epoch + 1

  int max_epoch() const { return static_cast<int>(correct.size()) - 1; }

  bool operator==(const EpochTrace&) const = default;
};

// Per-term predictors. latent/latent_dose are derived from the raw
// stochastic-probe tally (hits out of n samples). `transformed` is filled
// by transform_covariates and aligns with the configured covariate specs.
struct CovariateVector {
  std::string term_id;
  std::uint64_t term_count = 0;
  std::uint64_t id_count = 0;
  std::uint64_t annotation_count = 0;
  std::int64_t latent_hits = 0;
  std::int64_t latent_n = 0;
  bool latent = false;        // latent_hits >= 1
  double latent_dose = 0.0;   // latent_hits / latent_n
  std::optional<bool> seen_flag;
  std::optional<std::vector<double>> transformed;

  bool operator==(const CovariateVector&) const = default;
};

// Latent-knowledge dose bands with the 10% cutpoint. The comparison is done
// in integer arithmetic (hits*10 vs n) so the boundary is exact.
enum class DoseBand { none, moderate, high };

inline DoseBand dose_band_of(std::int64_t hits, std::int64_t n) {
  if (hits <= 0) return DoseBand::none;
  return hits * 10 >= n ? DoseBand::high : DoseBand::moderate;
}

inline const char* to_string(DoseBand b) {
  switch (b) {
  case DoseBand::none: return "none";
  case DoseBand::moderate: return "moderate";
  case DoseBand::high: return "high";
  }
  return "none";
}

struct Dataset {
  std::vector<TermRecord> terms;
  std::vector<EpochTrace> traces;
  std::vector<CovariateVector> covariates; // may be empty or partial
  int max_epoch = 0;

  const TermRecord* find_term(const std::string& id) const {
    auto it = term_index_.find(id);
    return it == term_index_.end() ? nullptr : &terms[it->second];
  }
  const EpochTrace* find_trace(const std::string& id) const {
    auto it = trace_index_.find(id);
    return it == trace_index_.end() ? nullptr : &traces[it->second];
  }
  const CovariateVector* find_covariates(const std::string& id) const {
    auto it = cov_index_.find(id);
    return it == cov_index_.end() ? nullptr : &covariates[it->second];
  }

  // Checks referential integrity: unique term ids, exactly one dense trace
  // per term, covariates only for known terms. Builds the lookup indexes.
  void validate() {
    term_index_.clear();
    trace_index_.clear();
    cov_index_.clear();
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (!term_index_.emplace(terms[i].term_id, i).second) {
        throw ValidationError("duplicate term_id '" + terms[i].term_id + "'");
      }
    }
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& tr = traces[i];
      if (!term_index_.count(tr.term_id)) {
        throw ValidationError("trace for unknown term_id '" + tr.term_id + "'");
      }
      if (tr.max_epoch() != max_epoch) {
        throw ValidationError("trace for '" + tr.term_id + "' has max epoch " +
                              std::to_string(tr.max_epoch()) + ", dataset has " +
                              std::to_string(max_epoch));
      }
      if (!trace_index_.emplace(tr.term_id, i).second) {
        throw ValidationError("duplicate trace for term_id '" + tr.term_id + "'");
      }
    }
    for (const auto& t : terms) {
      if (!trace_index_.count(t.term_id)) {
        throw ValidationError("term '" + t.term_id + "' has no trace");
      }
    }
    for (std::size_t i = 0; i < covariates.size(); ++i) {
      const auto& cv = covariates[i];
      if (!term_index_.count(cv.term_id)) {
        throw ValidationError("covariates for unknown term_id '" + cv.term_id + "'");
      }
      if (!cov_index_.emplace(cv.term_id, i).second) {
        throw ValidationError("duplicate covariates for term_id '" + cv.term_id + "'");
      }
    }
  }

  bool covariates_cover_all_terms() const {
    for (const auto& t : terms) {
      if (!cov_index_.count(t.term_id)) return false;
    }
    return !terms.empty();
  }

private:
  std::unordered_map<std::string, std::size_t> term_index_;
  std::unordered_map<std::string, std::size_t> trace_index_;
  std::unordered_map<std::string, std::size_t> cov_index_;
};

} // namespace factsurv
