#pragma once

// Ingestion and serialization of the three input files:
//   terms.jsonl      {term_id, label, identifier, ontology, split}
//   traces.jsonl     {term_id, epoch, correct}
//   covariates.csv   term_id,term_count,id_count,annotation_count,
//                    latent_hits,latent_n[,seen_flag]
// Parsing is pure given the stream and validates every record.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "factsurv/error.hpp"
#include "factsurv/types.hpp"

namespace factsurv {

enum class TermFormat { jsonl, csv };

namespace detail {

inline std::string line_msg(const std::string& what, std::size_t line) {
  return what + " at line " + std::to_string(line);
}

// RFC-4180-ish field splitter: double-quote quoting, "" escapes a quote.
inline std::vector<std::string> split_csv_row(const std::string& line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch == '\r' && i + 1 == line.size()) {
      // tolerate CRLF
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw ParseError(line_msg("unterminated quoted field", lineno));
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::int64_t parse_int_field(const std::string& s, const std::string& field,
                                    std::size_t lineno) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line_msg("malformed field '" + field + "' (value '" + s + "')", lineno));
  }
}

inline TermRecord term_from_fields(const std::string& term_id, const std::string& label,
                                   const std::string& identifier, const std::string& ontology,
                                   const std::string& split, std::size_t lineno) {
  TermRecord rec;
  rec.term_id = term_id;
  rec.label = label;
  rec.identifier = identifier;
  rec.ontology = Ontology::from_string(ontology);
  rec.split = split_from_string(split);
  if (rec.term_id.empty()) throw ParseError(line_msg("empty term_id", lineno));
  if (!identifier_matches(rec.ontology, rec.identifier)) {
    throw ParseError(line_msg("identifier pattern mismatch", lineno) + " (term " +
                     rec.term_id + ", identifier '" + rec.identifier + "')");
  }
  return rec;
}

} // namespace detail

inline std::vector<TermRecord> parse_terms(std::istream& in, TermFormat format) {
  std::vector<TermRecord> out;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    TermRecord rec;
    if (format == TermFormat::jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(detail::line_msg(std::string("invalid JSON (") + e.what() + ")", lineno));
      }
      for (const char* key : {"term_id", "label", "identifier", "ontology", "split"}) {
        if (!j.contains(key) || !j[key].is_string()) {
          throw ParseError(detail::line_msg(std::string("missing or non-string field '") + key + "'", lineno));
        }
      }
      rec = detail::term_from_fields(j["term_id"], j["label"], j["identifier"],
                                     j["ontology"], j["split"], lineno);
    } else {
      auto fields = detail::split_csv_row(line, lineno);
      if (!header_done) {
        header_done = true;
        if (fields == std::vector<std::string>{"term_id", "label", "identifier", "ontology", "split"}) {
          continue;
        }
        throw ParseError("terms csv header must be term_id,label,identifier,ontology,split");
      }
      if (fields.size() != 5) {
        throw ParseError(detail::line_msg("expected 5 fields, got " + std::to_string(fields.size()), lineno));
      }
      rec = detail::term_from_fields(fields[0], fields[1], fields[2], fields[3], fields[4], lineno);
    }
    if (!seen_ids.insert(rec.term_id).second) {
      throw ParseError(detail::line_msg("duplicate term_id '" + rec.term_id + "'", lineno));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// Assembles dense per-term correctness vectors over epochs 0..max_epoch.
// Rows may arrive in any order; every (term, epoch) must appear exactly once.
inline std::vector<EpochTrace> parse_traces(std::istream& in, int max_epoch) {
  if (max_epoch < 0) throw ConfigError("max_epoch must be >= 0");
  struct Partial {
    std::vector<bool> correct;
    std::vector<bool> present;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Partial> partials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(detail::line_msg(std::string("invalid JSON (") + e.what() + ")", lineno));
    }
    if (!j.contains("term_id") || !j["term_id"].is_string() || !j.contains("epoch") ||
        !j["epoch"].is_number_integer() || !j.contains("correct") || !j["correct"].is_boolean()) {
      throw ParseError(detail::line_msg("trace row needs term_id (string), epoch (int), correct (bool)", lineno));
    }
    std::string term_id = j["term_id"];
    int epoch = j["epoch"];
    if (epoch < 0 || epoch > max_epoch) {
      throw ParseError(detail::line_msg("epoch " + std::to_string(epoch) + " outside 0.." +
                                        std::to_string(max_epoch), lineno));
    }
    auto [it, inserted] = partials.try_emplace(term_id);
    if (inserted) {
      it->second.correct.assign(max_epoch + 1, false);
      it->second.present.assign(max_epoch + 1, false);
      order.push_back(term_id);
    }
    if (it->second.present[epoch]) {
      throw ParseError(detail::line_msg("duplicate epoch " + std::to_string(epoch) + " for " + term_id, lineno));
    }
    it->second.present[epoch] = true;
    it->second.correct[epoch] = j["correct"].get<bool>();
  }
  std::vector<EpochTrace> out;
  out.reserve(order.size());
  for (const auto& term_id : order) {
    const auto& p = partials[term_id];
    for (int e = 0; e <= max_epoch; ++e) {
      if (!p.present[e]) {
        throw ParseError("missing epoch " + std::to_string(e) + " for " + term_id);
      }
    }
    out.push_back(EpochTrace{term_id, p.correct});
  }
  return out;
}

inline std::vector<CovariateVector> parse_covariates(std::istream& in) {
  std::vector<CovariateVector> out;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  bool has_seen_flag = false;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_row(line, lineno);
    if (!header_done) {
      header_done = true;
      const std::vector<std::string> base = {"term_id", "term_count", "id_count",
                                             "annotation_count", "latent_hits", "latent_n"};
      std::vector<std::string> with_flag = base;
      with_flag.push_back("seen_flag");
      if (fields == base) {
        has_seen_flag = false;
      } else if (fields == with_flag) {
        has_seen_flag = true;
      } else {
        throw ParseError("covariates csv header must be term_id,term_count,id_count,"
                         "annotation_count,latent_hits,latent_n[,seen_flag]");
      }
      continue;
    }
    std::size_t expected = has_seen_flag ? 7 : 6;
    if (fields.size() != expected) {
      throw ParseError(detail::line_msg("expected " + std::to_string(expected) + " fields, got " +
                                        std::to_string(fields.size()), lineno));
    }
    CovariateVector cv;
    cv.term_id = fields[0];
    if (cv.term_id.empty()) throw ParseError(detail::line_msg("empty term_id", lineno));
    auto nonneg = [&](const std::string& s, const char* name) {
      std::int64_t v = detail::parse_int_field(s, name, lineno);
      if (v < 0) throw ParseError(detail::line_msg(std::string("negative ") + name, lineno));
      return static_cast<std::uint64_t>(v);
    };
    cv.term_count = nonneg(fields[1], "term_count");
    cv.id_count = nonneg(fields[2], "id_count");
    cv.annotation_count = nonneg(fields[3], "annotation_count");
    cv.latent_hits = detail::parse_int_field(fields[4], "latent_hits", lineno);
    cv.latent_n = detail::parse_int_field(fields[5], "latent_n", lineno);
    if (cv.latent_hits < 0) throw ParseError(detail::line_msg("negative latent_hits", lineno));
    if (cv.latent_n <= 0) throw ParseError(detail::line_msg("latent_n must be positive", lineno));
    if (cv.latent_hits > cv.latent_n) {
      throw ParseError(detail::line_msg("latent_hits exceeds latent_n", lineno));
    }
    cv.latent = cv.latent_hits >= 1;
    cv.latent_dose = static_cast<double>(cv.latent_hits) / static_cast<double>(cv.latent_n);
    if (has_seen_flag) {
      if (fields[6] == "1" || fields[6] == "true") cv.seen_flag = true;
      else if (fields[6] == "0" || fields[6] == "false") cv.seen_flag = false;
      else throw ParseError(detail::line_msg("seen_flag must be 0/1/true/false", lineno));
    }
    if (!seen_ids.insert(cv.term_id).second) {
      throw ParseError(detail::line_msg("duplicate term_id '" + cv.term_id + "'", lineno));
    }
    out.push_back(std::move(cv));
  }
  return out;
}

inline void serialize_terms(const std::vector<TermRecord>& terms, std::ostream& out,
                            TermFormat format = TermFormat::jsonl) {
  if (format == TermFormat::csv) {
    out << "term_id,label,identifier,ontology,split\n";
    for (const auto& t : terms) {
      out << detail::csv_escape(t.term_id) << ',' << detail::csv_escape(t.label) << ','
          << detail::csv_escape(t.identifier) << ',' << detail::csv_escape(t.ontology.name)
          << ',' << to_string(t.split) << '\n';
    }
    return;
  }
  for (const auto& t : terms) {
    nlohmann::ordered_json j;
    j["term_id"] = t.term_id;
    j["label"] = t.label;
    j["identifier"] = t.identifier;
    j["ontology"] = t.ontology.name;
    j["split"] = to_string(t.split);
    out << j.dump() << '\n';
  }
}

inline void serialize_traces(const std::vector<EpochTrace>& traces, std::ostream& out) {
  for (const auto& tr : traces) {
    for (std::size_t e = 0; e < tr.correct.size(); ++e) {
      nlohmann::ordered_json j;
      j["term_id"] = tr.term_id;
      j["epoch"] = e;
      j["correct"] = static_cast<bool>(tr.correct[e]);
      out << j.dump() << '\n';
    }
  }
}

inline void serialize_covariates(const std::vector<CovariateVector>& covs, std::ostream& out) {
  bool any_flag = false;
  for (const auto& c : covs) any_flag = any_flag || c.seen_flag.has_value();
  out << "term_id,term_count,id_count,annotation_count,latent_hits,latent_n";
  if (any_flag) out << ",seen_flag";
  out << '\n';
  for (const auto& c : covs) {
    out << detail::csv_escape(c.term_id) << ',' << c.term_count << ',' << c.id_count << ','
        << c.annotation_count << ',' << c.latent_hits << ',' << c.latent_n;
    if (any_flag) out << ',' << (c.seen_flag.value_or(false) ? 1 : 0);
    out << '\n';
  }
}

} // namespace factsurv
