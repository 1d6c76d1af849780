#pragma once

// Latent-knowledge probing: one deterministic (greedy) decode plus N
// stochastic decodes per term against an OpenAI-compatible completions or
// chat endpoint. A term has latent knowledge when at least one stochastic
// sample contains its identifier; the hit fraction is banded at the 10%
// cutpoint.
//
// Campaign results stream to an append-only JSONL sink, one line per term,
// so an interrupted run resumes by skipping completed term_ids.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "factsurv/error.hpp"
#include "factsurv/types.hpp"

namespace factsurv {

struct ProbeConfig {
  std::string endpoint_url; // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string model_name;
  int n_stochastic = 50;
  double temperature_stochastic = 1.0;
  std::string prompt_template =
      "What is the identifier for the ontology term \"{label}\"? "
      "Reply with the identifier only.";
  int max_parallel = 4;
  int retry_limit = 3;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds retry_backoff{250};
  int max_tokens = 64;
  std::string api_style = "chat"; // "chat" or "completions"
  std::string token_env;          // env var holding the bearer token; empty = no auth

  void validate() const {
    if (n_stochastic < 1) throw ConfigError("probe: n_stochastic must be >= 1");
    if (!(temperature_stochastic > 0.0)) {
      throw ConfigError("probe: temperature_stochastic must be > 0");
    }
    if (max_parallel < 1) throw ConfigError("probe: max_parallel must be >= 1");
    if (retry_limit < 0) throw ConfigError("probe: retry_limit must be >= 0");
    auto first = prompt_template.find("{label}");
    if (first == std::string::npos ||
        prompt_template.find("{label}", first + 1) != std::string::npos) {
      throw ConfigError("probe: prompt template must contain {label} exactly once");
    }
    if (api_style != "chat" && api_style != "completions") {
      throw ConfigError("probe: api_style must be chat or completions");
    }
  }
};

struct LatentProbeResult {
  std::string term_id;
  bool deterministic_correct = false;
  int stochastic_hits = 0;
  int n_stochastic = 0;
  bool latent = false;
  DoseBand dose_band = DoseBand::none;
  std::vector<std::string> raw_outputs; // kept only in audit mode
};

inline std::string build_prompt(const std::string& prompt_template, const TermRecord& term) {
  std::string out = prompt_template;
  auto pos = out.find("{label}");
  if (pos != std::string::npos) out.replace(pos, 7, term.label);
  return out;
}

// First substring matching the ontology's identifier pattern: prefix
// (case-insensitive) + ':' + exactly 7 digits, not followed by another
// digit. Normalized to uppercase. Absence is a value, not an error.
inline std::optional<std::string> extract_identifier(std::string_view text,
                                                     const Ontology& ontology) {
  const char* prefix = nullptr;
  if (ontology.kind == Ontology::Kind::hpo) prefix = "HP";
  else if (ontology.kind == Ontology::Kind::go) prefix = "GO";
  else return std::nullopt; // no pattern defined for other ontologies

  auto upper = [](char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); };
  for (std::size_t i = 0; i + 10 <= text.size(); ++i) {
    if (upper(text[i]) != prefix[0] || upper(text[i + 1]) != prefix[1] || text[i + 2] != ':') {
      continue;
    }
    bool digits = true;
    for (std::size_t k = 3; k < 10; ++k) {
      if (!std::isdigit(static_cast<unsigned char>(text[i + k]))) {
        digits = false;
        break;
      }
    }
    if (!digits) continue;
    if (i + 10 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 10]))) {
      continue; // 8+ digits is not an identifier
    }
    std::string id(text.substr(i, 10));
    id[0] = upper(id[0]);
    id[1] = upper(id[1]);
    return id;
  }
  return std::nullopt;
}

// One model call. Implementations must be safe to invoke from several
// threads at once. Throws TransportError on failure.
class CompletionClient {
public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const std::string& prompt, double temperature,
                               int max_tokens) = 0;
};

namespace detail {

inline bool response_is_hit(const std::string& text, const TermRecord& term) {
  if (term.ontology.kind == Ontology::Kind::other) {
    // no extraction pattern: literal containment of the canonical identifier
    return text.find(term.identifier) != std::string::npos;
  }
  auto id = extract_identifier(text, term.ontology);
  return id.has_value() && *id == term.identifier;
}

inline std::string complete_with_retries(CompletionClient& client, const ProbeConfig& config,
                                         const std::string& prompt, double temperature,
                                         const std::string& term_id) {
  thread_local std::mt19937 jitter_rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(0.0, 0.25);
  int attempts = 0;
  for (;;) {
    try {
      ++attempts;
      return client.complete(prompt, temperature, config.max_tokens);
    } catch (const TransportError& e) {
      if (attempts > config.retry_limit) {
        throw TransportError("probe failed for term '" + term_id + "' after " +
                             std::to_string(attempts) + " attempts: " + e.what());
      }
      auto backoff = config.retry_backoff * (1 << (attempts - 1));
      auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(
          backoff * (1.0 + jitter(jitter_rng)));
      std::this_thread::sleep_for(wait);
    }
  }
}

} // namespace detail

inline LatentProbeResult probe_term(const TermRecord& term, const ProbeConfig& config,
                                    CompletionClient& client, bool keep_raw = false) {
  config.validate();
  const std::string prompt = build_prompt(config.prompt_template, term);

  LatentProbeResult result;
  result.term_id = term.term_id;
  result.n_stochastic = config.n_stochastic;

  std::string det = detail::complete_with_retries(client, config, prompt, 0.0, term.term_id);
  result.deterministic_correct = detail::response_is_hit(det, term);
  if (keep_raw) result.raw_outputs.push_back(det);

  for (int s = 0; s < config.n_stochastic; ++s) {
    std::string text = detail::complete_with_retries(client, config, prompt,
                                                     config.temperature_stochastic,
                                                     term.term_id);
    if (detail::response_is_hit(text, term)) ++result.stochastic_hits;
    if (keep_raw) result.raw_outputs.push_back(text);
  }

  result.latent = result.stochastic_hits >= 1;
  result.dose_band = dose_band_of(result.stochastic_hits, result.n_stochastic);
  return result;
}

inline nlohmann::ordered_json probe_result_to_json(const LatentProbeResult& r, bool audit) {
  nlohmann::ordered_json j;
  j["term_id"] = r.term_id;
  j["deterministic_correct"] = r.deterministic_correct;
  j["stochastic_hits"] = r.stochastic_hits;
  j["n_stochastic"] = r.n_stochastic;
  j["latent"] = r.latent;
  j["dose_band"] = to_string(r.dose_band);
  if (audit) j["raw_outputs"] = r.raw_outputs;
  return j;
}

struct CampaignReport {
  int probed = 0;  // newly probed this run
  int skipped = 0; // already present in the sink
};

// Reads completed term_ids from an existing sink so a rerun never repeats a
// finished term.
inline std::vector<std::string> completed_term_ids(const std::filesystem::path& sink) {
  std::vector<std::string> out;
  std::ifstream in(sink);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("term_id")) continue;
    out.push_back(j["term_id"].get<std::string>());
  }
  return out;
}

inline CampaignReport run_campaign(const std::vector<TermRecord>& terms,
                                   const ProbeConfig& config, CompletionClient& client,
                                   const std::filesystem::path& sink, bool audit = false) {
  config.validate();

  std::unordered_set<std::string> done;
  for (auto& id : completed_term_ids(sink)) done.insert(id);

  std::vector<const TermRecord*> pending;
  for (const auto& t : terms) {
    if (!done.count(t.term_id)) pending.push_back(&t);
  }

  CampaignReport report;
  report.skipped = static_cast<int>(terms.size() - pending.size());
  if (pending.empty()) return report;

  std::ofstream out(sink, std::ios::app);
  if (!out) throw Error("cannot open probe sink '" + sink.string() + "' for append");

  std::mutex write_mutex;
  std::atomic<std::size_t> cursor{0};
  std::vector<std::string> failures;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      std::size_t i = cursor.fetch_add(1);
      if (i >= pending.size()) return;
      const TermRecord& term = *pending[i];
      try {
        LatentProbeResult r = probe_term(term, config, client, audit);
        std::lock_guard<std::mutex> lock(write_mutex);
        out << probe_result_to_json(r, audit).dump() << '\n';
        out.flush();
        ++report.probed;
      } catch (const Error&) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failures.push_back(term.term_id);
      }
    }
  };

  int n_threads = std::min<int>(config.max_parallel, static_cast<int>(pending.size()));
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    std::string list;
    for (const auto& id : failures) {
      if (!list.empty()) list += ", ";
      list += id;
    }
    throw TransportError("probe campaign incomplete; unresolved terms: " + list);
  }
  return report;
}

// ---------------------------------------------------------------------------
// HTTP client speaking the OpenAI-compatible JSON protocol
// ---------------------------------------------------------------------------

struct EndpointParts {
  std::string scheme_host_port; // "http://host:port"
  std::string path;             // "/v1/chat/completions"
};

inline EndpointParts split_endpoint_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint url must start with http:// or https://");
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace factsurv

#include <httplib.h>

namespace factsurv {

class HttpCompletionClient final : public CompletionClient {
public:
  explicit HttpCompletionClient(const ProbeConfig& config)
      : config_(config), endpoint_(split_endpoint_url(config.endpoint_url)) {
    if (!config_.token_env.empty()) {
      const char* tok = std::getenv(config_.token_env.c_str());
      if (!tok) {
        throw ConfigError("probe: environment variable '" + config_.token_env +
                          "' is not set (expected bearer token)");
      }
      token_ = tok;
    }
  }

  std::string complete(const std::string& prompt, double temperature,
                       int max_tokens) override {
    // one connection per request keeps this safe under max_parallel threads
    httplib::Client cli(endpoint_.scheme_host_port);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    cli.set_connection_timeout(secs.count() > 0 ? secs.count() : 1, 0);
    cli.set_read_timeout(secs.count() > 0 ? secs.count() : 1, 0);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    nlohmann::json body;
    body["model"] = config_.model_name;
    body["temperature"] = temperature;
    body["max_tokens"] = max_tokens;
    body["n"] = 1;
    if (config_.api_style == "chat") {
      body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    } else {
      body["prompt"] = prompt;
    }

    auto res = cli.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) {
      throw TransportError("request to " + config_.endpoint_url + " failed: " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
      throw TransportError("endpoint returned malformed completion payload");
    }
    const auto& choice = j["choices"][0];
    if (config_.api_style == "chat") {
      if (!choice.contains("message") || !choice["message"].contains("content")) {
        throw TransportError("chat response missing message.content");
      }
      return choice["message"]["content"].get<std::string>();
    }
    if (!choice.contains("text")) throw TransportError("completion response missing text");
    return choice["text"].get<std::string>();
  }

private:
  ProbeConfig config_;
  EndpointParts endpoint_;
  std::string token_;
};

} // namespace factsurv
