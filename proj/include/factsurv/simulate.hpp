#pragma once

// Discrete-time proportional-hazards generator with known ground truth,
// used to validate the whole estimation stack end to end. Per epoch the
// event probability is the complementary-log-log link
//     p_i(t) = 1 - exp(-h0(t) * exp(beta' x_i))
// so the continuous-time PH assumption the Cox model estimates holds exactly
// in the generator. Covariates feed the link in transformed form, matching
// the fit pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "factsurv/error.hpp"
#include "factsurv/rng.hpp"
#include "factsurv/transform.hpp"
#include "factsurv/types.hpp"

namespace factsurv {

struct SimCovariateModel {
  double p_latent = 0.3;
  double count_log_mean = 3.0;
  double count_log_sd = 1.5;
  int latent_n = 50;
};

struct SimConfig {
  int n_terms = 0;
  int max_epoch = 20;
  std::vector<double> baseline_hazard; // size 1 (constant) or max_epoch (epochs 1..E)
  std::vector<CovariateSpec> covariates;
  std::vector<double> beta_true; // aligned with `covariates`
  SimCovariateModel covariate_model;
  double baseline_correct_fraction = 0.0;
  double unseen_fraction = 0.0;
  bool degrade_mode = false;
  std::optional<int> flip_epoch; // effects negate for epochs > flip_epoch
  std::uint64_t seed = 0;

  double hazard_at(int epoch) const {
    return baseline_hazard.size() == 1 ? baseline_hazard[0] : baseline_hazard[epoch - 1];
  }
};

inline void validate(const SimConfig& config) {
  if (config.n_terms < 1) throw ConfigError("simulate: n_terms must be >= 1");
  if (config.max_epoch < 1) throw ConfigError("simulate: max_epoch must be >= 1");
  if (config.baseline_hazard.empty()) throw ConfigError("simulate: baseline_hazard required");
  if (config.baseline_hazard.size() != 1 &&
      config.baseline_hazard.size() != static_cast<std::size_t>(config.max_epoch)) {
    throw ConfigError("simulate: baseline_hazard must have 1 or max_epoch entries");
  }
  for (double h : config.baseline_hazard) {
    if (!(h >= 0.0 && h < 1.0)) throw ConfigError("simulate: baseline hazard outside [0,1)");
  }
  if (config.beta_true.size() != config.covariates.size()) {
    throw ConfigError("simulate: beta_true must align with covariate specs");
  }
  if (!(config.baseline_correct_fraction >= 0.0 && config.baseline_correct_fraction <= 1.0)) {
    throw ConfigError("simulate: baseline_correct_fraction outside [0,1]");
  }
  if (!(config.unseen_fraction >= 0.0 && config.unseen_fraction <= 1.0)) {
    throw ConfigError("simulate: unseen_fraction outside [0,1]");
  }
  if (!(config.covariate_model.p_latent >= 0.0 && config.covariate_model.p_latent <= 1.0)) {
    throw ConfigError("simulate: p_latent outside [0,1]");
  }
}

namespace detail {

// Stream tags; each (seed, term, tag) is an independent stream.
constexpr std::uint64_t kStreamCovariates = 1;
constexpr std::uint64_t kStreamTrace = 2;
constexpr std::uint64_t kStreamSplit = 3;
constexpr std::uint64_t kStreamBaseline = 4;

inline bool term_is_unseen(const SimConfig& c, int i) {
  if (c.unseen_fraction <= 0.0) return false;
  return Rng::stream(c.seed, i, kStreamSplit).uniform01() < c.unseen_fraction;
}

inline bool term_baseline_correct(const SimConfig& c, int i) {
  if (c.baseline_correct_fraction <= 0.0) return false;
  return Rng::stream(c.seed, i, kStreamBaseline).uniform01() < c.baseline_correct_fraction;
}

inline std::string sim_term_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "t%06d", i);
  return buf;
}

} // namespace detail

inline std::vector<TermRecord> gen_terms(const SimConfig& config) {
  validate(config);
  std::vector<TermRecord> out;
  out.reserve(config.n_terms);
  for (int i = 0; i < config.n_terms; ++i) {
    TermRecord t;
    t.term_id = detail::sim_term_id(i);
    t.label = "synthetic term " + std::to_string(i);
    char ident[16];
    std::snprintf(ident, sizeof(ident), "SIM:%07d", i);
    t.identifier = ident;
    t.ontology = Ontology::other("SIM");
    t.split = detail::term_is_unseen(config, i) ? Split::unseen : Split::seen;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<CovariateVector> gen_covariates(const SimConfig& config) {
  validate(config);
  std::vector<CovariateVector> out;
  out.reserve(config.n_terms);
  const auto& model = config.covariate_model;
  for (int i = 0; i < config.n_terms; ++i) {
    Rng rng = Rng::stream(config.seed, i, detail::kStreamCovariates);
    CovariateVector cv;
    cv.term_id = detail::sim_term_id(i);
    cv.latent_n = model.latent_n;
    if (rng.bernoulli(model.p_latent)) {
      cv.latent_hits = 1 + static_cast<std::int64_t>(
                               rng.below(std::min<std::uint64_t>(10, model.latent_n)));
    } else {
      cv.latent_hits = 0;
    }
    cv.latent = cv.latent_hits >= 1;
    cv.latent_dose = static_cast<double>(cv.latent_hits) / cv.latent_n;
    cv.term_count = static_cast<std::uint64_t>(
        std::llround(rng.lognormal(model.count_log_mean, model.count_log_sd)));
    cv.id_count = static_cast<std::uint64_t>(
        std::llround(rng.lognormal(model.count_log_mean, model.count_log_sd)));
    cv.annotation_count = static_cast<std::uint64_t>(
        std::llround(rng.lognormal(model.count_log_mean, model.count_log_sd)));
    if (config.unseen_fraction > 0.0) {
      cv.seen_flag = !detail::term_is_unseen(config, i);
    }
    out.push_back(std::move(cv));
  }
  return out;
}

// Covariates must carry `transformed` vectors aligned with config.covariates
// (run transform_covariates first); beta_true applies to those columns.
inline std::vector<EpochTrace> simulate_traces(const SimConfig& config,
                                               const std::vector<CovariateVector>& covariates) {
  validate(config);
  if (static_cast<int>(covariates.size()) != config.n_terms) {
    throw ConfigError("simulate_traces: covariate count does not match n_terms");
  }
  std::vector<EpochTrace> out;
  out.reserve(config.n_terms);
  for (int i = 0; i < config.n_terms; ++i) {
    const auto& cv = covariates[i];
    if (!cv.transformed.has_value() ||
        cv.transformed->size() != config.beta_true.size()) {
      throw ConfigError("simulate_traces: covariates must be transformed to match beta_true");
    }
    double lp = 0.0;
    for (std::size_t j = 0; j < config.beta_true.size(); ++j) {
      lp += config.beta_true[j] * (*cv.transformed)[j];
    }

    Rng rng = Rng::stream(config.seed, i, detail::kStreamTrace);
    const bool baseline = detail::term_baseline_correct(config, i);

    EpochTrace trace;
    trace.term_id = detail::sim_term_id(i);
    trace.correct.assign(config.max_epoch + 1, false);

    if (config.degrade_mode) {
      // only baseline-correct terms are at risk of degrading
      if (baseline) {
        std::fill(trace.correct.begin(), trace.correct.end(), true);
        for (int t = 1; t <= config.max_epoch; ++t) {
          double sign = (config.flip_epoch && t > *config.flip_epoch) ? -1.0 : 1.0;
          double rate = config.hazard_at(t) * std::exp(sign * lp);
          double p = 1.0 - std::exp(-rate);
          if (!(p < 1.0)) throw Error("hazard too large");
          if (rng.uniform01() < p) {
            std::fill(trace.correct.begin() + t, trace.correct.end(), false);
            break;
          }
        }
      }
      out.push_back(std::move(trace));
    } else {
      trace.correct[0] = baseline;
      if (baseline) {
        std::fill(trace.correct.begin(), trace.correct.end(), true);
      } else {
        for (int t = 1; t <= config.max_epoch; ++t) {
          double sign = (config.flip_epoch && t > *config.flip_epoch) ? -1.0 : 1.0;
          double rate = config.hazard_at(t) * std::exp(sign * lp);
          double p = 1.0 - std::exp(-rate);
          if (!(p < 1.0)) throw Error("hazard too large");
          if (rng.uniform01() < p) {
            std::fill(trace.correct.begin() + t, trace.correct.end(), true);
            break;
          }
        }
      }
      out.push_back(std::move(trace));
    }
  }
  return out;
}

struct SimOutput {
  std::vector<TermRecord> terms;
  std::vector<CovariateVector> covariates; // raw (no transform applied)
  std::vector<EpochTrace> traces;
  TransformResult transformed; // the design used to generate events
};

inline SimOutput run_simulation(const SimConfig& config) {
  validate(config);
  SimOutput out;
  out.terms = gen_terms(config);
  out.covariates = gen_covariates(config);
  out.transformed = transform_covariates(out.covariates, config.covariates);
  out.traces = simulate_traces(config, out.transformed.covariates);
  return out;
}

inline Dataset to_dataset(const SimOutput& sim) {
  Dataset ds;
  ds.terms = sim.terms;
  ds.traces = sim.traces;
  ds.covariates = sim.covariates;
  ds.max_epoch = sim.traces.empty() ? 0 : sim.traces[0].max_epoch();
  ds.validate();
  return ds;
}

} // namespace factsurv
