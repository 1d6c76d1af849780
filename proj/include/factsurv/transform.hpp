#pragma once

// Covariate transform pipeline: counts are add-one smoothed and
// log-transformed (ln(x+1)), then z-scored against the dataset with
// population (divisor N) statistics; binary covariates pass through as 0/1.
// The fitted (mean, std) per field are returned so any later run can apply
// the identical transform.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "factsurv/error.hpp"
#include "factsurv/types.hpp"

namespace factsurv {

enum class CovariateKind { continuous_count, binary };

struct CovariateSpec {
  std::string field;
  CovariateKind kind;
};

inline CovariateSpec covariate_spec_from_string(const std::string& s) {
  auto colon = s.find(':');
  std::string field = colon == std::string::npos ? s : s.substr(0, colon);
  std::string kind = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (kind.empty()) {
    kind = (field == "latent" || field == "seen_flag") ? "binary" : "continuous";
  }
  if (kind == "continuous" || kind == "continuous_count") {
    return {field, CovariateKind::continuous_count};
  }
  if (kind == "binary") return {field, CovariateKind::binary};
  throw ConfigError("unknown covariate kind '" + kind + "' for field '" + field + "'");
}

struct FieldTransform {
  std::string field;
  CovariateKind kind;
  double mean = 0.0;   // of ln(x+1); unused for binary
  double stddev = 1.0; // population (divisor N); unused for binary
};

struct TransformResult {
  std::vector<CovariateVector> covariates; // with `transformed` filled
  std::vector<FieldTransform> params;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.field);
    return out;
  }
};

namespace detail {

inline double raw_field_value(const CovariateVector& cv, const std::string& field,
                              CovariateKind kind) {
  if (kind == CovariateKind::binary) {
    if (field == "latent") return cv.latent ? 1.0 : 0.0;
    if (field == "seen_flag") {
      if (!cv.seen_flag.has_value()) {
        throw ValidationError("covariate 'seen_flag' requested but absent for term '" +
                              cv.term_id + "'");
      }
      return *cv.seen_flag ? 1.0 : 0.0;
    }
    throw ConfigError("unknown binary covariate field '" + field + "'");
  }
  if (field == "term_count") return static_cast<double>(cv.term_count);
  if (field == "id_count") return static_cast<double>(cv.id_count);
  if (field == "annotation_count") return static_cast<double>(cv.annotation_count);
  if (field == "latent_dose") return cv.latent_dose;
  throw ConfigError("unknown continuous covariate field '" + field + "'");
}

} // namespace detail

// Applies frozen parameters to one raw record; used both by the pipeline
// itself and to reproduce a previous run's transform from its metadata.
inline std::vector<double> apply_transform(const CovariateVector& raw,
                                           const std::vector<FieldTransform>& params) {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    double v = detail::raw_field_value(raw, p.field, p.kind);
    if (p.kind == CovariateKind::binary) {
      out.push_back(v);
    } else {
      out.push_back((std::log1p(v) - p.mean) / p.stddev);
    }
  }
  return out;
}

inline TransformResult transform_covariates(const std::vector<CovariateVector>& raw,
                                            const std::vector<CovariateSpec>& specs) {
  if (raw.empty()) throw ValidationError("transform_covariates: no covariate rows");
  if (specs.empty()) throw ConfigError("transform_covariates: no covariate specs");

  TransformResult result;
  result.params.reserve(specs.size());
  const double n = static_cast<double>(raw.size());
  for (const auto& spec : specs) {
    FieldTransform ft{spec.field, spec.kind, 0.0, 1.0};
    if (spec.kind == CovariateKind::continuous_count) {
      double sum = 0.0;
      for (const auto& cv : raw) {
        sum += std::log1p(detail::raw_field_value(cv, spec.field, spec.kind));
      }
      ft.mean = sum / n;
      double ss = 0.0;
      for (const auto& cv : raw) {
        double d = std::log1p(detail::raw_field_value(cv, spec.field, spec.kind)) - ft.mean;
        ss += d * d;
      }
      ft.stddev = std::sqrt(ss / n);
      if (!(ft.stddev > 0.0)) {
        throw ValidationError("degenerate covariate " + spec.field);
      }
    } else {
      // validate presence up front so the error names the field, not a term
      for (const auto& cv : raw) detail::raw_field_value(cv, spec.field, spec.kind);
    }
    result.params.push_back(ft);
  }

  result.covariates = raw;
  for (auto& cv : result.covariates) {
    cv.transformed = apply_transform(cv, result.params);
  }
  return result;
}

} // namespace factsurv
