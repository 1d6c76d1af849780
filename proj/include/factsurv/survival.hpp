#pragma once

// Product-limit estimation: Kaplan-Meier S(t) with Greenwood variance and
// log-log confidence intervals, Nelson-Aalen cumulative hazard, discrete
// hazard d/n, the accumulation curve F(t) = 1 - S(t), and restricted-mean
// event times.
//
// Conventions: at a tied epoch, events are processed before censorings;
// subjects censored at epoch 0 reduce the initial risk set and are never at
// risk afterwards. Where S reaches 1 or 0 the log-log interval is undefined
// and the bound collapses to the point value, flagged per row.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "factsurv/error.hpp"
#include "factsurv/events.hpp"
#include "factsurv/stats.hpp"

namespace factsurv {

struct SurvivalCurve {
  std::vector<int> times;      // ascending epochs with >= 1 event or censor
  std::vector<int> at_risk;    // n_j just before the step
  std::vector<int> events;     // d_j
  std::vector<int> censored;   // c_j
  std::vector<double> survival;
  std::vector<double> variance;     // Greenwood
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<bool> ci_degenerate;  // S at 1 or 0: point interval
  std::vector<double> cum_hazard;   // Nelson-Aalen
  std::vector<double> hazard;       // d_j / n_j
  std::vector<double> accumulation; // 1 - S
  double alpha = 0.05;
  int n_subjects = 0;

  std::size_t size() const { return times.size(); }

  // Right-continuous step lookup: value of S at epoch t.
  double survival_at(double t) const {
    double s = 1.0;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (times[j] <= t) s = survival[j];
      else break;
    }
    return s;
  }
  double accumulation_at(double t) const { return 1.0 - survival_at(t); }

  int max_time() const { return times.empty() ? 0 : times.back(); }
};

inline SurvivalCurve km_fit(const std::vector<EventRecord>& cohort, double alpha = 0.05) {
  if (cohort.empty()) throw ValidationError("km_fit: empty cohort");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("km_fit: alpha must be in (0,1)");

  std::map<int, std::pair<int, int>> counts; // time -> (events, censored)
  for (const auto& rec : cohort) {
    if (rec.time < 0) throw ValidationError("km_fit: negative event time");
    auto& [d, c] = counts[rec.time];
    if (rec.observed) ++d;
    else ++c;
  }

  const double z = z_critical(alpha);
  SurvivalCurve curve;
  curve.alpha = alpha;
  curve.n_subjects = static_cast<int>(cohort.size());

  int at_risk = curve.n_subjects;
  double s = 1.0;
  double greenwood_sum = 0.0; // sum d / (n (n - d))
  double na_sum = 0.0;        // sum d / n
  bool absorbed = false;      // S hit exactly 0

  for (const auto& [time, dc] : counts) {
    const auto [d, c] = dc;
    curve.times.push_back(time);
    curve.at_risk.push_back(at_risk);
    curve.events.push_back(d);
    curve.censored.push_back(c);

    if (d > 0) {
      na_sum += static_cast<double>(d) / at_risk;
      if (d < at_risk) {
        greenwood_sum += static_cast<double>(d) /
                         (static_cast<double>(at_risk) * (at_risk - d));
        s *= 1.0 - static_cast<double>(d) / at_risk;
      } else {
        s = 0.0;
        absorbed = true;
      }
    }
    curve.survival.push_back(s);
    curve.hazard.push_back(at_risk > 0 ? static_cast<double>(d) / at_risk : 0.0);
    curve.cum_hazard.push_back(na_sum);
    curve.accumulation.push_back(1.0 - s);

    double var = absorbed ? 0.0 : s * s * greenwood_sum;
    curve.variance.push_back(var);

    if (s >= 1.0 || s <= 0.0 || var <= 0.0) {
      curve.ci_lower.push_back(s);
      curve.ci_upper.push_back(s);
      curve.ci_degenerate.push_back(true);
    } else {
      double log_s = std::log(s);
      double se_loglog = std::sqrt(var) / (s * std::fabs(log_s));
      double theta = std::log(-log_s);
      double lo = std::exp(-std::exp(theta + z * se_loglog));
      double hi = std::exp(-std::exp(theta - z * se_loglog));
      curve.ci_lower.push_back(std::clamp(lo, 0.0, 1.0));
      curve.ci_upper.push_back(std::clamp(hi, 0.0, 1.0));
      curve.ci_degenerate.push_back(false);
    }

    at_risk -= d + c;
  }
  return curve;
}

struct RestrictedMean {
  double mean = 0.0;
  double se = 0.0;
  double tau = 0.0;
};

// Area under S on [0, tau], computed exactly on the step function; the
// variance is the classic sum of squared forward areas times Greenwood
// increments. S carries forward past the last observed time.
inline RestrictedMean restricted_mean_time(const SurvivalCurve& curve, double tau) {
  if (!(tau > 0.0)) throw ConfigError("restricted_mean_time: tau must be > 0");

  // Piecewise-constant segments of S on [0, tau].
  struct Seg { double start, value; };
  std::vector<Seg> segs;
  segs.push_back({0.0, 1.0});
  for (std::size_t j = 0; j < curve.size(); ++j) {
    if (curve.times[j] >= tau) break;
    if (curve.events[j] > 0) {
      segs.push_back({static_cast<double>(curve.times[j]), curve.survival[j]});
    }
  }

  auto area_from = [&](double t0) {
    double area = 0.0;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      double lo = std::max(segs[k].start, t0);
      double hi = (k + 1 < segs.size()) ? std::min(segs[k + 1].start, tau) : tau;
      if (hi > lo) area += (hi - lo) * segs[k].value;
    }
    return area;
  };

  RestrictedMean out;
  out.tau = tau;
  out.mean = area_from(0.0);

  double var = 0.0;
  for (std::size_t j = 0; j < curve.size(); ++j) {
    if (curve.times[j] > tau) break;
    int d = curve.events[j];
    int n = curve.at_risk[j];
    if (d == 0) continue;
    double a = area_from(static_cast<double>(curve.times[j]));
    if (a == 0.0) continue; // S already absorbed at 0 beyond this point
    if (d < n) var += a * a * static_cast<double>(d) / (static_cast<double>(n) * (n - d));
  }
  out.se = std::sqrt(var);
  return out;
}

// F sampled on the integer epoch grid 0..max_epoch (right-continuous step).
inline std::vector<double> sample_accumulation(const SurvivalCurve& curve, int max_epoch) {
  if (max_epoch < 0) throw ConfigError("sample_accumulation: max_epoch must be >= 0");
  std::vector<double> f(max_epoch + 1, 0.0);
  std::size_t j = 0;
  double s = 1.0;
  for (int e = 0; e <= max_epoch; ++e) {
    while (j < curve.size() && curve.times[j] <= e) {
      s = curve.survival[j];
      ++j;
    }
    f[e] = 1.0 - s;
  }
  return f;
}

// Per-epoch F(t) differences between two curves covering the same epoch
// range; plumbing for stratified figures.
inline std::vector<double> curve_difference_summary(const SurvivalCurve& a,
                                                    const SurvivalCurve& b) {
  if (a.times.empty() || b.times.empty()) {
    throw ValidationError("curve_difference_summary: empty curve");
  }
  if (a.max_time() != b.max_time()) {
    throw ValidationError("curve_difference_summary: mismatched epoch grids (" +
                          std::to_string(a.max_time()) + " vs " +
                          std::to_string(b.max_time()) + ")");
  }
  int e_max = a.max_time();
  auto fa = sample_accumulation(a, e_max);
  auto fb = sample_accumulation(b, e_max);
  std::vector<double> delta(fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) delta[i] = fa[i] - fb[i];
  return delta;
}

} // namespace factsurv
