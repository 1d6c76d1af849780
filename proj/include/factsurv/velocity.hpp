#pragma once

// Accumulation velocity V(t) = dF/dt from a Gaussian-smoothed F(t): the curve
// is sampled on the integer epoch grid, convolved with a truncated discrete
// Gaussian (radius ceil(4*sigma), weights renormalized, reflected at the
// boundaries), and differentiated with central differences (one-sided at the
// ends). Under trapezoidal quadrature the integral of V telescopes exactly
// to F_smooth(E) - F_smooth(0).

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "factsurv/error.hpp"
#include "factsurv/survival.hpp"

namespace factsurv {

// Half-sample symmetric reflection: index -1 -> 0, -2 -> 1, n -> n-1, ...
// matching the reference smoothing routine's default boundary mode.
inline std::size_t reflect_index(long long i, std::size_t n) {
  const long long period = 2 * static_cast<long long>(n);
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long long>(n) ? m : period - 1 - m);
}

inline std::vector<double> gaussian_smooth(const std::vector<double>& values, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_smooth: sigma must be > 0");
  if (values.empty()) return {};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * (k / sigma) * (k / sigma));
    sum += kernel[k + radius];
  }
  for (auto& w : kernel) w /= sum;

  const std::size_t n = values.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      acc += kernel[k + radius] * values[reflect_index(static_cast<long long>(i) + k, n)];
    }
    out[i] = acc;
  }
  return out;
}

inline std::vector<double> smooth_accumulation(const SurvivalCurve& curve, int max_epoch,
                                               double sigma) {
  return gaussian_smooth(sample_accumulation(curve, max_epoch), sigma);
}

// Central differences on the unit epoch grid, one-sided at the ends.
inline std::vector<double> velocity(const std::vector<double>& f_smooth) {
  const std::size_t n = f_smooth.size();
  if (n < 3) throw ValidationError("velocity: grid must have >= 3 points");
  std::vector<double> v(n);
  v[0] = f_smooth[1] - f_smooth[0];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    v[i] = 0.5 * (f_smooth[i + 1] - f_smooth[i - 1]);
  }
  v[n - 1] = f_smooth[n - 1] - f_smooth[n - 2];
  return v;
}

struct VelocitySummary {
  double peak_velocity = 0.0;
  int peak_epoch = 0;
  std::optional<int> convergence_epoch; // first epoch after the peak with V < epsilon
};

inline VelocitySummary summarize(const std::vector<double>& v, double epsilon) {
  VelocitySummary out;
  if (v.empty()) return out;
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[argmax]) argmax = i; // first index wins on ties
  }
  out.peak_velocity = v[argmax];
  out.peak_epoch = static_cast<int>(argmax);
  for (std::size_t i = argmax + 1; i < v.size(); ++i) {
    if (v[i] < epsilon) {
      out.convergence_epoch = static_cast<int>(i);
      break;
    }
  }
  return out;
}

struct VelocityCurve {
  std::vector<int> epochs;
  std::vector<double> f_raw;
  std::vector<double> f_smooth;
  std::vector<double> v;
  double sigma = 1.0;
  double epsilon = 1e-3;
  VelocitySummary summary;
};

inline VelocityCurve velocity_curve(const SurvivalCurve& curve, int max_epoch, double sigma,
                                    double epsilon) {
  VelocityCurve out;
  out.sigma = sigma;
  out.epsilon = epsilon;
  out.epochs.resize(max_epoch + 1);
  for (int e = 0; e <= max_epoch; ++e) out.epochs[e] = e;
  out.f_raw = sample_accumulation(curve, max_epoch);
  out.f_smooth = gaussian_smooth(out.f_raw, sigma);
  out.v = velocity(out.f_smooth);
  out.summary = summarize(out.v, epsilon);
  return out;
}

// Trapezoidal integral of V over the grid; the discrete counterpart of
// integrating dF/dt.
inline double integrate_velocity(const std::vector<double>& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) acc += 0.5 * (v[i] + v[i + 1]);
  return acc;
}

} // namespace factsurv
