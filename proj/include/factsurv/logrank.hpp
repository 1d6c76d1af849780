#pragma once

// Mantel-Cox log-rank test across two or more strata. Expected counts use
// the pooled hypergeometric at each distinct event time; time points with a
// single subject at risk contribute neither deviation nor variance.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "factsurv/error.hpp"
#include "factsurv/events.hpp"
#include "factsurv/stats.hpp"

namespace factsurv {

struct GroupSummary {
  std::string name;
  double observed = 0.0;
  double expected = 0.0;
  int n = 0;
};

struct TestResult {
  double statistic = 0.0;
  int df = 1;
  double p_value = 1.0;
  std::vector<GroupSummary> groups;
  bool no_events = false;
};

inline TestResult logrank_test(const std::map<std::string, std::vector<EventRecord>>& cohorts) {
  const int k = static_cast<int>(cohorts.size());
  if (k < 2) throw ValidationError("logrank_test: need >= 2 groups");
  for (const auto& [name, recs] : cohorts) {
    if (recs.empty()) throw ValidationError("logrank_test: empty group '" + name + "'");
  }

  std::vector<std::string> names;
  std::vector<const std::vector<EventRecord>*> groups;
  for (const auto& [name, recs] : cohorts) {
    names.push_back(name);
    groups.push_back(&recs);
  }

  // d_g and c_g per group per time; pooled event times drive the sums.
  std::set<int> event_times;
  std::vector<std::map<int, int>> d_at(k), removed_at(k);
  std::vector<int> group_n(k, 0);
  for (int g = 0; g < k; ++g) {
    group_n[g] = static_cast<int>(groups[g]->size());
    for (const auto& rec : *groups[g]) {
      removed_at[g][rec.time] += 1;
      if (rec.observed) {
        d_at[g][rec.time] += 1;
        event_times.insert(rec.time);
      }
    }
  }

  TestResult result;
  result.df = k - 1;
  for (int g = 0; g < k; ++g) {
    result.groups.push_back({names[g], 0.0, 0.0, group_n[g]});
  }

  if (event_times.empty()) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    result.no_events = true;
    return result;
  }

  // n_g(t) = #{i in g : t_i >= t}; walk times ascending, removing subjects
  // once their time has passed.
  std::vector<double> at_risk(k);
  for (int g = 0; g < k; ++g) at_risk[g] = group_n[g];
  std::vector<std::map<int, int>::const_iterator> rem_it(k);
  for (int g = 0; g < k; ++g) rem_it[g] = removed_at[g].cbegin();

  Eigen::VectorXd dev = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);

  for (int t : event_times) {
    for (int g = 0; g < k; ++g) {
      while (rem_it[g] != removed_at[g].cend() && rem_it[g]->first < t) {
        at_risk[g] -= rem_it[g]->second;
        ++rem_it[g];
      }
    }
    double n = 0.0, d = 0.0;
    std::vector<double> dg(k, 0.0);
    for (int g = 0; g < k; ++g) {
      n += at_risk[g];
      auto it = d_at[g].find(t);
      if (it != d_at[g].end()) dg[g] = it->second;
      d += dg[g];
    }
    if (d <= 0.0) continue;
    for (int g = 0; g < k; ++g) {
      double e = d * at_risk[g] / n;
      result.groups[g].observed += dg[g];
      result.groups[g].expected += e;
    }
    if (n <= 1.0) continue; // lone subject: no variance, no deviation
    for (int g = 0; g < k; ++g) {
      dev[g] += dg[g] - d * at_risk[g] / n;
      for (int h = 0; h < k; ++h) {
        double delta = (g == h) ? at_risk[g] / n : 0.0;
        cov(g, h) += d * (n - d) / (n - 1.0) * (delta - at_risk[g] * at_risk[h] / (n * n));
      }
    }
  }

  // Quadratic form on the first k-1 components (the full covariance is
  // singular by construction).
  Eigen::VectorXd v = dev.head(k - 1);
  Eigen::MatrixXd m = cov.topLeftCorner(k - 1, k - 1);
  double stat = 0.0;
  if (v.lpNorm<Eigen::Infinity>() > 0.0) {
    Eigen::VectorXd x = m.completeOrthogonalDecomposition().solve(v);
    stat = v.dot(x);
    if (!(stat > 0.0)) stat = 0.0;
  }
  result.statistic = stat;
  result.p_value = chi_squared_sf(stat, result.df);
  return result;
}

} // namespace factsurv
