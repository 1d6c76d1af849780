#pragma once

// Cox proportional-hazards regression on the epoch grid: Efron-corrected
// partial likelihood (Breslow kept for cross-checks) maximized by
// Newton-Raphson with step-halving, Wald intervals from the observed
// information, likelihood-ratio test, Harrell concordance, and
// scaled-Schoenfeld proportional-hazards diagnostics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "factsurv/error.hpp"
#include "factsurv/events.hpp"
#include "factsurv/logrank.hpp"
#include "factsurv/stats.hpp"
#include "factsurv/survival.hpp"
#include "factsurv/transform.hpp"

namespace factsurv {

enum class Ties { efron, breslow };

// Design matrix plus outcome, aligned row-by-row. Subjects censored at
// epoch 0 never enter a risk set and are dropped here; subjects without
// covariates are dropped with a count so callers can log it.
struct CoxData {
  std::vector<double> time;
  std::vector<char> observed;
  Eigen::MatrixXd X; // n x p, transformed covariates
  std::vector<std::string> names;
  std::vector<std::string> term_ids;
  int dropped_missing_covariates = 0;
  int dropped_baseline_censored = 0;

  int n() const { return static_cast<int>(time.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int n_events() const {
    return static_cast<int>(std::count(observed.begin(), observed.end(), char(1)));
  }
};

inline CoxData build_design(const std::vector<EventRecord>& cohort,
                            const TransformResult& transformed) {
  std::unordered_map<std::string, const CovariateVector*> by_id;
  for (const auto& cv : transformed.covariates) by_id[cv.term_id] = &cv;

  CoxData data;
  data.names = transformed.names();
  const int p = static_cast<int>(data.names.size());

  std::vector<const EventRecord*> kept;
  std::vector<const CovariateVector*> kept_cov;
  for (const auto& rec : cohort) {
    if (!rec.observed && rec.time == 0) {
      ++data.dropped_baseline_censored;
      continue;
    }
    auto it = by_id.find(rec.term_id);
    if (it == by_id.end() || !it->second->transformed.has_value()) {
      ++data.dropped_missing_covariates;
      continue;
    }
    if (static_cast<int>(it->second->transformed->size()) != p) {
      throw ValidationError("transformed covariates for '" + rec.term_id +
                            "' do not match the configured specs");
    }
    kept.push_back(&rec);
    kept_cov.push_back(it->second);
  }

  const int n = static_cast<int>(kept.size());
  data.time.resize(n);
  data.observed.resize(n);
  data.term_ids.resize(n);
  data.X.resize(n, p);
  for (int i = 0; i < n; ++i) {
    data.time[i] = kept[i]->time;
    data.observed[i] = kept[i]->observed ? 1 : 0;
    data.term_ids[i] = kept[i]->term_id;
    for (int j = 0; j < p; ++j) data.X(i, j) = (*kept_cov[i]->transformed)[j];
  }
  return data;
}

// Partial log-likelihood with analytic score and observed information.
// Exposed so tests can run finite-difference and grid-search checks against
// exactly the quantities the fitter uses.
class CoxPartialLikelihood {
public:
  struct Eval {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
  };

  CoxPartialLikelihood(const CoxData& data, Ties ties = Ties::efron)
      : data_(data), ties_(ties) {
    order_.resize(data.n());
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) {
      return data_.time[a] < data_.time[b];
    });
  }

  Eval evaluate(const Eigen::VectorXd& beta) const {
    const int n = data_.n();
    const int p = data_.p();

    Eigen::VectorXd eta = p > 0 ? Eigen::VectorXd(data_.X * beta)
                                : Eigen::VectorXd::Zero(n);
    // Centering eta leaves the partial likelihood unchanged and keeps the
    // exponentials well scaled.
    if (n > 0) eta.array() -= eta.mean();
    Eigen::VectorXd w = eta.array().exp();

    Eval out;
    out.score = Eigen::VectorXd::Zero(p);
    out.info = Eigen::MatrixXd::Zero(p, p);

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

    int idx = n - 1;
    while (idx >= 0) {
      const double t = data_.time[order_[idx]];
      // absorb every subject with this time into the risk-set sums
      int block_end = idx;
      while (idx >= 0 && data_.time[order_[idx]] == t) {
        int i = order_[idx];
        s0 += w[i];
        if (p > 0) {
          s1 += w[i] * data_.X.row(i).transpose();
          s2 += w[i] * data_.X.row(i).transpose() * data_.X.row(i);
        }
        --idx;
      }

      // tied event set at this time
      int m = 0;
      double sumw_d = 0.0, sum_eta_d = 0.0;
      Eigen::VectorXd s1d = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2d = Eigen::MatrixXd::Zero(p, p);
      Eigen::VectorXd sx = Eigen::VectorXd::Zero(p);
      for (int k = block_end; k > idx; --k) {
        int i = order_[k];
        if (!data_.observed[i]) continue;
        ++m;
        sumw_d += w[i];
        sum_eta_d += eta[i];
        if (p > 0) {
          s1d += w[i] * data_.X.row(i).transpose();
          s2d += w[i] * data_.X.row(i).transpose() * data_.X.row(i);
          sx += data_.X.row(i).transpose();
        }
      }
      if (m == 0) continue;

      out.loglik += sum_eta_d;
      Eigen::VectorXd xbar_sum = Eigen::VectorXd::Zero(p);
      for (int l = 0; l < m; ++l) {
        double f = (ties_ == Ties::efron) ? static_cast<double>(l) / m : 0.0;
        double d0 = s0 - f * sumw_d;
        out.loglik -= std::log(d0);
        if (p > 0) {
          Eigen::VectorXd d1 = s1 - f * s1d;
          Eigen::MatrixXd d2 = s2 - f * s2d;
          Eigen::VectorXd xbar = d1 / d0;
          xbar_sum += xbar;
          out.info += d2 / d0 - xbar * xbar.transpose();
        }
      }
      if (p > 0) out.score += sx - xbar_sum;
    }
    return out;
  }

  double loglik(const Eigen::VectorXd& beta) const { return evaluate(beta).loglik; }

  // Efron-adjusted risk-set weighted covariate means per distinct event time
  // (the subtrahend of the Schoenfeld residual), averaged over the tie set.
  struct EventTimeMean {
    double time;
    Eigen::VectorXd xbar;
  };
  std::vector<EventTimeMean> event_time_means(const Eigen::VectorXd& beta) const {
    const int n = data_.n();
    const int p = data_.p();
    Eigen::VectorXd eta = p > 0 ? Eigen::VectorXd(data_.X * beta)
                                : Eigen::VectorXd::Zero(n);
    if (n > 0) eta.array() -= eta.mean();
    Eigen::VectorXd w = eta.array().exp();

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    std::vector<EventTimeMean> out;

    int idx = n - 1;
    while (idx >= 0) {
      const double t = data_.time[order_[idx]];
      int block_end = idx;
      while (idx >= 0 && data_.time[order_[idx]] == t) {
        int i = order_[idx];
        s0 += w[i];
        if (p > 0) s1 += w[i] * data_.X.row(i).transpose();
        --idx;
      }
      int m = 0;
      double sumw_d = 0.0;
      Eigen::VectorXd s1d = Eigen::VectorXd::Zero(p);
      for (int k = block_end; k > idx; --k) {
        int i = order_[k];
        if (!data_.observed[i]) continue;
        ++m;
        sumw_d += w[i];
        if (p > 0) s1d += w[i] * data_.X.row(i).transpose();
      }
      if (m == 0) continue;
      Eigen::VectorXd xbar_avg = Eigen::VectorXd::Zero(p);
      for (int l = 0; l < m; ++l) {
        double f = (ties_ == Ties::efron) ? static_cast<double>(l) / m : 0.0;
        xbar_avg += (s1 - f * s1d) / (s0 - f * sumw_d);
      }
      xbar_avg /= m;
      out.push_back({t, xbar_avg});
    }
    std::reverse(out.begin(), out.end()); // ascending time
    return out;
  }

private:
  const CoxData& data_;
  Ties ties_;
  std::vector<int> order_;
};

struct CoxOptions {
  Ties ties = Ties::efron;
  int max_iter = 50;
  double loglik_tol = 1e-9;
  double score_tol = 1e-6;
  double alpha = 0.05;
  double beta_bound = 20.0; // |beta| beyond this is treated as separation
};

struct CoxFit {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  std::vector<double> hazard_ratio;
  std::vector<double> se;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<double> wald_z;
  std::vector<double> wald_p;
  Eigen::MatrixXd covariance; // inverse observed information at beta-hat
  double loglik = 0.0;
  double loglik_null = 0.0;
  double lr_stat = 0.0;
  int lr_df = 0;
  double lr_p = 1.0;
  double concordance = 0.5;
  int n = 0;
  int n_events = 0;
  int dropped_missing_covariates = 0;
  int dropped_baseline_censored = 0;
  int iterations = 0;
  bool converged = false;
  Ties ties = Ties::efron;
  double alpha = 0.05;
};

// Harrell's C over comparable pairs: i has an event and j's time is strictly
// later. Ties in risk score count one half.
inline double harrell_concordance(const std::vector<double>& time,
                                  const std::vector<char>& observed,
                                  const std::vector<double>& risk) {
  const int n = static_cast<int>(time.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return time[a] < time[b]; });

  double concordant = 0.0, tied = 0.0, comparable = 0.0;
  for (int a = 0; a < n; ++a) {
    int i = order[a];
    if (!observed[i]) continue;
    // skip past subjects tied with t_i; the rest are strictly later
    int b = a + 1;
    while (b < n && time[order[b]] == time[i]) ++b;
    for (; b < n; ++b) {
      int j = order[b];
      comparable += 1.0;
      if (risk[i] > risk[j]) concordant += 1.0;
      else if (risk[i] == risk[j]) tied += 1.0;
    }
  }
  if (comparable == 0.0) throw ValidationError("concordance undefined: no comparable pairs");
  return (concordant + 0.5 * tied) / comparable;
}

namespace detail {

inline void check_design_rank(const CoxData& data) {
  const int n = data.n();
  const int p = data.p();
  if (p == 0) return;
  Eigen::MatrixXd centered = data.X;
  for (int j = 0; j < p; ++j) {
    double mean = centered.col(j).mean();
    centered.col(j).array() -= mean;
    if (centered.col(j).lpNorm<Eigen::Infinity>() == 0.0) {
      throw ValidationError("rank deficiency: covariate '" + data.names[j] + "' is constant");
    }
  }
  if (n < p) throw ValidationError("rank deficiency: fewer subjects than covariates");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    const auto& perm = qr.colsPermutation().indices();
    std::string cols;
    for (int j = qr.rank(); j < p; ++j) {
      if (!cols.empty()) cols += ", ";
      cols += data.names[perm[j]];
    }
    throw ValidationError("rank deficiency: collinear covariates: " + cols);
  }
}

} // namespace detail

inline CoxFit cox_fit(const CoxData& data, const CoxOptions& options = {}) {
  if (data.n_events() < 1) throw ValidationError("no events in cohort");
  detail::check_design_rank(data);

  const int p = data.p();
  CoxPartialLikelihood pl(data, options.ties);

  CoxFit fit;
  fit.names = data.names;
  fit.ties = options.ties;
  fit.alpha = options.alpha;
  fit.n = data.n();
  fit.n_events = data.n_events();
  fit.dropped_missing_covariates = data.dropped_missing_covariates;
  fit.dropped_baseline_censored = data.dropped_baseline_censored;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  auto cur = pl.evaluate(beta);
  fit.loglik_null = cur.loglik;

  if (p == 0) {
    fit.beta = beta;
    fit.loglik = cur.loglik;
    fit.covariance = Eigen::MatrixXd(0, 0);
    fit.converged = true;
    fit.concordance = 0.5;
    return fit;
  }

  double last_delta = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    fit.iterations = iter;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.info);
    Eigen::VectorXd step = ldlt.solve(cur.score);
    if (!step.allFinite()) {
      throw ConvergenceError("cox_fit: singular information matrix at iteration " +
                             std::to_string(iter));
    }

    double scale = 1.0;
    Eigen::VectorXd candidate;
    CoxPartialLikelihood::Eval next;
    for (int h = 0; h <= 10; ++h) {
      candidate = beta + scale * step;
      next = pl.evaluate(candidate);
      if (std::isfinite(next.loglik) &&
          next.loglik >= cur.loglik - 1e-13 * std::max(1.0, std::fabs(cur.loglik))) {
        break;
      }
      scale *= 0.5;
    }

    int worst;
    if (candidate.cwiseAbs().maxCoeff(&worst) > options.beta_bound) {
      throw ConvergenceError("complete separation for " + data.names[worst] +
                             " (coefficient diverging)");
    }

    last_delta = next.loglik - cur.loglik;
    beta = candidate;
    cur = next;
    if (std::fabs(last_delta) < options.loglik_tol &&
        cur.score.lpNorm<Eigen::Infinity>() < options.score_tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) {
    throw ConvergenceError("cox_fit: no convergence after " + std::to_string(fit.iterations) +
                           " iterations (|dlogL| = " + std::to_string(std::fabs(last_delta)) +
                           ", max|score| = " +
                           std::to_string(cur.score.lpNorm<Eigen::Infinity>()) + ")");
  }

  fit.beta = beta;
  fit.loglik = cur.loglik;
  fit.covariance = cur.info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));

  const double z = z_critical(options.alpha);
  fit.hazard_ratio.resize(p);
  fit.se.resize(p);
  fit.ci_low.resize(p);
  fit.ci_high.resize(p);
  fit.wald_z.resize(p);
  fit.wald_p.resize(p);
  for (int j = 0; j < p; ++j) {
    fit.hazard_ratio[j] = std::exp(beta[j]);
    fit.se[j] = std::sqrt(fit.covariance(j, j));
    fit.ci_low[j] = std::exp(beta[j] - z * fit.se[j]);
    fit.ci_high[j] = std::exp(beta[j] + z * fit.se[j]);
    fit.wald_z[j] = beta[j] / fit.se[j];
    fit.wald_p[j] = normal_two_sided_p(fit.wald_z[j]);
  }

  fit.lr_stat = 2.0 * (fit.loglik - fit.loglik_null);
  if (fit.lr_stat < 0.0 && fit.lr_stat > -1e-10) fit.lr_stat = 0.0;
  fit.lr_df = p;
  fit.lr_p = fit.lr_df > 0 ? chi_squared_sf(fit.lr_stat, fit.lr_df) : 1.0;

  std::vector<double> risk(data.n());
  Eigen::VectorXd eta = data.X * beta;
  for (int i = 0; i < data.n(); ++i) risk[i] = eta[i];
  fit.concordance = harrell_concordance(data.time, data.observed, risk);
  return fit;
}

inline TestResult lr_test(const CoxFit& fit) {
  if (!fit.converged) throw ValidationError("lr_test: fit did not converge");
  TestResult out;
  out.statistic = fit.lr_stat;
  out.df = fit.lr_df;
  out.p_value = fit.lr_df > 0 ? chi_squared_sf(fit.lr_stat, fit.lr_df) : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Proportional-hazards diagnostics (scaled Schoenfeld residuals)
// ---------------------------------------------------------------------------

enum class TimeTransform { identity, rank, km };

inline const char* to_string(TimeTransform t) {
  switch (t) {
  case TimeTransform::identity: return "identity";
  case TimeTransform::rank: return "rank";
  case TimeTransform::km: return "km";
  }
  return "identity";
}

struct PhTest {
  std::string name;
  double chi2 = 0.0;
  int df = 1;
  double p = 1.0;
  bool defined = true;
  std::string reason;
};

struct PHDiagnostics {
  std::vector<PhTest> per_covariate;
  PhTest global;
  Eigen::MatrixXd residuals;        // n_events x p, unscaled Schoenfeld
  Eigen::MatrixXd scaled_residuals; // d * V * r + beta-hat, per event
  std::vector<double> event_times;  // one per event row, ascending
  TimeTransform transform = TimeTransform::identity;
};

inline PHDiagnostics schoenfeld_test(const CoxData& data, const CoxFit& fit,
                                     TimeTransform transform = TimeTransform::identity) {
  if (!fit.converged) throw ValidationError("schoenfeld_test: fit did not converge");
  const int p = data.p();
  const int d = data.n_events();
  if (d < 2) throw ValidationError("schoenfeld_test: need >= 2 events");

  CoxPartialLikelihood pl(data, fit.ties);
  auto means = pl.event_time_means(fit.beta);

  // event rows ascending by time, then by subject order for determinism
  std::vector<int> event_rows;
  for (int i = 0; i < data.n(); ++i) {
    if (data.observed[i]) event_rows.push_back(i);
  }
  std::stable_sort(event_rows.begin(), event_rows.end(),
                   [&](int a, int b) { return data.time[a] < data.time[b]; });

  PHDiagnostics diag;
  diag.transform = transform;
  diag.residuals.resize(d, p);
  diag.scaled_residuals.resize(d, p);
  diag.event_times.resize(d);

  std::size_t mi = 0;
  for (int r = 0; r < d; ++r) {
    int i = event_rows[r];
    double t = data.time[i];
    while (mi < means.size() && means[mi].time < t) ++mi;
    diag.event_times[r] = t;
    diag.residuals.row(r) = data.X.row(i) - means[mi].xbar.transpose();
    diag.scaled_residuals.row(r) =
        (static_cast<double>(d) * (fit.covariance * diag.residuals.row(r).transpose()) +
         fit.beta)
            .transpose();
  }

  // transformed, centered event times
  Eigen::VectorXd g(d);
  switch (transform) {
  case TimeTransform::identity:
    for (int r = 0; r < d; ++r) g[r] = diag.event_times[r];
    break;
  case TimeTransform::rank: {
    // average ranks over ties
    int r = 0;
    while (r < d) {
      int r2 = r;
      while (r2 < d && diag.event_times[r2] == diag.event_times[r]) ++r2;
      double avg = 0.5 * (r + 1 + r2); // mean of ranks r+1 .. r2
      for (int q = r; q < r2; ++q) g[q] = avg;
      r = r2;
    }
    break;
  }
  case TimeTransform::km: {
    std::vector<EventRecord> recs(data.n());
    for (int i = 0; i < data.n(); ++i) {
      recs[i].term_id = data.term_ids.empty() ? std::to_string(i) : data.term_ids[i];
      recs[i].time = static_cast<int>(data.time[i]);
      recs[i].observed = data.observed[i];
    }
    SurvivalCurve km = km_fit(recs, fit.alpha);
    for (int r = 0; r < d; ++r) g[r] = 1.0 - km.survival_at(diag.event_times[r]);
    break;
  }
  }
  g.array() -= g.mean();
  const double gss = g.squaredNorm();

  auto undefined = [&](const std::string& name, const std::string& reason) {
    PhTest t;
    t.name = name;
    t.defined = false;
    t.reason = reason;
    return t;
  };

  if (gss <= 0.0) {
    for (int j = 0; j < p; ++j) {
      diag.per_covariate.push_back(undefined(data.names[j], "all events share a single time"));
    }
    diag.global = undefined("global", "all events share a single time");
    diag.global.df = p;
    return diag;
  }

  // Grambsch-Therneau: w = sum_j g_j r_j; per-covariate and global forms.
  Eigen::VectorXd w = diag.residuals.transpose() * g;
  Eigen::VectorXd vw = fit.covariance * w;
  for (int j = 0; j < p; ++j) {
    double vkk = fit.covariance(j, j);
    if (!(vkk > 0.0)) {
      diag.per_covariate.push_back(undefined(data.names[j], "non-positive variance estimate"));
      continue;
    }
    PhTest t;
    t.name = data.names[j];
    t.chi2 = static_cast<double>(d) * vw[j] * vw[j] / (vkk * gss);
    t.df = 1;
    t.p = chi_squared_sf(t.chi2, 1);
    diag.per_covariate.push_back(t);
  }
  diag.global.name = "global";
  diag.global.chi2 = static_cast<double>(d) * w.dot(vw) / gss;
  diag.global.df = p;
  diag.global.p = chi_squared_sf(diag.global.chi2, p);
  return diag;
}

} // namespace factsurv
