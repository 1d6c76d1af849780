#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "factsurv/cox.hpp"
#include "factsurv/simulate.hpp"
#include "oracles.hpp"

using namespace factsurv;

namespace {

CoxData four_subject_data() {
  // events at t=1 (x=1), 2 (x=0), 3 (x=1), 4 (x=0); no censoring, no ties;
  // the score equation reduces to u^2 - u - 4 = 0 with u = exp(beta)
  CoxData data;
  data.time = {1, 2, 3, 4};
  data.observed = {1, 1, 1, 1};
  data.X.resize(4, 1);
  data.X << 1, 0, 1, 0;
  data.names = {"x"};
  data.term_ids = {"a", "b", "c", "d"};
  return data;
}

const double kFourSubjectBeta = std::log((1.0 + std::sqrt(17.0)) / 2.0);

} // namespace

TEST_CASE("closed-form 4-subject fixture", "[cox]") {
  auto fit = cox_fit(four_subject_data());
  REQUIRE(fit.converged);
  CHECK(fit.beta[0] == Catch::Approx(kFourSubjectBeta).margin(1e-8));
  CHECK(fit.hazard_ratio[0] == Catch::Approx(std::exp(kFourSubjectBeta)).margin(1e-6));
  CHECK(fit.hazard_ratio[0] == Catch::Approx(2.5616).margin(1e-3));
  CHECK(fit.loglik >= fit.loglik_null);
  CHECK(std::fabs(fit.hazard_ratio[0] - std::exp(fit.beta[0])) < 1e-12);
}

TEST_CASE("lr statistic is twice the log-likelihood gap", "[cox]") {
  auto data = four_subject_data();
  auto fit = cox_fit(data);
  CoxPartialLikelihood pl(data);
  Eigen::VectorXd bhat(1), zero(1);
  bhat[0] = fit.beta[0];
  zero[0] = 0.0;
  double direct = 2.0 * (pl.loglik(bhat) - pl.loglik(zero));
  CHECK(fit.lr_stat == Catch::Approx(direct).margin(1e-10));
  auto lr = lr_test(fit);
  CHECK(lr.df == 1);
  CHECK(lr.p_value == Catch::Approx(chi_squared_sf(direct, 1)).margin(1e-12));
}

TEST_CASE("constant covariate columns are rejected", "[cox]") {
  auto data = four_subject_data();
  data.X.col(0).setConstant(1.0);
  CHECK_THROWS_WITH(cox_fit(data), Catch::Matchers::ContainsSubstring("rank deficiency"));
}

TEST_CASE("collinear columns are rejected by name", "[cox]") {
  CoxData data;
  data.time = {1, 2, 3, 4, 5};
  data.observed = {1, 1, 1, 0, 1};
  data.X.resize(5, 2);
  data.X << 1, 2, 0, 0, 1, 2, 0, 0, 1, 2;
  data.names = {"a", "b"};
  CHECK_THROWS_WITH(cox_fit(data), Catch::Matchers::ContainsSubstring("collinear"));
}

TEST_CASE("monotone likelihood raises a separation error", "[cox]") {
  CoxData data;
  data.time = {1, 2, 3, 4, 5, 6};
  data.observed = {1, 1, 1, 1, 1, 1};
  data.X.resize(6, 1);
  data.X << 5, 4, 3, 2, 1, 0; // risk strictly anti-ordered with time
  data.names = {"sep"};
  CHECK_THROWS_WITH(cox_fit(data), Catch::Matchers::ContainsSubstring("complete separation"));
}

TEST_CASE("no events is an error", "[cox]") {
  CoxData data;
  data.time = {1, 2};
  data.observed = {0, 0};
  data.X.resize(2, 1);
  data.X << 0, 1;
  data.names = {"x"};
  CHECK_THROWS_WITH(cox_fit(data), Catch::Matchers::ContainsSubstring("no events"));
}

TEST_CASE("beta matches grid-search oracle on no-ties fixtures", "[cox]") {
  std::mt19937 rng(2024);
  int done = 0;
  while (done < 25) {
    int p = 1 + (done % 2);
    auto data = oracles::random_noties_cox_data(rng, 6 + done % 5, p);
    CoxFit fit;
    try {
      fit = cox_fit(data);
    } catch (const Error&) {
      continue; // separable or degenerate draw; the oracle needs an interior max
    }
    auto oracle = oracles::cox_oracle_beta(data);
    for (int j = 0; j < p; ++j) {
      CHECK(fit.beta[j] == Catch::Approx(oracle[j]).margin(1e-4));
    }
    ++done;
  }
}

TEST_CASE("analytic score and information match finite differences", "[cox]") {
  std::mt19937 rng(55);
  auto data = oracles::random_noties_cox_data(rng, 40, 2);
  CoxPartialLikelihood pl(data);
  std::uniform_real_distribution<double> b_dist(-1.0, 1.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd beta(2);
    beta << b_dist(rng), b_dist(rng);
    auto eval = pl.evaluate(beta);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd up = beta, dn = beta;
      up[j] += h;
      dn[j] -= h;
      double fd = (pl.loglik(up) - pl.loglik(dn)) / (2.0 * h);
      CHECK(std::fabs(eval.score[j] - fd) / std::max(1.0, std::fabs(fd)) < 1e-6);
      auto up_eval = pl.evaluate(up);
      auto dn_eval = pl.evaluate(dn);
      for (int k = 0; k < 2; ++k) {
        double fd_hess = -(up_eval.score[k] - dn_eval.score[k]) / (2.0 * h);
        CHECK(std::fabs(eval.info(j, k) - fd_hess) / std::max(1.0, std::fabs(fd_hess)) < 1e-4);
      }
    }
  }
}

TEST_CASE("Efron and Breslow agree exactly without ties", "[cox]") {
  std::mt19937 rng(99);
  for (int it = 0; it < 10; ++it) {
    auto data = oracles::random_noties_cox_data(rng, 25, 2);
    CoxPartialLikelihood efron(data, Ties::efron);
    CoxPartialLikelihood breslow(data, Ties::breslow);
    std::uniform_real_distribution<double> b_dist(-1.5, 1.5);
    Eigen::VectorXd beta(2);
    beta << b_dist(rng), b_dist(rng);
    CHECK(std::fabs(efron.loglik(beta) - breslow.loglik(beta)) < 1e-12);
  }
}

TEST_CASE("Efron and Breslow differ on tied data", "[cox]") {
  CoxData data;
  data.time = {1, 1, 2, 3};
  data.observed = {1, 1, 1, 0};
  data.X.resize(4, 1);
  data.X << 1, 0, 1, 0;
  data.names = {"x"};
  CoxPartialLikelihood efron(data, Ties::efron);
  CoxPartialLikelihood breslow(data, Ties::breslow);
  Eigen::VectorXd beta(1);
  beta[0] = 0.7;
  CHECK(std::fabs(efron.loglik(beta) - breslow.loglik(beta)) > 1e-6);
}

TEST_CASE("shift and scale invariance of the design", "[cox]") {
  std::mt19937 rng(4242);
  auto data = oracles::random_noties_cox_data(rng, 30, 2);
  auto fit = cox_fit(data);

  auto shifted = data;
  shifted.X.col(0).array() += 13.5;
  auto fit_shift = cox_fit(shifted);
  CHECK(fit_shift.beta[0] == Catch::Approx(fit.beta[0]).margin(1e-8));
  CHECK(fit_shift.beta[1] == Catch::Approx(fit.beta[1]).margin(1e-8));

  auto scaled = data;
  scaled.X.col(1) *= 4.0;
  auto fit_scale = cox_fit(scaled);
  CHECK(fit_scale.beta[1] == Catch::Approx(fit.beta[1] / 4.0).margin(1e-8));
}

TEST_CASE("concordance handles perfect, tied, and oracle cases", "[cox]") {
  // risk scores strictly anti-ordered with event times: perfect ranking
  std::vector<double> time = {1, 2, 3, 4, 5};
  std::vector<char> observed = {1, 1, 1, 1, 1};
  std::vector<double> risk = {5, 4, 3, 2, 1};
  CHECK(harrell_concordance(time, observed, risk) == 1.0);

  std::vector<double> flat = {2, 2, 2, 2, 2};
  CHECK(harrell_concordance(time, observed, flat) == 0.5);

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 30; ++it) {
    auto data = oracles::random_noties_cox_data(rng, 5 + it % 6, 1);
    std::vector<double> scores(data.n());
    for (auto& s : scores) s = std::floor(u(rng) * 4.0); // coarse scores force ties
    bool any_comparable = true;
    double got = 0.0, want = 0.0;
    try {
      got = harrell_concordance(data.time, data.observed, scores);
    } catch (const ValidationError&) {
      any_comparable = false;
    }
    if (any_comparable) {
      want = oracles::concordance_oracle(data.time, data.observed, scores);
      CHECK(got == Catch::Approx(want).margin(1e-12));
    }
  }

  std::vector<double> single_time = {3};
  std::vector<char> single_obs = {1};
  std::vector<double> single_risk = {0.0};
  CHECK_THROWS_WITH(harrell_concordance(single_time, single_obs, single_risk),
                    Catch::Matchers::ContainsSubstring("concordance undefined"));
}

TEST_CASE("schoenfeld residuals sum to zero at the fit", "[cox]") {
  std::mt19937 rng(808);
  auto data = oracles::random_noties_cox_data(rng, 40, 2);
  auto fit = cox_fit(data);
  auto diag = schoenfeld_test(data, fit);
  Eigen::VectorXd sums = diag.residuals.colwise().sum();
  for (int j = 0; j < 2; ++j) {
    CHECK(std::fabs(sums[j]) < 1e-8 * data.n_events());
  }
  CHECK(diag.residuals.rows() == data.n_events());
  CHECK(static_cast<int>(diag.event_times.size()) == data.n_events());
}

TEST_CASE("schoenfeld test is calibrated under proportional hazards", "[cox]") {
  // smaller desk check than the acceptance run: 30 seeds, expect almost no
  // rejections at alpha = 0.01
  int rejections = 0, runs = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    SimConfig config;
    config.n_terms = 250;
    config.max_epoch = 20;
    config.baseline_hazard = {0.05};
    config.covariates = {{"latent", CovariateKind::binary},
                         {"id_count", CovariateKind::continuous_count}};
    config.beta_true = {std::log(2.0), 0.2};
    config.seed = seed;
    auto sim = run_simulation(config);
    auto ds = to_dataset(sim);
    auto cohort = build_cohort(ds, EventKind::acquisition);
    auto data = build_design(cohort, sim.transformed);
    CoxFit fit;
    try {
      fit = cox_fit(data);
    } catch (const Error&) {
      continue;
    }
    auto diag = schoenfeld_test(data, fit);
    ++runs;
    for (const auto& t : diag.per_covariate) {
      if (t.defined && t.p < 0.01) {
        ++rejections;
        break;
      }
    }
  }
  REQUIRE(runs >= 25);
  CHECK(rejections <= 3);
}

TEST_CASE("schoenfeld test detects a sign-flipping effect", "[cox]") {
  int rejections = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimConfig config;
    config.n_terms = 400;
    config.max_epoch = 20;
    config.baseline_hazard = {0.06};
    config.covariates = {{"latent", CovariateKind::binary}};
    config.beta_true = {1.2};
    config.flip_epoch = 10;
    config.seed = seed;
    auto sim = run_simulation(config);
    auto ds = to_dataset(sim);
    auto cohort = build_cohort(ds, EventKind::acquisition);
    auto data = build_design(cohort, sim.transformed);
    auto fit = cox_fit(data);
    auto diag = schoenfeld_test(data, fit);
    if (diag.global.defined && diag.global.p < 0.01) ++rejections;
  }
  CHECK(rejections >= 9);
}

TEST_CASE("subjects censored at epoch zero never enter risk sets", "[cox]") {
  std::vector<EventRecord> cohort;
  for (int i = 0; i < 6; ++i) {
    EventRecord r;
    r.term_id = "t" + std::to_string(i);
    r.time = i < 2 ? 0 : i;
    r.observed = i >= 2;
    cohort.push_back(r);
  }
  std::vector<CovariateVector> raw;
  for (int i = 0; i < 6; ++i) {
    CovariateVector cv;
    cv.term_id = "t" + std::to_string(i);
    cv.term_count = 10 + 7 * i;
    cv.id_count = 3 + i;
    cv.annotation_count = 1;
    cv.latent_n = 50;
    cv.latent_hits = i % 2 ? 2 : 0;
    cv.latent = cv.latent_hits > 0;
    cv.latent_dose = cv.latent_hits / 50.0;
    raw.push_back(cv);
  }
  auto transformed = transform_covariates(
      raw, {{"term_count", CovariateKind::continuous_count}});
  auto data = build_design(cohort, transformed);
  CHECK(data.n() == 4);
  CHECK(data.dropped_baseline_censored == 2);
}
