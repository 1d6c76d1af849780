#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "factsurv/survival.hpp"
#include "oracles.hpp"

using namespace factsurv;

namespace {

std::vector<EventRecord> cohort_of(const std::vector<std::pair<int, bool>>& rows) {
  std::vector<EventRecord> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EventRecord r;
    r.term_id = "s" + std::to_string(i);
    r.time = rows[i].first;
    r.observed = rows[i].second;
    out.push_back(r);
  }
  return out;
}

// the 4-subject worked example: events at 1 and 2, censored at 3, 3
const std::vector<std::pair<int, bool>> kFourSubjects = {
    {1, true}, {2, true}, {3, false}, {3, false}};

} // namespace

TEST_CASE("km_fit matches the hand product-limit example", "[survival]") {
  auto curve = km_fit(cohort_of(kFourSubjects));
  REQUIRE(curve.times == std::vector<int>{1, 2, 3});
  CHECK(curve.survival[0] == Catch::Approx(0.75).epsilon(1e-12));
  CHECK(curve.survival[1] == Catch::Approx(0.50).epsilon(1e-12));
  CHECK(curve.survival[2] == Catch::Approx(0.50).epsilon(1e-12));
  // Greenwood at t=2: 0.25 * (1/12 + 1/6)
  CHECK(curve.variance[1] == Catch::Approx(0.0625).epsilon(1e-12));
  CHECK(std::sqrt(curve.variance[1]) == Catch::Approx(0.25).epsilon(1e-12));
  // Nelson-Aalen: 1/4 + 1/3
  CHECK(curve.cum_hazard[1] == Catch::Approx(1.0 / 4 + 1.0 / 3).epsilon(1e-12));
}

TEST_CASE("all-censored cohorts keep S at one", "[survival]") {
  auto curve = km_fit(cohort_of({{5, false}, {20, false}, {20, false}}));
  for (double s : curve.survival) CHECK(s == 1.0);
  for (double f : curve.accumulation) CHECK(f == 0.0);
  for (std::size_t j = 0; j < curve.size(); ++j) CHECK(curve.ci_degenerate[j]);
}

TEST_CASE("km_fit rejects bad inputs", "[survival]") {
  CHECK_THROWS_AS(km_fit({}), ValidationError);
  CHECK_THROWS_AS(km_fit(cohort_of(kFourSubjects), 1.5), ConfigError);
}

TEST_CASE("censored-at-zero subjects shrink the initial risk set", "[survival]") {
  auto with = cohort_of({{0, false}, {0, false}, {1, true}, {2, true}});
  auto curve = km_fit(with);
  // risk set at t=1 is 2, not 4
  REQUIRE(curve.times == std::vector<int>{0, 1, 2});
  CHECK(curve.at_risk[1] == 2);
  CHECK(curve.survival[1] == Catch::Approx(0.5));
  CHECK(curve.survival[2] == Catch::Approx(0.0));
}

TEST_CASE("km_fit agrees with the counting oracle on random cohorts", "[survival]") {
  std::mt19937 rng(101);
  for (int it = 0; it < 80; ++it) {
    auto cohort = oracles::random_cohort(rng);
    auto curve = km_fit(cohort);
    auto expected = oracles::km_oracle(cohort);
    REQUIRE(curve.size() == expected.size());
    for (std::size_t j = 0; j < expected.size(); ++j) {
      CHECK(curve.times[j] == expected[j].time);
      CHECK(curve.at_risk[j] == expected[j].n);
      CHECK(curve.events[j] == expected[j].d);
      CHECK(curve.censored[j] == expected[j].c);
      CHECK(std::fabs(curve.survival[j] - expected[j].survival) < 1e-10);
      CHECK(std::fabs(curve.variance[j] - expected[j].variance) < 1e-10);
      CHECK(std::fabs(curve.cum_hazard[j] - expected[j].cum_hazard) < 1e-10);
    }
  }
}

TEST_CASE("without censoring 1 - S is the empirical CDF", "[survival]") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> t_dist(1, 8);
  for (int it = 0; it < 30; ++it) {
    std::vector<std::pair<int, bool>> rows;
    int n = 3 + it % 9;
    for (int i = 0; i < n; ++i) rows.push_back({t_dist(rng), true});
    auto cohort = cohort_of(rows);
    auto curve = km_fit(cohort);
    for (int t = 0; t <= 8; ++t) {
      CHECK(std::fabs(curve.accumulation_at(t) - oracles::ecdf_at(cohort, t)) < 1e-12);
    }
  }
}

TEST_CASE("curves are invariant to cohort order", "[survival]") {
  std::mt19937 rng(3);
  auto cohort = oracles::random_cohort(rng, 12, 6);
  auto base = km_fit(cohort);
  for (int it = 0; it < 10; ++it) {
    std::shuffle(cohort.begin(), cohort.end(), rng);
    auto again = km_fit(cohort);
    REQUIRE(again.survival == base.survival);
    REQUIRE(again.variance == base.variance);
  }
}

TEST_CASE("Nelson-Aalen is bounded by -ln S", "[survival]") {
  std::mt19937 rng(23);
  for (int it = 0; it < 40; ++it) {
    auto cohort = oracles::random_cohort(rng, 12, 6);
    auto curve = km_fit(cohort);
    for (std::size_t j = 0; j < curve.size(); ++j) {
      if (curve.survival[j] <= 0.0) continue;
      double neg_log_s = -std::log(curve.survival[j]);
      CHECK(curve.cum_hazard[j] <= neg_log_s + 1e-12);
      // second-order gap bound: |H + ln S| <= sum (d/n)^2 when all d/n < 1
      double bound = 0.0;
      bool small = true;
      for (std::size_t i = 0; i <= j; ++i) {
        double ratio = static_cast<double>(curve.events[i]) / curve.at_risk[i];
        if (ratio >= 1.0) small = false;
        bound += ratio * ratio;
      }
      if (small) CHECK(std::fabs(curve.cum_hazard[j] - neg_log_s) <= bound + 1e-12);
    }
  }
}

TEST_CASE("log-log confidence intervals bracket S within [0,1]", "[survival]") {
  std::mt19937 rng(31);
  for (int it = 0; it < 40; ++it) {
    auto cohort = oracles::random_cohort(rng);
    auto curve = km_fit(cohort);
    for (std::size_t j = 0; j < curve.size(); ++j) {
      CHECK(curve.ci_lower[j] >= 0.0);
      CHECK(curve.ci_upper[j] <= 1.0);
      CHECK(curve.ci_lower[j] <= curve.survival[j] + 1e-12);
      CHECK(curve.survival[j] <= curve.ci_upper[j] + 1e-12);
      if (curve.survival[j] == 1.0 || curve.survival[j] == 0.0) {
        CHECK(curve.ci_degenerate[j]);
        CHECK(curve.ci_lower[j] == curve.survival[j]);
        CHECK(curve.ci_upper[j] == curve.survival[j]);
      }
    }
  }
}

TEST_CASE("removing an end-censored subject only shifts risk counts", "[survival]") {
  auto cohort = cohort_of({{1, true}, {2, true}, {4, false}, {4, false}});
  auto slim = cohort_of({{1, true}, {2, true}, {4, false}});
  auto a = km_fit(cohort);
  auto b = km_fit(slim);
  REQUIRE(a.size() == b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    CHECK(a.at_risk[j] == b.at_risk[j] + 1);
    // recomputing the product from the risk counts reproduces each curve
    double sa = 1.0, sb = 1.0;
    for (std::size_t i = 0; i <= j; ++i) {
      sa *= 1.0 - static_cast<double>(a.events[i]) / a.at_risk[i];
      sb *= 1.0 - static_cast<double>(b.events[i]) / b.at_risk[i];
    }
    CHECK(a.survival[j] == Catch::Approx(sa).epsilon(1e-12));
    CHECK(b.survival[j] == Catch::Approx(sb).epsilon(1e-12));
  }
}

TEST_CASE("restricted mean epochs integrate the step function", "[survival]") {
  auto curve = km_fit(cohort_of(kFourSubjects));
  auto rm = restricted_mean_time(curve, 3.0);
  CHECK(rm.mean == Catch::Approx(2.25).epsilon(1e-12)); // 1 + 0.75 + 0.5

  auto flat = km_fit(cohort_of({{20, false}, {20, false}}));
  CHECK(restricted_mean_time(flat, 20.0).mean == Catch::Approx(20.0));

  auto single = km_fit(cohort_of({{1, true}}));
  auto rm_single = restricted_mean_time(single, 20.0);
  CHECK(rm_single.mean == Catch::Approx(1.0));
  CHECK(rm_single.se == Catch::Approx(0.0).margin(1e-12));

  CHECK_THROWS_AS(restricted_mean_time(curve, 0.0), ConfigError);
}

TEST_CASE("restricted mean variance uses forward areas", "[survival]") {
  auto curve = km_fit(cohort_of(kFourSubjects));
  auto rm = restricted_mean_time(curve, 3.0);
  // A(1) = 0.75 + 0.5 = 1.25  (area of S on [1,3])
  // A(2) = 0.5               (area of S on [2,3])
  // var  = A(1)^2 * 1/(4*3) + A(2)^2 * 1/(3*2)
  double expected = 1.25 * 1.25 / 12.0 + 0.25 / 6.0;
  CHECK(rm.se == Catch::Approx(std::sqrt(expected)).epsilon(1e-12));
}

TEST_CASE("curve differences sample both curves on the epoch grid", "[survival]") {
  auto a = km_fit(cohort_of(kFourSubjects));
  auto delta = curve_difference_summary(a, a);
  for (double d : delta) CHECK(d == 0.0);

  // strata fixtures hitting F(20) = 0.984 and 0.697 exactly
  std::vector<std::pair<int, bool>> latent_rows, other_rows;
  for (int i = 0; i < 1000; ++i) {
    latent_rows.push_back(i < 984 ? std::make_pair(1 + i % 20, true)
                                  : std::make_pair(20, false));
    other_rows.push_back(i < 697 ? std::make_pair(1 + i % 20, true)
                                 : std::make_pair(20, false));
  }
  auto latent = km_fit(cohort_of(latent_rows));
  auto other = km_fit(cohort_of(other_rows));
  auto diff = curve_difference_summary(latent, other);
  CHECK(diff.back() == Catch::Approx(0.984 - 0.697).margin(1e-9));

  auto b = km_fit(cohort_of({{1, true}, {2, true}}));
  CHECK_THROWS_AS(curve_difference_summary(a, b), ValidationError);
}
