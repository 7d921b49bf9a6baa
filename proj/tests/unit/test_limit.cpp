#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "poprank/limit.hpp"
#include "poprank/simulator.hpp"

using namespace poprank;

namespace {

const Population kExtremeSmall(1.0, 0.0, 0.05, 0.05);

/// Every pattern with m1 ones among m positions, checked one at a time with
/// the direct mixture evaluation.
std::vector<ClassPattern> brute_force_stable(std::size_t m, std::size_t m1, const Population& pop, double beta) {
  std::vector<ClassPattern> out;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != m1) continue;
    std::vector<ItemClass> c(m);
    for (std::size_t i = 0; i < m; ++i) c[i] = (mask >> i) & 1u;
    ClassPattern p(c);
    if (is_stable_limit(p, pop, beta)) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ClassPattern> sorted(std::vector<ClassPattern> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("thresholds") {
  const auto t = thresholds(20, 1.1);
  CHECK(t.minority_bound == doctest::Approx(20.0 / 2.1).epsilon(1e-14));
  CHECK(t.majority_bound == doctest::Approx(22.0 / 2.1).epsilon(1e-14));
  CHECK(t.minority_bound == doctest::Approx(9.5238095).epsilon(1e-7));
  const auto t3 = thresholds(20, 3.0);
  CHECK(t3.minority_bound == doctest::Approx(5.0));
  CHECK(t3.majority_bound == doctest::Approx(15.0));
  const auto t2 = thresholds(2, 1.0 + 1e-6);
  CHECK(t2.minority_bound < 1.0);
  CHECK(t2.majority_bound > 1.0);
  CHECK(1.0 - t2.minority_bound == doctest::Approx(t2.majority_bound - 1.0).epsilon(1e-9));
  CHECK_THROWS_AS(thresholds(20, 1.0), InvalidInput);

  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = 2 + rng.index(100);
    const double beta = 1.0 + 1e-3 + 4.0 * rng.uniform();
    const auto b = thresholds(m, beta);
    CHECK(b.minority_bound + b.majority_bound == doctest::Approx(double(m)).epsilon(1e-15));
    CHECK(b.minority_bound < m / 2.0);
    CHECK(b.majority_bound > m / 2.0);
  }
}

TEST_CASE("block limit rankings") {
  CHECK(block_limit_ranking(5, 2, 1).str() == "11000");
  CHECK(block_limit_ranking(5, 4, 0).str() == "01111");
  CHECK(block_limit_ranking(2, 1, 1).str() == "10");
}

TEST_CASE("stability of hand-picked patterns") {
  CHECK(is_stable_limit(block_limit_ranking(20, 3, 1), kExtremeSmall, 1.1));
  CHECK_FALSE(is_stable_limit(ClassPattern::parse("00000000000000000111"), kExtremeSmall, 1.1));
  CHECK_FALSE(is_stable_limit(ClassPattern::parse("10101000000000000000"), kExtremeSmall, 1.1));
}

TEST_CASE("enumeration: unique block for a small extreme minority") {
  const auto three = enumerate_stable_patterns(20, 3, kExtremeSmall, 1.1);
  REQUIRE(three.size() == 1);
  CHECK(three[0] == block_limit_ranking(20, 3, 1));

  const auto eighteen = enumerate_stable_patterns(20, 18, kExtremeSmall, 1.1);
  REQUIRE(eighteen.size() == 1);
  CHECK(eighteen[0].str() == "00111111111111111111");

  // Band case: cardinality is reported, not asserted.
  const auto band = enumerate_stable_patterns(4, 2, kExtremeSmall, 1.1);
  MESSAGE("M=4, M1=2 stable patterns: " << band.size());
}

TEST_CASE("closed-form enumeration agrees with direct stability checks") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 2 + rng.index(11);
    const std::size_t m1 = 1 + rng.index(m - 1);
    const double g0 = 0.5 + 0.5 * rng.uniform() + 1e-9;
    const double g1 = 0.5 * rng.uniform();
    const double p0 = 0.5 * rng.uniform();
    const double p1 = 0.5 * rng.uniform();
    const Population pop(std::min(g0, 1.0), g1, p0, p1);
    const double beta = 1.0 + 2.0 * rng.uniform();
    REQUIRE(sorted(enumerate_stable_patterns(m, m1, pop, beta)) == brute_force_stable(m, m1, pop, beta));
  }
}

TEST_CASE("enumeration mirror symmetry") {
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 3 + rng.index(12);
    const std::size_t m1 = 1 + rng.index(m - 1);
    const double g0 = 0.55 + 0.45 * rng.uniform();
    const double g1 = 0.45 * rng.uniform();
    const double p0 = 0.5 * rng.uniform();
    const double p1 = 0.5 * rng.uniform();
    const double beta = 1.0 + 2.0 * rng.uniform();
    const auto direct = sorted(enumerate_stable_patterns(m, m1, Population(g0, g1, p0, p1), beta));
    std::vector<ClassPattern> mirrored;
    for (const auto& p : enumerate_stable_patterns(m, m - m1, Population(1.0 - g1, 1.0 - g0, p1, p0), beta)) {
      mirrored.push_back(p.flipped());
    }
    REQUIRE(direct == sorted(mirrored));
  }
}

TEST_CASE("enumeration guard") {
  CHECK(binomial(20, 3) == 1140);
  CHECK(binomial(20, 18) == 190);
  CHECK(binomial(40, 20) == 137846528820ULL);
  CHECK(binomial(3, 5) == 0);
  CHECK(binomial(200, 100) == UINT64_MAX);
  try {
    enumerate_stable_patterns(40, 20, kExtremeSmall, 1.1);
    FAIL("expected the guard to trip");
  } catch (const EnumerationTooLarge& e) {
    CHECK(e.patterns() == 137846528820ULL);
    CHECK(std::string(e.what()).find("1000000") != std::string::npos);
  }
}

TEST_CASE("limit share hand-evaluated three-item case") {
  // M=3, one class-1 item on top, beta=1.5, only indifferent users:
  // propensities 1/2 and 1/4, rank weights 1, 2/3, 4/9. Share = 9/14.
  const auto s = limit_traffic_share(3, 1, Population(1.0, 0.0, 0.0, 0.0), 1.5);
  REQUIRE(s.share);
  CHECK(*s.share == doctest::Approx(9.0 / 14.0).epsilon(1e-14));
  CHECK(s.pattern.str() == "100");
  CHECK(s.regime == LimitRegime::class1_top);
  CHECK_FALSE(s.flagged);
}

TEST_CASE("limit share is above one half for minorities and below for majorities") {
  const double beta = 1.1;
  const auto b = thresholds(20, beta);
  for (std::size_t m1 = 1; m1 < 20; ++m1) {
    const auto s = limit_traffic_share(20, m1, kExtremeSmall, beta);
    if (m1 < b.minority_bound) {
      CHECK(s.regime == LimitRegime::class1_top);
      REQUIRE(s.share);
      CHECK(*s.share > 0.5);
    } else if (m1 > b.majority_bound) {
      CHECK(s.regime == LimitRegime::class1_bottom);
      REQUIRE(s.share);
      CHECK(*s.share < 0.5);
    } else {
      CHECK(s.regime == LimitRegime::intermediate);
      CHECK(s.flagged);
    }
  }
}

TEST_CASE("limit share: every minority-range value exceeds every majority-range value") {
  const Population pop(0.8, 0.2, 0.4, 0.4);
  for (double beta : {1.05, 1.1, 1.2, 1.5}) {
    const auto rows = limit_table(20, pop, beta);
    REQUIRE(rows.size() == 19);
    double min_top = 1.0, max_bottom = 0.0;
    for (const auto& r : rows) {
      REQUIRE(r.limit.share);
      if (r.limit.n_stable != 1) continue;
      // Independent evaluation of the share on the block pattern.
      const auto rho = expected_choice_by_rank(r.limit.pattern, pop, beta);
      double oracle = 0.0;
      for (std::size_t i = 0; i < rho.size(); ++i) oracle += r.limit.pattern[i] == 1 ? rho[i] : 0.0;
      CHECK(*r.limit.share == doctest::Approx(oracle).epsilon(1e-12));
      if (r.limit.regime == LimitRegime::class1_top) min_top = std::min(min_top, *r.limit.share);
      if (r.limit.regime == LimitRegime::class1_bottom) max_bottom = std::max(max_bottom, *r.limit.share);
    }
    INFO("beta=" << beta);
    CHECK(min_top > max_bottom);
    CHECK(*rows[2].limit.share > *rows[16].limit.share);
  }
}

TEST_CASE("limit share rises slightly with M1 inside the minority-on-top range") {
  // Closed form for the block pattern with class 1 on top: the class-1 share
  // of a type with gamma g is (1-g) T / ((1-g) T + g), with T the ratio of
  // mean rank weight in the top block to mean rank weight below it.
  const Population pop(0.8, 0.2, 0.4, 0.4);
  const double beta = 1.1;
  auto closed_form = [&](std::size_t m1) {
    double top = 0.0, bottom = 0.0;
    for (std::size_t r = 0; r < 20; ++r) (r < m1 ? top : bottom) += std::pow(beta, -static_cast<double>(r));
    const double t = (top / m1) / (bottom / (20 - m1));
    double s = 0.0;
    for (UserType u : {UserType::type0, UserType::type1, UserType::type2}) {
      const double g = pop.gamma(u);
      s += pop.proportion(u) * (1 - g) * t / ((1 - g) * t + g);
    }
    return s;
  };
  const auto rows = limit_table(20, pop, beta);
  for (std::size_t m1 = 1; m1 <= 8; ++m1) {
    CHECK(*rows[m1 - 1].limit.share == doctest::Approx(closed_form(m1)).epsilon(1e-12));
    if (m1 > 1) CHECK(*rows[m1 - 1].limit.share > *rows[m1 - 2].limit.share);
  }
}

TEST_CASE("uniqueness bound on p") {
  CHECK(uniqueness_constraints_hold(20, 3, 1.1, 0.0));
  const double p = max_p_for_uniqueness(20, 3, 1.1);
  CHECK(p > 0.0);
  CHECK(uniqueness_constraints_hold(20, 3, 1.1, p));
  if (p < 0.5) CHECK_FALSE(uniqueness_constraints_hold(20, 3, 1.1, p + 2 * kUniquenessTolerance));
  CHECK_THROWS_AS(max_p_for_uniqueness(20, 12, 1.1), InconsistentParameters);
  CHECK_THROWS_AS(max_p_for_uniqueness(20, 10, 1.1), InconsistentParameters);

  // Independent scan: the first failing grid point lies just above p.
  double first_fail = 1.0;
  for (int i = 0; i <= 5000; ++i) {
    const double q = i * 1e-4;
    if (!uniqueness_constraints_hold(20, 3, 1.1, q)) {
      first_fail = q;
      break;
    }
  }
  if (p < 0.5) CHECK(std::abs(first_fail - p) <= 1e-4 + 1e-6);
}

TEST_CASE("below the uniqueness bound the block is the only stable pattern") {
  for (double beta : {1.05, 1.1, 1.3, 1.5, 2.0}) {
    for (std::size_t m : {4u, 6u, 9u, 12u, 14u}) {
      for (std::size_t m1 = 1; static_cast<double>(m1) < thresholds(m, beta).minority_bound; ++m1) {
        const double pmax = max_p_for_uniqueness(m, m1, beta);
        for (double frac : {0.0, 0.5, 0.99, 1.0}) {
          const double p = frac * pmax;
          const auto stable = enumerate_stable_patterns(m, m1, Population(1.0, 0.0, p, p), beta);
          INFO("beta=" << beta << " m=" << m << " m1=" << m1 << " p=" << p);
          REQUIRE(stable.size() == 1);
          CHECK(stable[0] == block_limit_ranking(m, m1, 1));
        }
      }
    }
  }
}

TEST_CASE("stochastic runs from a pattern churn iff the pattern is unstable") {
  // Each pattern starts with a head start of 200 clicks per rank step; over
  // 1e5 users an adjacent pair whose expected click rates are inverted by at
  // least 0.01 gains ~1000 clicks, enough to swap.
  const std::size_t m = 6, m1 = 2;
  const double beta = 1.5;
  const Population pop(1.0, 0.0, 0.05, 0.05);
  int checked = 0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (__builtin_popcount(mask) != int(m1)) continue;
    std::vector<ItemClass> c(m);
    for (std::size_t i = 0; i < m; ++i) c[i] = (mask >> i) & 1u;
    const ClassPattern pattern(c);
    const auto rho = expected_choice_by_rank(pattern, pop, beta);
    double min_gap = 1.0;
    for (std::size_t r = 0; r + 1 < m; ++r) min_gap = std::min(min_gap, std::abs(rho[r] - rho[r + 1]));
    if (min_gap < 0.01) continue;
    std::vector<ItemId> order(m);
    std::vector<std::int64_t> clicks(m);
    for (std::size_t i = 0; i < m; ++i) {
      order[i] = i;
      clicks[i] = static_cast<std::int64_t>(200 * (m - i));
    }
    const Ranking start(c, order, clicks);
    const Environment env(start, 100000, beta, pop);
    const Ranking end = run(env, mask).steps.back().after;
    const bool churned = end.pattern() != pattern;
    INFO("pattern " << pattern.str());
    CHECK(churned == !is_stable_limit(pattern, pop, beta));
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("mean-field dynamics end in a stable pattern") {
  const Population pop(0.8, 0.2, 0.4, 0.4);
  for (std::size_t m1 = 1; m1 < 12; ++m1) {
    const auto end = expected_dynamics_endpoint(12, m1, pop, 1.1);
    CHECK(end.count(1) == m1);
    CHECK(is_stable_limit(end, pop, 1.1));
  }
}
