#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "irsnoma/noma.hpp"

namespace irsnoma {
namespace {

const SystemPower kPower{10.0, 1e-6};

// Rank of user u among all users: weaker users and equal-gain users with a
// lower index come first.
std::size_t rank_of(const std::vector<double>& g, std::size_t u) {
  std::size_t r = 0;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (g[v] < g[u] || (g[v] == g[u] && v < u)) ++r;
  return r;
}

// Own-signal SINR computed per user without sorting anything.
std::vector<double> oracle_sinr(const std::vector<double>& g, const std::vector<double>& rho_pos,
                                const SystemPower& pw) {
  const std::size_t k = g.size();
  std::vector<double> out(k);
  for (std::size_t u = 0; u < k; ++u) {
    const std::size_t ru = rank_of(g, u);
    double interf = 0.0;
    for (std::size_t v = 0; v < k; ++v)
      if (rank_of(g, v) > ru) interf += rho_pos[rank_of(g, v)];
    out[u] = g[u] * pw.p_max * rho_pos[ru] / (g[u] * pw.p_max * interf + pw.sigma2);
  }
  return out;
}

std::vector<double> random_simplex(std::size_t k, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> r(k);
  double s = 0.0;
  for (auto& x : r) s += (x = e(rng));
  for (auto& x : r) x /= s;
  return r;
}

std::vector<double> random_gains(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lg(-9.0, -3.0);
  std::vector<double> g(k);
  for (auto& x : g) x = std::pow(10.0, lg(rng));
  return g;
}

TEST(DecodingOrder, AscendingGain) {
  const std::vector<double> g{0.8, 0.1, 0.5};
  EXPECT_EQ(decoding_order(g), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(DecodingOrder, TiesKeepLowerIndexFirst) {
  const std::vector<double> g{0.3, 0.3};
  EXPECT_EQ(decoding_order(g), (std::vector<std::size_t>{0, 1}));
}

TEST(DecodingOrder, SingleUser) {
  const std::vector<double> g{2.0};
  EXPECT_EQ(decoding_order(g), (std::vector<std::size_t>{0}));
}

TEST(SinrOwn, TwoUserExample) {
  const std::vector<double> g{0.5, 1.0};
  const std::vector<double> rho{0.8, 0.2};
  const double s1 = sinr_own(g, rho, kPower, 0);
  const double s2 = sinr_own(g, rho, kPower, 1);
  EXPECT_NEAR(s1, 3.999996, 1e-6);
  EXPECT_NEAR(s2, 2e6, 1e-6 * 2e6);
  const auto oracle = oracle_sinr(g, rho, kPower);
  EXPECT_NEAR(s1, oracle[0], 1e-12 * oracle[0]);
  EXPECT_NEAR(s2, oracle[1], 1e-12 * oracle[1]);
}

TEST(SinrOwn, ZeroShareGivesZero) {
  const std::vector<double> g{0.5, 1.0};
  const std::vector<double> rho{0.0, 1.0};
  EXPECT_EQ(sinr_own(g, rho, kPower, 0), 0.0);
}

TEST(SinrOwn, SingleUserIsInterferenceFree) {
  const std::vector<double> g{0.3};
  const std::vector<double> rho{1.0};
  EXPECT_NEAR(sinr_own(g, rho, kPower, 0), 0.3 * 10.0 / 1e-6, 1e-6);
}

TEST(SinrCross, TwoUserExample) {
  const std::vector<double> g{0.5, 1.0};
  const std::vector<double> rho{0.8, 0.2};
  const double cross = sinr_cross(g, rho, kPower, 0, 1);
  EXPECT_NEAR(cross, 3.999998, 1e-6);
  EXPECT_GE(cross, sinr_own(g, rho, kPower, 0));
}

TEST(SinrCross, EqualGainsGiveEqualSinr) {
  const std::vector<double> g{0.4, 0.4};
  const std::vector<double> rho{0.7, 0.3};
  EXPECT_EQ(sinr_cross(g, rho, kPower, 0, 1), sinr_own(g, rho, kPower, 0));
}

TEST(SinrCross, ZeroShareAndBadPositions) {
  const std::vector<double> g{0.2, 0.4};
  const std::vector<double> rho{0.0, 1.0};
  EXPECT_EQ(sinr_cross(g, rho, kPower, 0, 1), 0.0);
  EXPECT_THROW(sinr_cross(g, rho, kPower, 1, 1), std::invalid_argument);
  EXPECT_THROW(sinr_cross(g, rho, kPower, 1, 0), std::invalid_argument);
}

// Gains chosen so the two rates land exactly on the requested values.
std::vector<double> gains_for_rates(double r_weak, double r_strong, const std::vector<double>& rho) {
  const double s1 = std::pow(2.0, r_weak) - 1.0;
  const double s2 = std::pow(2.0, r_strong) - 1.0;
  const double g2 = s2 * kPower.sigma2 / (kPower.p_max * rho[1]);
  const double g1 = s1 * kPower.sigma2 / (kPower.p_max * (rho[0] - s1 * rho[1]));
  return {g1, g2};
}

TEST(RateReport, QosExamples) {
  const std::vector<double> rho{0.8, 0.2};
  const auto ok = gains_for_rates(1.3, 1.25, rho);
  ASSERT_LT(ok[0], ok[1]);
  const RateReport a = rate_report(ok, rho, kPower, 1.2);
  EXPECT_NEAR(a.rate[0], 1.3, 1e-9);
  EXPECT_NEAR(a.rate[1], 1.25, 1e-9);
  EXPECT_TRUE(a.qos_ok);

  const auto bad = gains_for_rates(1.3, 1.1, rho);
  const RateReport b = rate_report(bad, rho, kPower, 1.2);
  EXPECT_FALSE(b.qos_ok);
  EXPECT_TRUE(b.qos[0]);
  EXPECT_FALSE(b.qos[1]);
}

TEST(RateReport, MatchesOracleOnUnsortedInput) {
  std::mt19937_64 rng(17);
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t k = 1 + inst % 6;
    const auto g = random_gains(k, rng);
    const auto rho = random_simplex(k, rng);
    const RateReport rep = rate_report(g, rho, kPower, 0.0);
    const auto oracle = oracle_sinr(g, rho, kPower);
    double sum = 0.0;
    for (std::size_t u = 0; u < k; ++u) {
      EXPECT_NEAR(rep.sinr_own[u], oracle[u], 1e-12 * std::max(1.0, oracle[u]));
      sum += std::log2(1.0 + oracle[u]);
    }
    EXPECT_NEAR(rep.sum_rate, sum, 1e-10);
  }
}

TEST(RateReport, EqualChannelsTelescope) {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t k = 2 + inst % 5;
    const std::vector<double> g(k, random_gains(1, rng)[0]);
    const auto rho = random_simplex(k, rng);
    const double expect = std::log2(1.0 + g[0] * kPower.p_max / kPower.sigma2);
    EXPECT_NEAR(rate_report(g, rho, kPower, 0.0).sum_rate, expect, 1e-9 * expect);
  }
}

TEST(CheckSic, HoldsForDecodingOrderAndFailsReversed) {
  const std::vector<double> sorted{0.1, 0.9};
  const std::vector<double> rho{0.8, 0.2};
  EXPECT_TRUE(check_sic(sorted, rho, kPower));
  const std::vector<double> reversed{0.9, 0.1};
  EXPECT_FALSE(check_sic(reversed, rho, kPower));
  const std::vector<double> one{0.5};
  const std::vector<double> all{1.0};
  EXPECT_TRUE(check_sic(one, all, kPower));
}

TEST(NomaProperty, CrossSinrDominatesOwnSinr) {
  std::mt19937_64 rng(101);
  for (int inst = 0; inst < 10000; ++inst) {
    const std::size_t k = 2 + inst % 7;
    auto g = random_gains(k, rng);
    std::sort(g.begin(), g.end());
    const auto rho = random_simplex(k, rng);
    for (std::size_t t = 0; t < k; ++t) {
      const double own = sinr_own(g, rho, kPower, t);
      for (std::size_t j = t + 1; j < k; ++j)
        ASSERT_GE(sinr_cross(g, rho, kPower, t, j), own * (1.0 - 1e-12));
    }
  }
}

TEST(NomaProperty, MonotoneInShares) {
  std::mt19937_64 rng(7);
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t k = 2 + inst % 4;
    auto g = random_gains(k, rng);
    std::sort(g.begin(), g.end());
    auto rho = random_simplex(k, rng);
    const std::size_t j = inst % (k - 1);
    const double base = sinr_own(g, rho, kPower, j);
    auto more_own = rho;
    more_own[j] *= 1.5;
    EXPECT_GE(sinr_own(g, more_own, kPower, j), base);
    auto more_interf = rho;
    more_interf[k - 1] *= 1.5;
    EXPECT_LE(sinr_own(g, more_interf, kPower, j), base);
  }
}

TEST(NomaProperty, SumRateIgnoresUserLabelling) {
  std::mt19937_64 rng(31);
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t k = 2 + inst % 5;
    auto g = random_gains(k, rng);
    const auto rho = random_simplex(k, rng);
    const double a = rate_report(g, rho, kPower, 0.0).sum_rate;
    std::shuffle(g.begin(), g.end(), rng);
    const double b = rate_report(g, rho, kPower, 0.0).sum_rate;
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, a));
  }
}

}  // namespace
}  // namespace irsnoma
