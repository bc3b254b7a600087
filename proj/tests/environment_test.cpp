#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "irsnoma/environment.hpp"

namespace irsnoma {
namespace {

constexpr double kPi = std::numbers::pi;

EnvConfig small_config(Eigen::Index n = 4, Eigen::Index k = 2) {
  EnvConfig c;
  c.elements = n;
  c.users = k;
  c.steps = 5;
  return c;
}

RawAction random_raw(const EnvConfig& cfg, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RawAction a(cfg.action_dim());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = u(rng);
  return a;
}

TEST(DecodeAction, Examples) {
  const EnvConfig cfg = small_config(1, 2);
  RawAction raw(cfg.action_dim());
  raw << 0.0, 1.0, 0.0, 0.0, 0.0, 0.0;
  const ControlAction c = decode_action(raw, cfg);
  EXPECT_NEAR(c.phase.theta[0], kPi / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(c.rho[0], 0.5);
  EXPECT_DOUBLE_EQ(c.rho[1], 0.5);
  EXPECT_DOUBLE_EQ(c.uav_xy.x, 50.0);
  EXPECT_DOUBLE_EQ(c.uav_xy.y, 50.0);

  raw << -1.0, 0.0, 1000.0, -1000.0, 5.0, -5.0;
  const ControlAction d = decode_action(raw, cfg);
  EXPECT_NEAR(d.phase.theta[0], kPi, 1e-15);
  EXPECT_DOUBLE_EQ(d.rho[0], 1.0);
  EXPECT_DOUBLE_EQ(d.uav_xy.x, 55.0);
  EXPECT_DOUBLE_EQ(d.uav_xy.y, 45.0);
}

TEST(DecodeAction, WrongLengthIsRejected) {
  const EnvConfig cfg = small_config();
  EXPECT_THROW(decode_action(RawAction::Zero(cfg.action_dim() - 1), cfg), std::invalid_argument);
}

TEST(DecodeAction, EncodeRoundTrip) {
  const EnvConfig cfg = small_config(5, 3);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const ControlAction c = decode_action(random_raw(cfg, rng), cfg);
    const ControlAction d = decode_action(encode_action(c, cfg), cfg);
    for (Eigen::Index n = 0; n < 5; ++n) {
      const double diff = std::remainder(c.phase.theta[n] - d.phase.theta[n], 2.0 * kPi);
      EXPECT_NEAR(diff, 0.0, 1e-12);
    }
    EXPECT_TRUE(c.rho.isApprox(d.rho, 1e-12));
    EXPECT_NEAR(c.uav_xy.x, d.uav_xy.x, 1e-12);
    EXPECT_NEAR(c.uav_xy.y, d.uav_xy.y, 1e-12);
  }
}

TEST(DecodeActionProperty, AlwaysFeasible) {
  const EnvConfig cfg = small_config(6, 4);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100000; ++i) {
    const RawAction raw = i % 10 == 0 ? random_raw(cfg, rng, -1e6, 1e6) : random_raw(cfg, rng);
    const ControlAction c = decode_action(raw, cfg);
    ASSERT_TRUE(((c.phase.theta.array() >= 0.0) && (c.phase.theta.array() <= 2.0 * kPi)).all());
    ASSERT_TRUE((c.rho.array() >= 0.0).all());
    ASSERT_NEAR(c.rho.sum(), 1.0, 1e-12);
    ASSERT_TRUE(cfg.geometry.area.contains(c.uav_xy));
  }
}

TEST(Environment, ResetStartsFromEqualSharesAtStartPoint) {
  const EnvConfig cfg = small_config(8, 4);
  Environment env(cfg, 11);
  const EnvState s = env.reset(3);
  EXPECT_EQ(s.prev_rho, Vector::Constant(4, 0.25));
  EXPECT_EQ(s.prev_xy, (Point2{50.0, 0.0}));
  EXPECT_EQ(s.flatten().size(), cfg.state_dim());
  for (Eigen::Index n = 0; n < 8; ++n)
    EXPECT_NEAR(std::hypot(s.prev_phase_reim[2 * n], s.prev_phase_reim[2 * n + 1]), 1.0, 1e-15);
  for (const Point2& u : env.geometry().user_xy) EXPECT_TRUE(cfg.geometry.area.contains(u));
  EXPECT_EQ(env.step_index(), 0);
}

TEST(Environment, SameSeedsAreBitIdentical) {
  const EnvConfig cfg = small_config();
  Environment a(cfg, 5), b(cfg, 5);
  EXPECT_EQ(a.reset(9).flatten(), b.reset(9).flatten());
  EXPECT_EQ(a.channel().g, b.channel().g);
  std::mt19937_64 rng(4);
  for (int t = 0; t < cfg.steps; ++t) {
    const RawAction raw = random_raw(cfg, rng);
    const StepResult x = a.step(raw);
    const StepResult y = b.step(raw);
    EXPECT_EQ(x.reward, y.reward);
    EXPECT_EQ(x.next.flatten(), y.next.flatten());
  }
}

TEST(Environment, LineOfSightDrawModes) {
  EnvConfig cfg = small_config();
  Environment fixed(cfg, 5);
  fixed.reset(1);
  const CVector los1 = fixed.channel().g_los;
  fixed.reset(2);
  EXPECT_EQ(fixed.channel().g_los, los1);

  cfg.los_draw = LosDraw::per_episode;
  Environment redraw(cfg, 5);
  redraw.reset(1);
  const CVector los2 = redraw.channel().g_los;
  redraw.reset(2);
  EXPECT_NE(redraw.channel().g_los, los2);
}

TEST(Environment, RepeatedActionWithinEpisodeGivesSameReward) {
  const EnvConfig cfg = small_config();
  Environment env(cfg, 7);
  env.reset(2);
  std::mt19937_64 rng(3);
  const RawAction raw = random_raw(cfg, rng);
  const double first = env.step(raw).reward;
  EXPECT_EQ(env.step(raw).reward, first);
}

TEST(Environment, StepsPastHorizonThrow) {
  const EnvConfig cfg = small_config();
  Environment env(cfg, 1);
  env.reset(1);
  const RawAction zero = RawAction::Zero(cfg.action_dim());
  for (int t = 0; t < cfg.steps - 1; ++t) EXPECT_FALSE(env.step(zero).done);
  EXPECT_TRUE(env.step(zero).done);
  EXPECT_THROW(env.step(zero), EpisodeFinished);
  env.reset(2);
  EXPECT_NO_THROW(env.step(zero));
}

TEST(Environment, PathLossModesDifferByDistanceFactor) {
  EnvConfig amp = small_config();
  amp.path_loss = PathLoss::amplitude;
  EnvConfig pow = small_config();
  Environment ea(amp, 3), ep(pow, 3);
  ea.reset(4);
  ep.reset(4);
  std::mt19937_64 rng(5);
  const ControlAction c = decode_action(random_raw(pow, rng), pow);
  const auto ga = ea.gains(c);
  const auto gp = ep.gains(c);
  NetworkGeometry g = ep.geometry();
  g.uav_xy = c.uav_xy;
  const LinkDistances d = link_distances(g);
  for (std::size_t k = 0; k < ga.size(); ++k) {
    const double dd = std::pow(d.bs_irs * d.irs_user[k], 2.0);
    EXPECT_NEAR(ga[k] * dd, gp[k], 1e-12 * gp[k]);
  }
}

TEST(EnvironmentProperty, StepInvariants) {
  const EnvConfig cfg = small_config(6, 3);
  Environment env(cfg, 21);
  std::mt19937_64 rng(22);
  for (int ep = 0; ep < 200; ++ep) {
    env.reset(static_cast<std::uint64_t>(ep));
    while (!env.finished()) {
      const StepResult r = env.step(random_raw(cfg, rng));
      const auto g = env.gains(r.control);

      std::vector<double> sorted(g.size());
      for (std::size_t p = 0; p < g.size(); ++p) sorted[p] = g[r.report.order[p]];
      ASSERT_TRUE(check_sic(sorted, std::span<const double>(r.control.rho.data(), 3), cfg.power));

      ASSERT_EQ(r.reward, r.report.qos_ok ? r.report.sum_rate : 0.0);
      double bound = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double single = std::log2(1.0 + g[k] * cfg.power.p_max / cfg.power.sigma2);
        ASSERT_LE(r.report.rate[k], single * (1.0 + 1e-12));
        bound += single;
      }
      ASSERT_LE(r.reward, bound * (1.0 + 1e-12));

      ASSERT_EQ(r.next.prev_rho, r.control.rho);
      ASSERT_EQ(r.next.prev_xy, r.control.uav_xy);
      for (Eigen::Index n = 0; n < 6; ++n) {
        ASSERT_EQ(r.next.prev_phase_reim[2 * n], std::cos(r.control.phase.theta[n]));
        ASSERT_EQ(r.next.prev_phase_reim[2 * n + 1], std::sin(r.control.phase.theta[n]));
      }
      for (Eigen::Index k = 0; k < 3; ++k)
        ASSERT_EQ(r.next.prev_rates[k], r.report.rate[static_cast<std::size_t>(k)]);
    }
  }
}

TEST(TraceWriter, HeaderAndRows) {
  const EnvConfig cfg = small_config(2, 2);
  Environment env(cfg, 1);
  env.reset(1);
  std::ostringstream os;
  TraceWriter w(os, 2);
  w.write(1, 1, env.step(RawAction::Zero(cfg.action_dim())));
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "episode,step,reward,sum_rate,rate_1,rate_2,rho_1,rho_2,uav_x,uav_y,qos_ok");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 10);
  EXPECT_EQ(row.rfind("1,1,", 0), 0u);
}

TEST(EnvConfig, ValidationAndDimensions) {
  EnvConfig c = small_config(64, 4);
  EXPECT_EQ(c.state_dim(), 138);
  EXPECT_EQ(c.action_dim(), 134);
  c.users = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.users = 2;
  c.power.sigma2 = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace irsnoma
