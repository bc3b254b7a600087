#pragma once

// Episodic environment for the IRS-UAV NOMA downlink. The agent observes the
// previous step's rates, phase configuration, power split and UAV position,
// and emits a raw action in [-1, 1]^(2N+K+2) that is mapped onto a feasible
// (phase, power, position) triple.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "irsnoma/channel.hpp"
#include "irsnoma/noma.hpp"

namespace irsnoma {

/// How the distance product enters the effective gain. `amplitude` divides
/// h_rk^H Phi g by (d_BI d_Iu)^alpha; `power` divides |h_k|^2 by it.
enum class PathLoss { amplitude, power };

/// Whether the line-of-sight phases are redrawn every episode or fixed for a
/// whole run (drawn once from the run seed).
enum class LosDraw { per_episode, per_run };

struct EnvConfig {
  Eigen::Index elements = 8;
  Eigen::Index users = 2;
  NetworkGeometry geometry;  // user_xy is ignored; users are drawn per episode
  SystemPower power;
  double r_min = 1.2;
  double rician_factor = 10.0;
  Eigen::Index steps = 100;
  PathLoss path_loss = PathLoss::power;
  LosDraw los_draw = LosDraw::per_run;

  Eigen::Index state_dim() const { return 2 * (elements + users + 1); }
  Eigen::Index action_dim() const { return 2 * elements + users + 2; }
  double gain_exponent() const {
    return path_loss == PathLoss::amplitude ? geometry.path_loss_exp
                                            : 0.5 * geometry.path_loss_exp;
  }

  void validate() const {
    if (elements < 1) throw std::invalid_argument("elements: must be at least 1");
    if (users < 1) throw std::invalid_argument("users: must be at least 1");
    if (steps < 1) throw std::invalid_argument("steps: must be at least 1");
    if (!(rician_factor >= 0.0)) throw std::invalid_argument("rician_factor: must be non-negative");
    if (!(r_min >= 0.0)) throw std::invalid_argument("r_min: must be non-negative");
    geometry.validate();
    power.validate();
  }
};

struct EnvState {
  Vector prev_rates;       // K, by user
  Vector prev_phase_reim;  // 2N, (cos theta_n, sin theta_n) pairs
  Vector prev_rho;         // K, by decoding position
  Point2 prev_xy;

  /// [rates, phase pairs, rho, x, y]
  Vector flatten() const {
    const Eigen::Index k = prev_rates.size();
    const Eigen::Index n2 = prev_phase_reim.size();
    Vector v(k + n2 + prev_rho.size() + 2);
    v << prev_rates, prev_phase_reim, prev_rho, prev_xy.x, prev_xy.y;
    return v;
  }
};

using RawAction = Vector;

struct ControlAction {
  PhaseShift phase;
  Vector rho;  // by decoding position, sums to one
  Point2 uav_xy;
};

/// Maps a raw network output onto the feasible set: (re, im) pairs to angles
/// in [0, 2pi], normalized exponentials to power shares, and an affine map of
/// [-1, 1]^2 onto the service area.
inline ControlAction decode_action(const RawAction& raw, const EnvConfig& cfg) {
  const Eigen::Index n = cfg.elements;
  const Eigen::Index k = cfg.users;
  if (raw.size() != cfg.action_dim())
    throw std::invalid_argument("decode_action: expected " + std::to_string(cfg.action_dim()) +
                                " entries, got " + std::to_string(raw.size()));
  ControlAction c;
  c.phase.theta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    c.phase.theta[i] = wrap_two_pi(std::atan2(raw[2 * i + 1], raw[2 * i]));

  const auto logits = raw.segment(2 * n, k);
  const double top = logits.maxCoeff();
  c.rho = (logits.array() - top).exp().matrix();
  c.rho /= c.rho.sum();

  const Area& a = cfg.geometry.area;
  const double ux = std::clamp(raw[2 * n + k], -1.0, 1.0);
  const double uy = std::clamp(raw[2 * n + k + 1], -1.0, 1.0);
  c.uav_xy.x = std::clamp(a.x_min + 0.5 * (ux + 1.0) * (a.x_max - a.x_min), a.x_min, a.x_max);
  c.uav_xy.y = std::clamp(a.y_min + 0.5 * (uy + 1.0) * (a.y_max - a.y_min), a.y_min, a.y_max);
  return c;
}

/// Inverse of decode_action up to the softmax's shift invariance.
inline RawAction encode_action(const ControlAction& c, const EnvConfig& cfg) {
  const Eigen::Index n = cfg.elements;
  const Eigen::Index k = cfg.users;
  RawAction raw(cfg.action_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    raw[2 * i] = std::cos(c.phase.theta[i]);
    raw[2 * i + 1] = std::sin(c.phase.theta[i]);
  }
  const double mean_log = c.rho.array().log().mean();
  for (Eigen::Index i = 0; i < k; ++i) raw[2 * n + i] = std::log(c.rho[i]) - mean_log;
  const Area& a = cfg.geometry.area;
  raw[2 * n + k] = a.x_max > a.x_min ? 2.0 * (c.uav_xy.x - a.x_min) / (a.x_max - a.x_min) - 1.0 : 0.0;
  raw[2 * n + k + 1] =
      a.y_max > a.y_min ? 2.0 * (c.uav_xy.y - a.y_min) / (a.y_max - a.y_min) - 1.0 : 0.0;
  return raw;
}

struct StepResult {
  EnvState next;
  double reward = 0.0;
  RateReport report;
  ControlAction control;
  bool done = false;
};

class EpisodeFinished : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Environment {
 public:
  /// `run_seed` fixes the line-of-sight phases when they are drawn per run.
  Environment(EnvConfig cfg, std::uint64_t run_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.los_draw == LosDraw::per_run) {
      std::mt19937_64 rng(run_seed);
      los_ = sample_los(cfg_.elements, cfg_.users, rng);
    }
  }

  const EnvConfig& config() const { return cfg_; }
  const ChannelRealization& channel() const { return channel_; }
  const NetworkGeometry& geometry() const { return geom_; }
  const EnvState& state() const { return state_; }
  Eigen::Index step_index() const { return step_; }
  bool finished() const { return step_ >= cfg_.steps; }

  /// New channels, user positions and random initial phases; UAV at the start
  /// point, equal power shares.
  EnvState reset(std::uint64_t episode_seed) {
    std::mt19937_64 rng(episode_seed);
    const LosComponents los =
        cfg_.los_draw == LosDraw::per_run ? *los_ : sample_los(cfg_.elements, cfg_.users, rng);
    channel_ = sample_rician(los, cfg_.rician_factor, rng);

    geom_ = cfg_.geometry;
    geom_.user_xy.clear();
    const Area& a = cfg_.geometry.area;
    std::uniform_real_distribution<double> ux(a.x_min, a.x_max);
    std::uniform_real_distribution<double> uy(a.y_min, a.y_max);
    for (Eigen::Index k = 0; k < cfg_.users; ++k) {
      const double x = ux(rng);
      const double y = uy(rng);
      geom_.user_xy.push_back({x, y});
    }

    ControlAction init;
    init.phase.theta.resize(cfg_.elements);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index n = 0; n < cfg_.elements; ++n) init.phase.theta[n] = phase(rng);
    init.rho = Vector::Constant(cfg_.users, 1.0 / static_cast<double>(cfg_.users));
    init.uav_xy = cfg_.geometry.uav_xy;

    const RateReport rep = evaluate(init);
    state_ = make_state(rep, init);
    step_ = 0;
    return state_;
  }

  StepResult step(const RawAction& raw) { return apply(decode_action(raw, cfg_)); }

  /// Applies an already-feasible control. Reward is the sum rate when every
  /// user meets r_min and zero otherwise.
  StepResult apply(const ControlAction& control) {
    if (finished()) throw EpisodeFinished("step: episode already finished; call reset");
    StepResult r;
    r.report = evaluate(control);
    r.reward = r.report.qos_ok ? r.report.sum_rate : 0.0;
    r.control = control;
    r.next = make_state(r.report, control);
    state_ = r.next;
    ++step_;
    r.done = finished();
    return r;
  }

  /// |h_k|^2 for every user under a given control.
  std::vector<double> gains(const ControlAction& control) const {
    NetworkGeometry g = geom_;
    g.uav_xy = control.uav_xy;
    const LinkDistances d = link_distances(g);
    std::vector<double> out(static_cast<std::size_t>(cfg_.users));
    for (Eigen::Index k = 0; k < cfg_.users; ++k)
      out[static_cast<std::size_t>(k)] = std::norm(effective_gain(
          channel_, control.phase, d.bs_irs, d.irs_user[k], cfg_.gain_exponent(), k));
    return out;
  }

  RateReport evaluate(const ControlAction& control) const {
    const std::vector<double> g = gains(control);
    return rate_report(g, std::span<const double>(control.rho.data(), control.rho.size()),
                       cfg_.power, cfg_.r_min);
  }

 private:
  static EnvState make_state(const RateReport& rep, const ControlAction& c) {
    EnvState s;
    s.prev_rates = Eigen::Map<const Vector>(rep.rate.data(), static_cast<Eigen::Index>(rep.rate.size()));
    s.prev_phase_reim.resize(2 * c.phase.theta.size());
    for (Eigen::Index n = 0; n < c.phase.theta.size(); ++n) {
      s.prev_phase_reim[2 * n] = std::cos(c.phase.theta[n]);
      s.prev_phase_reim[2 * n + 1] = std::sin(c.phase.theta[n]);
    }
    s.prev_rho = c.rho;
    s.prev_xy = c.uav_xy;
    return s;
  }

  EnvConfig cfg_;
  std::optional<LosComponents> los_;
  ChannelRealization channel_;
  NetworkGeometry geom_;
  EnvState state_;
  Eigen::Index step_ = 0;
};

/// One CSV row per step: episode, step, reward, sum_rate, rate_1..rate_K,
/// rho_1..rho_K, uav_x, uav_y, qos_ok.
class TraceWriter {
 public:
  TraceWriter(std::ostream& os, Eigen::Index users) : os_(os) {
    os_.precision(17);
    os_ << "episode,step,reward,sum_rate";
    for (Eigen::Index k = 1; k <= users; ++k) os_ << ",rate_" << k;
    for (Eigen::Index k = 1; k <= users; ++k) os_ << ",rho_" << k;
    os_ << ",uav_x,uav_y,qos_ok\n";
  }

  void write(std::int64_t episode, std::int64_t step, const StepResult& r) {
    os_ << episode << ',' << step << ',' << r.reward << ',' << r.report.sum_rate;
    for (double v : r.report.rate) os_ << ',' << v;
    for (Eigen::Index k = 0; k < r.control.rho.size(); ++k) os_ << ',' << r.control.rho[k];
    os_ << ',' << r.control.uav_xy.x << ',' << r.control.uav_xy.y << ','
        << (r.report.qos_ok ? 1 : 0) << '\n';
  }

 private:
  std::ostream& os_;
};

}  // namespace irsnoma
