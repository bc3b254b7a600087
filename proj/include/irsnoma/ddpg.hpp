#pragma once

// DDPG agent: replay buffer, exploration, target computation, critic and
// actor updates, soft target tracking, and the end-to-end training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irsnoma/environment.hpp"
#include "irsnoma/nn/adam.hpp"
#include "irsnoma/nn/archive.hpp"
#include "irsnoma/nn/mlp.hpp"
#include "irsnoma/seed.hpp"

namespace irsnoma {

using nn::MlpParams;

struct Transition {
  Vector s;
  Vector a;
  double r = 0.0;
  Vector s_next;
  bool terminal = false;
};

class NotReadyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-capacity ring of transitions; once full, each push replaces the
/// oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool full() const { return items_.size() == capacity_; }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  /// Entry by age, 0 = oldest still stored.
  const Transition& oldest(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("replay buffer: index out of range");
    const std::size_t start = full() ? cursor_ : 0;
    return items_[(start + i) % capacity_];
  }

  const Transition& slot(std::size_t i) const { return items_.at(i); }

  /// Uniform with replacement over the filled slots; returns slot indices.
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const {
    if (items_.size() < n || items_.empty())
      throw NotReadyError("replay buffer: holds " + std::to_string(items_.size()) +
                          " transitions, " + std::to_string(n) + " requested");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    return idx;
  }

  std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const {
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i : sample_indices(n, rng)) out.push_back(items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

/// Column-stacked minibatch.
struct Batch {
  Matrix s;
  Matrix a;
  Vector r;
  Matrix s_next;
  std::vector<bool> terminal;

  Eigen::Index size() const { return r.size(); }
};

inline Batch make_batch(const std::vector<Transition>& ts) {
  if (ts.empty()) throw std::invalid_argument("make_batch: empty minibatch");
  const auto n = static_cast<Eigen::Index>(ts.size());
  Batch b{Matrix(ts[0].s.size(), n), Matrix(ts[0].a.size(), n), Vector(n),
          Matrix(ts[0].s_next.size(), n), std::vector<bool>(ts.size())};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = ts[static_cast<std::size_t>(i)];
    b.s.col(i) = t.s;
    b.a.col(i) = t.a;
    b.r[i] = t.r;
    b.s_next.col(i) = t.s_next;
    b.terminal[static_cast<std::size_t>(i)] = t.terminal;
  }
  return b;
}

/// Fixed per-feature rescaling of the flattened state before it reaches a
/// network: rates divided by `rate_scale`, phase pairs and power shares
/// unchanged, UAV position mapped so the service area spans [-1, 1]^2.
/// Transitions keep the unscaled state.
struct InputScaling {
  Vector offset;
  Vector scale;

  explicit InputScaling(const EnvConfig& cfg, double rate_scale = 10.0)
      : offset(Vector::Zero(cfg.state_dim())), scale(Vector::Ones(cfg.state_dim())) {
    scale.head(cfg.users).setConstant(1.0 / rate_scale);
    const Area& a = cfg.geometry.area;
    const Point2 c = a.center();
    const Eigen::Index px = cfg.state_dim() - 2;
    offset[px] = c.x;
    offset[px + 1] = c.y;
    scale[px] = a.x_max > a.x_min ? 2.0 / (a.x_max - a.x_min) : 1.0;
    scale[px + 1] = a.y_max > a.y_min ? 2.0 / (a.y_max - a.y_min) : 1.0;
  }

  Matrix apply(const Matrix& states) const {
    return ((states.colwise() - offset).array().colwise() * scale.array()).matrix();
  }
};

struct AgentHyperparams {
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double discount = 0.95;
  double tau = 0.005;
  std::size_t batch_size = 16;
  std::size_t capacity = 50000;
  std::size_t warmup = 50000;  // transitions stored before the first update
  std::int64_t episodes = 1000;
  double noise_variance = 0.1;
  Eigen::Index hidden = 300;
  bool batch_norm = true;

  void validate() const {
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0))
      throw std::invalid_argument("learning_rate: must be positive");
    if (!(discount >= 0.0 && discount < 1.0))
      throw std::invalid_argument("discount: must lie in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau: must lie in (0, 1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size: must be at least 1");
    if (capacity < 1) throw std::invalid_argument("capacity: must be at least 1");
    if (warmup < batch_size || warmup > capacity)
      throw std::invalid_argument("warmup: must lie in [batch_size, capacity]");
    if (episodes < 1) throw std::invalid_argument("episodes: must be at least 1");
    if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise_variance: must be >= 0");
    if (hidden < 1) throw std::invalid_argument("hidden: must be at least 1");
  }
};

/// mu(s) in eval mode plus i.i.d. Gaussian noise, clamped to [-1, 1].
inline RawAction select_action(const MlpParams& actor, const Vector& state, double noise_std,
                               std::mt19937_64& rng) {
  Matrix in = state;
  RawAction a = nn::forward(actor, in, nn::Mode::eval).output.col(0);
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(rng);
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

/// y_i = r_i for terminal transitions, r_i + discount * Q'(s', mu'(s')) otherwise.
inline Vector compute_targets(const Batch& batch, const MlpParams& critic_target,
                              const MlpParams& actor_target, double discount) {
  const Matrix a_next = nn::forward(actor_target, batch.s_next, nn::Mode::eval).output;
  const Matrix q_next =
      nn::forward(critic_target, nn::concat_rows(batch.s_next, a_next), nn::Mode::eval).output;
  Vector y = batch.r;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!batch.terminal[static_cast<std::size_t>(i)]) y[i] += discount * q_next(0, i);
  return y;
}

/// One minimization step on mean squared TD error; returns the pre-step loss.
inline double critic_update(MlpParams& critic, nn::OptimizerState& opt, const Batch& batch,
                            const Vector& targets) {
  const auto fwd = nn::forward(critic, nn::concat_rows(batch.s, batch.a), nn::Mode::train);
  const Eigen::RowVectorXd residual = targets.transpose() - fwd.output.row(0);
  const double n = static_cast<double>(batch.size());
  const double loss = residual.squaredNorm() / n;
  if (!std::isfinite(loss)) throw nn::NonFiniteError("critic_update: non-finite loss");
  const Matrix dq = (-2.0 / n) * residual;
  const nn::Gradients g = nn::backward(critic, fwd.cache, dq);
  nn::optimizer_step(critic, g.params, opt, nn::Direction::minimize);
  nn::update_running_stats(critic, fwd.cache);
  return loss;
}

/// Q values and dQ/da for a batch of (state, action) columns.
struct CriticProbe {
  Eigen::RowVectorXd q;
  Matrix action_grad;
};

using CriticFn = std::function<CriticProbe(const Matrix& states, const Matrix& actions)>;

/// Differentiates a critic network with respect to its action branch using
/// batch statistics; the critic's parameters and running statistics are not
/// modified.
inline CriticFn critic_probe(const MlpParams& critic) {
  return [&critic](const Matrix& s, const Matrix& a) {
    const auto fwd = nn::forward(critic, nn::concat_rows(s, a), nn::Mode::train);
    const Matrix ones = Matrix::Ones(1, s.cols());
    const nn::Gradients g = nn::backward(critic, fwd.cache, ones);
    return CriticProbe{fwd.output.row(0), g.input.bottomRows(a.rows())};
  };
}

/// One ascent step on J = mean Q(s, mu(s)); returns the pre-step objective.
inline double actor_update(MlpParams& actor, nn::OptimizerState& opt, const CriticFn& critic,
                           const Matrix& states) {
  const auto fwd = nn::forward(actor, states, nn::Mode::train);
  const CriticProbe probe = critic(states, fwd.output);
  const double n = static_cast<double>(states.cols());
  const double objective = probe.q.sum() / n;
  if (!std::isfinite(objective)) throw nn::NonFiniteError("actor_update: non-finite objective");
  const nn::Gradients g = nn::backward(actor, fwd.cache, probe.action_grad / n);
  nn::optimizer_step(actor, g.params, opt, nn::Direction::maximize);
  nn::update_running_stats(actor, fwd.cache);
  return objective;
}

inline double actor_update(MlpParams& actor, nn::OptimizerState& opt, const MlpParams& critic,
                           const Matrix& states) {
  return actor_update(actor, opt, critic_probe(critic), states);
}

struct Agent {
  MlpParams actor;
  MlpParams critic;
  MlpParams actor_target;
  MlpParams critic_target;
  nn::OptimizerState actor_opt;
  nn::OptimizerState critic_opt;

  Agent(Eigen::Index state_dim, Eigen::Index action_dim, const AgentHyperparams& hp,
        std::mt19937_64& rng)
      : actor(nn::make_actor(state_dim, action_dim, hp.hidden, hp.batch_norm, rng)),
        critic(nn::make_critic(state_dim, action_dim, hp.hidden, hp.batch_norm, rng)),
        actor_target(nn::clone_params(actor)),
        critic_target(nn::clone_params(critic)),
        actor_opt(actor, {hp.actor_lr}),
        critic_opt(critic, {hp.critic_lr}) {}

  struct UpdateStats {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
  };

  UpdateStats update(const Batch& batch, const AgentHyperparams& hp) {
    UpdateStats st;
    const Vector y = compute_targets(batch, critic_target, actor_target, hp.discount);
    st.critic_loss = critic_update(critic, critic_opt, batch, y);
    st.actor_objective = actor_update(actor, actor_opt, critic, batch.s);
    nn::soft_update(actor_target, actor, hp.tau);
    nn::soft_update(critic_target, critic, hp.tau);
    return st;
  }
};

struct TrainSetup {
  EnvConfig env;
  AgentHyperparams agent;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // episodes; 0 disables
  std::filesystem::path checkpoint_dir;
};

struct EpisodeMetrics {
  std::int64_t episode = 0;
  double accumulated_reward = 0.0;
  double mean_critic_loss = 0.0;
  double mean_actor_objective = 0.0;
  double qos_violation_rate = 0.0;
  double mean_sum_rate = 0.0;
};

struct StepRecord {
  std::int64_t episode;
  std::int64_t step;
  const StepResult& result;
  bool collecting;
};

struct RunMetrics {
  std::vector<EpisodeMetrics> episodes;
  std::int64_t updates = 0;
  std::size_t fill_at_first_update = 0;
  MlpParams actor;
  MlpParams critic;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seed streams derived from one master seed.
struct SeedPlan {
  std::uint64_t master;

  std::uint64_t network_init() const { return derive_seed(master, 1); }
  std::uint64_t line_of_sight() const { return derive_seed(master, 2); }
  std::uint64_t exploration() const { return derive_seed(master, 3); }
  std::uint64_t replay() const { return derive_seed(master, 4); }
  std::uint64_t train_episode(std::int64_t j) const {
    return derive_seed(derive_seed(master, 5), static_cast<std::uint64_t>(j));
  }
  std::uint64_t eval_episode(std::int64_t j) const {
    return derive_seed(derive_seed(master, 6), static_cast<std::uint64_t>(j));
  }
  std::uint64_t baseline() const { return derive_seed(master, 7); }
};

inline RawAction uniform_action(Eigen::Index dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RawAction a(dim);
  for (Eigen::Index i = 0; i < dim; ++i) a[i] = u(rng);
  return a;
}

/// Runs the full training procedure. Actions are uniform random while the
/// buffer is below the warmup threshold, then actor output plus Gaussian
/// exploration noise. Each step after warmup performs one critic update, one
/// actor update and one soft update of both targets.
inline RunMetrics train(const TrainSetup& setup,
                        const std::function<void(const StepRecord&)>& on_step = {}) {
  setup.env.validate();
  setup.agent.validate();
  const AgentHyperparams& hp = setup.agent;
  const SeedPlan seeds{setup.seed};

  Environment env(setup.env, seeds.line_of_sight());
  std::mt19937_64 init_rng(seeds.network_init());
  Agent agent(setup.env.state_dim(), setup.env.action_dim(), hp, init_rng);
  std::mt19937_64 explore_rng(seeds.exploration());
  std::mt19937_64 replay_rng(seeds.replay());
  ReplayBuffer buffer(hp.capacity);
  const InputScaling scaling(setup.env);
  const double noise_std = std::sqrt(hp.noise_variance);

  if (setup.checkpoint_every > 0) std::filesystem::create_directories(setup.checkpoint_dir);

  RunMetrics run;
  for (std::int64_t j = 0; j < hp.episodes; ++j) {
    EnvState state = env.reset(seeds.train_episode(j));
    EpisodeMetrics em;
    em.episode = j + 1;
    std::int64_t updates = 0;
    std::int64_t violations = 0;
    double sum_rate = 0.0;
    for (Eigen::Index t = 0; t < setup.env.steps; ++t) {
      const Vector s = state.flatten();
      const bool collecting = buffer.size() < hp.warmup;
      const RawAction a = collecting ? uniform_action(setup.env.action_dim(), explore_rng)
                                     : select_action(agent.actor, scaling.apply(s), noise_std,
                                                     explore_rng);
      const StepResult res = env.step(a);
      if (on_step) on_step(StepRecord{j + 1, t + 1, res, collecting});
      em.accumulated_reward += res.reward;
      sum_rate += res.report.sum_rate;
      if (!res.report.qos_ok) ++violations;
      buffer.push({s, a, res.reward, res.next.flatten(), res.done});

      if (buffer.size() >= hp.warmup) {
        if (run.updates == 0) run.fill_at_first_update = buffer.size();
        try {
          Batch batch = make_batch(buffer.sample(hp.batch_size, replay_rng));
          batch.s = scaling.apply(batch.s);
          batch.s_next = scaling.apply(batch.s_next);
          const auto st = agent.update(batch, hp);
          em.mean_critic_loss += st.critic_loss;
          em.mean_actor_objective += st.actor_objective;
        } catch (const nn::NonFiniteError& e) {
          throw NumericalError(std::string(e.what()) + " at episode " + std::to_string(j + 1) +
                               ", step " + std::to_string(t + 1));
        }
        ++updates;
        ++run.updates;
      }
      state = res.next;
    }
    if (!nn::all_finite(agent.actor) || !nn::all_finite(agent.critic))
      throw NumericalError("train: non-finite network parameters after episode " +
                           std::to_string(j + 1));
    if (updates > 0) {
      em.mean_critic_loss /= static_cast<double>(updates);
      em.mean_actor_objective /= static_cast<double>(updates);
    }
    const auto steps = static_cast<double>(setup.env.steps);
    em.qos_violation_rate = static_cast<double>(violations) / steps;
    em.mean_sum_rate = sum_rate / steps;
    run.episodes.push_back(em);

    if (setup.checkpoint_every > 0 && (j + 1) % setup.checkpoint_every == 0) {
      const std::string tag = "ep" + std::to_string(j + 1);
      nn::save_file((setup.checkpoint_dir / (tag + "_actor.txt")).string(), agent.actor);
      nn::save_file((setup.checkpoint_dir / (tag + "_critic.txt")).string(), agent.critic);
    }
  }
  run.actor = std::move(agent.actor);
  run.critic = std::move(agent.critic);
  return run;
}

/// Maps a flattened state to a raw action.
using Policy = std::function<RawAction(const Vector& state)>;

/// Noise-free actor output. The actor must outlive the returned policy.
inline Policy greedy_policy(const MlpParams& actor, const InputScaling& scaling) {
  return [&actor, scaling](const Vector& s) {
    std::mt19937_64 unused(0);
    return select_action(actor, scaling.apply(s), 0.0, unused);
  };
}

inline Policy random_policy(Eigen::Index action_dim, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [action_dim, rng](const Vector&) { return uniform_action(action_dim, *rng); };
}

/// Equal power shares, random phases, UAV hovering over the area center.
inline Policy equal_power_centered_policy(const EnvConfig& cfg, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [cfg, rng](const Vector&) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    RawAction a = RawAction::Zero(cfg.action_dim());
    for (Eigen::Index n = 0; n < cfg.elements; ++n) {
      const double th = phase(*rng);
      a[2 * n] = std::cos(th);
      a[2 * n + 1] = std::sin(th);
    }
    return a;
  };
}

struct EvalResult {
  std::vector<EpisodeMetrics> episodes;
  double mean_sum_rate = 0.0;
  double mean_accumulated_reward = 0.0;
};

/// Rolls a fixed policy through `count` episodes with the given seed stream.
inline EvalResult run_policy(const EnvConfig& cfg, const SeedPlan& seeds, const Policy& policy,
                             std::int64_t count, bool eval_stream,
                             const std::function<void(const StepRecord&)>& on_step = {}) {
  Environment env(cfg, seeds.line_of_sight());
  EvalResult out;
  for (std::int64_t j = 0; j < count; ++j) {
    EnvState state = env.reset(eval_stream ? seeds.eval_episode(j) : seeds.train_episode(j));
    EpisodeMetrics em;
    em.episode = j + 1;
    std::int64_t violations = 0;
    double sum_rate = 0.0;
    for (Eigen::Index t = 0; t < cfg.steps; ++t) {
      const StepResult res = env.step(policy(state.flatten()));
      if (on_step) on_step(StepRecord{j + 1, t + 1, res, false});
      em.accumulated_reward += res.reward;
      sum_rate += res.report.sum_rate;
      if (!res.report.qos_ok) ++violations;
      state = res.next;
    }
    const auto steps = static_cast<double>(cfg.steps);
    em.qos_violation_rate = static_cast<double>(violations) / steps;
    em.mean_sum_rate = sum_rate / steps;
    out.mean_sum_rate += em.mean_sum_rate;
    out.mean_accumulated_reward += em.accumulated_reward;
    out.episodes.push_back(em);
  }
  out.mean_sum_rate /= static_cast<double>(count);
  out.mean_accumulated_reward /= static_cast<double>(count);
  return out;
}

}  // namespace irsnoma
