#pragma once

// Experiment configuration and drivers behind the command-line tool.
//
// Configuration is layered: profile defaults, then a key=value file, then
// command-line overrides. Every run writes the resolved configuration to
// <out>/config.txt in the same key=value format, so it can be fed back
// through --config.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsnoma/ddpg.hpp"
#include "irsnoma/environment.hpp"
#include "irsnoma/nn/archive.hpp"

namespace irsnoma {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ConfigMap = std::map<std::string, std::string>;

enum class BaselinePolicy { random, equal_power_centered };
enum class SweepAxis { power, elements, users };

struct ExperimentConfig {
  std::string profile = "paper";
  std::optional<std::uint64_t> seed;
  EnvConfig env;
  AgentHyperparams agent;
  double power_db = 10.0;
  double noise_db = -60.0;
  std::int64_t eval_episodes = 50;
  std::int64_t checkpoint_every = 0;
  std::filesystem::path out_dir = "out";
  bool trace = false;

  /// Recomputes the linear power values from their dB settings.
  void sync_power() {
    env.power.p_max = db_to_linear(power_db);
    env.power.sigma2 = db_to_linear(noise_db);
  }

  TrainSetup train_setup() const {
    TrainSetup s;
    s.env = env;
    s.agent = agent;
    s.seed = *seed;
    s.checkpoint_every = checkpoint_every;
    s.checkpoint_dir = out_dir / "checkpoints";
    return s;
  }
};

/// Simulation settings from the reference setup: Omega = 10, alpha = 2,
/// h_B = 20, h_U = 30, sigma^2 = -60 dB, R_min = 1.2, area (45,45)-(55,55),
/// start (50,0), and the DDPG hyperparameters beta = 1e-3, lambda = 0.95,
/// tau = 0.005, C = 50000, J = 1000, T = 500, N_B = 16, 300 hidden units.
inline ExperimentConfig paper_profile() {
  ExperimentConfig c;
  c.profile = "paper";
  c.env.elements = 64;
  c.env.users = 4;
  c.env.steps = 500;
  c.env.r_min = 1.2;
  c.env.rician_factor = 10.0;
  c.env.geometry.bs_xy = {0.0, 0.0};
  c.env.geometry.bs_height = 20.0;
  c.env.geometry.uav_height = 30.0;
  c.env.geometry.uav_xy = {50.0, 0.0};
  c.env.geometry.area = {45.0, 45.0, 55.0, 55.0};
  c.env.geometry.path_loss_exp = 2.0;
  c.agent.actor_lr = 1e-3;
  c.agent.critic_lr = 1e-3;
  c.agent.discount = 0.95;
  c.agent.tau = 0.005;
  c.agent.capacity = 50000;
  c.agent.warmup = 50000;
  c.agent.episodes = 1000;
  c.agent.batch_size = 16;
  c.agent.hidden = 300;
  c.agent.noise_variance = 0.1;
  c.agent.batch_norm = true;
  c.power_db = 10.0;
  c.noise_db = -60.0;
  c.sync_power();
  return c;
}

/// Scaled-down setup that trains in seconds: N = 8, K = 2, J = 200, T = 100,
/// C = 5000 with a 1000-transition warmup, myopic targets.
inline ExperimentConfig desk_profile() {
  ExperimentConfig c = paper_profile();
  c.profile = "desk";
  c.env.elements = 8;
  c.env.users = 2;
  c.env.steps = 100;
  c.agent.episodes = 200;
  c.agent.capacity = 5000;
  c.agent.warmup = 1000;
  c.agent.actor_lr = 1e-4;
  c.agent.critic_lr = 1e-3;
  c.agent.batch_size = 32;
  c.agent.batch_norm = false;
  c.agent.discount = 0.0;
  return c;
}

inline ExperimentConfig profile_defaults(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw ConfigError("profile: unknown profile '" + name + "' (expected paper or desk)");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

/// Reads `key = value` lines; `#` starts a comment.
inline ConfigMap parse_config(std::istream& is, const std::string& origin = "config") {
  ConfigMap m;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    m[key] = value;
  }
  return m;
}

inline ConfigMap parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  return parse_config(is, path.string());
}

/// Applies one setting. Unknown keys are rejected.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_number;
  auto& g = c.env.geometry;
  if (key == "profile") {
    c.profile = v;
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "elements") {
    c.env.elements = parse_number<std::int64_t>(key, v);
  } else if (key == "users") {
    c.env.users = parse_number<std::int64_t>(key, v);
  } else if (key == "steps") {
    c.env.steps = parse_number<std::int64_t>(key, v);
  } else if (key == "episodes") {
    c.agent.episodes = parse_number<std::int64_t>(key, v);
  } else if (key == "power-db") {
    c.power_db = parse_number<double>(key, v);
  } else if (key == "noise-db") {
    c.noise_db = parse_number<double>(key, v);
  } else if (key == "r-min") {
    c.env.r_min = parse_number<double>(key, v);
  } else if (key == "rician-factor") {
    c.env.rician_factor = parse_number<double>(key, v);
  } else if (key == "path-loss-exp") {
    g.path_loss_exp = parse_number<double>(key, v);
  } else if (key == "path-loss-model") {
    if (v == "amplitude") c.env.path_loss = PathLoss::amplitude;
    else if (v == "power") c.env.path_loss = PathLoss::power;
    else throw ConfigError(key + ": expected amplitude or power, got '" + v + "'");
  } else if (key == "los-draw") {
    if (v == "per-episode") c.env.los_draw = LosDraw::per_episode;
    else if (v == "per-run") c.env.los_draw = LosDraw::per_run;
    else throw ConfigError(key + ": expected per-episode or per-run, got '" + v + "'");
  } else if (key == "bs-x") {
    g.bs_xy.x = parse_number<double>(key, v);
  } else if (key == "bs-y") {
    g.bs_xy.y = parse_number<double>(key, v);
  } else if (key == "bs-height") {
    g.bs_height = parse_number<double>(key, v);
  } else if (key == "uav-height") {
    g.uav_height = parse_number<double>(key, v);
  } else if (key == "uav-start-x") {
    g.uav_xy.x = parse_number<double>(key, v);
  } else if (key == "uav-start-y") {
    g.uav_xy.y = parse_number<double>(key, v);
  } else if (key == "area-x-min") {
    g.area.x_min = parse_number<double>(key, v);
  } else if (key == "area-y-min") {
    g.area.y_min = parse_number<double>(key, v);
  } else if (key == "area-x-max") {
    g.area.x_max = parse_number<double>(key, v);
  } else if (key == "area-y-max") {
    g.area.y_max = parse_number<double>(key, v);
  } else if (key == "actor-lr") {
    c.agent.actor_lr = parse_number<double>(key, v);
  } else if (key == "critic-lr") {
    c.agent.critic_lr = parse_number<double>(key, v);
  } else if (key == "learning-rate") {
    c.agent.actor_lr = c.agent.critic_lr = parse_number<double>(key, v);
  } else if (key == "discount") {
    c.agent.discount = parse_number<double>(key, v);
  } else if (key == "tau") {
    c.agent.tau = parse_number<double>(key, v);
  } else if (key == "batch-size") {
    c.agent.batch_size = parse_number<std::size_t>(key, v);
  } else if (key == "capacity") {
    c.agent.capacity = parse_number<std::size_t>(key, v);
  } else if (key == "warmup") {
    c.agent.warmup = parse_number<std::size_t>(key, v);
  } else if (key == "noise-variance") {
    c.agent.noise_variance = parse_number<double>(key, v);
  } else if (key == "hidden") {
    c.agent.hidden = parse_number<std::int64_t>(key, v);
  } else if (key == "batch-norm") {
    c.agent.batch_norm = parse_bool(key, v);
  } else if (key == "eval-episodes") {
    c.eval_episodes = parse_number<std::int64_t>(key, v);
  } else if (key == "checkpoint-every") {
    c.checkpoint_every = parse_number<std::int64_t>(key, v);
  } else if (key == "out") {
    c.out_dir = v;
  } else if (key == "trace") {
    c.trace = parse_bool(key, v);
  } else {
    throw ConfigError(key + ": unknown configuration key");
  }
}

/// Checks every field, naming the offending one in the error.
inline void validate(const ExperimentConfig& c) {
  if (!c.seed) throw ConfigError("seed: required (no unseeded runs)");
  if (c.eval_episodes < 1) throw ConfigError("eval-episodes: must be at least 1");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint-every: must be non-negative");
  const auto& g = c.env.geometry;
  if (g.uav_xy == g.bs_xy && g.bs_height == g.uav_height)
    throw ConfigError("uav-start-x: start point coincides with the base station");
  try {
    c.env.validate();
    c.agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// profile defaults <- file <- overrides. The profile itself may be chosen
/// in either layer; the override wins.
inline ExperimentConfig resolve_config(const ConfigMap& file, const ConfigMap& overrides) {
  ConfigMap merged = file;
  for (const auto& [k, v] : overrides) merged[k] = v;
  const auto p = merged.find("profile");
  ExperimentConfig c = profile_defaults(p == merged.end() ? "paper" : p->second);
  for (const auto& [k, v] : merged) apply_setting(c, k, v);
  c.sync_power();
  validate(c);
  return c;
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  using detail::fmt;
  const auto& g = c.env.geometry;
  os << "# resolved configuration\n";
  os << "profile = " << c.profile << '\n';
  if (c.seed) os << "seed = " << *c.seed << '\n';
  os << "elements = " << c.env.elements << '\n';
  os << "users = " << c.env.users << '\n';
  os << "steps = " << c.env.steps << '\n';
  os << "episodes = " << c.agent.episodes << '\n';
  os << "power-db = " << fmt(c.power_db) << '\n';
  os << "noise-db = " << fmt(c.noise_db) << '\n';
  os << "r-min = " << fmt(c.env.r_min) << '\n';
  os << "rician-factor = " << fmt(c.env.rician_factor) << '\n';
  os << "path-loss-exp = " << fmt(g.path_loss_exp) << '\n';
  os << "path-loss-model = " << (c.env.path_loss == PathLoss::amplitude ? "amplitude" : "power")
     << '\n';
  os << "los-draw = " << (c.env.los_draw == LosDraw::per_run ? "per-run" : "per-episode") << '\n';
  os << "bs-x = " << fmt(g.bs_xy.x) << '\n';
  os << "bs-y = " << fmt(g.bs_xy.y) << '\n';
  os << "bs-height = " << fmt(g.bs_height) << '\n';
  os << "uav-height = " << fmt(g.uav_height) << '\n';
  os << "uav-start-x = " << fmt(g.uav_xy.x) << '\n';
  os << "uav-start-y = " << fmt(g.uav_xy.y) << '\n';
  os << "area-x-min = " << fmt(g.area.x_min) << '\n';
  os << "area-y-min = " << fmt(g.area.y_min) << '\n';
  os << "area-x-max = " << fmt(g.area.x_max) << '\n';
  os << "area-y-max = " << fmt(g.area.y_max) << '\n';
  os << "actor-lr = " << fmt(c.agent.actor_lr) << '\n';
  os << "critic-lr = " << fmt(c.agent.critic_lr) << '\n';
  os << "discount = " << fmt(c.agent.discount) << '\n';
  os << "tau = " << fmt(c.agent.tau) << '\n';
  os << "batch-size = " << c.agent.batch_size << '\n';
  os << "capacity = " << c.agent.capacity << '\n';
  os << "warmup = " << c.agent.warmup << '\n';
  os << "noise-variance = " << fmt(c.agent.noise_variance) << '\n';
  os << "hidden = " << c.agent.hidden << '\n';
  os << "batch-norm = " << (c.agent.batch_norm ? "true" : "false") << '\n';
  os << "eval-episodes = " << c.eval_episodes << '\n';
  os << "checkpoint-every = " << c.checkpoint_every << '\n';
  os << "trace = " << (c.trace ? "true" : "false") << '\n';
}

// ---------------------------------------------------------------------------
// CSV artifacts

/// episode,accumulated_reward,mean_critic_loss,mean_actor_objective,
/// qos_violation_rate,mean_sum_rate
inline void write_metrics_csv(std::ostream& os, const std::vector<EpisodeMetrics>& rows) {
  os << std::setprecision(17);
  os << "episode,accumulated_reward,mean_critic_loss,mean_actor_objective,qos_violation_rate,"
        "mean_sum_rate\n";
  for (const auto& r : rows)
    os << r.episode << ',' << r.accumulated_reward << ',' << r.mean_critic_loss << ','
       << r.mean_actor_objective << ',' << r.qos_violation_rate << ',' << r.mean_sum_rate << '\n';
}

/// episode,accumulated_reward,mean_sum_rate,qos_violation_rate
inline void write_eval_csv(std::ostream& os, const EvalResult& eval) {
  os << std::setprecision(17);
  os << "episode,accumulated_reward,mean_sum_rate,qos_violation_rate\n";
  for (const auto& r : eval.episodes)
    os << r.episode << ',' << r.accumulated_reward << ',' << r.mean_sum_rate << ','
       << r.qos_violation_rate << '\n';
}

struct SweepRow {
  double axis_value = 0.0;
  double mean_sum_rate = 0.0;
  double baseline_sum_rate = 0.0;
};

/// axis_value,mean_sum_rate,baseline_sum_rate
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << std::setprecision(17);
  os << "axis_value,mean_sum_rate,baseline_sum_rate\n";
  for (const auto& r : rows)
    os << r.axis_value << ',' << r.mean_sum_rate << ',' << r.baseline_sum_rate << '\n';
}

// ---------------------------------------------------------------------------
// Drivers

/// Creates the output directory. An existing non-empty directory is an
/// error unless `force` is set.
inline void prepare_output_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ConfigError("out: directory " + dir.string() +
                      " already exists and is not empty (use --force to overwrite)");
  fs::create_directories(dir);
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
  return os;
}

}  // namespace detail

struct TrainOutcome {
  RunMetrics run;
  EvalResult greedy;
};

/// Trains, evaluates the greedy policy on fresh episodes, and writes
/// config.txt, metrics.csv, final_eval.csv, actor.txt and critic.txt.
inline TrainOutcome run_train(const ExperimentConfig& cfg) {
  const auto& out = cfg.out_dir;
  {
    auto os = detail::open_out(out / "config.txt");
    write_config(os, cfg);
  }
  const TrainSetup setup = cfg.train_setup();
  std::optional<std::ofstream> trace_file;
  std::optional<TraceWriter> trace;
  if (cfg.trace) {
    trace_file.emplace(detail::open_out(out / "trace.csv"));
    trace.emplace(*trace_file, cfg.env.users);
  }
  TrainOutcome o;
  o.run = train(setup, [&](const StepRecord& r) {
    if (trace) trace->write(r.episode, r.step, r.result);
  });
  const SeedPlan seeds{*cfg.seed};
  const InputScaling scaling(cfg.env);
  o.greedy = run_policy(cfg.env, seeds, greedy_policy(o.run.actor, scaling), cfg.eval_episodes,
                        true);
  {
    auto os = detail::open_out(out / "metrics.csv");
    write_metrics_csv(os, o.run.episodes);
  }
  {
    auto os = detail::open_out(out / "final_eval.csv");
    write_eval_csv(os, o.greedy);
  }
  nn::save_file((out / "actor.txt").string(), o.run.actor);
  nn::save_file((out / "critic.txt").string(), o.run.critic);
  return o;
}

inline Policy make_baseline_policy(const ExperimentConfig& cfg, BaselinePolicy kind,
                                   std::uint64_t seed) {
  return kind == BaselinePolicy::random ? random_policy(cfg.env.action_dim(), seed)
                                        : equal_power_centered_policy(cfg.env, seed);
}

struct BaselineOutcome {
  EvalResult training_episodes;
  EvalResult eval;
};

/// Rolls a fixed policy over the training episodes (metrics.csv, same schema
/// as run_train with zero losses) and the evaluation episodes
/// (final_eval.csv).
inline BaselineOutcome run_baseline(const ExperimentConfig& cfg, BaselinePolicy kind) {
  const auto& out = cfg.out_dir;
  {
    auto os = detail::open_out(out / "config.txt");
    write_config(os, cfg);
    os << "baseline = " << (kind == BaselinePolicy::random ? "random" : "equal-power-centered")
       << '\n';
  }
  const SeedPlan seeds{*cfg.seed};
  std::optional<std::ofstream> trace_file;
  std::optional<TraceWriter> trace;
  if (cfg.trace) {
    trace_file.emplace(detail::open_out(out / "trace.csv"));
    trace.emplace(*trace_file, cfg.env.users);
  }
  BaselineOutcome o;
  o.training_episodes = run_policy(
      cfg.env, seeds, make_baseline_policy(cfg, kind, seeds.baseline()), cfg.agent.episodes, false,
      [&](const StepRecord& r) {
        if (trace) trace->write(r.episode, r.step, r.result);
      });
  o.eval = run_policy(cfg.env, seeds, make_baseline_policy(cfg, kind, derive_seed(seeds.baseline(), 1)),
                      cfg.eval_episodes, true);
  {
    auto os = detail::open_out(out / "metrics.csv");
    write_metrics_csv(os, o.training_episodes.episodes);
  }
  {
    auto os = detail::open_out(out / "final_eval.csv");
    write_eval_csv(os, o.eval);
  }
  return o;
}

inline void set_axis(ExperimentConfig& c, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::power:
      c.power_db = value;
      c.sync_power();
      break;
    case SweepAxis::elements:
      c.env.elements = static_cast<Eigen::Index>(std::llround(value));
      break;
    case SweepAxis::users:
      c.env.users = static_cast<Eigen::Index>(std::llround(value));
      break;
  }
}

/// Trains and evaluates one point per value (seed derived from the master
/// seed and the point index), comparing against the random policy on the
/// same evaluation episodes. Points run on up to `jobs` threads.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                       const std::vector<double>& values, unsigned jobs = 1) {
  if (values.empty()) throw ConfigError("values: sweep needs at least one value");
  std::vector<ExperimentConfig> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig p = cfg;
    set_axis(p, axis, values[i]);
    p.seed = derive_seed(*cfg.seed, 100 + i);
    p.out_dir = cfg.out_dir / ("point_" + std::to_string(i));
    p.trace = false;
    validate(p);
    points.push_back(std::move(p));
  }
  {
    auto os = detail::open_out(cfg.out_dir / "config.txt");
    write_config(os, cfg);
  }

  const auto run_point = [](const ExperimentConfig& p, double value) {
    std::filesystem::create_directories(p.out_dir);
    const TrainOutcome t = run_train(p);
    const SeedPlan seeds{*p.seed};
    const EvalResult base = run_policy(
        p.env, seeds, random_policy(p.env.action_dim(), derive_seed(seeds.baseline(), 1)),
        p.eval_episodes, true);
    return SweepRow{value, t.greedy.mean_sum_rate, base.mean_sum_rate};
  };

  std::vector<SweepRow> rows(values.size());
  jobs = std::max(1u, jobs);
  for (std::size_t start = 0; start < points.size(); start += jobs) {
    std::vector<std::future<SweepRow>> pending;
    const std::size_t end = std::min(points.size(), start + jobs);
    for (std::size_t i = start; i < end; ++i)
      pending.push_back(std::async(std::launch::async, run_point, std::cref(points[i]), values[i]));
    for (std::size_t i = start; i < end; ++i) rows[i] = pending[i - start].get();
  }
  auto os = detail::open_out(cfg.out_dir / "sweep.csv");
  write_sweep_csv(os, rows);
  return rows;
}

/// Greedy evaluation of a saved actor on the configured evaluation episodes.
inline EvalResult eval_checkpoint(const ExperimentConfig& cfg,
                                  const std::filesystem::path& actor_path) {
  const nn::MlpParams actor = nn::load_file(actor_path.string());
  if (actor.input_width() != cfg.env.state_dim() || actor.output_width() != cfg.env.action_dim())
    throw ConfigError("actor: checkpoint shape does not match elements/users of the config");
  const SeedPlan seeds{*cfg.seed};
  const InputScaling scaling(cfg.env);
  EvalResult r = run_policy(cfg.env, seeds, greedy_policy(actor, scaling), cfg.eval_episodes, true);
  {
    auto os = detail::open_out(cfg.out_dir / "config.txt");
    write_config(os, cfg);
  }
  auto os = detail::open_out(cfg.out_dir / "final_eval.csv");
  write_eval_csv(os, r);
  return r;
}

}  // namespace irsnoma
