// irsnoma: train and evaluate the DDPG controller for an IRS-equipped UAV
// serving a NOMA downlink.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime/numerical error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irsnoma/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config_path;
  std::string profile;
  std::string seed;
  std::string elements;
  std::string users;
  std::string power_db;
  std::string episodes;
  std::string steps;
  std::string out;
  std::vector<std::string> settings;
  bool force = false;
  bool trace = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_option("--profile", profile, "parameter profile: paper or desk");
    cmd->add_option("--seed", seed, "master seed (required)");
    cmd->add_option("--elements", elements, "IRS elements N");
    cmd->add_option("--users", users, "users K");
    cmd->add_option("--power-db", power_db, "transmit power P_t in dB");
    cmd->add_option("--episodes", episodes, "training episodes J");
    cmd->add_option("--steps", steps, "steps per episode T");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--set", settings, "extra key=value override (repeatable)");
    cmd->add_flag("--force", force, "overwrite a non-empty output directory");
    cmd->add_flag("--trace", trace, "write a per-step trace.csv");
  }

  irsnoma::ExperimentConfig resolve() const {
    irsnoma::ConfigMap file;
    if (!config_path.empty()) file = irsnoma::parse_config_file(config_path);
    irsnoma::ConfigMap over;
    for (const auto& kv : settings) {
      std::istringstream is(kv);
      const auto parsed = irsnoma::parse_config(is, "--set");
      over.insert(parsed.begin(), parsed.end());
    }
    const auto put = [&](const char* key, const std::string& v) {
      if (!v.empty()) over[key] = v;
    };
    put("profile", profile);
    put("seed", seed);
    put("elements", elements);
    put("users", users);
    put("power-db", power_db);
    put("episodes", episodes);
    put("steps", steps);
    put("out", out);
    if (trace) over["trace"] = "true";
    return irsnoma::resolve_config(file, over);
  }
};

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = irsnoma::detail::trim(tok);
    if (tok.empty()) continue;
    values.push_back(irsnoma::detail::parse_number<double>("values", tok));
  }
  if (values.empty()) throw irsnoma::ConfigError("values: sweep needs at least one value");
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDPG optimizer for an IRS-equipped UAV NOMA downlink"};
  app.require_subcommand(1);

  CommonFlags train_flags, base_flags, sweep_flags, eval_flags;

  auto* train_cmd = app.add_subcommand("run-train", "train the agent and evaluate its greedy policy");
  train_flags.attach(train_cmd);

  auto* base_cmd = app.add_subcommand("run-baseline", "roll out a fixed baseline policy");
  base_flags.attach(base_cmd);
  std::string policy = "random";
  base_cmd->add_option("--policy", policy, "random or equal-power-centered")
      ->check(CLI::IsMember({"random", "equal-power-centered"}));

  auto* sweep_cmd = app.add_subcommand("run-sweep", "train and evaluate across one parameter");
  sweep_flags.attach(sweep_cmd);
  std::string axis;
  std::string values;
  unsigned jobs = 1;
  sweep_cmd->add_option("--axis", axis, "power, elements or users")
      ->required()
      ->check(CLI::IsMember({"power", "elements", "users"}));
  sweep_cmd->add_option("--values", values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--jobs", jobs, "sweep points trained in parallel");

  auto* eval_cmd = app.add_subcommand("eval-checkpoint", "evaluate a saved actor greedily");
  eval_flags.attach(eval_cmd);
  std::string actor_path;
  eval_cmd->add_option("--actor", actor_path, "actor archive (actor.txt or a checkpoint)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) {
      const auto cfg = train_flags.resolve();
      irsnoma::prepare_output_dir(cfg.out_dir, train_flags.force);
      const auto o = irsnoma::run_train(cfg);
      std::cout << "trained " << o.run.episodes.size() << " episodes, " << o.run.updates
                << " updates; greedy mean sum rate " << o.greedy.mean_sum_rate << " bit/s/Hz\n";
    } else if (base_cmd->parsed()) {
      const auto cfg = base_flags.resolve();
      irsnoma::prepare_output_dir(cfg.out_dir, base_flags.force);
      const auto kind = policy == "random" ? irsnoma::BaselinePolicy::random
                                           : irsnoma::BaselinePolicy::equal_power_centered;
      const auto o = irsnoma::run_baseline(cfg, kind);
      std::cout << policy << " baseline mean sum rate " << o.eval.mean_sum_rate << " bit/s/Hz\n";
    } else if (sweep_cmd->parsed()) {
      const auto cfg = sweep_flags.resolve();
      const auto vals = parse_values(values);
      irsnoma::prepare_output_dir(cfg.out_dir, sweep_flags.force);
      const auto a = axis == "power"      ? irsnoma::SweepAxis::power
                     : axis == "elements" ? irsnoma::SweepAxis::elements
                                          : irsnoma::SweepAxis::users;
      for (const auto& row : irsnoma::run_sweep(cfg, a, vals, jobs))
        std::cout << axis << '=' << row.axis_value << " optimized " << row.mean_sum_rate
                  << " random " << row.baseline_sum_rate << '\n';
    } else if (eval_cmd->parsed()) {
      const auto cfg = eval_flags.resolve();
      irsnoma::prepare_output_dir(cfg.out_dir, eval_flags.force);
      const auto r = irsnoma::eval_checkpoint(cfg, actor_path);
      std::cout << "greedy mean sum rate " << r.mean_sum_rate << " bit/s/Hz\n";
    }
  } catch (const irsnoma::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const irsnoma::nn::ArchiveError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
