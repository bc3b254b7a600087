#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "irsnoma/experiment.hpp"

namespace irsnoma {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("irsnoma_experiment_test_" + name);
  fs::remove_all(p);
  return p;
}

ConfigMap tiny_overrides(const fs::path& out) {
  return {{"profile", "desk"},   {"seed", "5"},         {"episodes", "2"},
          {"steps", "10"},       {"warmup", "12"},      {"capacity", "50"},
          {"batch-size", "4"},   {"hidden", "8"},       {"eval-episodes", "2"},
          {"out", out.string()}};
}

TEST(ParseConfig, KeyValueWithComments) {
  std::istringstream is("# comment\n  elements = 16  \n\nusers=3 # trailing\n");
  const ConfigMap m = parse_config(is);
  EXPECT_EQ(m.at("elements"), "16");
  EXPECT_EQ(m.at("users"), "3");
  EXPECT_EQ(m.size(), 2u);
  std::istringstream bad("no equals sign here\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
}

TEST(ResolveConfig, LayersProfileFileAndOverrides) {
  const ConfigMap file{{"profile", "desk"}, {"seed", "1"}, {"elements", "12"}, {"users", "3"}};
  const ConfigMap over{{"users", "5"}, {"power-db", "20"}};
  const ExperimentConfig c = resolve_config(file, over);
  EXPECT_EQ(c.profile, "desk");
  EXPECT_EQ(c.env.elements, 12);
  EXPECT_EQ(c.env.users, 5);
  EXPECT_DOUBLE_EQ(c.env.power.p_max, 100.0);
  EXPECT_EQ(c.agent.episodes, desk_profile().agent.episodes);
}

TEST(ResolveConfig, MissingSeedIsAConfigError) {
  try {
    resolve_config({}, {{"profile", "desk"}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }
}

TEST(ResolveConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(resolve_config({}, {{"seed", "1"}, {"elemnts", "8"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"seed", "1"}, {"elements", "eight"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"seed", "1"}, {"elements", "0"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"seed", "1"}, {"profile", "huge"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"seed", "1"}, {"batch-norm", "maybe"}}), ConfigError);
}

TEST(Profiles, ReferenceSettings) {
  const ExperimentConfig p = paper_profile();
  EXPECT_EQ(p.env.elements, 64);
  EXPECT_EQ(p.env.users, 4);
  EXPECT_EQ(p.env.steps, 500);
  EXPECT_EQ(p.agent.episodes, 1000);
  EXPECT_EQ(p.agent.capacity, 50000u);
  EXPECT_EQ(p.agent.batch_size, 16u);
  EXPECT_EQ(p.agent.hidden, 300);
  EXPECT_DOUBLE_EQ(p.agent.discount, 0.95);
  EXPECT_DOUBLE_EQ(p.agent.tau, 0.005);
  EXPECT_DOUBLE_EQ(p.agent.actor_lr, 1e-3);
  EXPECT_DOUBLE_EQ(p.env.rician_factor, 10.0);
  EXPECT_DOUBLE_EQ(p.env.r_min, 1.2);
  EXPECT_DOUBLE_EQ(p.env.geometry.bs_height, 20.0);
  EXPECT_DOUBLE_EQ(p.env.geometry.uav_height, 30.0);
  EXPECT_DOUBLE_EQ(p.env.power.sigma2, 1e-6);

  const ExperimentConfig d = desk_profile();
  EXPECT_EQ(d.env.elements, 8);
  EXPECT_EQ(d.env.users, 2);
  EXPECT_EQ(d.env.steps, 100);
  EXPECT_EQ(d.agent.episodes, 200);
}

TEST(WriteConfig, RoundTripsThroughParser) {
  const ExperimentConfig c =
      resolve_config({}, {{"seed", "99"}, {"profile", "desk"}, {"tau", "0.01"}, {"los-draw", "per-episode"}});
  std::stringstream ss;
  write_config(ss, c);
  const ExperimentConfig d = resolve_config(parse_config(ss), {});
  std::stringstream again;
  write_config(again, d);
  EXPECT_EQ(ss.str(), again.str());
  EXPECT_EQ(d.env.los_draw, LosDraw::per_episode);
  EXPECT_EQ(*d.seed, 99u);
}

TEST(OutputDir, RefusesNonEmptyWithoutForce) {
  const fs::path dir = scratch("collide");
  prepare_output_dir(dir, false);
  std::ofstream(dir / "x.txt") << "x";
  EXPECT_THROW(prepare_output_dir(dir, false), ConfigError);
  EXPECT_NO_THROW(prepare_output_dir(dir, true));
  fs::remove_all(dir);
}

TEST(RunBaseline, EqualPowerSharesInTrace) {
  const fs::path dir = scratch("equal");
  auto over = tiny_overrides(dir);
  over["users"] = "4";
  over["trace"] = "true";
  const ExperimentConfig c = resolve_config({}, over);
  prepare_output_dir(dir, false);
  run_baseline(c, BaselinePolicy::equal_power_centered);
  std::ifstream is(dir / "trace.csv");
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 4u + 4u + 4u + 3u);
    for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(std::stod(cells[8 + k]), 0.25);
    EXPECT_DOUBLE_EQ(std::stod(cells[12]), 50.0);
    EXPECT_DOUBLE_EQ(std::stod(cells[13]), 50.0);
    ++rows;
  }
  EXPECT_EQ(rows, 20);
  fs::remove_all(dir);
}

TEST(RunBaseline, RandomPolicyIsReproducible) {
  const fs::path a = scratch("rand_a"), b = scratch("rand_b");
  for (const auto& dir : {a, b}) {
    prepare_output_dir(dir, false);
    auto over = tiny_overrides(dir);
    over["elements"] = "50";
    const auto out = run_baseline(resolve_config({}, over), BaselinePolicy::random);
    EXPECT_GT(out.eval.mean_sum_rate, 0.0);
  }
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "final_eval.csv"), slurp(b / "final_eval.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(RunTrain, WritesArtifactsAndCheckpointEvalMatches) {
  const fs::path dir = scratch("train"), eval_dir = scratch("train_eval");
  const ExperimentConfig c = resolve_config({}, tiny_overrides(dir));
  prepare_output_dir(dir, false);
  const TrainOutcome o = run_train(c);
  for (const char* f : {"config.txt", "metrics.csv", "final_eval.csv", "actor.txt", "critic.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "trace.csv"));

  ExperimentConfig e = c;
  e.out_dir = eval_dir;
  prepare_output_dir(eval_dir, false);
  const EvalResult r = eval_checkpoint(e, dir / "actor.txt");
  EXPECT_EQ(r.mean_sum_rate, o.greedy.mean_sum_rate);
  EXPECT_EQ(slurp(dir / "final_eval.csv"), slurp(eval_dir / "final_eval.csv"));

  e.env.elements = 9;
  EXPECT_THROW(eval_checkpoint(e, dir / "actor.txt"), ConfigError);
  fs::remove_all(dir);
  fs::remove_all(eval_dir);
}

TEST(RunSweep, EmptyValuesAndSmallSweep) {
  const fs::path dir = scratch("sweep");
  const ExperimentConfig c = resolve_config({}, tiny_overrides(dir));
  EXPECT_THROW(run_sweep(c, SweepAxis::power, {}), ConfigError);
  prepare_output_dir(dir, false);
  const auto rows = run_sweep(c, SweepAxis::elements, {2.0, 3.0}, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].axis_value, 3.0);
  const std::string csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(csv.rfind("axis_value,mean_sum_rate,baseline_sum_rate\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "point_1" / "actor.txt"));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace irsnoma
