#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "diffrl/harness.hpp"

using namespace diffrl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

harness::ExperimentConfig tiny_training_config(const std::string& out) {
  harness::ExperimentConfig cfg;
  cfg.env = "scripted";
  cfg.script_stiff_from = 25;  // schedule never fires
  cfg.script_period = 20;
  cfg.algo = "shac";
  cfg.seeds = {1, 2};
  cfg.out_dir = out;
  cfg.horizon = 4;
  cfg.num_envs = 2;
  cfg.max_windows = 3;
  cfg.actor_layers = {6};
  cfg.critic_layers = {6};
  return cfg;
}

}  // namespace

TEST_CASE("iqm") {
  CHECK(harness::iqm({0, 1, 2, 100}) == doctest::Approx(1.5));
  CHECK(harness::iqm({7, 7, 7, 7, 7}) == 7.0);
  CHECK(harness::iqm({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}) == doctest::Approx(5.5));
  CHECK(harness::iqm({3, 1, 100, 2, 0, 4}) ==
        doctest::Approx(harness::iqm({0, 1, 2, 3, 4, 100})));
  CHECK(harness::iqm({1, 2, 3, 4}, 1.0) == doctest::Approx(2.5));  // plain mean
  CHECK_THROWS_AS(harness::iqm({}), ad::ArityError);

  RngStream rng(23, 0, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(1 + rng.below(12));
    for (double& x : v) x = rng.uniform(-50, 50);
    double q = harness::iqm(v);
    CHECK(q >= *std::min_element(v.begin(), v.end()));
    CHECK(q <= *std::max_element(v.begin(), v.end()));
  }
}

TEST_CASE("bootstrap iqm ci") {
  std::vector<double> v = {1.0, 2.0, 3.0, 4.0, 5.0};
  harness::CiResult a = harness::bootstrap_iqm_ci(v);
  harness::CiResult b = harness::bootstrap_iqm_ci(v);
  CHECK(a.point == harness::iqm(v));
  CHECK(a.lo <= a.point);
  CHECK(a.point <= a.hi);
  CHECK(a.lo == b.lo);  // deterministic resampling
  CHECK(a.hi == b.hi);
}

TEST_CASE("config parsing") {
  harness::ExperimentConfig def = harness::parse_config("{}");
  CHECK(def.gamma == 0.99);
  CHECK(def.horizon == 32);
  CHECK(def.seeds == std::vector<uint64_t>{1, 2, 3, 4, 5});

  harness::ExperimentConfig cfg = harness::parse_config(
      R"({"algo": "ahac", "lambda": 0.9, "seeds": [7], "actor_layers": [16, 8]})");
  CHECK(cfg.algo == "ahac");
  CHECK(cfg.td_lambda == 0.9);
  CHECK(cfg.seeds == std::vector<uint64_t>{7});
  CHECK(cfg.actor_layers == std::vector<int>{16, 8});

  CHECK_THROWS_AS(harness::parse_config(R"({"horzion": 8})"),
                  harness::ConfigError);
  CHECK_THROWS_AS(harness::parse_config("not json"), harness::ConfigError);
  CHECK_THROWS_AS(harness::parse_config("[1,2]"), harness::ConfigError);
  CHECK_THROWS_AS(harness::parse_config(R"({"gamma": "high"})"),
                  harness::ConfigError);
}

TEST_CASE("environment variable overrides") {
  setenv("DIFFRL_horizon", "7", 1);
  setenv("DIFFRL_algo", "bptt", 1);
  harness::ExperimentConfig cfg = harness::parse_config(R"({"horizon": 16})");
  unsetenv("DIFFRL_horizon");
  unsetenv("DIFFRL_algo");
  CHECK(cfg.horizon == 7);  // env var wins over the file
  CHECK(cfg.algo == "bptt");
  REQUIRE(cfg.overrides_applied.size() == 2);
  std::string echo = harness::config_echo(cfg);
  CHECK(echo.find("\"_overrides\"") != std::string::npos);
  CHECK(echo.find("horizon=7") != std::string::npos);
}

TEST_CASE("train config validation") {
  harness::ExperimentConfig cfg;
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.to_train_config(), harness::ConfigError);
  cfg.gamma = 0.99;
  cfg.td_lambda = 1.5;
  CHECK_THROWS_AS(cfg.to_train_config(), harness::ConfigError);
  cfg.td_lambda = 0.95;
  cfg.algo = "ppo";
  CHECK_THROWS_AS(cfg.to_train_config(), harness::ConfigError);
  cfg.algo = "ahac1";
  cfg.stiff_norm = "nuclear";
  CHECK_THROWS_AS(cfg.to_train_config(), harness::ConfigError);
  cfg.stiff_norm = "operator2";
  learn::TrainConfig tc = cfg.to_train_config();
  CHECK(tc.algo == learn::Algo::AHAC1);
  CHECK(tc.stiff_norm == ad::JacNorm::Operator2);
  CHECK(tc.critic.grad_norm == cfg.grad_norm);
}

TEST_CASE("make_env") {
  harness::ExperimentConfig cfg;
  cfg.env = "hopper";
  cfg.episode_length = 120;
  auto hopper = harness::make_env(cfg);
  CHECK(hopper->state_dim() == 10);
  CHECK(hopper->config().h_max == 120);
  cfg.env = "ball";
  CHECK(harness::make_env(cfg)->state_dim() == 4);
  cfg.env = "scripted";
  CHECK(harness::make_env(cfg)->state_dim() == 1);
  cfg.env = "cartpole";
  CHECK_THROWS_AS(harness::make_env(cfg), harness::ConfigError);
}

TEST_CASE("format_double round-trips shortest representations") {
  CHECK(harness::format_double(0.1) == "0.1");
  CHECK(harness::format_double(42.0) == "42");
  RngStream rng(41, 0, 0);
  for (int i = 0; i < 200; ++i) {
    double x = rng.uniform(-1e6, 1e6) * std::pow(10.0, double(rng.below(9)) - 4.0);
    CHECK(std::stod(harness::format_double(x)) == x);
  }
}

TEST_CASE("csv round-trip") {
  TempDir dir("diffrl_csv_test");
  harness::Table t;
  t.columns = {"a", "b", "c"};
  t.rows = {{"1", "2.5", "x"}, {"-3", "0.125", "yz"}};
  std::string path = dir.str() + "/t.csv";
  harness::write_csv(t, path);
  harness::Table back = harness::read_csv(path);
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);
  CHECK_THROWS_AS(harness::read_csv(dir.str() + "/missing.csv"),
                  harness::IOError);
}

TEST_CASE("svg chart") {
  TempDir dir("diffrl_svg_test");
  harness::Series s{"demo", {1.0, 2.0}, {3.0, 4.0}};
  harness::ChartOptions opt;
  std::string p1 = dir.str() + "/a.svg", p2 = dir.str() + "/b.svg";
  harness::emit_svg_chart({s}, opt, p1);
  harness::emit_svg_chart({s}, opt, p2);
  std::string body = slurp(p1);
  CHECK(body.find("<svg") != std::string::npos);
  CHECK(body.find("<polyline") != std::string::npos);
  CHECK(body == slurp(p2));  // deterministic bytes
  CHECK_THROWS_AS(
      harness::emit_svg_chart({s}, opt, dir.str() + "/no/dir/x.svg"),
      harness::IOError);
}

TEST_CASE("heaviside study emits the full cartesian product") {
  TempDir dir("diffrl_heav_test");
  harness::ExperimentConfig cfg;
  cfg.out_dir = dir.str();
  cfg.n_grid = {10, 50};
  cfg.reps = 3;
  CHECK(harness::run_heaviside_study(cfg) == 0);
  harness::Table t = harness::read_csv(dir.str() + "/heaviside.csv");
  CHECK(t.rows.size() == 2 * 2 * 3);  // methods x N grid x reps
  CHECK(fs::exists(dir.str() + "/heaviside.svg"));
  CHECK(fs::exists(dir.str() + "/config.json"));
}

TEST_CASE("ball study emits one row per horizon") {
  TempDir dir("diffrl_ball_test");
  harness::ExperimentConfig cfg;
  cfg.out_dir = dir.str();
  cfg.ball_h = 6;
  cfg.ball_n = 32;
  cfg.ball_seeds = 2;
  CHECK(harness::run_ball_study(cfg) == 0);
  harness::Table t = harness::read_csv(dir.str() + "/ball.csv");
  REQUIRE(t.rows.size() == 6);
  CHECK(t.columns == std::vector<std::string>{"h", "B", "esnr_fobg",
                                              "esnr_zobg", "contact_fraction"});
  CHECK(fs::exists(dir.str() + "/ball.svg"));
}

TEST_CASE("training runs are byte-deterministic") {
  TempDir d1("diffrl_train_a"), d2("diffrl_train_b");
  harness::ExperimentConfig c1 = tiny_training_config(d1.str());
  harness::ExperimentConfig c2 = tiny_training_config(d2.str());
  CHECK(harness::run_training(c1) == 0);
  CHECK(harness::run_training(c2) == 0);
  for (const char* f : {"curve_seed1.csv", "curve_seed2.csv", "summary.csv",
                        "aggregate.csv"}) {
    CAPTURE(f);
    CHECK(slurp(d1.str() + "/" + f) == slurp(d2.str() + "/" + f));
  }

  // env_steps strictly increasing per curve
  harness::Table t = harness::read_csv(d1.str() + "/curve_seed1.csv");
  long prev = 0;
  for (const auto& row : t.rows) {
    long steps = std::stol(row[1]);
    CHECK(steps > prev);
    prev = steps;
  }
  // wall time suppressed by default for byte determinism
  for (const auto& row : t.rows) CHECK(row[2] == "0");
}

TEST_CASE("summary recompute matches the emitted aggregate") {
  TempDir dir("diffrl_summ_test");
  harness::ExperimentConfig cfg = tiny_training_config(dir.str());
  cfg.seeds = {1, 2, 3};
  CHECK(harness::run_training(cfg) == 0);

  harness::Table agg = harness::read_csv(dir.str() + "/aggregate.csv");
  harness::Table re = harness::summarize_curves(dir.str());
  auto value = [](const harness::Table& t, const std::string& stat) {
    for (const auto& row : t.rows)
      if (row[0] == stat) return std::stod(row[1]);
    FAIL("missing stat ", stat);
    return 0.0;
  };
  for (const char* stat : {"final_reward_iqm", "final_reward_ci_lo",
                           "final_reward_ci_hi"}) {
    CAPTURE(stat);
    CHECK(std::abs(value(agg, stat) - value(re, stat)) <= 1e-12);
  }
  CHECK(value(re, "n_curves") == 3.0);
}
