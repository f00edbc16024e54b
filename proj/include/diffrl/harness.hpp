#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffrl/learner.hpp"

namespace diffrl::harness {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct IOError : std::runtime_error {
  explicit IOError(const std::string& what) : std::runtime_error(what) {}
};

// Fully resolved experiment configuration. Unknown JSON keys are an error;
// unspecified fields keep the defaults below. Environment variables of the
// form DIFFRL_<key>=<value> override file values and are logged in the echo.
struct ExperimentConfig {
  std::string experiment = "train";
  std::string env = "hopper";        // hopper | ball | scripted
  std::string algo = "shac";
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "out";
  int workers = 1;

  // learner hyperparameters (Table-default values)
  double gamma = 0.99;
  double td_lambda = 0.95;
  int horizon = 32;
  int h_min = 1;
  int h_max = 0;
  int num_envs = 8;
  int max_windows = 100;
  double actor_lr = 2e-3;
  double critic_lr = 4e-3;
  double alpha_phi = 2e-4;
  double contact_threshold = 500.0;
  int horizon_sign = -1;
  double grad_norm = 1.0;
  double log_std_init = -1.0;
  std::vector<int> actor_layers = {128, 64, 32};
  std::vector<int> critic_layers = {64, 64};
  int critic_heads = 2;
  int critic_minibatch = 8;
  int critic_max_iters = 64;
  double critic_tol = 0.2;
  bool critic_until_convergence = true;
  int critic_fixed_iters = 16;
  bool use_critic = true;
  std::string stiff_norm = "frobenius";  // frobenius | operator2
  bool record_wall_time = false;

  // environment overrides (0 / negative = keep the env default)
  int episode_length = 0;
  double action_scale = 0.0;
  double reset_noise_scale = -1.0;
  double contact_k_n = 0.0;
  double contact_k_d = -1.0;
  double contact_mu = -1.0;
  double contact_nu = 0.0;
  int script_stiff_from = 10;
  int script_period = 20;
  double script_high = 1000.0;

  // gradient studies
  double theta = 0.0;
  double nu = 0.1;
  double sigma = 0.1;
  std::vector<int> n_grid = {10, 100, 1000, 10000};
  int reps = 20;
  int ball_n = 1024;
  int ball_h = 40;
  double ball_sigma = 0.1;
  double ball_theta = 0.15;
  int ball_seeds = 10;

  // ablations
  std::vector<int> h_grid = {4, 8, 16, 32};
  int h_converged = 29;

  std::vector<std::string> overrides_applied;  // "key=value" from env vars

  learn::TrainConfig to_train_config() const;
};

// Parse JSON text (strict keys), then apply DIFFRL_* environment overrides.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

// Serialize every field, plus the override log, as the config echo.
std::string config_echo(const ExperimentConfig& cfg);

std::unique_ptr<envs::Env> make_env(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// statistics

// Mean of the middle `fraction` of sorted values, fractional endpoints
// weighted proportionally. Empty input throws ArityError.
double iqm(std::vector<double> values, double fraction = 0.5);

struct CiResult {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile-bootstrap 95% CI of the IQM; deterministic resampling.
CiResult bootstrap_iqm_ci(const std::vector<double>& values,
                          int resamples = 1000, uint64_t seed = 17);

// ---------------------------------------------------------------------------
// output

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string format_double(double v);
void write_csv(const Table& t, const std::string& path);
Table read_csv(const std::string& path);

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct ChartOptions {
  std::string x_label = "x";
  std::string y_label = "y";
  bool log_x = false;
  int width = 640;
  int height = 420;
};

void emit_svg_chart(const std::vector<Series>& series, const ChartOptions& opt,
                    const std::string& path);

// ---------------------------------------------------------------------------
// experiment drivers; each writes CSVs plus the config echo into out_dir and
// returns the number of failed (aborted) runs.

int run_heaviside_study(const ExperimentConfig& cfg);
int run_ball_study(const ExperimentConfig& cfg);
int run_training(const ExperimentConfig& cfg);
int run_horizon_ablation(const ExperimentConfig& cfg);
int run_component_ablation(const ExperimentConfig& cfg);

// Recompute the final-reward summary from per-seed curve files in `dir`.
Table summarize_curves(const std::string& dir);

}  // namespace diffrl::harness
