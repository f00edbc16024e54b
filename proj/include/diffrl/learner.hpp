#pragma once

#include <optional>
#include <string>
#include <vector>

#include "diffrl/envs.hpp"
#include "diffrl/nn.hpp"
#include "diffrl/rng.hpp"

namespace diffrl::learn {

struct StepRecord {
  std::vector<double> state;   // s_t
  std::vector<double> action;
  double reward = 0.0;
  double value_next = 0.0;     // V_min(s_{t+1}), 0 past a termination
  double stiffness = 0.0;      // normalized contact stiffness at this step
  bool terminated = false;     // episode ended on this transition
};

// Per-window rollout data, one lane per parallel environment instance.
struct RolloutBuffer {
  std::vector<std::vector<StepRecord>> lanes;
  int window_start = 0;

  int window_len() const {
    return lanes.empty() ? 0 : int(lanes[0].size());
  }
};

struct TDConfig {
  double gamma = 0.99;
  double lambda = 0.95;
};

// TD(lambda) targets per lane per step:
//   V_hat(s_t) = (1-l) * sum_{h=1}^{H-t-1} l^{h-1} R_h + l^{H-t-1} R_H
//   R_h = sum_{n=t}^{t+h-1} g^{n-t} r_n + g^h V(s_{t+h})
// Termination flags stop the reward sum and zero the bootstrap.
std::vector<std::vector<double>> td_lambda_targets(const RolloutBuffer& buf,
                                                   const TDConfig& cfg);

// Sum over heads of squared error against detached targets, mean over the
// supplied (lane, step) index pairs.
double critic_loss(const nn::Critic& critic, const RolloutBuffer& buf,
                   const std::vector<std::vector<double>>& targets);

struct CriticTrainConfig {
  int minibatch = 8;
  int max_iters = 64;
  double tol = 0.2;       // mean |loss delta| over the last 5 iterations
  bool until_convergence = true;
  int fixed_iters = 16;   // used when until_convergence is false
  double grad_norm = 1.0;
};

struct CriticTrainResult {
  int iterations = 0;
  double final_loss = 0.0;
};

CriticTrainResult train_critic_until_converged(
    nn::Critic& critic, nn::AdamState& opt, const RolloutBuffer& buf,
    const std::vector<std::vector<double>>& targets,
    const CriticTrainConfig& cfg, uint64_t shuffle_seed);

struct HorizonState {
  double h_cont = 32.0;
  int h_min = 1;
  int h_max = 32;
  std::vector<double> phi;       // one multiplier per window offset
  double contact_threshold = 500.0;
  double alpha_phi = 2e-4;
  int sign = -1;                 // -1: shrink under violation (default)

  int rounded() const {
    int h = int(std::lround(h_cont));
    return h < h_min ? h_min : (h > h_max ? h_max : h);
  }
};

// Dual ascent on phi then the horizon step; phi is projected to >= 0 and
// re-sized (tail truncate / zero-pad) to the new rounded horizon.
void update_multipliers_and_horizon(HorizonState& hs,
                                    std::span<const double> stiffness);

double sum_phi(const HorizonState& hs);

enum class Algo { BPTT, SHAC, AHAC, AHAC1, ZOBG_PG };

std::string algo_name(Algo a);
std::optional<Algo> algo_from_name(const std::string& name);

struct TrainConfig {
  Algo algo = Algo::SHAC;
  int horizon = 32;          // H (initial H_cont for AHAC)
  int h_min = 1;
  int h_max = 0;             // 0 -> horizon
  int num_envs = 8;          // parallel lanes B (1 for AHAC-1)
  int max_windows = 100;     // outer-loop iterations
  double gamma = 0.99;
  double td_lambda = 0.95;
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
  CriticTrainConfig critic;
  bool use_critic = true;    // false: terminal value identically 0 (BPTT)
  ad::JacNorm stiff_norm = ad::JacNorm::Frobenius;
  bool record_wall_time = false;  // keeps curve files byte-deterministic
};

struct CurveRecord {
  int iteration = 0;
  long env_steps = 0;
  double wall_time_s = 0.0;
  double episode_reward = 0.0;
  double horizon = 0.0;      // realized window length (H_cont for AHAC)
  double sum_phi = 0.0;
  double critic_loss = 0.0;
  int critic_iters = 0;
  int truncation_count = 0;  // AHAC-1 contact truncations so far
};

struct WindowStiffness {
  std::vector<double> per_step;  // lane-mean stiffness per window offset
};

struct TrainResult {
  std::vector<CurveRecord> curve;
  bool aborted = false;
  std::string abort_reason;
  nn::Policy policy;
  nn::Critic critic;
  HorizonState horizon;
  // Per-window per-step stiffness trace, for truncation-soundness checks.
  std::vector<WindowStiffness> stiffness_log;
};

// Outer training loop shared by all algorithms: rollout -> actor step ->
// multiplier/horizon step (AHAC) -> critic phase, advancing by the realized
// window length each iteration.
TrainResult train(const envs::Env& env, const TrainConfig& cfg, uint64_t seed);

}  // namespace diffrl::learn
