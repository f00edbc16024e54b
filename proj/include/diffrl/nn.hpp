#pragma once

#include <span>
#include <string>
#include <vector>

#include "diffrl/autodiff.hpp"
#include "diffrl/rng.hpp"

namespace diffrl::nn {

using ad::Tape;
using ad::Var;

// Fully-connected net, ELU on hidden layers, identity output.
struct Mlp {
  std::vector<int> sizes;          // input, hidden..., output widths
  std::vector<double> params;      // row-major weights then bias, per layer

  Mlp() = default;
  Mlp(std::vector<int> layer_sizes);

  int param_count() const { return int(params.size()); }
  int in_dim() const { return sizes.front(); }
  int out_dim() const { return sizes.back(); }

  // Scaled-uniform init, near-orthogonal gain; `out_gain` shrinks the last
  // layer (0.01 for policy heads).
  void init(RngStream& rng, double out_gain = 1.0);

  std::vector<double> forward(std::span<const double> x) const;
  // Differentiable path; `p` are the parameters as tape vars (or constants).
  std::vector<Var> forward(std::span<const Var> p,
                           std::span<const Var> x) const;
};

// tanh-transformed Gaussian policy: a = tanh(mu(s) + sigma * noise) with a
// state-independent learnable log_std, clamped to configured bounds.
struct Policy {
  Mlp trunk;
  std::vector<double> log_std;
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  Policy() = default;
  Policy(std::vector<int> trunk_sizes, double log_std_init = -1.0);

  int action_dim() const { return trunk.out_dim(); }
  int param_count() const { return trunk.param_count() + int(log_std.size()); }

  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> p);
  void init(RngStream& rng);

  void clamp_log_std();
};

struct PolicySampleT {
  std::vector<Var> action;  // in (-1, 1)^m
  Var log_prob;             // tanh-corrected Gaussian log-density
  std::vector<Var> pre_squash;
};

// `p` spans the flat parameter vector (trunk then log_std) as tape vars.
PolicySampleT policy_sample(const Policy& shape, std::span<const Var> p,
                            std::span<const Var> state,
                            std::span<const double> noise);

// Mean action tanh(mu(s)), plain evaluation.
std::vector<double> policy_mean_action(const Policy& pol,
                                       std::span<const double> state);

// One or two value heads; the estimate used downstream is the pointwise
// minimum over heads.
struct Critic {
  std::vector<Mlp> heads;

  Critic() = default;
  Critic(std::vector<int> head_sizes, int n_heads);

  int param_count() const;
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> p);
  void init(RngStream& rng);

  double value_min(std::span<const double> state) const;
  // Differentiable in both parameters and state.
  Var value_min(std::span<const Var> p, std::span<const Var> state) const;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(size_t n, double learning_rate);

  // In-place bias-corrected update; descends along `grads`.
  void step_update(std::span<double> params, std::span<const double> grads);
};

// Scales all entries by max_norm/||g|| when the global L2 norm exceeds
// max_norm; otherwise leaves them unchanged.
void clip_grad_norm(std::span<double> grads, double max_norm);

double global_norm(std::span<const double> v);

// Flat binary checkpoint: magic, version, shape table, little-endian f64.
struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace diffrl::nn
