#include "diffrl/learner.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace diffrl::learn {

namespace {

// Stream-lane layout: actions per env lane, resets per env lane, ZOBG
// baselines per env lane, critic shuffling, parameter init.
constexpr uint64_t kActionLane = 1;
constexpr uint64_t kResetLane = 100000;
constexpr uint64_t kBaselineLane = 200000;
constexpr uint64_t kCriticLane = 300000;
constexpr uint64_t kPolicyInitLane = 400000;
constexpr uint64_t kCriticInitLane = 400001;

// h-step bootstrapped return R_h(s_t); a termination flag inside the span
// stops the reward sum and zeroes the bootstrap.
double n_step_return(const std::vector<StepRecord>& lane, int t, int h,
                     double gamma) {
  double acc = 0.0, g = 1.0;
  for (int n = t; n < t + h; ++n) {
    acc += g * lane[size_t(n)].reward;
    if (lane[size_t(n)].terminated) return acc;
    g *= gamma;
  }
  return acc + g * lane[size_t(t + h - 1)].value_next;
}

}  // namespace

std::vector<std::vector<double>> td_lambda_targets(const RolloutBuffer& buf,
                                                   const TDConfig& cfg) {
  std::vector<std::vector<double>> out;
  out.reserve(buf.lanes.size());
  for (const auto& lane : buf.lanes) {
    int H = int(lane.size());
    std::vector<double> tgt(size_t(H), 0.0);
    for (int t = 0; t < H; ++t) {
      int K = H - t;
      if (K == 1) {
        tgt[size_t(t)] = n_step_return(lane, t, 1, cfg.gamma);
        continue;
      }
      double acc = 0.0, lp = 1.0;  // lambda^(h-1)
      for (int h = 1; h <= K - 1; ++h) {
        acc += lp * n_step_return(lane, t, h, cfg.gamma);
        lp *= cfg.lambda;
      }
      tgt[size_t(t)] = (1.0 - cfg.lambda) * acc +
                       lp * n_step_return(lane, t, K, cfg.gamma);
    }
    out.push_back(std::move(tgt));
  }
  return out;
}

double critic_loss(const nn::Critic& critic, const RolloutBuffer& buf,
                   const std::vector<std::vector<double>>& targets) {
  double acc = 0.0;
  int n = 0;
  for (size_t l = 0; l < buf.lanes.size(); ++l) {
    for (size_t t = 0; t < buf.lanes[l].size(); ++t) {
      const auto& s = buf.lanes[l][t].state;
      for (const auto& head : critic.heads) {
        double v = head.forward(s)[0];
        double d = v - targets[l][t];
        acc += d * d;
      }
      ++n;
    }
  }
  return n ? acc / double(n) : 0.0;
}

CriticTrainResult train_critic_until_converged(
    nn::Critic& critic, nn::AdamState& opt, const RolloutBuffer& buf,
    const std::vector<std::vector<double>>& targets,
    const CriticTrainConfig& cfg, uint64_t shuffle_seed) {
  struct Idx { int lane, step; };
  std::vector<Idx> idx;
  for (size_t l = 0; l < buf.lanes.size(); ++l)
    for (size_t t = 0; t < buf.lanes[l].size(); ++t)
      idx.push_back({int(l), int(t)});
  if (idx.empty()) return {};

  std::vector<double> params = critic.flat_params();
  std::vector<int> head_count;
  for (const auto& h : critic.heads) head_count.push_back(h.param_count());

  std::vector<double> losses;
  int iters = 0;
  int cap = cfg.until_convergence ? cfg.max_iters : cfg.fixed_iters;
  for (int it = 1; it <= cap; ++it) {
    RngStream rs(shuffle_seed, 7, uint64_t(it));
    for (size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[rs.below(i + 1)]);

    double loss_sum = 0.0;
    int nb = 0;
    for (size_t start = 0; start < idx.size(); start += size_t(cfg.minibatch)) {
      size_t m = std::min(size_t(cfg.minibatch), idx.size() - start);
      ad::Tape tape;
      std::vector<ad::Var> p = ad::make_vars(tape, params);
      std::vector<int> ids;
      ids.reserve(p.size());
      for (const auto& v : p) ids.push_back(v.id);

      ad::Var loss(0.0);
      for (size_t k = start; k < start + m; ++k) {
        const auto& rec = buf.lanes[size_t(idx[k].lane)][size_t(idx[k].step)];
        std::vector<ad::Var> sv = ad::make_consts(rec.state);
        double tgt = targets[size_t(idx[k].lane)][size_t(idx[k].step)];
        size_t off = 0;
        for (size_t h = 0; h < critic.heads.size(); ++h) {
          std::span<const ad::Var> ph(p.data() + off, size_t(head_count[h]));
          ad::Var v = critic.heads[h].forward(ph, sv)[0];
          loss += ad::square(v - ad::Var(tgt));
          off += size_t(head_count[h]);
        }
      }
      loss *= ad::Var(1.0 / double(m));
      std::vector<double> adj = tape.backward(loss.id);
      std::vector<double> grads = ad::gradient_at(adj, ids);
      nn::clip_grad_norm(grads, cfg.grad_norm);
      opt.step_update(params, grads);
      loss_sum += loss.v;
      ++nb;
    }
    losses.push_back(loss_sum / double(nb));
    iters = it;
    if (cfg.until_convergence && losses.size() >= 6) {
      double d = 0.0;
      for (size_t i = losses.size() - 5; i < losses.size(); ++i)
        d += std::abs(losses[i] - losses[i - 1]);
      if (d / 5.0 < cfg.tol) break;
    }
  }
  critic.set_flat_params(params);
  return {iters, losses.back()};
}

double sum_phi(const HorizonState& hs) {
  double s = 0.0;
  for (double p : hs.phi) s += p;
  return s;
}

void update_multipliers_and_horizon(HorizonState& hs,
                                    std::span<const double> stiffness) {
  if (stiffness.size() != hs.phi.size())
    throw ad::ArityError("stiffness vector length != multiplier count");
  for (size_t h = 0; h < hs.phi.size(); ++h)
    hs.phi[h] = std::max(
        0.0, hs.phi[h] - hs.alpha_phi * (hs.contact_threshold - stiffness[h]));
  hs.h_cont += double(hs.sign) * hs.alpha_phi * sum_phi(hs);
  hs.h_cont = std::clamp(hs.h_cont, double(hs.h_min), double(hs.h_max));
  hs.phi.resize(size_t(hs.rounded()), 0.0);
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::BPTT: return "bptt";
    case Algo::SHAC: return "shac";
    case Algo::AHAC: return "ahac";
    case Algo::AHAC1: return "ahac1";
    case Algo::ZOBG_PG: return "zobg_pg";
  }
  return "?";
}

std::optional<Algo> algo_from_name(const std::string& name) {
  for (Algo a : {Algo::BPTT, Algo::SHAC, Algo::AHAC, Algo::AHAC1,
                 Algo::ZOBG_PG})
    if (algo_name(a) == name) return a;
  return std::nullopt;
}

namespace {

struct LaneState {
  std::vector<double> s;
  int t = 0;                  // absolute episode step
  double ep_return = 0.0;     // running undiscounted return
  double last_ep_return = 0.0;
  bool completed_once = false;
  uint64_t reset_count = 0;
};

void reset_lane(LaneState& lane, const envs::Env& env, uint64_t seed,
                int lane_idx) {
  ++lane.reset_count;
  RngStream rs(seed, kResetLane + uint64_t(lane_idx), lane.reset_count);
  envs::SimState st = env.reset(rs);
  lane.s = st.flat();
  lane.t = 0;
}

struct Trainer {
  const envs::Env& env;
  TrainConfig cfg;
  uint64_t seed;

  nn::Policy policy;
  nn::Critic critic;
  nn::AdamState actor_opt, critic_opt;
  HorizonState hs;
  std::vector<LaneState> lanes;
  long env_steps = 0;
  int truncations = 0;

  TrainResult result;

  Trainer(const envs::Env& e, const TrainConfig& c, uint64_t sd)
      : env(e), cfg(c), seed(sd) {
    if (cfg.algo == Algo::BPTT) {
      cfg.use_critic = false;
      cfg.horizon = env.config().h_max;
    }
    if (cfg.algo == Algo::AHAC1) cfg.num_envs = 1;
    if (cfg.algo == Algo::ZOBG_PG) cfg.use_critic = false;
    if (cfg.h_max <= 0) cfg.h_max = cfg.horizon;

    std::vector<int> asz = {env.state_dim()};
    asz.insert(asz.end(), cfg.actor_layers.begin(), cfg.actor_layers.end());
    asz.push_back(env.action_dim());
    policy = nn::Policy(asz, cfg.log_std_init);
    RngStream prng(seed, kPolicyInitLane, 0);
    policy.init(prng);
    actor_opt = nn::AdamState(size_t(policy.param_count()), cfg.actor_lr);

    std::vector<int> csz = {env.state_dim()};
    csz.insert(csz.end(), cfg.critic_layers.begin(), cfg.critic_layers.end());
    csz.push_back(1);
    critic = nn::Critic(csz, cfg.critic_heads);
    RngStream crng(seed, kCriticInitLane, 0);
    critic.init(crng);
    critic_opt = nn::AdamState(size_t(critic.param_count()), cfg.critic_lr);

    hs.h_cont = double(cfg.horizon);
    hs.h_min = cfg.h_min;
    hs.h_max = cfg.h_max;
    hs.phi.assign(size_t(cfg.horizon), 0.0);
    hs.contact_threshold = cfg.contact_threshold;
    hs.alpha_phi = cfg.alpha_phi;
    hs.sign = cfg.horizon_sign;

    lanes.resize(size_t(cfg.num_envs));
    for (int l = 0; l < cfg.num_envs; ++l) reset_lane(lanes[size_t(l)], env, seed, l);
    baseline_.assign(lanes.size(), 0.0);
  }

  double episode_reward_metric() const {
    double acc = 0.0;
    for (const auto& l : lanes)
      acc += l.completed_once ? l.last_ep_return : l.ep_return;
    return acc / double(lanes.size());
  }

  // Rollout + actor step for the first-order algorithms. Returns the
  // realized window length and fills the buffer and per-step stiffness.
  int first_order_window(int iter, int H, RolloutBuffer& buf,
                         std::vector<double>& stiff_mean) {
    bool track_stiff = cfg.algo == Algo::AHAC || cfg.algo == Algo::AHAC1;
    std::vector<double> theta = policy.flat_params();
    ad::Tape tape;
    std::vector<ad::Var> p = ad::make_vars(tape, theta);
    std::vector<int> pids;
    for (const auto& v : p) pids.push_back(v.id);

    buf.lanes.assign(lanes.size(), {});
    std::vector<std::vector<double>> stiff_per_lane(lanes.size());
    ad::Var J(0.0);
    int realized = H;

    for (size_t l = 0; l < lanes.size(); ++l) {
      LaneState& lane = lanes[l];
      RngStream arng(seed, kActionLane + l, uint64_t(iter));
      std::vector<ad::Var> sv = ad::make_consts(lane.s);
      std::vector<double> noise(size_t(env.action_dim()));
      double disc = 1.0;
      bool last_terminated = false;

      int h = 0;
      for (; h < H; ++h) {
        for (double& z : noise) z = arng.normal();
        nn::PolicySampleT ps = nn::policy_sample(policy, p, sv, noise);
        std::vector<double> a_plain = ad::values_of(ps.action);

        double stiff = 0.0;
        if (track_stiff)
          stiff = env.step_stiffness(lane.s, a_plain, lane.t, cfg.stiff_norm);

        envs::StepResultT<ad::Var> out = env.step(sv, ps.action, lane.t);
        J += ad::Var(disc) * out.reward;
        disc *= cfg.gamma;
        lane.ep_return += out.reward.v;

        StepRecord rec;
        rec.state = lane.s;
        rec.action = a_plain;
        rec.reward = out.reward.v;
        rec.stiffness = stiff;
        rec.terminated = out.done;
        if (track_stiff) stiff_per_lane[l].push_back(stiff);

        bool truncate = cfg.algo == Algo::AHAC1 &&
                        stiff > hs.contact_threshold && h + 1 < H;
        if (out.done) {
          rec.value_next = 0.0;
          lane.last_ep_return = lane.ep_return;
          lane.completed_once = true;
          lane.ep_return = 0.0;
          reset_lane(lane, env, seed, int(l));
          sv = ad::make_consts(lane.s);
          last_terminated = true;
        } else {
          lane.s = ad::values_of(out.next);
          lane.t += 1;
          sv = std::move(out.next);
          rec.value_next = cfg.use_critic ? critic.value_min(lane.s) : 0.0;
          last_terminated = false;
        }
        buf.lanes[l].push_back(std::move(rec));
        if (truncate) {
          ++truncations;
          ++h;
          break;
        }
      }
      realized = h;  // equal across lanes except AHAC-1 (single lane)

      if (!last_terminated && cfg.use_critic) {
        std::vector<ad::Var> cp = ad::make_consts(critic.flat_params());
        J += ad::Var(disc) * critic.value_min(cp, sv);
      }
    }

    ad::Var loss = J * ad::Var(-1.0 / double(lanes.size()));
    std::vector<double> adj = tape.backward(loss.id);
    std::vector<double> grads = ad::gradient_at(adj, pids);
    nn::clip_grad_norm(grads, cfg.grad_norm);
    actor_opt.step_update(theta, grads);
    policy.set_flat_params(theta);

    if (track_stiff) {
      stiff_mean.assign(size_t(realized), 0.0);
      for (const auto& sl : stiff_per_lane)
        for (size_t h = 0; h < sl.size(); ++h) stiff_mean[h] += sl[h];
      for (double& v : stiff_mean) v /= double(lanes.size());
    }
    return realized;
  }

  // Score-function (REINFORCE with noise-free baseline) window.
  int zobg_window(int iter, int H, RolloutBuffer& buf) {
    std::vector<double> theta = policy.flat_params();
    std::vector<double> grads(theta.size(), 0.0);
    buf.lanes.assign(lanes.size(), {});

    for (size_t l = 0; l < lanes.size(); ++l) {
      LaneState& lane = lanes[l];

      // Deterministic baseline rollout from the same window-start state.
      {
        std::vector<double> s = lane.s;
        int t0 = lane.t;
        uint64_t resets = 0;
        double disc = 1.0, base = 0.0;
        for (int h = 0; h < H; ++h) {
          std::vector<double> a = nn::policy_mean_action(policy, s);
          envs::StepResultT<double> out = env.step(s, a, t0);
          base += disc * out.reward;
          disc *= cfg.gamma;
          if (out.done) {
            ++resets;
            RngStream rrs(seed, kBaselineLane + l,
                          uint64_t(iter) * 1024 + resets);
            s = env.reset(rrs).flat();
            t0 = 0;
          } else {
            s = out.next;
            ++t0;
          }
        }
        baseline_[l] = base;
      }

      ad::Tape tape;
      std::vector<ad::Var> p = ad::make_vars(tape, theta);
      std::vector<int> pids;
      for (const auto& v : p) pids.push_back(v.id);

      RngStream arng(seed, kActionLane + l, uint64_t(iter));
      std::vector<double> noise(size_t(env.action_dim()));
      ad::Var logp_sum(0.0);
      double ret = 0.0, disc = 1.0;
      for (int h = 0; h < H; ++h) {
        for (double& z : noise) z = arng.normal();
        std::vector<ad::Var> sv = ad::make_consts(lane.s);
        nn::PolicySampleT ps = nn::policy_sample(policy, p, sv, noise);
        logp_sum += ps.log_prob;
        std::vector<double> a = ad::values_of(ps.action);
        envs::StepResultT<double> out = env.step(lane.s, a, lane.t);
        ret += disc * out.reward;
        disc *= cfg.gamma;
        lane.ep_return += out.reward;

        StepRecord rec;
        rec.state = lane.s;
        rec.action = a;
        rec.reward = out.reward;
        rec.terminated = out.done;
        buf.lanes[l].push_back(std::move(rec));

        if (out.done) {
          lane.last_ep_return = lane.ep_return;
          lane.completed_once = true;
          lane.ep_return = 0.0;
          reset_lane(lane, env, seed, int(l));
        } else {
          lane.s = out.next;
          lane.t += 1;
        }
      }
      std::vector<double> adj = tape.backward(logp_sum.id);
      std::vector<double> g = ad::gradient_at(adj, pids);
      double w = -(ret - baseline_[l]) / double(lanes.size());
      for (size_t i = 0; i < grads.size(); ++i) grads[i] += w * g[i];
    }

    nn::clip_grad_norm(grads, cfg.grad_norm);
    actor_opt.step_update(theta, grads);
    policy.set_flat_params(theta);
    return H;
  }

  TrainResult run() {
    for (int iter = 1; iter <= cfg.max_windows; ++iter) {
      int H = cfg.algo == Algo::AHAC ? hs.rounded() : cfg.horizon;
      if (cfg.algo == Algo::AHAC) hs.phi.resize(size_t(H), 0.0);

      RolloutBuffer buf;
      buf.window_start = int(env_steps);
      std::vector<double> stiff_mean;
      int realized = H;
      try {
        if (cfg.algo == Algo::ZOBG_PG)
          realized = zobg_window(iter, H, buf);
        else
          realized = first_order_window(iter, H, buf, stiff_mean);

        if (cfg.algo == Algo::AHAC)
          update_multipliers_and_horizon(hs, stiff_mean);

        CriticTrainResult cres;
        double closs = 0.0;
        if (cfg.use_critic) {
          auto targets = td_lambda_targets(buf, {cfg.gamma, cfg.td_lambda});
          uint64_t shuffle =
              RngStream(seed, kCriticLane, uint64_t(iter)).next_u64();
          cres = train_critic_until_converged(critic, critic_opt, buf,
                                              targets, cfg.critic, shuffle);
          closs = cres.final_loss;
        }

        for (const auto& lane : buf.lanes) env_steps += long(lane.size());

        CurveRecord rec;
        rec.iteration = iter;
        rec.env_steps = env_steps;
        rec.episode_reward = episode_reward_metric();
        rec.horizon = cfg.algo == Algo::AHAC ? hs.h_cont : double(realized);
        rec.sum_phi = cfg.algo == Algo::AHAC ? sum_phi(hs) : 0.0;
        rec.critic_loss = closs;
        rec.critic_iters = cres.iterations;
        rec.truncation_count = truncations;
        result.curve.push_back(rec);

        WindowStiffness ws;
        if (cfg.algo == Algo::AHAC) {
          ws.per_step = stiff_mean;
        } else if (cfg.algo == Algo::AHAC1 && !buf.lanes.empty()) {
          for (const auto& r : buf.lanes[0]) ws.per_step.push_back(r.stiffness);
        }
        result.stiffness_log.push_back(std::move(ws));
      } catch (const ad::NumericalOverflow& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        break;
      }
    }
    result.policy = policy;
    result.critic = critic;
    result.horizon = hs;
    return result;
  }

  std::vector<double> baseline_ = std::vector<double>(lanes.size(), 0.0);
};

}  // namespace

TrainResult train(const envs::Env& env, const TrainConfig& cfg, uint64_t seed) {
  Trainer tr(env, cfg, seed);
  return tr.run();
}

}  // namespace diffrl::learn
