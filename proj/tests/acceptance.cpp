// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Heavier fixtures live here rather than in the unit tests.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "diffrl/estimators.hpp"
#include "diffrl/harness.hpp"
#include "diffrl/learner.hpp"

using namespace diffrl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const char* what, bool ok) {
  std::printf("criterion %2d  %-58s %s\n", id, what, ok ? "PASS" : "FAIL");
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double variance(const std::vector<double>& v) {
  double m = mean(v), acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / double(v.size());
}

double grad_stderr(const est::GradientReport& r) {
  return std::sqrt(r.var_grad[0] / double(r.samples_retained));
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference oracle suite.

constexpr double kFdEps = 1e-5;
constexpr double kRtol = 1e-4;

bool fd_close(double g, double fd) {
  return std::abs(g - fd) <= kRtol * std::max({1.0, std::abs(g), std::abs(fd)});
}

// Records `prog` at `point`, backprops the scalar output and compares the
// input gradient against central differences.
bool fd_check(const ad::Program& prog, std::span<const double> point) {
  ad::Recording rec = ad::record(prog, point);
  std::vector<double> seed = {1.0};
  std::vector<double> g = ad::backward(rec, seed);
  ad::RealFn fn = [&](std::span<const double> p) {
    return ad::record(prog, p).outputs[0];
  };
  std::vector<double> fd = ad::finite_diff_grad(fn, point, kFdEps);
  for (size_t i = 0; i < point.size(); ++i)
    if (!fd_close(g[i], fd[i])) return false;
  return true;
}

bool check_primitives(RngStream& rng) {
  using ad::Var;
  struct Prim {
    int dim;
    ad::Program prog;
    std::function<bool(std::span<const double>)> interior;
  };
  auto any = [](std::span<const double>) { return true; };
  std::vector<Prim> prims;
  auto one = [](Var v) { return std::vector<Var>{v}; };
  prims.push_back({2, [&](ad::Tape&, std::span<const Var> x) { return one(x[0] + x[1]); }, any});
  prims.push_back({2, [&](ad::Tape&, std::span<const Var> x) { return one(x[0] - x[1]); }, any});
  prims.push_back({2, [&](ad::Tape&, std::span<const Var> x) { return one(x[0] * x[1]); }, any});
  prims.push_back({2, [&](ad::Tape&, std::span<const Var> x) { return one(x[0] / x[1]); },
                   [](std::span<const double> p) { return std::abs(p[1]) > 0.2; }});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(Var(2.5) / x[0]); },
                   [](std::span<const double> p) { return std::abs(p[0]) > 0.2; }});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(x[0] / Var(2.5)); }, any});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(x[0] * Var(3.0) + Var(1.25)); }, any});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::exp(x[0])); }, any});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::log(x[0])); },
                   [](std::span<const double> p) { return p[0] > 0.2; }});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::sqrt(x[0])); },
                   [](std::span<const double> p) { return p[0] > 0.2; }});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::sin(x[0])); }, any});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::cos(x[0])); }, any});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::tanh(x[0])); }, any});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::elu(x[0])); },
                   [](std::span<const double> p) { return std::abs(p[0]) > 1e-3; }});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::softplus(x[0])); }, any});
  prims.push_back({2, [&](ad::Tape&, std::span<const Var> x) { return one(ad::max(x[0], x[1])); },
                   [](std::span<const double> p) { return std::abs(p[0] - p[1]) > 1e-3; }});
  prims.push_back({2, [&](ad::Tape&, std::span<const Var> x) { return one(ad::min(x[0], x[1])); },
                   [](std::span<const double> p) { return std::abs(p[0] - p[1]) > 1e-3; }});
  prims.push_back({1, [&](ad::Tape&, std::span<const Var> x) { return one(ad::clamp(x[0], -1.0, 1.0)); },
                   [](std::span<const double> p) {
                     return std::abs(std::abs(p[0]) - 1.0) > 1e-3;
                   }});
  prims.push_back({6, [&](ad::Tape&, std::span<const Var> x) {
                     return one(ad::dot(x.subspan(0, 3), x.subspan(3, 3)));
                   }, any});

  for (const Prim& prim : prims) {
    for (int pt = 0; pt < 100; ++pt) {
      std::vector<double> p(size_t(prim.dim));
      do {
        for (double& v : p) v = rng.uniform(-2, 2);
      } while (!prim.interior(p));
      if (!fd_check(prim.prog, p)) return false;
    }
  }
  return true;
}

bool check_mlp_loss(RngStream& rng) {
  using ad::Var;
  nn::Mlp mlp({3, 5, 2});
  for (int pt = 0; pt < 100; ++pt) {
    std::vector<double> params(size_t(mlp.param_count()));
    for (double& v : params) v = rng.uniform(-1, 1);
    std::vector<double> x(3), tgt(2);
    for (double& v : x) v = rng.uniform(-1, 1);
    for (double& v : tgt) v = rng.uniform(-1, 1);

    ad::Program prog = [&](ad::Tape&, std::span<const Var> p) {
      std::vector<Var> xv = ad::make_consts(x);
      std::vector<Var> out = mlp.forward(p, xv);
      Var acc(0.0);
      for (size_t j = 0; j < out.size(); ++j)
        acc = acc + ad::square(out[j] - Var(tgt[j]));
      return std::vector<Var>{acc};
    };
    if (!fd_check(prog, params)) return false;
  }
  return true;
}

bool ball_interior(const envs::BallEnv& env, std::span<const double> s,
                   double margin) {
  double half_nu = env.contact().nu / 2.0;
  if (std::abs(s[0] - env.params().wall_x) < margin) return false;
  if (std::abs(s[2]) < margin) return false;
  if (std::abs(std::abs(s[3]) - half_nu) < margin) return false;
  return true;
}

bool hopper_interior(const envs::HopperEnv& env, std::span<const double> s,
                     std::span<const double> a, double margin) {
  double l2 = env.params().l_thigh, l3 = env.params().l_shank;
  double half_nu = env.contact().nu / 2.0;
  double foot_z = s[1] - l2 * std::cos(s[3]) - l3 * std::cos(s[4]);
  double vfx = s[5] + l2 * std::cos(s[3]) * s[8] + l3 * std::cos(s[4]) * s[9];
  double vfz = s[6] + l2 * std::sin(s[3]) * s[8] + l3 * std::sin(s[4]) * s[9];
  if (std::abs(foot_z) < margin) return false;
  if (std::abs(vfz) < margin) return false;
  if (std::abs(std::abs(vfx) - half_nu) < margin) return false;
  envs::StepResult out = env.step(s, a, 0);
  if (std::abs(out.next[1] - env.config().h_term) < margin) return false;
  return true;
}

std::vector<double> random_ball_state(RngStream& rng) {
  return {rng.uniform(0.5, 1.5), rng.uniform(-1, 1), rng.uniform(-1, 1),
          rng.uniform(-1, 1)};
}

std::vector<double> random_hopper_state(RngStream& rng) {
  std::vector<double> s(10);
  s[0] = rng.uniform(-1, 1);
  s[1] = rng.uniform(0.75, 1.3);
  for (int i = 2; i < 5; ++i) s[size_t(i)] = rng.uniform(-0.5, 0.5);
  for (int i = 5; i < 10; ++i) s[size_t(i)] = rng.uniform(-1, 1);
  return s;
}

bool check_env_steps(RngStream& rng) {
  using ad::Var;
  envs::BallEnv ball;
  envs::HopperEnv hopper;

  for (int pt = 0; pt < 100; ++pt) {
    // ball: weighted sum of next state and the terminal reward
    std::vector<double> w(5);
    for (double& v : w) v = rng.uniform(-1, 1);
    int t = pt % 2 ? ball.config().h_max - 1 : 0;
    std::vector<double> s;
    do {
      s = random_ball_state(rng);
    } while (!ball_interior(ball, s, 1e-3));
    ad::Program prog = [&](ad::Tape&, std::span<const Var> in) {
      envs::StepResultT<Var> out = ball.step(in, std::span<const Var>{}, t);
      Var acc = Var(w[4]) * out.reward;
      for (int i = 0; i < 4; ++i)
        acc = acc + Var(w[size_t(i)]) * out.next[size_t(i)];
      return std::vector<Var>{acc};
    };
    if (!fd_check(prog, s)) return false;
  }

  for (int pt = 0; pt < 100; ++pt) {
    std::vector<double> w(11);
    for (double& v : w) v = rng.uniform(-1, 1);
    std::vector<double> in(13);
    do {
      std::vector<double> s = random_hopper_state(rng);
      std::copy(s.begin(), s.end(), in.begin());
      for (int i = 10; i < 13; ++i) in[size_t(i)] = rng.uniform(-1, 1);
    } while (!hopper_interior(hopper, std::span(in).subspan(0, 10),
                              std::span(in).subspan(10, 3), 1e-3));
    ad::Program prog = [&](ad::Tape&, std::span<const Var> v) {
      envs::StepResultT<Var> out =
          hopper.step(v.subspan(0, 10), v.subspan(10, 3), 0);
      Var acc = Var(w[10]) * out.reward;
      for (int i = 0; i < 10; ++i)
        acc = acc + Var(w[size_t(i)]) * out.next[size_t(i)];
      return std::vector<Var>{acc};
    };
    if (!fd_check(prog, in)) return false;
  }
  return true;
}

bool check_rollout_returns(RngStream& rng) {
  using ad::Var;

  // ball: 8-step rollout, terminal reward at the final step
  envs::BallEnv ball;
  ball.mutable_config().h_max = 8;
  for (int pt = 0; pt < 100; ++pt) {
    std::vector<double> s0;
    bool interior = false;
    while (!interior) {
      s0 = random_ball_state(rng);
      interior = true;
      std::vector<double> s = s0;
      for (int t = 0; t < 8 && interior; ++t) {
        interior = ball_interior(ball, s, 1e-2);
        s = ball.step(s, {}, t).next;
      }
    }
    ad::Program prog = [&](ad::Tape&, std::span<const Var> in) {
      std::vector<Var> s(in.begin(), in.end());
      Var acc(0.0);
      for (int t = 0; t < 8; ++t) {
        envs::StepResultT<Var> out = ball.step(std::span<const Var>(s),
                                               std::span<const Var>{}, t);
        acc = acc + out.reward;
        s = out.next;
      }
      return std::vector<Var>{acc};
    };
    if (!fd_check(prog, s0)) return false;
  }

  // hopper: 4-step rollout under a constant action, summed shaping rewards
  envs::HopperEnv hopper;
  for (int pt = 0; pt < 100; ++pt) {
    std::vector<double> in(13);
    bool interior = false;
    while (!interior) {
      std::vector<double> s = random_hopper_state(rng);
      std::copy(s.begin(), s.end(), in.begin());
      for (int i = 10; i < 13; ++i) in[size_t(i)] = rng.uniform(-1, 1);
      interior = true;
      std::span<const double> a = std::span(in).subspan(10, 3);
      for (int t = 0; t < 4 && interior; ++t) {
        interior = hopper_interior(hopper, s, a, 5e-3);
        s = hopper.step(s, a, t).next;
      }
    }
    ad::Program prog = [&](ad::Tape&, std::span<const Var> v) {
      std::vector<Var> s(v.begin(), v.begin() + 10);
      std::span<const Var> a = v.subspan(10, 3);
      Var acc(0.0);
      for (int t = 0; t < 4; ++t) {
        envs::StepResultT<Var> out =
            hopper.step(std::span<const Var>(s), a, t);
        acc = acc + out.reward;
        s = out.next;
      }
      return std::vector<Var>{acc};
    };
    if (!fd_check(prog, in)) return false;
  }
  return true;
}

bool criterion1() {
  RngStream rng(101, 0, 0);
  return check_primitives(rng) && check_mlp_loss(rng) &&
         check_env_steps(rng) && check_rollout_returns(rng);
}

// ---------------------------------------------------------------------------

bool criterion2() {
  double nu = 0.1, sigma = 0.1;
  double truth = est::heaviside_true_grad(0.0, nu, sigma);
  est::HeavisideProblem prob(nu, sigma);
  std::vector<double> theta = {0.0};
  std::vector<int> grid = {10, 100, 1000, 10000};
  std::vector<double> med_f, med_z;
  for (int n : grid) {
    std::vector<double> ef, ez;
    for (int rep = 0; rep < 20; ++rep) {
      uint64_t seed = RngStream(4242, uint64_t(n), uint64_t(rep)).next_u64();
      ef.push_back(std::abs(est::fobg(prob, theta, n, seed).mean_grad[0] - truth));
      ez.push_back(std::abs(est::zobg(prob, theta, n, seed).mean_grad[0] - truth));
    }
    med_f.push_back(median(ef));
    med_z.push_back(median(ez));
  }
  for (size_t i = 0; i < 3; ++i)
    if (!(med_f[i] > med_z[i])) return false;
  for (size_t i = 1; i < grid.size(); ++i)
    if (!(med_f[i] < med_f[i - 1] && med_z[i] < med_z[i - 1])) return false;
  return true;
}

bool criterion3() {
  double nu = 0.1, sigma = 0.1;
  int n = 100000;
  est::HeavisideProblem prob(nu, sigma);
  std::vector<double> theta = {0.0};
  est::GradientReport rep = est::fobg(prob, theta, n, 31);
  int zeros = 0;
  for (const auto& g : rep.samples) zeros += g[0] == 0.0;
  double p = 1.0 - std::erf(nu / (2.0 * std::sqrt(2.0) * sigma));
  double se = std::sqrt(p * (1.0 - p) / double(n));
  return std::abs(double(zeros) / double(n) - p) < 3.0 * se;
}

bool criterion4() {
  envs::BallEnv base;
  std::vector<double> theta = {0.15};
  int H = 40;
  std::vector<double> B(size_t(H) + 1), ef(size_t(H) + 1), ez(size_t(H) + 1),
      cf(size_t(H) + 1);
  for (int h = 1; h <= H; ++h) {
    est::BallProblem prob(base, h, 0.1);
    std::vector<double> bs, efs, ezs, cfs;
    for (int s = 0; s < 10; ++s) {
      uint64_t seed = RngStream(777, uint64_t(h), uint64_t(s)).next_u64();
      double frac = 0.0;
      est::GradientReport f = est::fobg(prob, theta, 1024, seed, &frac);
      est::GradientReport z = est::zobg(prob, theta, 1024, seed);
      bs.push_back(est::sample_error(f, z));
      efs.push_back(f.esnr);
      ezs.push_back(z.esnr);
      cfs.push_back(frac);
    }
    B[size_t(h)] = median(bs);
    ef[size_t(h)] = median(efs);
    ez[size_t(h)] = median(ezs);
    cf[size_t(h)] = median(cfs);
  }
  // pre/post split at the first horizon whose median rollout hits the wall
  int split = H + 1;
  for (int h = 1; h <= H; ++h)
    if (cf[size_t(h)] > 0.5) { split = h; break; }
  if (split <= 1 || split > H) return false;
  std::vector<double> pre_b, post_b, pre_ef, pre_ez, post_ef;
  for (int h = 1; h < split; ++h) {
    pre_b.push_back(B[size_t(h)]);
    pre_ef.push_back(ef[size_t(h)]);
    pre_ez.push_back(ez[size_t(h)]);
  }
  for (int h = split; h <= H; ++h) {
    post_b.push_back(B[size_t(h)]);
    post_ef.push_back(ef[size_t(h)]);
  }
  return mean(post_b) >= 2.0 * mean(pre_b) &&
         mean(pre_ef) > mean(pre_ez) && mean(post_ef) < mean(pre_ef);
}

bool criterion5() {
  // heaviside
  {
    double nu = 0.1, sigma = 0.1;
    est::HeavisideProblem prob(nu, sigma);
    RngStream rng(51, 0, 0);
    for (int i = 0; i < 10; ++i) {
      double th = rng.uniform(-0.25, 0.25);
      std::vector<double> theta = {th};
      double truth = est::heaviside_true_grad(th, nu, sigma);
      est::GradientReport z = est::zobg(prob, theta, 10000, uint64_t(900 + i));
      if (!(std::abs(z.mean_grad[0] - truth) < 3.0 * grad_stderr(z) + 1e-12))
        return false;
    }
  }
  // contact-free ball
  {
    envs::BallEnv env;
    env.mutable_params().contact_enabled = false;
    est::BallProblem prob(env, 16, 0.1);
    RngStream rng(52, 0, 0);
    for (int i = 0; i < 10; ++i) {
      double th = rng.uniform(0.1, 1.2);
      std::vector<double> theta = {th};
      double truth = est::true_grad_quadrature(prob, th);
      est::GradientReport z = est::zobg(prob, theta, 10000, uint64_t(950 + i));
      if (!(std::abs(z.mean_grad[0] - truth) < 3.0 * grad_stderr(z) + 1e-12))
        return false;
    }
  }
  return true;
}

bool criterion6() {
  est::LipschitzConstants c;
  c.horizon = 3;
  c.b_f = 2.0;
  if (est::lemma_bound(c) != 3.0 * (0.5 + 4.0)) return false;
  est::LipschitzConstants h1{3.0, 2.0, 1.0, 1};
  if (est::lemma_bound(h1) != 1.5 * 3.0 * 2.0) return false;
  RngStream rng(61, 0, 0);
  for (int i = 0; i < 50; ++i) {
    est::LipschitzConstants lo{rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                               rng.uniform(1.0, 2), 1 + int(rng.below(8))};
    est::LipschitzConstants hr = lo, hp = lo, hf = lo, hh = lo;
    hr.b_r *= 1.5;
    hp.b_pi *= 1.5;
    hf.b_f *= 1.5;
    hh.horizon += 1;
    if (!(est::lemma_bound(hr) > est::lemma_bound(lo))) return false;
    if (!(est::lemma_bound(hp) > est::lemma_bound(lo))) return false;
    if (!(est::lemma_bound(hf) >= est::lemma_bound(lo))) return false;
    if (!(est::lemma_bound(hh) > est::lemma_bound(lo))) return false;
  }
  return true;
}

// Brute-force transcription of the TD(lambda) display equations.
double oracle_target(const std::vector<learn::StepRecord>& lane, int t,
                     double gamma, double lambda) {
  int K = int(lane.size()) - t;
  auto R_h = [&](int h) {
    double acc = 0.0;
    for (int n = t; n < t + h; ++n) {
      acc += std::pow(gamma, double(n - t)) * lane[size_t(n)].reward;
      if (lane[size_t(n)].terminated) return acc;
    }
    return acc + std::pow(gamma, double(h)) * lane[size_t(t + h - 1)].value_next;
  };
  if (K == 1) return R_h(1);
  double acc = 0.0;
  for (int h = 1; h <= K - 1; ++h)
    acc += std::pow(lambda, double(h - 1)) * R_h(h);
  return (1.0 - lambda) * acc + std::pow(lambda, double(K - 1)) * R_h(K);
}

bool criterion7() {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    int len = 1 + int(seed % 5);
    RngStream rng(700 + seed, 0, 0);
    learn::RolloutBuffer buf;
    buf.lanes.resize(2);
    for (auto& lane : buf.lanes)
      for (int t = 0; t < len; ++t) {
        learn::StepRecord r;
        r.state = {rng.uniform(-1, 1)};
        r.reward = rng.uniform(-2, 2);
        r.value_next = rng.uniform(-3, 3);
        r.terminated = rng.below(4) == 0;
        lane.push_back(std::move(r));
      }
    for (double gamma : {0.0, 0.5, 0.9, 1.0})
      for (double lambda : {0.0, 0.5, 0.9, 1.0}) {
        auto tgt = learn::td_lambda_targets(buf, {gamma, lambda});
        for (size_t l = 0; l < buf.lanes.size(); ++l)
          for (int t = 0; t < len; ++t)
            if (std::abs(tgt[l][size_t(t)] -
                         oracle_target(buf.lanes[l], t, gamma, lambda)) > 1e-10)
              return false;
      }
  }
  return true;
}

learn::TrainConfig small_cfg(learn::Algo algo) {
  learn::TrainConfig cfg;
  cfg.algo = algo;
  cfg.horizon = 8;
  cfg.num_envs = 2;
  cfg.max_windows = 3;
  cfg.actor_layers = {8};
  cfg.critic_layers = {8};
  return cfg;
}

bool criterion8() {
  // AHAC with a frozen dual is SHAC
  {
    envs::HopperEnv env;
    env.mutable_config().h_max = 40;
    learn::TrainConfig a = small_cfg(learn::Algo::AHAC);
    a.alpha_phi = 0.0;
    learn::TrainConfig b = small_cfg(learn::Algo::SHAC);
    learn::TrainResult ra = learn::train(env, a, 7);
    learn::TrainResult rb = learn::train(env, b, 7);
    if (ra.policy.flat_params() != rb.policy.flat_params()) return false;
    if (ra.critic.flat_params() != rb.critic.flat_params()) return false;
    if (ra.curve.size() != rb.curve.size()) return false;
    for (size_t i = 0; i < ra.curve.size(); ++i) {
      if (ra.curve[i].episode_reward != rb.curve[i].episode_reward) return false;
      if (ra.curve[i].critic_loss != rb.curve[i].critic_loss) return false;
      if (ra.curve[i].sum_phi != 0.0) return false;
    }
  }
  // BPTT is SHAC over the full episode with a zeroed critic
  {
    envs::HopperEnv env;
    env.mutable_config().h_max = 6;
    learn::TrainConfig a = small_cfg(learn::Algo::BPTT);
    learn::TrainConfig b = small_cfg(learn::Algo::SHAC);
    b.horizon = 6;
    b.use_critic = false;
    learn::TrainResult ra = learn::train(env, a, 42);
    learn::TrainResult rb = learn::train(env, b, 42);
    if (ra.policy.flat_params() != rb.policy.flat_params()) return false;
    if (ra.curve.size() != rb.curve.size()) return false;
    for (size_t i = 0; i < ra.curve.size(); ++i)
      if (ra.curve[i].episode_reward != rb.curve[i].episode_reward) return false;
  }
  return true;
}

learn::TrainConfig hopper_fixture(learn::Algo algo) {
  learn::TrainConfig cfg;
  cfg.algo = algo;
  cfg.horizon = 32;
  cfg.num_envs = 4;
  cfg.actor_layers = {64, 32};
  cfg.critic_layers = {32, 32};
  // threshold in the hopper's normalized-stiffness scale (contact steps land
  // around 1e6..5e8 with median near 1e7)
  cfg.contact_threshold = 1e7;
  return cfg;
}

bool criterion9() {
  envs::HopperEnv env;
  env.mutable_config().h_max = 240;
  learn::TrainConfig cfg = hopper_fixture(learn::Algo::AHAC1);
  cfg.max_windows = 120;
  learn::TrainResult res = learn::train(env, cfg, 1);
  if (res.aborted || res.curve.empty()) return false;
  if (res.curve.back().truncation_count == 0) return false;
  for (const learn::WindowStiffness& w : res.stiffness_log) {
    if (w.per_step.empty()) return false;
    for (size_t i = 0; i + 1 < w.per_step.size(); ++i)
      if (w.per_step[i] > cfg.contact_threshold) return false;
  }

  envs::HopperEnv free_env;
  free_env.mutable_config().h_max = 240;
  free_env.mutable_params().contact_enabled = false;
  learn::TrainConfig fcfg = hopper_fixture(learn::Algo::AHAC1);
  fcfg.max_windows = 15;
  learn::TrainResult fres = learn::train(free_env, fcfg, 1);
  if (fres.aborted || fres.curve.empty()) return false;
  for (const learn::CurveRecord& c : fres.curve) {
    if (c.horizon != double(fcfg.horizon)) return false;
    if (c.truncation_count != 0) return false;
  }
  return true;
}

bool criterion10() {
  // stiff contact from step 10 of every 20-step cycle
  {
    envs::ScriptedStiffEnv env(10, 20, 1000.0);
    learn::TrainConfig cfg;
    cfg.algo = learn::Algo::AHAC;
    cfg.horizon = 32;
    cfg.h_min = 4;
    cfg.num_envs = 4;
    cfg.max_windows = 200;
    cfg.alpha_phi = 0.01;
    cfg.use_critic = false;
    cfg.actor_layers = {8};
    learn::TrainResult res = learn::train(env, cfg, 3);
    bool reached = false;
    for (const learn::CurveRecord& c : res.curve)
      if (std::lround(c.horizon) <= 12) { reached = true; break; }
    if (!reached) return false;
  }
  // contact-free schedule: the dual fixed point keeps everything frozen
  {
    envs::ScriptedStiffEnv env(25, 20, 1000.0);  // never fires
    learn::TrainConfig cfg;
    cfg.algo = learn::Algo::AHAC;
    cfg.horizon = 32;
    cfg.num_envs = 2;
    cfg.max_windows = 50;
    cfg.alpha_phi = 0.01;
    cfg.use_critic = false;
    cfg.actor_layers = {8};
    learn::TrainResult res = learn::train(env, cfg, 3);
    for (const learn::CurveRecord& c : res.curve) {
      if (c.horizon != 32.0) return false;
      if (c.sum_phi != 0.0) return false;
    }
    for (double phi : res.horizon.phi)
      if (phi != 0.0) return false;
  }
  return true;
}

bool criterion11() {
  int wins = 0, oscillating = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    envs::HopperEnv env;
    env.mutable_config().h_max = 240;
    learn::TrainConfig shac = hopper_fixture(learn::Algo::SHAC);
    shac.max_windows = 60;
    learn::TrainConfig ahac1 = hopper_fixture(learn::Algo::AHAC1);
    ahac1.max_windows = 480;  // roughly matched env-step budget at B=1
    learn::TrainResult rs = learn::train(env, shac, seed);
    learn::TrainResult ra = learn::train(env, ahac1, seed);
    if (rs.aborted || ra.aborted) continue;
    if (ra.curve.back().episode_reward >= rs.curve.back().episode_reward)
      ++wins;
    std::vector<double> horizons;
    for (const learn::CurveRecord& c : ra.curve) horizons.push_back(c.horizon);
    if (variance(horizons) > 0.0) ++oscillating;
  }
  return wins >= 3 && oscillating >= 3;
}

harness::ExperimentConfig tiny_training_config(const std::string& out) {
  harness::ExperimentConfig cfg;
  cfg.env = "scripted";
  cfg.script_stiff_from = 25;  // schedule never fires
  cfg.script_period = 20;
  cfg.algo = "shac";
  cfg.seeds = {1, 2, 3};
  cfg.out_dir = out;
  cfg.horizon = 4;
  cfg.num_envs = 2;
  cfg.max_windows = 3;
  cfg.actor_layers = {6};
  cfg.critic_layers = {6};
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool criterion12() {
  if (harness::iqm({0, 1, 2, 100}) != 1.5) return false;

  fs::path d1 = fs::temp_directory_path() / "diffrl_accept_a";
  fs::path d2 = fs::temp_directory_path() / "diffrl_accept_b";
  for (const fs::path& d : {d1, d2}) {
    fs::remove_all(d);
    fs::create_directories(d);
  }
  bool ok = harness::run_training(tiny_training_config(d1.string())) == 0 &&
            harness::run_training(tiny_training_config(d2.string())) == 0;
  for (const char* f : {"curve_seed1.csv", "curve_seed2.csv", "curve_seed3.csv",
                        "summary.csv", "aggregate.csv"})
    ok = ok && !slurp((d1 / f).string()).empty() &&
         slurp((d1 / f).string()) == slurp((d2 / f).string());

  if (ok) {
    harness::Table agg = harness::read_csv((d1 / "aggregate.csv").string());
    harness::Table re = harness::summarize_curves(d1.string());
    auto value = [](const harness::Table& t, const std::string& stat) {
      for (const auto& row : t.rows)
        if (row[0] == stat) return std::stod(row[1]);
      return std::numeric_limits<double>::quiet_NaN();
    };
    for (const char* stat : {"final_reward_iqm", "final_reward_ci_lo",
                             "final_reward_ci_hi"})
      ok = ok && std::abs(value(agg, stat) - value(re, stat)) <= 1e-12;
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
  return ok;
}

}  // namespace

int main() {
  report(1, "autodiff matches finite differences (primitives/MLP/envs/rollout)",
         criterion1());
  report(2, "heaviside study: ZOBG beats FOBG at small N, both shrink",
         criterion2());
  report(3, "zero-gradient FOBG sample mass matches 1 - erf(nu/(2*sqrt(2)*sigma))",
         criterion3());
  report(4, "ball study: sample error and ESNR degrade after contact",
         criterion4());
  report(5, "ZOBG unbiased vs quadrature on heaviside and contact-free ball",
         criterion5());
  report(6, "lemma bound arithmetic and monotonicity", criterion6());
  report(7, "TD(lambda) targets match the brute-force oracle", criterion7());
  report(8, "degenerate equivalences: AHAC(alpha=0)=SHAC, BPTT=SHAC(full,H)",
         criterion8());
  report(9, "AHAC-1 truncation soundness on the hopper fixture", criterion9());
  report(10, "AHAC horizon adaptation on the scripted environment",
         criterion10());
  report(11, "hopper fixture: AHAC-1 final reward >= SHAC on >= 3/5 seeds",
         criterion11());
  report(12, "byte determinism, IQM value, summary recomputation",
         criterion12());
  if (g_failures == 0)
    std::printf("acceptance: all 12 criteria passed\n");
  else
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return g_failures;
}
