#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "diffrl/autodiff.hpp"
#include "diffrl/rng.hpp"

namespace diffrl::envs {

using ad::Var;

// double counterparts of the tape primitives, so physics can be written once
// and instantiated for both plain and recorded evaluation.
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double exp(double x) { return std::exp(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double max(double a, double b) { return a >= b ? a : b; }
inline double min(double a, double b) { return a <= b ? a : b; }
inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}
inline double square(double x) { return x * x; }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
using ad::clamp;
using ad::cos;
using ad::sin;
using ad::elu;
using ad::exp;
using ad::max;
using ad::min;
using ad::sqrt;
using ad::square;
using ad::tanh;

// Piecewise-linear saturation with transition width nu: -1 below -nu/2,
// 2x/nu inside, 1 above nu/2.
template <class T>
T soft_heaviside(const T& x, double nu) {
  return clamp(x * T(2.0 / nu), -1.0, 1.0);
}

// Analytic derivative, right-hand branch at the breakpoints.
inline double soft_heaviside_grad(double x, double nu) {
  double y = 2.0 * x / nu;
  return (y >= -1.0 && y < 1.0) ? 2.0 / nu : 0.0;
}

struct SimState {
  std::vector<double> q;
  std::vector<double> qdot;
  int t = 0;

  std::vector<double> flat() const {
    std::vector<double> s = q;
    s.insert(s.end(), qdot.begin(), qdot.end());
    return s;
  }
};

struct ContactParams {
  double k_n = 2000.0;  // normal stiffness, N/m
  double k_d = 10.0;    // damping, N*s/m
  double mu = 0.5;      // Coulomb friction coefficient
  double nu = 0.1;      // soft-Heaviside width, m/s
};

struct EnvConfig {
  double dt = 0.05;
  double gravity = -9.81;
  int h_max = 1000;            // episode length
  double h_term = 0.7;         // termination height, m
  double theta_term = 1.0;     // termination angle, rad
  double term_margin = 0.1;
  double reset_noise_scale = 0.0;
  double action_scale = 1.0;
};

template <class T>
struct StepResultT {
  std::vector<T> next;           // next flat state
  T reward{};
  std::vector<T> contact_force;  // isolated contact contribution (forces)
  std::vector<double> qddot;     // accelerations, for stiffness normalization
  bool done = false;
};

using StepResult = StepResultT<double>;

class Env {
 public:
  virtual ~Env() = default;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int coord_dim() const = 0;  // number of generalized coordinates

  virtual SimState reset(RngStream& rng) const = 0;

  // `t` is the step index of the incoming state (reward schedules and
  // episode caps live here, not in the trainer).
  virtual StepResultT<double> step(std::span<const double> s,
                                   std::span<const double> a, int t) const = 0;
  virtual StepResultT<Var> step(std::span<const Var> s,
                                std::span<const Var> a, int t) const = 0;

  // Contact contribution to the next state, exposed as its own
  // differentiable sub-computation.
  virtual std::vector<double> contact_delta(std::span<const double> s,
                                            std::span<const double> a) const = 0;
  virtual std::vector<Var> contact_delta(std::span<const Var> s,
                                         std::span<const Var> a) const = 0;

  virtual const EnvConfig& config() const = 0;

  // Normalized contact stiffness recorded alongside a step; scripted test
  // environments override the default Jacobian-based computation.
  virtual double step_stiffness(std::span<const double> s,
                                std::span<const double> a, int t,
                                ad::JacNorm kind = ad::JacNorm::Frobenius) const;
};

// Frobenius (or operator-2) norm of the Jacobian of the contact-force
// contribution to next-state w.r.t. (s, a); 0 when no contact is active.
double contact_jacobian_norm(const Env& env, std::span<const double> s,
                             std::span<const double> a,
                             ad::JacNorm kind = ad::JacNorm::Frobenius);

// Same Jacobian with rows scaled by q_hat_i = max(|qddot_i|, 1), taken per
// generalized coordinate and shared by its position and velocity rows.
double normalized_contact_stiffness(const Env& env, std::span<const double> s,
                                    std::span<const double> a,
                                    ad::JacNorm kind = ad::JacNorm::Frobenius);

// ---------------------------------------------------------------------------
// One-step soft-Heaviside problem: a ~ theta + sigma*w, value = H(a).

struct HeavisideEval {
  double value;
  double per_sample_fobg;
};

HeavisideEval heaviside_env_eval(double theta, double noise, double nu,
                                 double sigma);

// ---------------------------------------------------------------------------
// Ball shot at a wall; state (x, y, vx, vy). Spring-damper normal force plus
// soft-Coulomb friction on the tangential (y) velocity. Terminal reward
// 1/||pos - target|| at t = h_max.

class BallEnv : public Env {
 public:
  struct Params {
    double wall_x = 1.2;
    double target_x = 0.0;
    double target_y = 0.6;
    double launch_speed = 1.0;
    double mass = 1.0;
    bool contact_enabled = true;
  };

  BallEnv() { cfg_.gravity = 0.0; cfg_.h_max = 40; cfg_.dt = 0.05; }
  BallEnv(Params p, EnvConfig cfg, ContactParams cp)
      : p_(p), cfg_(cfg), cp_(cp) {}

  int state_dim() const override { return 4; }
  int action_dim() const override { return 0; }
  int coord_dim() const override { return 2; }

  SimState reset(RngStream& rng) const override;
  SimState initial_state(double launch_angle) const;

  StepResultT<double> step(std::span<const double> s, std::span<const double> a,
                           int t) const override;
  StepResultT<Var> step(std::span<const Var> s, std::span<const Var> a,
                        int t) const override;
  std::vector<double> contact_delta(std::span<const double> s,
                                    std::span<const double> a) const override;
  std::vector<Var> contact_delta(std::span<const Var> s,
                                 std::span<const Var> a) const override;

  const EnvConfig& config() const override { return cfg_; }
  const Params& params() const { return p_; }
  const ContactParams& contact() const { return cp_; }
  Params& mutable_params() { return p_; }
  ContactParams& mutable_contact() { return cp_; }
  EnvConfig& mutable_config() { return cfg_; }

 private:
  template <class T>
  StepResultT<T> step_impl(std::span<const T> s, std::span<const T> a,
                           int t) const;
  template <class T>
  std::vector<T> contact_delta_impl(std::span<const T> s) const;

  Params p_;
  EnvConfig cfg_;
  ContactParams cp_;
};

// ---------------------------------------------------------------------------
// Planar single-leg hopper: 3 links (torso, thigh, shank) with diagonal
// mass matrix, absolute link angles and a spring-damper foot contact.
// q = (x, z, a_torso, a_thigh, a_shank). Reward follows the forward-velocity
// shaping with height and angle terms and an action penalty.

class HopperEnv : public Env {
 public:
  struct Params {
    double m_torso = 3.0, m_thigh = 1.0, m_shank = 0.5;
    double l_torso = 0.4, l_thigh = 0.45, l_shank = 0.5;
    double joint_damping = 0.4;
    double reset_height = 1.0;
    bool contact_enabled = true;
  };

  HopperEnv() {
    cfg_.dt = 1.0 / 60.0;
    cfg_.gravity = -9.81;
    cfg_.h_max = 1000;
    cfg_.h_term = 0.7;
    cfg_.theta_term = 1.0;
    cfg_.term_margin = 0.1;
    cfg_.action_scale = 30.0;
    cp_.k_n = 20000.0;
    cp_.k_d = 100.0;
    cp_.mu = 0.9;
    cp_.nu = 0.1;
  }
  HopperEnv(Params p, EnvConfig cfg, ContactParams cp)
      : p_(p), cfg_(cfg), cp_(cp) {}

  int state_dim() const override { return 10; }
  int action_dim() const override { return 3; }
  int coord_dim() const override { return 5; }

  SimState reset(RngStream& rng) const override;

  StepResultT<double> step(std::span<const double> s, std::span<const double> a,
                           int t) const override;
  StepResultT<Var> step(std::span<const Var> s, std::span<const Var> a,
                        int t) const override;
  std::vector<double> contact_delta(std::span<const double> s,
                                    std::span<const double> a) const override;
  std::vector<Var> contact_delta(std::span<const Var> s,
                                 std::span<const Var> a) const override;

  const EnvConfig& config() const override { return cfg_; }
  const Params& params() const { return p_; }
  const ContactParams& contact() const { return cp_; }
  Params& mutable_params() { return p_; }
  ContactParams& mutable_contact() { return cp_; }
  EnvConfig& mutable_config() { return cfg_; }

  double total_mass() const { return p_.m_torso + p_.m_thigh + p_.m_shank; }

 private:
  template <class T>
  StepResultT<T> step_impl(std::span<const T> s, std::span<const T> a,
                           int t) const;
  template <class T>
  std::vector<T> contact_force_impl(std::span<const T> s) const;
  template <class T>
  std::vector<T> contact_delta_impl(std::span<const T> s) const;

  Params p_;
  EnvConfig cfg_;
  ContactParams cp_;
};

// Trivial 1-D environment whose contact stiffness follows a fixed schedule:
// `stiffness_high` whenever (step mod period) >= stiff_from, else 0. Used to
// exercise horizon adaptation without physics in the way.
class ScriptedStiffEnv : public Env {
 public:
  ScriptedStiffEnv(int stiff_from, int period, double stiffness_high)
      : stiff_from_(stiff_from), period_(period), high_(stiffness_high) {
    cfg_.dt = 1.0;
    cfg_.h_max = 1000000;
    cfg_.gravity = 0.0;
  }

  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int coord_dim() const override { return 1; }

  SimState reset(RngStream&) const override {
    return SimState{{0.0}, {}, 0};
  }

  StepResultT<double> step(std::span<const double> s, std::span<const double> a,
                           int t) const override;
  StepResultT<Var> step(std::span<const Var> s, std::span<const Var> a,
                        int t) const override;
  std::vector<double> contact_delta(std::span<const double>,
                                    std::span<const double>) const override {
    return {0.0};
  }
  std::vector<Var> contact_delta(std::span<const Var>,
                                 std::span<const Var>) const override {
    return {Var(0.0)};
  }

  const EnvConfig& config() const override { return cfg_; }
  double step_stiffness(std::span<const double>, std::span<const double>,
                        int t, ad::JacNorm = ad::JacNorm::Frobenius) const override {
    return scripted_stiffness(t);
  }
  double scripted_stiffness(int t) const {
    return (t % period_) >= stiff_from_ ? high_ : 0.0;
  }

 private:
  template <class T>
  StepResultT<T> step_impl(std::span<const T> s, std::span<const T> a,
                           int t) const;

  int stiff_from_;
  int period_;
  double high_;
  EnvConfig cfg_;
};

}  // namespace diffrl::envs
