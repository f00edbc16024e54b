#include "diffrl/envs.hpp"

#include <cmath>

namespace diffrl::envs {

namespace {

inline double val(double x) { return x; }
inline double val(const Var& x) { return x.v; }

}  // namespace

double Env::step_stiffness(std::span<const double> s,
                           std::span<const double> a, int,
                           ad::JacNorm kind) const {
  return normalized_contact_stiffness(*this, s, a, kind);
}

double contact_jacobian_norm(const Env& env, std::span<const double> s,
                             std::span<const double> a, ad::JacNorm kind) {
  int n = env.state_dim();
  ad::Program sub = [&env, n](ad::Tape&, std::span<const Var> in) {
    return env.contact_delta(in.subspan(0, size_t(n)),
                             in.subspan(size_t(n)));
  };
  std::vector<double> point(s.begin(), s.end());
  point.insert(point.end(), a.begin(), a.end());
  return ad::jacobian_norm(sub, point, kind);
}

double normalized_contact_stiffness(const Env& env, std::span<const double> s,
                                    std::span<const double> a,
                                    ad::JacNorm kind) {
  int n = env.state_dim();
  int nq = env.coord_dim();
  StepResultT<double> out = env.step(s, a, 0);
  bool any = false;
  for (double f : out.contact_force)
    if (f != 0.0) any = true;
  if (!any) return 0.0;

  // q_hat_i = max(|qddot_i|, 1), shared by the position and velocity rows of
  // each generalized coordinate.
  std::vector<double> row_scale(size_t(n), 1.0);
  for (int i = 0; i < n; ++i) {
    int c = i % nq;
    if (c < int(out.qddot.size()))
      row_scale[size_t(i)] = std::max(std::abs(out.qddot[size_t(c)]), 1.0);
  }

  ad::Program sub = [&env, n](ad::Tape&, std::span<const Var> in) {
    return env.contact_delta(in.subspan(0, size_t(n)),
                             in.subspan(size_t(n)));
  };
  std::vector<double> point(s.begin(), s.end());
  point.insert(point.end(), a.begin(), a.end());
  return ad::jacobian_norm(sub, point, kind, row_scale);
}

HeavisideEval heaviside_env_eval(double theta, double noise, double nu,
                                 double sigma) {
  double x = theta + sigma * noise;
  return HeavisideEval{soft_heaviside(x, nu), soft_heaviside_grad(x, nu)};
}

// ---------------------------------------------------------------------------
// BallEnv

SimState BallEnv::reset(RngStream&) const { return initial_state(0.0); }

SimState BallEnv::initial_state(double launch_angle) const {
  SimState s;
  s.q = {0.0, 0.0};
  s.qdot = {p_.launch_speed * std::cos(launch_angle),
            p_.launch_speed * std::sin(launch_angle)};
  s.t = 0;
  return s;
}

template <class T>
std::vector<T> BallEnv::contact_delta_impl(std::span<const T> s) const {
  const T& x = s[0];
  const T& vx = s[2];
  const T& vy = s[3];
  double m = p_.mass;
  T zero(0.0);
  if (!p_.contact_enabled)
    return {zero, zero, zero, zero};
  // penetration-gated spring with velocity-proportional damping; damping only
  // while approaching the wall
  T p_pos = max(x - T(p_.wall_x), T(0.0));
  T f_n = p_pos * (T(cp_.k_n) + T(cp_.k_d) * max(vx, T(0.0)));
  T f_t = T(-cp_.mu) * f_n * soft_heaviside(vy, cp_.nu);
  T dvx = T(-cfg_.dt / m) * f_n;
  T dvy = T(cfg_.dt / m) * f_t;
  return {T(cfg_.dt) * dvx, T(cfg_.dt) * dvy, dvx, dvy};
}

template <class T>
StepResultT<T> BallEnv::step_impl(std::span<const T> s, std::span<const T>,
                                  int t) const {
  StepResultT<T> out;
  const T& x = s[0];
  const T& y = s[1];
  const T& vx = s[2];
  const T& vy = s[3];
  double m = p_.mass;

  T f_n(0.0), f_t(0.0);
  if (p_.contact_enabled) {
    T p_pos = max(x - T(p_.wall_x), T(0.0));
    f_n = p_pos * (T(cp_.k_n) + T(cp_.k_d) * max(vx, T(0.0)));
    f_t = T(-cp_.mu) * f_n * soft_heaviside(vy, cp_.nu);
  }
  T ax = T(-1.0 / m) * f_n;
  T ay = T(cfg_.gravity) + T(1.0 / m) * f_t;

  T nvx = vx + T(cfg_.dt) * ax;
  T nvy = vy + T(cfg_.dt) * ay;
  T nx = x + T(cfg_.dt) * nvx;
  T ny = y + T(cfg_.dt) * nvy;

  out.next = {nx, ny, nvx, nvy};
  out.contact_force = {T(-1.0) * f_n, f_t};
  out.qddot = {val(ax), val(ay)};
  out.done = (t + 1 >= cfg_.h_max);
  if (t + 1 == cfg_.h_max) {
    T dx = nx - T(p_.target_x);
    T dy = ny - T(p_.target_y);
    out.reward = T(1.0) / sqrt(square(dx) + square(dy));
  } else {
    out.reward = T(0.0);
  }
  return out;
}

StepResultT<double> BallEnv::step(std::span<const double> s,
                                  std::span<const double> a, int t) const {
  return step_impl<double>(s, a, t);
}
StepResultT<Var> BallEnv::step(std::span<const Var> s, std::span<const Var> a,
                               int t) const {
  return step_impl<Var>(s, a, t);
}
std::vector<double> BallEnv::contact_delta(std::span<const double> s,
                                           std::span<const double>) const {
  return contact_delta_impl<double>(s);
}
std::vector<Var> BallEnv::contact_delta(std::span<const Var> s,
                                        std::span<const Var>) const {
  return contact_delta_impl<Var>(s);
}

// ---------------------------------------------------------------------------
// HopperEnv

SimState HopperEnv::reset(RngStream& rng) const {
  SimState s;
  s.q = {0.0, p_.reset_height, 0.0, 0.0, 0.0};
  s.qdot = {0.0, 0.0, 0.0, 0.0, 0.0};
  if (cfg_.reset_noise_scale > 0.0) {
    for (double& v : s.q) v += cfg_.reset_noise_scale * rng.normal();
    for (double& v : s.qdot) v += cfg_.reset_noise_scale * rng.normal();
  }
  s.t = 0;
  return s;
}

template <class T>
std::vector<T> HopperEnv::contact_force_impl(std::span<const T> s) const {
  const T& z = s[1];
  const T& a2 = s[3];
  const T& a3 = s[4];
  const T& xd = s[5];
  const T& zd = s[6];
  const T& a2d = s[8];
  const T& a3d = s[9];
  double l2 = p_.l_thigh, l3 = p_.l_shank;

  T sa2 = sin(a2), ca2 = cos(a2);
  T sa3 = sin(a3), ca3 = cos(a3);
  T foot_z = z - T(l2) * ca2 - T(l3) * ca3;
  T vfx = xd + T(l2) * ca2 * a2d + T(l3) * ca3 * a3d;
  T vfz = zd + T(l2) * sa2 * a2d + T(l3) * sa3 * a3d;

  T zero(0.0);
  if (!p_.contact_enabled) return {zero, zero, zero, zero, zero};

  T p_pos = max(T(0.0) - foot_z, T(0.0));
  T f_n = p_pos * (T(cp_.k_n) + T(cp_.k_d) * max(T(0.0) - vfz, T(0.0)));
  T f_t = T(-cp_.mu) * f_n * soft_heaviside(vfx, cp_.nu);

  // generalized force Q = J_foot^T * (f_t, f_n)
  return {f_t, f_n, zero, T(l2) * ca2 * f_t + T(l2) * sa2 * f_n,
          T(l3) * ca3 * f_t + T(l3) * sa3 * f_n};
}

template <class T>
std::vector<T> HopperEnv::contact_delta_impl(std::span<const T> s) const {
  std::vector<T> q_c = contact_force_impl<T>(s);
  double m_tot = total_mass();
  double inertia[3] = {p_.m_torso * p_.l_torso * p_.l_torso / 3.0,
                       p_.m_thigh * p_.l_thigh * p_.l_thigh / 3.0,
                       p_.m_shank * p_.l_shank * p_.l_shank / 3.0};
  double mass[5] = {m_tot, m_tot, inertia[0], inertia[1], inertia[2]};
  std::vector<T> delta(10, T(0.0));
  for (int i = 0; i < 5; ++i) {
    T dv = T(cfg_.dt / mass[i]) * q_c[size_t(i)];
    delta[size_t(5 + i)] = dv;
    delta[size_t(i)] = T(cfg_.dt) * dv;
  }
  return delta;
}

template <class T>
StepResultT<T> HopperEnv::step_impl(std::span<const T> s, std::span<const T> a,
                                    int t) const {
  StepResultT<T> out;
  const T& a1 = s[2];
  const T& a2 = s[3];
  const T& a3 = s[4];
  double m_tot = total_mass();
  double g = cfg_.gravity;
  double l1 = p_.l_torso, l2 = p_.l_thigh, l3 = p_.l_shank;
  double inertia[3] = {p_.m_torso * l1 * l1 / 3.0, p_.m_thigh * l2 * l2 / 3.0,
                       p_.m_shank * l3 * l3 / 3.0};
  double mass[5] = {m_tot, m_tot, inertia[0], inertia[1], inertia[2]};

  std::vector<T> q_force = contact_force_impl<T>(s);
  out.contact_force = q_force;

  T tau1 = T(cfg_.action_scale) * a[0];
  T tau2 = T(cfg_.action_scale) * a[1];
  T tau3 = T(cfg_.action_scale) * a[2];

  // gravity on the root, link gravity torques (torso inverted, leg hanging)
  q_force[1] += T(m_tot * g);
  q_force[2] += T(-p_.m_torso * g * l1 / 2.0) * sin(a1);
  q_force[3] += T(p_.m_thigh * g * l2 / 2.0) * sin(a2);
  q_force[4] += T(p_.m_shank * g * l3 / 2.0) * sin(a3);

  // hip between torso and thigh, knee between thigh and shank, ankle free
  q_force[2] -= tau1;
  q_force[3] += tau1 - tau2;
  q_force[4] += tau2 + tau3;

  for (int i = 2; i < 5; ++i)
    q_force[size_t(i)] -= T(p_.joint_damping) * s[size_t(5 + i)];

  out.next.resize(10);
  out.qddot.resize(5);
  for (int i = 0; i < 5; ++i) {
    T acc = q_force[size_t(i)] / T(mass[i]);
    out.qddot[size_t(i)] = val(acc);
    T nv = s[size_t(5 + i)] + T(cfg_.dt) * acc;
    out.next[size_t(5 + i)] = nv;
    out.next[size_t(i)] = s[size_t(i)] + T(cfg_.dt) * nv;
  }

  const T& h = out.next[1];
  const T& body_angle = out.next[2];
  const T& fwd_vel = out.next[5];

  T r_height = val(h) >= cfg_.h_term
                   ? h - T(cfg_.h_term)
                   : T(-200.0) * square(h - T(cfg_.h_term));
  T r_angle = T(1.0) - square(body_angle * T(1.0 / cfg_.theta_term));
  T action_sq = square(a[0]) + square(a[1]) + square(a[2]);
  out.reward = fwd_vel + r_height + r_angle - T(0.1) * action_sq;

  out.done = val(h) < cfg_.h_term - cfg_.term_margin || t + 1 >= cfg_.h_max;
  return out;
}

StepResultT<double> HopperEnv::step(std::span<const double> s,
                                    std::span<const double> a, int t) const {
  return step_impl<double>(s, a, t);
}
StepResultT<Var> HopperEnv::step(std::span<const Var> s,
                                 std::span<const Var> a, int t) const {
  return step_impl<Var>(s, a, t);
}
std::vector<double> HopperEnv::contact_delta(std::span<const double> s,
                                             std::span<const double>) const {
  return contact_delta_impl<double>(s);
}
std::vector<Var> HopperEnv::contact_delta(std::span<const Var> s,
                                          std::span<const Var>) const {
  return contact_delta_impl<Var>(s);
}

// ---------------------------------------------------------------------------
// ScriptedStiffEnv

template <class T>
StepResultT<T> ScriptedStiffEnv::step_impl(std::span<const T> s,
                                           std::span<const T> a, int) const {
  StepResultT<T> out;
  out.next = {s[0] + T(0.01) * a[0]};
  out.reward = T(-0.01) * square(a[0]);
  out.contact_force = {T(0.0)};
  out.qddot = {0.0};
  out.done = false;
  return out;
}

StepResultT<double> ScriptedStiffEnv::step(std::span<const double> s,
                                           std::span<const double> a,
                                           int t) const {
  return step_impl<double>(s, a, t);
}
StepResultT<Var> ScriptedStiffEnv::step(std::span<const Var> s,
                                        std::span<const Var> a, int t) const {
  return step_impl<Var>(s, a, t);
}

}  // namespace diffrl::envs
