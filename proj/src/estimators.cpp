#include "diffrl/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace diffrl::est {

double GradProblem::value_at_noise(double, double) const {
  throw std::logic_error("value_at_noise unsupported for this problem");
}

namespace {

GradientReport assemble(std::string method, int n,
                        std::vector<std::vector<double>> samples, int dim) {
  GradientReport rep;
  rep.method = std::move(method);
  rep.n_requested = n;
  rep.samples_retained = int(samples.size());
  rep.mean_grad.assign(size_t(dim), 0.0);
  rep.var_grad.assign(size_t(dim), 0.0);
  int m = rep.samples_retained;
  if (m > 0) {
    for (const auto& g : samples)
      for (int i = 0; i < dim; ++i) rep.mean_grad[size_t(i)] += g[size_t(i)];
    for (double& v : rep.mean_grad) v /= double(m);
  }
  if (m >= 2) {
    for (const auto& g : samples)
      for (int i = 0; i < dim; ++i) {
        double d = g[size_t(i)] - rep.mean_grad[size_t(i)];
        rep.var_grad[size_t(i)] += d * d;
      }
    for (double& v : rep.var_grad) v /= double(m - 1);
  }
  rep.esnr = esnr(samples);
  rep.samples = std::move(samples);
  return rep;
}

}  // namespace

GradientReport fobg(const GradProblem& problem, std::span<const double> theta,
                    int n, uint64_t seed, double* contact_fraction) {
  int d = problem.dim();
  std::vector<std::vector<double>> samples;
  samples.reserve(size_t(n));
  double contact_sum = 0.0;
  int contact_count = 0;
  for (int i = 0; i < n; ++i) {
    RngStream rs(seed, 0, uint64_t(i));
    std::vector<double> g(size_t(d), 0.0), score(size_t(d), 0.0);
    double flag = 0.0;
    try {
      problem.sample(theta, rs, g, score, &flag);
    } catch (const ad::NumericalOverflow&) {
      continue;  // excluded and counted via samples_retained
    }
    samples.push_back(std::move(g));
    contact_sum += flag;
    ++contact_count;
  }
  if (contact_fraction)
    *contact_fraction = contact_count ? contact_sum / double(contact_count) : 0.0;
  return assemble("FOBG", n, std::move(samples), d);
}

GradientReport zobg(const GradProblem& problem, std::span<const double> theta,
                    int n, uint64_t seed) {
  int d = problem.dim();
  double baseline = problem.noise_free_return(theta);
  std::vector<std::vector<double>> samples;
  samples.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    RngStream rs(seed, 0, uint64_t(i));  // common random numbers with fobg
    std::vector<double> g(size_t(d), 0.0), score(size_t(d), 0.0);
    double ret;
    try {
      ret = problem.sample(theta, rs, g, score, nullptr);
    } catch (const ad::NumericalOverflow&) {
      continue;
    }
    for (int k = 0; k < d; ++k) score[size_t(k)] *= (ret - baseline);
    samples.push_back(std::move(score));
  }
  return assemble("ZOBG", n, std::move(samples), d);
}

double sample_error(const GradientReport& a, const GradientReport& b) {
  if (a.mean_grad.size() != b.mean_grad.size())
    throw ad::ArityError("gradient reports have different parameter shapes");
  double s = 0.0;
  for (size_t i = 0; i < a.mean_grad.size(); ++i) {
    double d = a.mean_grad[i] - b.mean_grad[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double esnr(const std::vector<std::vector<double>>& samples, int subbatches) {
  int n = int(samples.size());
  if (n < 2) return 0.0;
  int k = subbatches;
  if (n < 2 * k) k = 1;  // too few samples to split
  int per = n / k;
  size_t dim = samples[0].size();

  double acc = 0.0;
  for (int b = 0; b < k; ++b) {
    int lo = b * per;
    int hi = lo + per;
    std::vector<double> mean(dim, 0.0), var(dim, 0.0);
    for (int i = lo; i < hi; ++i)
      for (size_t c = 0; c < dim; ++c) mean[c] += samples[size_t(i)][c];
    for (double& v : mean) v /= double(per);
    for (int i = lo; i < hi; ++i)
      for (size_t c = 0; c < dim; ++c) {
        double d = samples[size_t(i)][c] - mean[c];
        var[c] += d * d;
      }
    double num = 0.0, den = 0.0;
    for (size_t c = 0; c < dim; ++c) {
      num += mean[c] * mean[c];
      den += var[c] / double(per - 1);
    }
    if (den == 0.0) {
      if (num == 0.0) continue;  // degenerate all-zero sub-batch
      return std::numeric_limits<double>::infinity();
    }
    acc += num / den;
  }
  return acc / double(k);
}

double lemma_bound(const LipschitzConstants& c) {
  return double(c.horizon) * c.b_r * c.b_pi *
         (0.5 + std::pow(c.b_f, double(c.horizon - 1)));
}

double zobg_variance_bound(double sigma, const LipschitzConstants& c) {
  return double(c.horizon) * c.b_r * c.b_r * c.b_pi * c.b_pi / (sigma * sigma);
}

namespace {

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double gauss_pdf(double x, double mu, double sigma) {
  double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = simpson(a, b, fa, fm, fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

double heaviside_expectation(double theta, double nu, double sigma) {
  auto f = [&](double x) {
    return envs::soft_heaviside(x, nu) * gauss_pdf(x, theta, sigma);
  };
  return integrate(f, theta - 8.0 * sigma, theta + 8.0 * sigma);
}

double heaviside_true_grad(double theta, double nu, double sigma) {
  // differentiate under the integral: d/dtheta N(x; theta, s^2)
  //   = (x - theta)/s^2 * N(x; theta, s^2)
  auto f = [&](double x) {
    return envs::soft_heaviside(x, nu) * (x - theta) / (sigma * sigma) *
           gauss_pdf(x, theta, sigma);
  };
  return integrate(f, theta - 8.0 * sigma, theta + 8.0 * sigma);
}

double true_grad_quadrature(const GradProblem& problem, double theta) {
  double sigma = problem.noise_sigma();
  auto f = [&](double w) {
    return problem.value_at_noise(theta, w) * (w / sigma) *
           gauss_pdf(w, 0.0, 1.0);
  };
  return integrate(f, -8.0, 8.0, 1e-9);
}

// ---------------------------------------------------------------------------

double HeavisideProblem::sample(std::span<const double> theta, RngStream& rs,
                                std::span<double> fobg_grad,
                                std::span<double> score,
                                double* contact_flag) const {
  double w = rs.normal();
  envs::HeavisideEval e =
      envs::heaviside_env_eval(theta[0], w, nu_, sigma_);
  fobg_grad[0] = e.per_sample_fobg;
  score[0] = w / sigma_;  // Gaussian score at a = theta + sigma*w
  if (contact_flag) *contact_flag = 0.0;
  return e.value;
}

double HeavisideProblem::noise_free_return(std::span<const double> theta) const {
  return envs::soft_heaviside(theta[0], nu_);
}

double HeavisideProblem::value_at_noise(double theta, double w) const {
  return envs::soft_heaviside(theta + sigma_ * w, nu_);
}

BallProblem::BallProblem(envs::BallEnv env, int horizon, double sigma)
    : env_(std::move(env)), horizon_(horizon), sigma_(sigma) {
  env_.mutable_config().h_max = horizon;  // terminal reward lands at `horizon`
}

double BallProblem::rollout_plain(double angle, bool* contact) const {
  envs::SimState st = env_.initial_state(angle);
  std::vector<double> s = st.flat();
  double ret = 0.0;
  bool touched = false;
  std::vector<double> empty;
  for (int t = 0; t < horizon_; ++t) {
    envs::StepResultT<double> out = env_.step(s, empty, t);
    ret += out.reward;
    for (double f : out.contact_force)
      if (f != 0.0) touched = true;
    s = out.next;
  }
  if (contact) *contact = touched;
  return ret;
}

double BallProblem::sample(std::span<const double> theta, RngStream& rs,
                           std::span<double> fobg_grad,
                           std::span<double> score,
                           double* contact_flag) const {
  double w = rs.normal();
  double angle = theta[0] + sigma_ * w;

  ad::Tape tape;
  ad::Var th = ad::make_var(tape, theta[0]);
  ad::Var ang = th + ad::Var(sigma_ * w);
  double speed = env_.params().launch_speed;
  std::vector<ad::Var> s = {ad::Var(0.0), ad::Var(0.0),
                            ad::Var(speed) * ad::cos(ang),
                            ad::Var(speed) * ad::sin(ang)};
  ad::Var ret(0.0);
  bool touched = false;
  std::vector<ad::Var> empty;
  for (int t = 0; t < horizon_; ++t) {
    envs::StepResultT<ad::Var> out = env_.step(s, empty, t);
    ret += out.reward;
    for (const ad::Var& f : out.contact_force)
      if (f.v != 0.0) touched = true;
    s = std::move(out.next);
  }
  std::vector<double> adj = tape.backward(ret.id);
  fobg_grad[0] = adj[0];  // theta is the first tape node
  score[0] = w / sigma_;
  if (contact_flag) *contact_flag = touched ? 1.0 : 0.0;
  (void)angle;
  return ret.v;
}

double BallProblem::noise_free_return(std::span<const double> theta) const {
  return rollout_plain(theta[0], nullptr);
}

double BallProblem::value_at_noise(double theta, double w) const {
  return rollout_plain(theta + sigma_ * w, nullptr);
}

}  // namespace diffrl::est
