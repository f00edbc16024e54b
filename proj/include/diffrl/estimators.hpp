#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "diffrl/envs.hpp"
#include "diffrl/rng.hpp"

namespace diffrl::est {

struct GradientReport {
  std::string method;
  int n_requested = 0;
  int samples_retained = 0;
  std::vector<double> mean_grad;
  std::vector<double> var_grad;  // per-coordinate sample variance
  double esnr = 0.0;
  std::vector<std::vector<double>> samples;  // per-sample gradients
};

// A stochastic objective that yields, per Monte-Carlo sample, the return, the
// pathwise gradient and the score Sum_h grad_theta log pi. fobg() and zobg()
// share noise streams per sample index (common random numbers).
class GradProblem {
 public:
  virtual ~GradProblem() = default;
  virtual int dim() const = 0;

  // Returns R; fills `fobg_grad` and `score`. `contact_flag`, when non-null,
  // reports whether any contact force was active during the sample.
  virtual double sample(std::span<const double> theta, RngStream& rs,
                        std::span<double> fobg_grad, std::span<double> score,
                        double* contact_flag = nullptr) const = 0;

  // Return of the noise-free (mean-action) rollout.
  virtual double noise_free_return(std::span<const double> theta) const = 0;

  // For 1-D problems: the return at a fixed standard-normal noise value,
  // used by the quadrature oracles. Default: unsupported.
  virtual double value_at_noise(double theta, double w) const;
  virtual double noise_sigma() const { return 0.0; }
};

GradientReport fobg(const GradProblem& problem, std::span<const double> theta,
                    int n, uint64_t seed, double* contact_fraction = nullptr);
GradientReport zobg(const GradProblem& problem, std::span<const double> theta,
                    int n, uint64_t seed);

// L2 norm of the difference of batch mean gradients.
double sample_error(const GradientReport& a, const GradientReport& b);

// (Sum_i mean_i^2) / (Sum_i var_i), the outer expectation estimated over
// `subbatches` disjoint sub-batches. +inf sentinel when total variance is 0.
double esnr(const std::vector<std::vector<double>>& samples,
            int subbatches = 10);

struct LipschitzConstants {
  double b_r = 1.0;
  double b_pi = 1.0;
  double b_f = 1.0;
  int horizon = 1;
};

// B <= H * B_r * B_pi * (1/2 + B_f^(H-1))
double lemma_bound(const LipschitzConstants& c);

// Var <= sigma^-2 * H * B_r^2 * B_pi^2
double zobg_variance_bound(double sigma, const LipschitzConstants& c);

// d/dtheta E[soft_heaviside(theta + w)], w ~ N(0, sigma^2), by adaptive
// quadrature of the differentiated integrand.
double heaviside_true_grad(double theta, double nu, double sigma);
double heaviside_expectation(double theta, double nu, double sigma);

// Quadrature ground truth for any 1-D GradProblem via the score identity:
// grad = Int R(theta, w) * (w / sigma) * N(w; 0, 1) dw.
double true_grad_quadrature(const GradProblem& problem, double theta);

// Adaptive Simpson on [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-10);

// ---------------------------------------------------------------------------

// a ~ theta + sigma*w, value = soft_heaviside(a).
class HeavisideProblem : public GradProblem {
 public:
  HeavisideProblem(double nu, double sigma) : nu_(nu), sigma_(sigma) {}
  int dim() const override { return 1; }
  double sample(std::span<const double> theta, RngStream& rs,
                std::span<double> fobg_grad, std::span<double> score,
                double* contact_flag) const override;
  double noise_free_return(std::span<const double> theta) const override;
  double value_at_noise(double theta, double w) const override;
  double noise_sigma() const override { return sigma_; }

 private:
  double nu_, sigma_;
};

// Ball launch-angle problem truncated at `horizon` steps: the return is the
// inverse distance to target at step `horizon`.
class BallProblem : public GradProblem {
 public:
  BallProblem(envs::BallEnv env, int horizon, double sigma);
  int dim() const override { return 1; }
  double sample(std::span<const double> theta, RngStream& rs,
                std::span<double> fobg_grad, std::span<double> score,
                double* contact_flag) const override;
  double noise_free_return(std::span<const double> theta) const override;
  double value_at_noise(double theta, double w) const override;
  double noise_sigma() const override { return sigma_; }

 private:
  double rollout_plain(double angle, bool* contact) const;

  envs::BallEnv env_;
  int horizon_;
  double sigma_;
};

}  // namespace diffrl::est
