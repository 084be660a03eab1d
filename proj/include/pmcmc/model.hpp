#ifndef PMCMC_MODEL_HPP
#define PMCMC_MODEL_HPP

#include "pmcmc/random.hpp"
#include "pmcmc/types.hpp"

#include <string>
#include <vector>

namespace pmcmc {

/// Closed-form quantities needed by the fully adapted particle filter:
/// the locally optimal proposal p(x_t | y_t, x_{t-1}) and the one-step
/// predictive p(y_{t+1} | x_t).
class FullyAdapted {
 public:
  virtual ~FullyAdapted() = default;

  virtual double sample_optimal_proposal(const Vector& theta, double x_prev, double y,
                                         Rng& rng) const = 0;
  virtual double log_optimal_proposal(const Vector& theta, double x_prev, double x_curr,
                                      double y) const = 0;
  virtual double log_predictive(const Vector& theta, double x_curr, double y_next) const = 0;
};

/// Scalar-state state space model
///
///   x_t | x_{t-1} ~ f_theta(x_t | x_{t-1}),   y_t | x_t ~ g_theta(y_t | x_t),
///
/// together with its parameter prior and the first and second parameter
/// derivatives of both kernels. Time indices are 1-based; t enters every
/// density so that lag-dependent code can pass it through, but the models in
/// this library are time-homogeneous.
///
/// Implementations are immutable after construction and may be shared between
/// concurrently running chains. All randomness comes from the caller's Rng.
class SsmModel {
 public:
  virtual ~SsmModel() = default;

  virtual int dim() const = 0;
  virtual std::vector<std::string> param_names() const = 0;

  virtual double log_transition(const Vector& theta, double x_prev, double x_curr,
                                int t) const = 0;
  virtual double log_observation(const Vector& theta, double x_curr, double y, int t) const = 0;

  virtual Vector grad_log_transition(const Vector& theta, double x_prev, double x_curr,
                                     int t) const = 0;
  virtual Vector grad_log_observation(const Vector& theta, double x_curr, double y,
                                      int t) const = 0;
  virtual Matrix hess_log_transition(const Vector& theta, double x_prev, double x_curr,
                                     int t) const = 0;
  virtual Matrix hess_log_observation(const Vector& theta, double x_curr, double y,
                                      int t) const = 0;

  /// Draw x_0. The parameter is passed for models whose initial law is the
  /// stationary law of the latent process; its derivatives are not modelled.
  virtual double sample_initial(const Vector& theta, Rng& rng) const = 0;
  virtual double sample_transition(const Vector& theta, double x_prev, Rng& rng) const = 0;
  virtual double sample_observation(const Vector& theta, double x_curr, Rng& rng) const = 0;

  virtual bool in_support(const Vector& theta) const = 0;
  virtual double log_prior(const Vector& theta) const = 0;
  virtual Vector grad_log_prior(const Vector& theta) const = 0;
  virtual Matrix hess_log_prior(const Vector& theta) const = 0;

  /// Non-null when the model supports the fully adapted filter.
  virtual const FullyAdapted* fully_adapted() const { return nullptr; }
};

/// Gradient of the complete-data log-density increment at time t,
/// grad log f(x_curr | x_prev) + grad log g(y_t | x_curr).
/// Throws DomainError naming the kernel when either part is non-finite.
Vector xi(const SsmModel& model, const Vector& theta, double x_prev, double x_curr, double y,
          int t);

/// Hessian of the same increment. Symmetric by construction.
Matrix zeta(const SsmModel& model, const Vector& theta, double x_prev, double x_curr, double y,
            int t);

/// Uniform (flat) prior over an open box; bounds may be infinite. Gradient and
/// Hessian are zero inside the support and log density is -inf outside.
struct BoxPrior {
  std::vector<double> lower;
  std::vector<double> upper;

  bool contains(const Vector& theta) const;
  double log_density(const Vector& theta) const;
};

/// A simulated trajectory: states x_0..x_T and observations y_1..y_T.
struct Trajectory {
  std::vector<double> states;
  std::vector<double> observations;
};

/// Forward simulation of the model for T >= 1 steps.
Trajectory simulate(const SsmModel& model, const Vector& theta, int T, Rng& rng);

/// Complete-data log density sum_t [log f(x_t|x_{t-1}) + log g(y_t|x_t)].
double joint_log_density(const SsmModel& model, const Vector& theta, const Trajectory& path);

}  // namespace pmcmc

#endif
