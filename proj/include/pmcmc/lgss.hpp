#ifndef PMCMC_LGSS_HPP
#define PMCMC_LGSS_HPP

#include "pmcmc/model.hpp"

namespace pmcmc {

/// Natural parameters of the scalar linear Gaussian model
///   x_t = phi x_{t-1} + sigma_v v_t,   y_t = x_t + sigma_e e_t,   x_0 = 0.
struct LgssParams {
  double phi = 0.5;
  double sigma_v = 1.0;
  double sigma_e = 0.1;
};

/// How the inferred parameter vector maps onto LgssParams. sigma_e is always
/// a construction constant.
enum class LgssParameterization {
  kPhiSigma,          ///< theta = (phi, sigma_v)
  kPhiSigmaRescaled,  ///< theta = (phi, sigma_v / 10)
  kPhiOnly,           ///< theta = (phi), sigma_v fixed
};

/// Linear Gaussian model with analytic derivatives and the fully adapted
/// quantities. The initial state is the known point x_0 = 0. Prior: flat on
/// |phi| < 1 and sigma_v > 0 (an unbounded half-line).
class LgssModel final : public SsmModel, public FullyAdapted {
 public:
  LgssModel(double sigma_e, LgssParameterization parameterization, double fixed_sigma_v = 1.0);

  LgssParams params(const Vector& theta) const;
  Vector theta(const LgssParams& params) const;
  LgssParameterization parameterization() const noexcept { return parameterization_; }
  double sigma_e() const noexcept { return sigma_e_; }

  int dim() const override;
  std::vector<std::string> param_names() const override;

  double log_transition(const Vector& theta, double x_prev, double x_curr, int t) const override;
  double log_observation(const Vector& theta, double x_curr, double y, int t) const override;
  Vector grad_log_transition(const Vector& theta, double x_prev, double x_curr,
                             int t) const override;
  Vector grad_log_observation(const Vector& theta, double x_curr, double y,
                              int t) const override;
  Matrix hess_log_transition(const Vector& theta, double x_prev, double x_curr,
                             int t) const override;
  Matrix hess_log_observation(const Vector& theta, double x_curr, double y,
                              int t) const override;

  double sample_initial(const Vector& theta, Rng& rng) const override;
  double sample_transition(const Vector& theta, double x_prev, Rng& rng) const override;
  double sample_observation(const Vector& theta, double x_curr, Rng& rng) const override;

  bool in_support(const Vector& theta) const override;
  double log_prior(const Vector& theta) const override;
  Vector grad_log_prior(const Vector& theta) const override;
  Matrix hess_log_prior(const Vector& theta) const override;

  const FullyAdapted* fully_adapted() const override { return this; }

  double sample_optimal_proposal(const Vector& theta, double x_prev, double y,
                                 Rng& rng) const override;
  double log_optimal_proposal(const Vector& theta, double x_prev, double x_curr,
                              double y) const override;
  double log_predictive(const Vector& theta, double x_curr, double y_next) const override;

 private:
  double sigma_v(const Vector& theta) const;
  /// d sigma_v / d theta_sigma (10 for the rescaled model).
  double sigma_scale() const;

  double sigma_e_;
  LgssParameterization parameterization_;
  double fixed_sigma_v_;
};

/// The (phi, sigma_v) model, or the (phi, sigma_v / 10) model when `rescale`.
LgssModel make_lgss(double sigma_e, bool rescale);

/// Single-parameter model over phi with sigma_v held at `sigma_v`.
LgssModel make_lgss_phi(double sigma_v, double sigma_e);

/// Simulate T steps from x_0 = 0.
Trajectory simulate_lgss(const LgssModel& model, const Vector& theta, int T, Rng& rng);

}  // namespace pmcmc

#endif
