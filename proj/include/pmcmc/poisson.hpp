#ifndef PMCMC_POISSON_HPP
#define PMCMC_POISSON_HPP

#include "pmcmc/model.hpp"

#include <string>
#include <vector>

namespace pmcmc {

/// Count model with a log-AR(1) latent intensity:
///   x_t = phi x_{t-1} + sigma v_t,   y_t ~ Poisson(beta exp(x_t)),
/// theta = (phi, sigma, beta), flat prior on |phi| < 1, sigma > 0, beta > 0.
/// x_0 is drawn from the stationary law N(0, sigma^2 / (1 - phi^2)).
/// There is no fully adapted record; only the bootstrap filter applies.
class PoissonCountModel final : public SsmModel {
 public:
  PoissonCountModel();

  int dim() const override { return 3; }
  std::vector<std::string> param_names() const override { return {"phi", "sigma", "beta"}; }

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

  /// log(y!) through a table for small counts and lgamma beyond it.
  double log_factorial(double y) const;

 private:
  std::vector<double> log_factorial_table_;
};

PoissonCountModel make_poisson_model();

/// Annual counts keyed by year, with non-fatal findings.
struct EarthquakeData {
  std::vector<int> years;
  std::vector<double> counts;
  std::vector<std::string> warnings;
};

inline constexpr int kEarthquakeFirstYear = 1900;
inline constexpr int kEarthquakeLastYear = 2014;

/// Reads a `year,count` CSV. Years must be contiguous and increasing; counts
/// must be non-negative integers. A row count other than 115 (1900-2014) is
/// reported as a warning since revised catalogues exist.
/// Throws ParseError (with line number) on malformed input.
EarthquakeData load_earthquake_data(const std::string& path);

}  // namespace pmcmc

#endif
