#ifndef PMCMC_ORACLE_HPP
#define PMCMC_ORACLE_HPP

#include "pmcmc/lgss.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace pmcmc {

/// Kalman filter moments for the scalar linear Gaussian model with x_0 = 0
/// known. Index t = 0..T; entry 0 describes x_0 (mean 0, variance 0).
struct KalmanState {
  std::vector<double> predicted_mean;
  std::vector<double> predicted_var;
  std::vector<double> filtered_mean;
  std::vector<double> filtered_var;
  double log_likelihood = 0.0;
};

KalmanState kalman_filter(const LgssParams& params, std::span<const double> observations);

/// Exact log p(y_{1:T}).
double kalman_loglik(const LgssParams& params, std::span<const double> observations);

/// Rauch-Tung-Striebel smoothed moments, t = 0..T. `lag_one_cov[t]` is
/// Cov(x_t, x_{t-1} | y_{1:T}) for t >= 1 (entry 0 is unused and zero).
struct RtsResult {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> lag_one_cov;
};

RtsResult rts_smoother(const LgssParams& params, std::span<const double> observations);

/// Exact score of log p(y_{1:T}) with respect to (phi, sigma_v), from smoothed
/// moments plugged into Fisher's identity.
Vector rts_exact_gradient(const LgssParams& params, std::span<const double> observations);

/// Exact log-likelihood score in the model's own parameterization.
Vector exact_gradient(const LgssModel& model, const Vector& theta,
                      std::span<const double> observations);

/// Cell-centred axis of `cells` equal cells over [lower, upper].
struct GridAxis {
  double lower = 0.0;
  double upper = 1.0;
  int cells = 1;

  double width() const { return (upper - lower) / cells; }
  double center(int k) const { return lower + (k + 0.5) * width(); }
  /// Cell containing x, or -1 outside [lower, upper).
  int locate(double x) const;
};

/// Normalized posterior mass per grid cell. Cells are flattened row-major
/// with the last axis varying fastest.
struct GridPosterior {
  std::vector<GridAxis> axes;
  std::vector<double> weights;
  /// Posterior mean and standard deviation evaluated on the refined points.
  Vector mean;
  Vector sd;

  /// Flat index of the cell containing theta, or -1 outside the grid.
  int cell_index(const Vector& theta) const;
  /// Marginal cell masses along one axis.
  std::vector<double> marginal(int axis) const;
};

using ScalarFunction = std::function<double(const Vector&)>;
using VectorFunction = std::function<Vector(const Vector&)>;

/// Cell masses proportional to exp(log_likelihood + log_prior), each cell
/// integrated with a `refine`^d midpoint rule. Points outside the prior support
/// contribute nothing. Throws std::domain_error when every cell has zero mass.
GridPosterior grid_posterior(const ScalarFunction& log_likelihood, const ScalarFunction& log_prior,
                             std::vector<GridAxis> axes, int refine = 1);

/// h_j = 1e-5 (1 + |theta_j|).
Vector default_fd_step(const Vector& theta);

/// Central-difference gradient. Throws DomainError naming the offset when f
/// is non-finite there.
Vector fd_gradient(const ScalarFunction& f, const Vector& theta,
                   std::optional<Vector> step = std::nullopt);

/// Central-difference Jacobian, rows indexing outputs.
Eigen::MatrixXd fd_jacobian(const VectorFunction& f, const Vector& theta,
                            std::optional<Vector> step = std::nullopt);

/// Nested central differences
///   H_jk = [f(++) - f(+-) - f(-+) + f(--)] / (4 h_j h_k),
/// symmetrized. The default step is 1e-4 (1 + |theta_j|): second differences
/// lose twice the digits, so the gradient step would be roundoff-dominated.
Matrix fd_hessian(const ScalarFunction& f, const Vector& theta,
                  std::optional<Vector> step = std::nullopt);

}  // namespace pmcmc

#endif
