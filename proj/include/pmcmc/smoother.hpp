#ifndef PMCMC_SMOOTHER_HPP
#define PMCMC_SMOOTHER_HPP

#include "pmcmc/filter.hpp"

#include <limits>

namespace pmcmc {

/// Which derivative estimates to derive from a filter run.
enum class DerivativeOrder { kNone, kGradient, kHessian };

/// What to do with a negative-Hessian estimate that is not positive definite.
enum class Regularization {
  kStandard,  ///< shift the spectrum (see regularize_standard)
  kNone,      ///< keep the raw estimate; the caller decides (hybrid policy)
};

/// Likelihood, gradient and negative-Hessian estimates of the log-posterior
/// obtained from one filter run. `valid` is false when the filter collapsed or
/// a derivative evaluated to a non-finite value; log_likelihood is then -inf
/// and the derivative fields must not be used.
struct PosteriorInfo {
  double log_likelihood = -std::numeric_limits<double>::infinity();
  Vector gradient;
  Matrix neg_hessian;
  Matrix raw_neg_hessian;
  bool was_pd = false;
  bool valid = false;
  DerivativeOrder order = DerivativeOrder::kNone;
};

/// Genealogical states of a particle: x~_{from,to} and x~_{from,to-1}.
struct StatePair {
  double current = 0.0;
  double previous = 0.0;
};

/// Fixed-lag smoothing horizon kappa_t = min(t + lag, T).
inline int smoothing_horizon(int t, int lag, int T) { return t + lag < T ? t + lag : T; }

/// Index at time `to_t` of the ancestor of particle i at time `from_t`.
int ancestor_index(const FilterOutput& output, int i, int from_t, int to_t);

/// Walks the ancestry of particle i at `from_t` back to `to_t` (>= 1) and
/// returns the ancestor there together with its parent at to_t - 1.
StatePair trace_ancestor(const FilterOutput& output, int i, int from_t, int to_t);

/// Per-particle vectors over the whole particle system, (T+1) x N x d.
class ParticleVectors {
 public:
  ParticleVectors(int steps, int particles, int dim)
      : particles_(particles), data_(Eigen::MatrixXd::Zero((steps + 1) * particles, dim)) {}

  auto at(int t, int i) { return data_.row(t * particles_ + i); }
  auto at(int t, int i) const { return data_.row(t * particles_ + i); }

 private:
  int particles_;
  Eigen::MatrixXd data_;
};

/// Fixed-lag estimate of the log-posterior gradient:
///   grad log p(theta) + sum_t sum_i wbar_{kappa_t}^i xi(x~_{kappa_t,t}^i, x~_{kappa_t,t-1}^i),
/// with wbar the normalized weights at kappa_t.
Vector estimate_gradient(const SsmModel& model, const Vector& theta, const FilterOutput& output,
                         int lag);

/// Filter recursion alpha(x_t^i) = alpha(x_{t-1}^{a_t^i}) + xi(x_t^i, x_{t-1}^{a_t^i}),
/// alpha = 0 at t = 0.
ParticleVectors estimate_alpha(const SsmModel& model, const Vector& theta,
                               const FilterOutput& output);

struct NegHessianEstimate {
  Matrix value;
  bool was_pd = false;
};

/// Louis-identity estimate of the negative Hessian of the log-posterior,
///   -hess log p(theta) + g g^T - sum w zeta - sum w [xi xi^T + xi alpha^T + alpha xi^T],
/// where g is the matching estimate_gradient output (prior term included) and
/// alpha is evaluated at the parent of the traced particle. Not regularized.
NegHessianEstimate estimate_neg_hessian(const SsmModel& model, const Vector& theta,
                                        const FilterOutput& output, int lag,
                                        const Vector& gradient);

/// (M + M^T) / 2.
Matrix symmetrize(const Matrix& m);

/// Smallest eigenvalue of the symmetrized matrix.
double min_eigenvalue(const Matrix& m);

bool is_positive_definite(const Matrix& m);

/// Adds max(0, -2 lambda_min) I to the symmetrized input, so a negative
/// smallest eigenvalue -l becomes +l. A smallest eigenvalue of exactly zero
/// receives a 1e-8 * |trace| / d jitter instead. PD input is returned as is.
Matrix regularize_standard(const Matrix& raw);

/// Runs the filter once and derives every requested estimate from that single
/// particle system. Filter collapse and non-finite derivatives yield an
/// invalid info rather than an exception.
PosteriorInfo compute_posterior_info(const SsmModel& model, const Vector& theta,
                                     std::span<const double> observations,
                                     const FilterConfig& filter, int lag, DerivativeOrder order,
                                     Regularization regularization, Rng& rng);

/// Same, computed from an existing filter run.
PosteriorInfo posterior_info_from_output(const SsmModel& model, const Vector& theta,
                                         const FilterOutput& output, int lag,
                                         DerivativeOrder order, Regularization regularization);

}  // namespace pmcmc

#endif
