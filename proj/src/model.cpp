#include "pmcmc/model.hpp"

#include <cmath>
#include <limits>

namespace pmcmc {

namespace {

template <typename M>
void require_finite(const M& value, const char* kernel, int t) {
  if (!value.allFinite()) {
    throw DomainError(std::string("non-finite derivative of the ") + kernel +
                      " kernel at t=" + std::to_string(t));
  }
}

}  // namespace

Vector xi(const SsmModel& model, const Vector& theta, double x_prev, double x_curr, double y,
          int t) {
  Vector trans = model.grad_log_transition(theta, x_prev, x_curr, t);
  require_finite(trans, "transition", t);
  Vector obs = model.grad_log_observation(theta, x_curr, y, t);
  require_finite(obs, "observation", t);
  return trans + obs;
}

Matrix zeta(const SsmModel& model, const Vector& theta, double x_prev, double x_curr, double y,
            int t) {
  Matrix trans = model.hess_log_transition(theta, x_prev, x_curr, t);
  require_finite(trans, "transition", t);
  Matrix obs = model.hess_log_observation(theta, x_curr, y, t);
  require_finite(obs, "observation", t);
  return trans + obs;
}

bool BoxPrior::contains(const Vector& theta) const {
  if (theta.size() != static_cast<Eigen::Index>(lower.size())) return false;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (!(theta[j] > lower[j] && theta[j] < upper[j])) return false;
  }
  return true;
}

double BoxPrior::log_density(const Vector& theta) const {
  return contains(theta) ? 0.0 : -std::numeric_limits<double>::infinity();
}

Trajectory simulate(const SsmModel& model, const Vector& theta, int T, Rng& rng) {
  if (T < 1) throw std::invalid_argument("simulate: T must be at least 1");
  Trajectory path;
  path.states.resize(T + 1);
  path.observations.resize(T);
  path.states[0] = model.sample_initial(theta, rng);
  for (int t = 1; t <= T; ++t) {
    path.states[t] = model.sample_transition(theta, path.states[t - 1], rng);
    path.observations[t - 1] = model.sample_observation(theta, path.states[t], rng);
  }
  return path;
}

double joint_log_density(const SsmModel& model, const Vector& theta, const Trajectory& path) {
  double total = 0.0;
  const int T = static_cast<int>(path.observations.size());
  for (int t = 1; t <= T; ++t) {
    total += model.log_transition(theta, path.states[t - 1], path.states[t], t);
    total += model.log_observation(theta, path.states[t], path.observations[t - 1], t);
  }
  return total;
}

}  // namespace pmcmc
