#include "pmcmc/lgss.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace pmcmc {

namespace {

constexpr double kRescale = 10.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

}  // namespace

LgssModel::LgssModel(double sigma_e, LgssParameterization parameterization, double fixed_sigma_v)
    : sigma_e_(sigma_e), parameterization_(parameterization), fixed_sigma_v_(fixed_sigma_v) {
  if (!(sigma_e > 0.0)) throw std::invalid_argument("LgssModel: sigma_e must be positive");
  if (!(fixed_sigma_v > 0.0)) throw std::invalid_argument("LgssModel: sigma_v must be positive");
}

int LgssModel::dim() const { return parameterization_ == LgssParameterization::kPhiOnly ? 1 : 2; }

std::vector<std::string> LgssModel::param_names() const {
  switch (parameterization_) {
    case LgssParameterization::kPhiSigma:
      return {"phi", "sigma_v"};
    case LgssParameterization::kPhiSigmaRescaled:
      return {"phi", "sigma_v_over_10"};
    case LgssParameterization::kPhiOnly:
      return {"phi"};
  }
  return {};
}

double LgssModel::sigma_scale() const {
  return parameterization_ == LgssParameterization::kPhiSigmaRescaled ? kRescale : 1.0;
}

double LgssModel::sigma_v(const Vector& theta) const {
  if (parameterization_ == LgssParameterization::kPhiOnly) return fixed_sigma_v_;
  return sigma_scale() * theta[1];
}

LgssParams LgssModel::params(const Vector& theta) const {
  return {theta[0], sigma_v(theta), sigma_e_};
}

Vector LgssModel::theta(const LgssParams& params) const {
  Vector out(dim());
  out[0] = params.phi;
  if (dim() == 2) out[1] = params.sigma_v / sigma_scale();
  return out;
}

double LgssModel::log_transition(const Vector& theta, double x_prev, double x_curr, int) const {
  return log_normal(x_curr, theta[0] * x_prev, sigma_v(theta));
}

double LgssModel::log_observation(const Vector&, double x_curr, double y, int) const {
  return log_normal(y, x_curr, sigma_e_);
}

Vector LgssModel::grad_log_transition(const Vector& theta, double x_prev, double x_curr,
                                      int) const {
  const double s = sigma_v(theta);
  const double r = x_curr - theta[0] * x_prev;
  Vector g(dim());
  g[0] = r * x_prev / (s * s);
  if (dim() == 2) g[1] = sigma_scale() * (-1.0 / s + r * r / (s * s * s));
  return g;
}

Vector LgssModel::grad_log_observation(const Vector&, double, double, int) const {
  return Vector::Zero(dim());
}

Matrix LgssModel::hess_log_transition(const Vector& theta, double x_prev, double x_curr,
                                      int) const {
  const double s = sigma_v(theta);
  const double s2 = s * s;
  const double r = x_curr - theta[0] * x_prev;
  Matrix h(dim(), dim());
  h(0, 0) = -x_prev * x_prev / s2;
  if (dim() == 2) {
    const double c = sigma_scale();
    h(0, 1) = h(1, 0) = c * (-2.0 * r * x_prev / (s2 * s));
    h(1, 1) = c * c * (1.0 / s2 - 3.0 * r * r / (s2 * s2));
  }
  return h;
}

Matrix LgssModel::hess_log_observation(const Vector&, double, double, int) const {
  return Matrix::Zero(dim(), dim());
}

double LgssModel::sample_initial(const Vector&, Rng&) const { return 0.0; }

double LgssModel::sample_transition(const Vector& theta, double x_prev, Rng& rng) const {
  return rng.normal(theta[0] * x_prev, sigma_v(theta));
}

double LgssModel::sample_observation(const Vector&, double x_curr, Rng& rng) const {
  return rng.normal(x_curr, sigma_e_);
}

bool LgssModel::in_support(const Vector& theta) const {
  if (theta.size() != dim() || !theta.allFinite()) return false;
  if (!(std::abs(theta[0]) < 1.0)) return false;
  return dim() == 1 || theta[1] > 0.0;
}

double LgssModel::log_prior(const Vector& theta) const {
  return in_support(theta) ? 0.0 : -std::numeric_limits<double>::infinity();
}

Vector LgssModel::grad_log_prior(const Vector&) const { return Vector::Zero(dim()); }

Matrix LgssModel::hess_log_prior(const Vector&) const { return Matrix::Zero(dim(), dim()); }

double LgssModel::sample_optimal_proposal(const Vector& theta, double x_prev, double y,
                                          Rng& rng) const {
  const double s = sigma_v(theta);
  const double precision = 1.0 / (s * s) + 1.0 / (sigma_e_ * sigma_e_);
  const double mean = (theta[0] * x_prev / (s * s) + y / (sigma_e_ * sigma_e_)) / precision;
  return rng.normal(mean, 1.0 / std::sqrt(precision));
}

double LgssModel::log_optimal_proposal(const Vector& theta, double x_prev, double x_curr,
                                       double y) const {
  const double s = sigma_v(theta);
  const double precision = 1.0 / (s * s) + 1.0 / (sigma_e_ * sigma_e_);
  const double mean = (theta[0] * x_prev / (s * s) + y / (sigma_e_ * sigma_e_)) / precision;
  return log_normal(x_curr, mean, 1.0 / std::sqrt(precision));
}

double LgssModel::log_predictive(const Vector& theta, double x_curr, double y_next) const {
  const double s = sigma_v(theta);
  return log_normal(y_next, theta[0] * x_curr, std::sqrt(s * s + sigma_e_ * sigma_e_));
}

LgssModel make_lgss(double sigma_e, bool rescale) {
  return LgssModel(sigma_e, rescale ? LgssParameterization::kPhiSigmaRescaled
                                    : LgssParameterization::kPhiSigma);
}

LgssModel make_lgss_phi(double sigma_v, double sigma_e) {
  return LgssModel(sigma_e, LgssParameterization::kPhiOnly, sigma_v);
}

Trajectory simulate_lgss(const LgssModel& model, const Vector& theta, int T, Rng& rng) {
  return simulate(model, theta, T, rng);
}

}  // namespace pmcmc
