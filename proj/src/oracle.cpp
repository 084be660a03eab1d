#include "pmcmc/oracle.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace pmcmc {

namespace {

double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

void check_params(const LgssParams& params) {
  if (!(params.sigma_v > 0.0) || !(params.sigma_e > 0.0)) {
    throw std::invalid_argument("Kalman oracle needs positive noise scales");
  }
}

double checked_eval(const ScalarFunction& f, const Vector& point) {
  const double value = f(point);
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "finite difference: non-finite value at [" << point.transpose() << "]";
    throw DomainError(msg.str());
  }
  return value;
}

}  // namespace

KalmanState kalman_filter(const LgssParams& params, std::span<const double> observations) {
  check_params(params);
  const std::size_t T = observations.size();
  const double q = params.sigma_v * params.sigma_v;
  const double r = params.sigma_e * params.sigma_e;

  KalmanState s;
  s.predicted_mean.assign(T + 1, 0.0);
  s.predicted_var.assign(T + 1, 0.0);
  s.filtered_mean.assign(T + 1, 0.0);
  s.filtered_var.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double m_pred = params.phi * s.filtered_mean[t - 1];
    const double p_pred = params.phi * params.phi * s.filtered_var[t - 1] + q;
    const double y = observations[t - 1];
    const double innovation_var = p_pred + r;
    s.log_likelihood += log_normal_pdf(y, m_pred, innovation_var);
    const double gain = p_pred / innovation_var;
    s.predicted_mean[t] = m_pred;
    s.predicted_var[t] = p_pred;
    s.filtered_mean[t] = m_pred + gain * (y - m_pred);
    s.filtered_var[t] = p_pred * (1.0 - gain);
  }
  return s;
}

double kalman_loglik(const LgssParams& params, std::span<const double> observations) {
  return kalman_filter(params, observations).log_likelihood;
}

RtsResult rts_smoother(const LgssParams& params, std::span<const double> observations) {
  const KalmanState kf = kalman_filter(params, observations);
  const std::size_t T = observations.size();
  RtsResult s;
  s.mean = kf.filtered_mean;
  s.var = kf.filtered_var;
  s.lag_one_cov.assign(T + 1, 0.0);
  for (std::size_t t = T; t >= 1; --t) {
    const double gain = kf.filtered_var[t - 1] * params.phi / kf.predicted_var[t];
    s.mean[t - 1] = kf.filtered_mean[t - 1] + gain * (s.mean[t] - kf.predicted_mean[t]);
    s.var[t - 1] = kf.filtered_var[t - 1] + gain * gain * (s.var[t] - kf.predicted_var[t]);
    s.lag_one_cov[t] = gain * s.var[t];
  }
  return s;
}

Vector rts_exact_gradient(const LgssParams& params, std::span<const double> observations) {
  const RtsResult s = rts_smoother(params, observations);
  const double phi = params.phi;
  const double sv = params.sigma_v;
  const double q = sv * sv;
  double d_phi = 0.0;
  double d_sigma = 0.0;
  for (std::size_t t = 1; t < s.mean.size(); ++t) {
    const double e_cross = s.mean[t] * s.mean[t - 1] + s.lag_one_cov[t];
    const double e_prev_sq = s.mean[t - 1] * s.mean[t - 1] + s.var[t - 1];
    const double e_curr_sq = s.mean[t] * s.mean[t] + s.var[t];
    const double e_resid_sq = e_curr_sq - 2.0 * phi * e_cross + phi * phi * e_prev_sq;
    d_phi += (e_cross - phi * e_prev_sq) / q;
    d_sigma += -1.0 / sv + e_resid_sq / (q * sv);
  }
  Vector g(2);
  g << d_phi, d_sigma;
  return g;
}

Vector exact_gradient(const LgssModel& model, const Vector& theta,
                      std::span<const double> observations) {
  const Vector g = rts_exact_gradient(model.params(theta), observations);
  Vector out(model.dim());
  out[0] = g[0];
  switch (model.parameterization()) {
    case LgssParameterization::kPhiSigma:
      out[1] = g[1];
      break;
    case LgssParameterization::kPhiSigmaRescaled:
      out[1] = 10.0 * g[1];
      break;
    case LgssParameterization::kPhiOnly:
      break;
  }
  return out;
}

int GridAxis::locate(double x) const {
  if (!(x >= lower) || !(x < upper)) return -1;
  const int k = static_cast<int>((x - lower) / width());
  return k < cells ? k : cells - 1;
}

int GridPosterior::cell_index(const Vector& theta) const {
  int index = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const int k = axes[a].locate(theta[static_cast<Eigen::Index>(a)]);
    if (k < 0) return -1;
    index = index * axes[a].cells + k;
  }
  return index;
}

std::vector<double> GridPosterior::marginal(int axis) const {
  std::vector<double> out(axes.at(axis).cells, 0.0);
  int stride = 1;
  for (std::size_t a = axis + 1; a < axes.size(); ++a) stride *= axes[a].cells;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    out[(c / stride) % axes[axis].cells] += weights[c];
  }
  return out;
}

GridPosterior grid_posterior(const ScalarFunction& log_likelihood, const ScalarFunction& log_prior,
                             std::vector<GridAxis> axes, int refine) {
  if (axes.empty() || static_cast<int>(axes.size()) > kMaxParams) {
    throw std::invalid_argument("grid_posterior: bad number of axes");
  }
  if (refine < 1) throw std::invalid_argument("grid_posterior: refine must be >= 1");
  const int d = static_cast<int>(axes.size());

  // Enumerate refined points: each axis has cells * refine sub-cells.
  std::vector<int> sub_counts(d);
  long total = 1;
  for (int a = 0; a < d; ++a) {
    if (axes[a].cells < 1 || !(axes[a].upper > axes[a].lower)) {
      throw std::invalid_argument("grid_posterior: bad axis");
    }
    sub_counts[a] = axes[a].cells * refine;
    total *= sub_counts[a];
  }

  long cell_total = 1;
  for (const GridAxis& axis : axes) cell_total *= axis.cells;
  std::vector<double> log_points(total);
  std::vector<int> point_cell(total);
  std::vector<Vector> points(total);
  std::vector<int> idx(d, 0);
  for (long p = 0; p < total; ++p) {
    long rem = p;
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % sub_counts[a]);
      rem /= sub_counts[a];
    }
    Vector theta(d);
    int cell = 0;
    for (int a = 0; a < d; ++a) {
      const double sub_width = axes[a].width() / refine;
      theta[a] = axes[a].lower + (idx[a] + 0.5) * sub_width;
      cell = cell * axes[a].cells + idx[a] / refine;
    }
    const double lp = log_prior(theta);
    log_points[p] = std::isfinite(lp) ? lp + log_likelihood(theta)
                                      : -std::numeric_limits<double>::infinity();
    if (std::isnan(log_points[p])) log_points[p] = -std::numeric_limits<double>::infinity();
    point_cell[p] = cell;
    points[p] = theta;
  }

  double max_log = -std::numeric_limits<double>::infinity();
  for (double v : log_points) max_log = std::max(max_log, v);
  if (!std::isfinite(max_log)) throw std::domain_error("grid_posterior: all cells have zero mass");

  GridPosterior out;
  out.axes = std::move(axes);
  out.weights.assign(cell_total, 0.0);
  Vector first = Vector::Zero(d);
  Vector second = Vector::Zero(d);
  double sum = 0.0;
  for (long p = 0; p < total; ++p) {
    const double w = std::exp(log_points[p] - max_log);
    out.weights[point_cell[p]] += w;
    first += w * points[p];
    second += w * points[p].cwiseProduct(points[p]);
    sum += w;
  }
  for (double& w : out.weights) w /= sum;
  out.mean = first / sum;
  out.sd = (second / sum - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0).cwiseSqrt();
  return out;
}

Vector default_fd_step(const Vector& theta) {
  return 1e-5 * (1.0 + theta.array().abs()).matrix();
}

Vector fd_gradient(const ScalarFunction& f, const Vector& theta, std::optional<Vector> step) {
  const Vector h = step ? *step : default_fd_step(theta);
  Vector g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vector plus = theta;
    Vector minus = theta;
    plus[j] += h[j];
    minus[j] -= h[j];
    g[j] = (checked_eval(f, plus) - checked_eval(f, minus)) / (2.0 * h[j]);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian(const VectorFunction& f, const Vector& theta,
                            std::optional<Vector> step) {
  const Vector h = step ? *step : default_fd_step(theta);
  Eigen::MatrixXd jac;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vector plus = theta;
    Vector minus = theta;
    plus[j] += h[j];
    minus[j] -= h[j];
    const Vector fp = f(plus);
    const Vector fm = f(minus);
    if (!fp.allFinite() || !fm.allFinite()) {
      std::ostringstream msg;
      msg << "finite difference: non-finite value at offset " << h[j] << " along axis " << j;
      throw DomainError(msg.str());
    }
    if (j == 0) jac.resize(fp.size(), theta.size());
    jac.col(j) = (fp - fm) / (2.0 * h[j]);
  }
  return jac;
}

Matrix fd_hessian(const ScalarFunction& f, const Vector& theta, std::optional<Vector> step) {
  const Vector h = step ? *step : Vector(1e-4 * (1.0 + theta.array().abs()).matrix());
  const Eigen::Index d = theta.size();
  Matrix H(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = j; k < d; ++k) {
      auto at = [&](double sj, double sk) {
        Vector p = theta;
        p[j] += sj * h[j];
        p[k] += sk * h[k];
        return checked_eval(f, p);
      };
      H(j, k) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[j] * h[k]);
      H(k, j) = H(j, k);
    }
  }
  return H;
}

}  // namespace pmcmc
