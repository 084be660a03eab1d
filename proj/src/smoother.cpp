#include "pmcmc/smoother.hpp"

#include <cmath>
#include <limits>

namespace pmcmc {

namespace {

struct SmoothedSums {
  Vector score;   // sum_t sum_i w xi
  Matrix second;  // sum_t sum_i w zeta
  Matrix outer;   // sum_t sum_i w eta
};

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_lag(int lag, int T) {
  if (lag < 1 || lag > T) {
    throw std::invalid_argument("lag must satisfy 1 <= lag <= T (got " + std::to_string(lag) +
                                ", T=" + std::to_string(T) + ")");
  }
}

// One pass over the genealogy. For each t the normalized weights at kappa_t
// are pushed back along the ancestry to time t, which yields the weight mass
// carried by each distinct particle at t. Times sharing kappa_t = T share a
// single backward sweep.
SmoothedSums smoothed_sums(const SsmModel& model, const Vector& theta, const FilterOutput& out,
                           int lag, bool with_hessian) {
  const int T = out.steps();
  const int N = out.size();
  const int d = model.dim();
  check_lag(lag, T);

  // Row t*N + i holds the quantity for particle i at time t (rows of t = 0 unused).
  RowMatrixXd xi_all((T + 1) * N, d);
  for (int t = 1; t <= T; ++t) {
    const double y = out.observation(t);
    for (int i = 0; i < N; ++i) {
      const double parent = out.particles(t - 1, out.ancestors(t, i));
      xi_all.row(t * N + i) = xi(model, theta, parent, out.particles(t, i), y, t).transpose();
    }
  }

  RowMatrixXd alpha;
  if (with_hessian) {
    alpha.resize((T + 1) * N, d);
    alpha.topRows(N).setZero();
    for (int t = 1; t <= T; ++t) {
      for (int i = 0; i < N; ++i) {
        const double* prev = &alpha((t - 1) * N + out.ancestors(t, i), 0);
        const double* x = &xi_all(t * N + i, 0);
        double* a = &alpha(t * N + i, 0);
        for (int j = 0; j < d; ++j) a[j] = prev[j] + x[j];
      }
    }
  }

  std::vector<double> score(d, 0.0);
  std::vector<double> second(d * d, 0.0);
  std::vector<double> outer(d * d, 0.0);

  // Weight mass is kept sparse: after a few steps back the genealogy has
  // coalesced onto a handful of ancestors, so only those are visited.
  std::vector<double> normalized(N);
  std::vector<int> index, next_index;
  std::vector<double> mass, next_mass;
  std::vector<int> slot(N, -1);
  index.reserve(N);
  mass.reserve(N);
  next_index.reserve(N);
  next_mass.reserve(N);

  auto accumulate = [&](int t) {
    const double y = out.observation(t);
    for (std::size_t k = 0; k < index.size(); ++k) {
      const int i = index[k];
      const double wi = mass[k];
      const double* x = &xi_all(t * N + i, 0);
      for (int j = 0; j < d; ++j) score[j] += wi * x[j];
      if (!with_hessian) continue;
      const int a = out.ancestors(t, i);
      const double* al = &alpha((t - 1) * N + a, 0);
      const Matrix z = zeta(model, theta, out.particles(t - 1, a), out.particles(t, i), y, t);
      for (int j = 0; j < d; ++j) {
        for (int l = 0; l < d; ++l) {
          second[j * d + l] += wi * z(j, l);
          outer[j * d + l] += wi * (x[j] * x[l] + x[j] * al[l] + al[j] * x[l]);
        }
      }
    }
  };
  auto push_back = [&](int t) {
    next_index.clear();
    next_mass.clear();
    for (std::size_t k = 0; k < index.size(); ++k) {
      const int a = out.ancestors(t, index[k]);
      if (slot[a] < 0) {
        slot[a] = static_cast<int>(next_index.size());
        next_index.push_back(a);
        next_mass.push_back(mass[k]);
      } else {
        next_mass[slot[a]] += mass[k];
      }
    }
    for (int a : next_index) slot[a] = -1;
    index.swap(next_index);
    mass.swap(next_mass);
  };
  auto load_weights = [&](int kappa) {
    normalize_log_weights(std::span<const double>(&out.log_weights(kappa, 0), N), normalized);
    index.clear();
    mass.clear();
    for (int i = 0; i < N; ++i) {
      if (normalized[i] != 0.0) {
        index.push_back(i);
        mass.push_back(normalized[i]);
      }
    }
  };

  // Tail block: kappa_t = T for t >= T - lag.
  const int tail_start = std::max(1, T - lag);
  load_weights(T);
  for (int t = T; t >= tail_start; --t) {
    accumulate(t);
    if (t > tail_start) push_back(t);
  }
  // Remaining times: kappa_t = t + lag.
  for (int t = tail_start - 1; t >= 1; --t) {
    load_weights(t + lag);
    for (int s = t + lag; s > t; --s) push_back(s);
    accumulate(t);
  }

  SmoothedSums sums{Vector::Zero(d), Matrix::Zero(d, d), Matrix::Zero(d, d)};
  for (int j = 0; j < d; ++j) {
    sums.score[j] = score[j];
    for (int k = 0; k < d; ++k) {
      sums.second(j, k) = second[j * d + k];
      sums.outer(j, k) = outer[j * d + k];
    }
  }
  if (with_hessian) {
    sums.second = symmetrize(sums.second);
    sums.outer = symmetrize(sums.outer);
  }
  return sums;
}

Matrix louis(const SsmModel& model, const Vector& theta, const SmoothedSums& sums,
             const Vector& gradient) {
  return symmetrize(-model.hess_log_prior(theta) + gradient * gradient.transpose() - sums.second -
                    sums.outer);
}

}  // namespace

int ancestor_index(const FilterOutput& output, int i, int from_t, int to_t) {
  if (to_t > from_t || to_t < 0 || from_t > output.steps()) {
    throw std::invalid_argument("ancestor_index: need 0 <= to_t <= from_t <= T");
  }
  int idx = i;
  for (int s = from_t; s > to_t; --s) idx = output.ancestors(s, idx);
  return idx;
}

StatePair trace_ancestor(const FilterOutput& output, int i, int from_t, int to_t) {
  if (to_t < 1) throw std::invalid_argument("trace_ancestor: to_t must be at least 1");
  const int idx = ancestor_index(output, i, from_t, to_t);
  return {output.particles(to_t, idx), output.particles(to_t - 1, output.ancestors(to_t, idx))};
}

Vector estimate_gradient(const SsmModel& model, const Vector& theta, const FilterOutput& output,
                         int lag) {
  return model.grad_log_prior(theta) + smoothed_sums(model, theta, output, lag, false).score;
}

ParticleVectors estimate_alpha(const SsmModel& model, const Vector& theta,
                               const FilterOutput& output) {
  const int T = output.steps();
  const int N = output.size();
  ParticleVectors alpha(T, N, model.dim());
  for (int t = 1; t <= T; ++t) {
    const double y = output.observation(t);
    for (int i = 0; i < N; ++i) {
      const int a = output.ancestors(t, i);
      const Vector x = xi(model, theta, output.particles(t - 1, a), output.particles(t, i), y, t);
      alpha.at(t, i) = alpha.at(t - 1, a) + x.transpose();
    }
  }
  return alpha;
}

NegHessianEstimate estimate_neg_hessian(const SsmModel& model, const Vector& theta,
                                        const FilterOutput& output, int lag,
                                        const Vector& gradient) {
  const SmoothedSums sums = smoothed_sums(model, theta, output, lag, true);
  NegHessianEstimate est;
  est.value = louis(model, theta, sums, gradient);
  est.was_pd = is_positive_definite(est.value);
  return est;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigen-decomposition failed");
  return solver.eigenvalues()[0];
}

bool is_positive_definite(const Matrix& m) {
  if (!m.allFinite()) return false;
  return min_eigenvalue(m) > 0.0;
}

Matrix regularize_standard(const Matrix& raw) {
  const Matrix sym = symmetrize(raw);
  const double lambda_min = min_eigenvalue(sym);
  const Eigen::Index d = sym.rows();
  if (lambda_min > 0.0) return sym;
  if (lambda_min < 0.0) return sym + (-2.0 * lambda_min) * Matrix::Identity(d, d);
  double jitter = 1e-8 * std::abs(sym.trace()) / static_cast<double>(d);
  if (!(jitter > 0.0)) jitter = 1e-8;
  return sym + jitter * Matrix::Identity(d, d);
}

PosteriorInfo posterior_info_from_output(const SsmModel& model, const Vector& theta,
                                         const FilterOutput& output, int lag,
                                         DerivativeOrder order, Regularization regularization) {
  const int d = model.dim();
  PosteriorInfo info;
  info.order = order;
  info.log_likelihood = output.log_likelihood;
  info.gradient = Vector::Zero(d);
  info.neg_hessian = Matrix::Identity(d, d);
  info.raw_neg_hessian = Matrix::Identity(d, d);
  info.valid = std::isfinite(output.log_likelihood);
  if (!info.valid || order == DerivativeOrder::kNone) return info;

  try {
    const SmoothedSums sums =
        smoothed_sums(model, theta, output, lag, order == DerivativeOrder::kHessian);
    info.gradient = model.grad_log_prior(theta) + sums.score;
    if (order == DerivativeOrder::kHessian) {
      info.raw_neg_hessian = louis(model, theta, sums, info.gradient);
      info.was_pd = is_positive_definite(info.raw_neg_hessian);
      info.neg_hessian = regularization == Regularization::kStandard
                             ? regularize_standard(info.raw_neg_hessian)
                             : info.raw_neg_hessian;
    }
    if (!info.gradient.allFinite() || !info.neg_hessian.allFinite()) {
      throw DomainError("non-finite derivative estimate");
    }
  } catch (const DomainError&) {
    info.valid = false;
    info.log_likelihood = -std::numeric_limits<double>::infinity();
  }
  return info;
}

PosteriorInfo compute_posterior_info(const SsmModel& model, const Vector& theta,
                                     std::span<const double> observations,
                                     const FilterConfig& filter, int lag, DerivativeOrder order,
                                     Regularization regularization, Rng& rng) {
  try {
    const FilterOutput output = run_filter(model, theta, observations, filter, rng);
    return posterior_info_from_output(model, theta, output, lag, order, regularization);
  } catch (const FilterCollapse&) {
    PosteriorInfo info;
    info.order = order;
    info.gradient = Vector::Zero(model.dim());
    info.neg_hessian = Matrix::Identity(model.dim(), model.dim());
    info.raw_neg_hessian = info.neg_hessian;
    return info;
  }
}

}  // namespace pmcmc
