#include "pmcmc/pmh.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace pmcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum Stream : std::uint64_t { kFilterStream = 0, kProposalStream = 1, kAcceptStream = 2 };

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("negative Hessian estimate is not positive definite");
  }
  return llt.solve(b);
}

}  // namespace

ProposalSpec ProposalSpec::isotropic(ProposalKind kind, double gamma, int dim) {
  ProposalSpec spec;
  spec.kind = kind;
  spec.step = gamma * gamma * Matrix::Identity(dim, dim);
  return spec;
}

ProposalSpec ProposalSpec::diagonal(ProposalKind kind, const Vector& gammas) {
  ProposalSpec spec;
  spec.kind = kind;
  spec.step = gammas.array().square().matrix().asDiagonal();
  return spec;
}

ProposalSpec ProposalSpec::preconditioned(ProposalKind kind, double gamma,
                                          const Matrix& covariance) {
  ProposalSpec spec;
  spec.kind = kind;
  spec.policy = HessianPolicy::kPreconditioned;
  spec.step = gamma * gamma * symmetrize(covariance);
  return spec;
}

ProposalSpec ProposalSpec::hybrid(double gamma, int dim, int window, int burn_in) {
  ProposalSpec spec = isotropic(ProposalKind::kPmh2, gamma, dim);
  spec.policy = HessianPolicy::kHybrid;
  spec.hybrid_window = window;
  spec.burn_in = burn_in;
  return spec;
}

DerivativeOrder ProposalSpec::required_order() const {
  switch (kind) {
    case ProposalKind::kPmh0:
      return DerivativeOrder::kNone;
    case ProposalKind::kPmh1:
      return DerivativeOrder::kGradient;
    case ProposalKind::kPmh2:
      return DerivativeOrder::kHessian;
  }
  return DerivativeOrder::kNone;
}

void ProposalSpec::validate(int dim) const {
  if (step.rows() != dim || step.cols() != dim) {
    throw ConfigError("step matrix has the wrong dimension");
  }
  if (!step.isApprox(step.transpose()) || !is_positive_definite(step)) {
    throw ConfigError("step matrix must be symmetric positive definite");
  }
  if (policy == HessianPolicy::kHybrid) {
    if (kind != ProposalKind::kPmh2) throw ConfigError("hybrid policy applies to PMH2 only");
    if (hybrid_window < 2) throw ConfigError("hybrid window must be at least 2");
    if (burn_in < 0) throw ConfigError("burn-in must be non-negative");
  }
  if (policy == HessianPolicy::kPreconditioned && kind == ProposalKind::kPmh2) {
    throw ConfigError("preconditioning applies to PMH0 and PMH1");
  }
}

std::string to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::kPmh0:
      return "PMH0";
    case ProposalKind::kPmh1:
      return "PMH1";
    case ProposalKind::kPmh2:
      return "PMH2";
  }
  return "?";
}

std::string to_string(HessianPolicy policy) {
  switch (policy) {
    case HessianPolicy::kStandard:
      return "standard";
    case HessianPolicy::kHybrid:
      return "hybrid";
    case HessianPolicy::kPreconditioned:
      return "preconditioned";
  }
  return "?";
}

ProposalMoments proposal_mean_cov(const ProposalSpec& spec, const Vector& from,
                                  const PosteriorInfo& info) {
  switch (spec.kind) {
    case ProposalKind::kPmh0:
      return {from, spec.step};
    case ProposalKind::kPmh1:
      return {from + 0.5 * spec.step * info.gradient, spec.step};
    case ProposalKind::kPmh2: {
      const Matrix inv_info = solve_spd(info.neg_hessian, Matrix::Identity(from.size(), from.size()));
      const Matrix cov = symmetrize(spec.step * inv_info);
      return {from + 0.5 * spec.step * (inv_info * info.gradient), cov};
    }
  }
  throw std::logic_error("unknown proposal kind");
}

Matrix cholesky_with_jitter(const Matrix& cov) {
  const Matrix sym = symmetrize(cov);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const double scale = std::abs(sym.diagonal().mean());
  const Eigen::Index d = sym.rows();
  for (double factor : {1e-8, 1e-6, 1e-4}) {
    llt.compute(sym + factor * scale * Matrix::Identity(d, d));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("covariance is not positive definite after jitter");
}

double log_gaussian_density(const Vector& x, const Vector& mean, const Matrix& chol_lower) {
  const Vector z = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det_half = chol_lower.diagonal().array().log().sum();
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - log_det_half - 0.5 * z.squaredNorm();
}

double log_proposal_density(const ProposalSpec& spec, const Vector& to, const Vector& from,
                            const PosteriorInfo& info_from) {
  const ProposalMoments m = proposal_mean_cov(spec, from, info_from);
  return log_gaussian_density(to, m.mean, cholesky_with_jitter(m.cov));
}

Vector sample_proposal(const ProposalSpec& spec, const Vector& from, const PosteriorInfo& info,
                       Rng& rng) {
  const ProposalMoments m = proposal_mean_cov(spec, from, info);
  const Matrix chol = cholesky_with_jitter(m.cov);
  Vector z(from.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  return m.mean + chol * z;
}

double log_acceptance_ratio(const Vector& proposed, const PosteriorInfo& proposed_info,
                            const Vector& current, const PosteriorInfo& current_info,
                            const ProposalSpec& spec, const SsmModel& model) {
  if (!model.in_support(proposed) || !proposed_info.valid) return kNegInf;
  const double target = proposed_info.log_likelihood + model.log_prior(proposed) -
                        current_info.log_likelihood - model.log_prior(current);
  const double reverse = log_proposal_density(spec, current, proposed, proposed_info);
  const double forward = log_proposal_density(spec, proposed, current, current_info);
  return target + reverse - forward;
}

double acceptance_log_prob(const Vector& proposed, const PosteriorInfo& proposed_info,
                           const Vector& current, const PosteriorInfo& current_info,
                           const ProposalSpec& spec, const SsmModel& model) {
  const double ratio =
      log_acceptance_ratio(proposed, proposed_info, current, current_info, spec, model);
  if (std::isnan(ratio)) return kNegInf;
  return std::min(0.0, ratio);
}

std::optional<Matrix> inverse_sample_covariance(const Eigen::MatrixXd& window) {
  const Eigen::Index n = window.rows();
  if (n < 2) return std::nullopt;
  bool distinct = false;
  for (Eigen::Index r = 1; r < n && !distinct; ++r) distinct = window.row(r) != window.row(0);
  if (!distinct) return std::nullopt;

  const Eigen::RowVectorXd mean = window.colwise().mean();
  const Eigen::MatrixXd centered = window.rowwise() - mean;
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const Matrix chol = cholesky_with_jitter(cov);
  const Matrix inv_chol =
      chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(cov.rows(), cov.cols()));
  return symmetrize(inv_chol.transpose() * inv_chol);
}

std::optional<PosteriorInfo> hybrid_replace(const PosteriorInfo& raw_info,
                                            const Eigen::MatrixXd& window, ChainPhase phase) {
  if (raw_info.was_pd) return raw_info;
  if (phase == ChainPhase::kBurnIn) return std::nullopt;
  const std::optional<Matrix> precision = inverse_sample_covariance(window);
  if (!precision) return std::nullopt;
  PosteriorInfo replaced = raw_info;
  replaced.neg_hessian = *precision;
  return replaced;
}

double ChainTrace::acceptance_rate(int burn_in) const {
  const int n = iterations() - burn_in;
  if (n <= 0) throw std::invalid_argument("acceptance_rate: burn-in covers the whole chain");
  int count = 0;
  for (int k = burn_in; k < iterations(); ++k) count += accepted[k];
  return static_cast<double>(count) / n;
}

std::vector<double> ChainTrace::column(int j, int burn_in) const {
  std::vector<double> out;
  out.reserve(std::max(0, iterations() - burn_in));
  for (int k = burn_in; k < iterations(); ++k) out.push_back(samples(k, j));
  return out;
}

ChainTrace run_chain(const SsmModel& model, std::span<const double> observations,
                     const ChainConfig& config) {
  const int d = model.dim();
  const ProposalSpec& spec = config.proposal;
  spec.validate(d);
  if (config.iterations < 1) throw ConfigError("chain needs at least one iteration");
  if (config.theta0.size() != d || !model.in_support(config.theta0)) {
    throw ConfigError("initial parameter is outside the prior support");
  }

  Rng filter_rng(derive_seed(config.seed, kFilterStream));
  Rng proposal_rng(derive_seed(config.seed, kProposalStream));
  Rng accept_rng(derive_seed(config.seed, kAcceptStream));

  const bool hybrid = spec.policy == HessianPolicy::kHybrid;
  const DerivativeOrder order = spec.required_order();
  const Regularization regularization = hybrid ? Regularization::kNone : Regularization::kStandard;

  ChainTrace trace;
  trace.config = config;
  trace.param_names = model.param_names();
  trace.theta0 = config.theta0;

  auto evaluate = [&](const Vector& theta) {
    ++trace.filter_runs;
    return compute_posterior_info(model, theta, observations, config.filter, config.lag, order,
                                  regularization, filter_rng);
  };

  PosteriorInfo current_info = evaluate(config.theta0);
  if (!current_info.valid) throw std::runtime_error("filter collapsed at the initial parameter");
  if (hybrid && !current_info.was_pd) {
    // No chain history exists yet; start from the spectrum-shifted estimate.
    current_info.neg_hessian = regularize_standard(current_info.raw_neg_hessian);
  }
  trace.info0 = current_info;
  Vector current = config.theta0;

  const int M = config.iterations;
  trace.samples.resize(M, d);
  trace.accepted.assign(M, 0);
  trace.infos.reserve(M);
  trace.log_q_forward.assign(M, std::numeric_limits<double>::quiet_NaN());
  trace.log_q_reverse.assign(M, std::numeric_limits<double>::quiet_NaN());
  trace.log_alpha.assign(M, kNegInf);

  Eigen::MatrixXd hybrid_window;
  for (int k = 0; k < M; ++k) {
    const int iteration = k + 1;
    const ChainPhase phase = iteration <= spec.burn_in ? ChainPhase::kBurnIn : ChainPhase::kStationary;
    if (hybrid && phase == ChainPhase::kStationary && hybrid_window.rows() == 0) {
      const int end = std::min(spec.burn_in, k);
      const int begin = std::max(0, end - spec.hybrid_window);
      hybrid_window = trace.samples.block(begin, 0, end - begin, d);
    }

    const Vector proposed = sample_proposal(spec, current, current_info, proposal_rng);
    const double log_u = std::log(accept_rng.uniform());

    bool accept = false;
    std::optional<PosteriorInfo> proposed_info;
    if (model.in_support(proposed)) {
      proposed_info = evaluate(proposed);
      if (proposed_info->valid && hybrid) {
        proposed_info = hybrid_replace(*proposed_info, hybrid_window, phase);
        if (!proposed_info) {
          ++trace.hybrid_rejections;
        } else if (!proposed_info->was_pd) {
          ++trace.hybrid_replacements;
        }
      }
      if (proposed_info && proposed_info->valid) {
        trace.log_q_forward[k] = log_proposal_density(spec, proposed, current, current_info);
        trace.log_q_reverse[k] = log_proposal_density(spec, current, proposed, *proposed_info);
        const double log_alpha =
            acceptance_log_prob(proposed, *proposed_info, current, current_info, spec, model);
        trace.log_alpha[k] = log_alpha;
        accept = log_u < log_alpha;
      }
    }

    if (accept) {
      current = proposed;
      current_info = *proposed_info;
    }
    trace.accepted[k] = accept ? 1 : 0;
    trace.samples.row(k) = current.transpose();
    trace.infos.push_back(current_info);
  }
  return trace;
}

}  // namespace pmcmc
