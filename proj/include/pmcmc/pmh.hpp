#ifndef PMCMC_PMH_HPP
#define PMCMC_PMH_HPP

#include "pmcmc/smoother.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pmcmc {

/// Proposal family:
///   PMH0  N(theta, G)
///   PMH1  N(theta + G S / 2, G)
///   PMH2  N(theta + G I^-1 S / 2, G I^-1)
/// with S and I the estimated gradient and negative Hessian of the
/// log-posterior and G the step matrix.
enum class ProposalKind { kPmh0, kPmh1, kPmh2 };

/// How curvature information is handled.
///  - kStandard: PMH2 uses spectrum-shift regularization of non-PD estimates.
///  - kHybrid: PMH2 rejects proposals with a non-PD estimate during burn-in and
///    afterwards replaces the estimate with the inverse sample covariance of
///    the last `hybrid_window` burn-in samples.
///  - kPreconditioned: PMH0/PMH1 with G = gamma^2 Sigma for a pilot-run
///    posterior covariance Sigma.
enum class HessianPolicy { kStandard, kHybrid, kPreconditioned };

struct ProposalSpec {
  ProposalKind kind = ProposalKind::kPmh0;
  Matrix step;
  HessianPolicy policy = HessianPolicy::kStandard;
  int hybrid_window = 0;
  int burn_in = 0;

  /// G = gamma^2 I.
  static ProposalSpec isotropic(ProposalKind kind, double gamma, int dim);
  /// G = diag(gammas)^2.
  static ProposalSpec diagonal(ProposalKind kind, const Vector& gammas);
  /// G = gamma^2 Sigma (PMH0 or PMH1).
  static ProposalSpec preconditioned(ProposalKind kind, double gamma, const Matrix& covariance);
  /// Hybrid PMH2 with G = gamma^2 I.
  static ProposalSpec hybrid(double gamma, int dim, int window, int burn_in);

  /// Estimates the filter must produce for this proposal.
  DerivativeOrder required_order() const;
  /// Throws ConfigError when the spec is inconsistent.
  void validate(int dim) const;
};

std::string to_string(ProposalKind kind);
std::string to_string(HessianPolicy policy);

struct ProposalMoments {
  Vector mean;
  Matrix cov;
};

/// Mean and covariance of q(. | from, info).
/// Throws NumericalError when PMH2's negative Hessian is not invertible.
ProposalMoments proposal_mean_cov(const ProposalSpec& spec, const Vector& from,
                                  const PosteriorInfo& info);

/// Lower Cholesky factor of `cov`, retrying with jitter of 1e-8, 1e-6 and 1e-4
/// times the mean diagonal before giving up with NumericalError.
Matrix cholesky_with_jitter(const Matrix& cov);

/// log N(x; mean, L L^T) for a lower-triangular factor L.
double log_gaussian_density(const Vector& x, const Vector& mean, const Matrix& chol_lower);

/// log q(to | from, info_from).
double log_proposal_density(const ProposalSpec& spec, const Vector& to, const Vector& from,
                            const PosteriorInfo& info_from);

Vector sample_proposal(const ProposalSpec& spec, const Vector& from, const PosteriorInfo& info,
                       Rng& rng);

/// Untruncated log acceptance ratio for moving from (theta', info') to
/// (theta'', info''). -inf when the proposal is outside the prior support or
/// its likelihood estimate is invalid.
double log_acceptance_ratio(const Vector& proposed, const PosteriorInfo& proposed_info,
                            const Vector& current, const PosteriorInfo& current_info,
                            const ProposalSpec& spec, const SsmModel& model);

/// min(0, log_acceptance_ratio(...)).
double acceptance_log_prob(const Vector& proposed, const PosteriorInfo& proposed_info,
                           const Vector& current, const PosteriorInfo& current_info,
                           const ProposalSpec& spec, const SsmModel& model);

enum class ChainPhase { kBurnIn, kStationary };

/// Inverse of the (n-1)-normalized sample covariance of the window rows.
/// A singular covariance gets the jitter escalation of cholesky_with_jitter.
/// Empty when fewer than two distinct rows exist.
std::optional<Matrix> inverse_sample_covariance(const Eigen::MatrixXd& window);

/// Hybrid handling of a freshly computed info. PD estimates pass through
/// untouched. Otherwise, during burn-in the proposal is rejected (empty
/// result); at stationarity the negative Hessian is replaced by the inverse
/// sample covariance of `window`, or rejected if the window is degenerate.
std::optional<PosteriorInfo> hybrid_replace(const PosteriorInfo& raw_info,
                                            const Eigen::MatrixXd& window, ChainPhase phase);

struct ChainConfig {
  ProposalSpec proposal;
  FilterConfig filter;
  int lag = 12;
  int iterations = 1000;
  Vector theta0;
  std::uint64_t seed = 0;
};

/// Output of run_chain. Row k of `samples` is theta_{k+1}; theta_0 and its
/// info are stored separately. A rejected iteration repeats the previous row
/// exactly and carries the previous info unchanged.
struct ChainTrace {
  std::vector<std::string> param_names;
  Vector theta0;
  PosteriorInfo info0;
  Eigen::MatrixXd samples;
  std::vector<std::uint8_t> accepted;
  std::vector<PosteriorInfo> infos;
  /// log q(proposed | current) and log q(current | proposed); NaN when the
  /// proposal was rejected before the filter ran.
  std::vector<double> log_q_forward;
  std::vector<double> log_q_reverse;
  std::vector<double> log_alpha;
  std::int64_t filter_runs = 0;
  int hybrid_replacements = 0;
  int hybrid_rejections = 0;
  ChainConfig config;

  int iterations() const noexcept { return static_cast<int>(samples.rows()); }
  /// Mean of the accepted flags over iterations after `burn_in`.
  double acceptance_rate(int burn_in = 0) const;
  /// Post-burn-in samples of parameter j.
  std::vector<double> column(int j, int burn_in = 0) const;
};

/// Particle Metropolis-Hastings. One filter run per iteration, at the proposed
/// point only; proposals outside the prior support are rejected without
/// running the filter. Filter collapse at the proposal is a rejection;
/// collapse at theta0 throws std::runtime_error.
///
/// Randomness is split into three substreams of `config.seed` (filter,
/// proposal draw, accept draw), so changing the proposal family does not
/// perturb the uniform draws used for acceptance.
ChainTrace run_chain(const SsmModel& model, std::span<const double> observations,
                     const ChainConfig& config);

}  // namespace pmcmc

#endif
