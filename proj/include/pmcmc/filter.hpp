#ifndef PMCMC_FILTER_HPP
#define PMCMC_FILTER_HPP

#include "pmcmc/model.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmcmc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FilterVariant {
  kBootstrap,     ///< propagate with f, weight with g, resample on w
  kFullyAdapted,  ///< propagate with p(x_t|y_t,x_{t-1}), resample on p(y_{t+1}|x_t), w == 1
};

/// Filter settings. Resampling is systematic and happens at every step.
struct FilterConfig {
  int particles = 100;
  FilterVariant variant = FilterVariant::kBootstrap;
  std::uint64_t seed = 0;
};

/// The full particle system of one filter run: the auxiliary variable of the
/// pseudo-marginal chain. Arrays have T+1 rows indexed by time t = 0..T and N
/// columns. Row 0 holds the initial particles, unit weights and identity
/// ancestors. For t >= 1, ancestors(t, i) is the index at t-1 of the parent of
/// particle i at t.
///
/// log_aux_weights(t, :) are the resampling weights used to draw ancestors at
/// t+1. For the bootstrap filter they equal log_weights (and are 0 at t = 0);
/// for the fully adapted filter they are log p(y_{t+1} | x_t), with row T set
/// to 0 since no y_{T+1} exists.
struct FilterOutput {
  FilterVariant variant = FilterVariant::kBootstrap;
  std::vector<double> observations;
  RowMatrix particles;
  IndexMatrix ancestors;
  RowMatrix log_weights;
  RowMatrix log_aux_weights;
  double log_likelihood = 0.0;

  int steps() const noexcept { return static_cast<int>(particles.rows()) - 1; }
  int size() const noexcept { return static_cast<int>(particles.cols()); }
  double observation(int t) const { return observations[t - 1]; }
};

/// All importance weights at some step evaluated to zero.
class FilterCollapse : public std::runtime_error {
 public:
  explicit FilterCollapse(int t)
      : std::runtime_error("particle filter collapsed at t=" + std::to_string(t)), time_(t) {}
  int time() const noexcept { return time_; }

 private:
  int time_;
};

/// log(sum exp(v)) with the max shifted out; -inf for an all -inf input.
double log_sum_exp(std::span<const double> values);

/// Writes exp(v - max) / sum into `out` and returns log sum exp(v). NaN inputs
/// count as -inf. Throws DegenerateWeightsError when every entry is -inf.
double normalize_log_weights(std::span<const double> log_weights, std::span<double> out);

/// Systematic resampling with the single offset u in [0, 1): particle k takes
/// the index whose cumulative-weight interval contains (u + k) / N. The output
/// is non-decreasing and each index i appears floor(N w_i) or ceil(N w_i)
/// times. Weights must be non-negative and sum to 1 within 1e-12.
std::vector<int> systematic_resample(std::span<const double> weights, double u);

/// Runs the filter over y_1..y_T. Throws FilterCollapse when every weight at
/// some step is zero; std::invalid_argument for a bad configuration (including
/// the fully adapted variant on a model without closed-form quantities).
FilterOutput run_filter(const SsmModel& model, const Vector& theta,
                        std::span<const double> observations, const FilterConfig& config,
                        Rng& rng);

/// Same, with an Rng seeded from config.seed.
FilterOutput run_filter(const SsmModel& model, const Vector& theta,
                        std::span<const double> observations, const FilterConfig& config);

/// Log of the unbiased likelihood estimate
///   prod_{t=0}^{T-1} [N^-1 sum_i nu_t^i] * N^-1 sum_i w_T^i,
/// computed from the stored arrays. The t = 0 factor is 1 for the bootstrap
/// filter and p(y_1 | x_0) for the fully adapted filter.
double estimate_log_likelihood(const FilterOutput& output);

/// Debug dump: particles.csv, ancestors.csv, weights.csv (log_weights then
/// log_aux_weights blocks) in `directory`. Not a stable format.
void dump_filter_csv(const FilterOutput& output, const std::string& directory);

}  // namespace pmcmc

#endif
