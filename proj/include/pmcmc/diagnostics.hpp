#ifndef PMCMC_DIAGNOSTICS_HPP
#define PMCMC_DIAGNOSTICS_HPP

#include "pmcmc/pmh.hpp"

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmcmc {

/// A chain column without variance (e.g. every proposal rejected).
class DegenerateChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integrated autocorrelation time 1 + 2 sum_{k=1}^{K} rho_k, where K is the
/// first lag with |rho_K| < 2 / sqrt(M). `autocorrelations[k-1]` is rho_k.
struct IactResult {
  double iact = 1.0;
  int cutoff = 0;
  std::vector<double> autocorrelations;
  /// The 2/sqrt(M) rule never fired and K was capped at M/2.
  bool capped = false;
};

/// Autocorrelations use the biased (M-denominator) estimator; the result is
/// floored at 1. Requires M >= 10 and positive sample variance.
IactResult iact(std::span<const double> chain);

/// Type-7 (linear interpolation) sample quantile, p in [0, 1].
double quantile(std::vector<double> values, double p);
double median(std::vector<double> values);
/// Q(0.75) - Q(0.25).
double iqr(std::vector<double> values);

struct ParameterSummary {
  std::string name;
  double iact_median = 0.0;
  double iact_iqr = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ChainSummary {
  int chains = 0;
  double acceptance_median = 0.0;
  double acceptance_iqr = 0.0;
  std::vector<ParameterSummary> params;
};

/// Per-chain IACT and acceptance after `burn_in`, aggregated by median and
/// IQR across chains; posterior moments from the pooled post-burn-in samples.
ChainSummary summarize(std::span<const ChainTrace> traces, int burn_in);

/// Summary row of a results table: which sampler produced it and its summary.
struct SummaryRow {
  std::string variant;
  std::string filter;
  int particles = 0;
  ChainSummary summary;
};

/// Columns: variant, filter, N, chains, acc_median, acc_iqr, then per parameter
/// iact_median_<p>, iact_iqr_<p>, mean_<p>, sd_<p>.
void write_summary_csv(std::span<const SummaryRow> rows, const std::string& path);
/// Aligned plain-text version of the same table.
std::string format_summary_table(std::span<const SummaryRow> rows);

struct LogL1Error {
  double value = 0.0;
  /// The error was exactly zero and the value clamped at log(machine epsilon).
  bool clamped = false;
};

/// log |estimate - truth|.
LogL1Error log_l1_error(double estimate, double truth);
std::vector<LogL1Error> log_l1_error(std::span<const double> estimates, double truth);

}  // namespace pmcmc

#endif
