#ifndef PMCMC_IO_HPP
#define PMCMC_IO_HPP

#include "pmcmc/pmh.hpp"

#include <string>
#include <vector>

namespace pmcmc {

/// `t,y` CSV with a header; values written with 17 significant digits so a
/// write/read round trip is bit-exact.
void write_observations_csv(const std::string& path, const std::vector<double>& observations);
std::vector<double> read_observations_csv(const std::string& path);

/// Chain trace CSV: iteration, one column per parameter, accepted,
/// log_likelihood. Row 0 is theta_0.
void write_trace_csv(const std::string& path, const ChainTrace& trace);

/// Samples, acceptance flags and log-likelihoods read back from a trace CSV.
/// theta_0 is restored from row 0; infos carry only the log-likelihood.
ChainTrace read_trace_csv(const std::string& path);

/// Formats with 17 significant digits.
std::string format_double(double value);

}  // namespace pmcmc

#endif
