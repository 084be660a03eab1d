#include "pmcmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace pmcmc {

IactResult iact(std::span<const double> chain) {
  const std::size_t M = chain.size();
  if (M < 10) throw std::invalid_argument("iact: need at least 10 samples");
  const auto [lo, hi] = std::minmax_element(chain.begin(), chain.end());
  if (*lo == *hi) throw DegenerateChainError("iact: chain has zero variance");
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(M);
  std::vector<double> centered(M);
  for (std::size_t i = 0; i < M; ++i) centered[i] = chain[i] - mean;
  const double c0 =
      std::inner_product(centered.begin(), centered.end(), centered.begin(), 0.0) / M;
  if (!(c0 > 0.0)) throw DegenerateChainError("iact: chain has zero variance");

  const double threshold = 2.0 / std::sqrt(static_cast<double>(M));
  const std::size_t max_lag = M / 2;
  IactResult result;
  double sum = 0.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t i = 0; i + k < M; ++i) ck += centered[i] * centered[i + k];
    const double rho = ck / M / c0;
    result.autocorrelations.push_back(rho);
    sum += rho;
    if (std::abs(rho) < threshold) {
      result.cutoff = static_cast<int>(k);
      break;
    }
  }
  if (result.cutoff == 0) {
    result.cutoff = static_cast<int>(max_lag);
    result.capped = true;
  }
  result.iact = std::max(1.0, 1.0 + 2.0 * sum);
  return result;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  // Skipping the zero-weight term keeps infinite entries (degenerate chains) exact.
  if (frac == 0.0 || values[hi] == values[lo]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double iqr(std::vector<double> values) {
  const double hi = quantile(values, 0.75);
  const double lo = quantile(values, 0.25);
  if (std::isinf(hi) && hi == lo) return hi;  // spread among infinite IACTs
  return hi - lo;
}

ChainSummary summarize(std::span<const ChainTrace> traces, int burn_in) {
  if (traces.empty()) throw std::invalid_argument("summarize: no traces");
  const int d = static_cast<int>(traces.front().samples.cols());
  ChainSummary out;
  out.chains = static_cast<int>(traces.size());

  std::vector<double> acceptance;
  std::vector<std::vector<double>> iacts(d);
  std::vector<double> sum(d, 0.0);
  std::vector<double> sum_sq(d, 0.0);
  long pooled = 0;
  for (const ChainTrace& trace : traces) {
    if (burn_in < 0 || burn_in >= trace.iterations()) {
      throw std::invalid_argument("summarize: burn-in must be below the chain length");
    }
    if (trace.samples.cols() != d) throw std::invalid_argument("summarize: mixed dimensions");
    acceptance.push_back(trace.acceptance_rate(burn_in));
    for (int j = 0; j < d; ++j) {
      const std::vector<double> column = trace.column(j, burn_in);
      try {
        iacts[j].push_back(iact(column).iact);
      } catch (const DegenerateChainError&) {
        iacts[j].push_back(std::numeric_limits<double>::infinity());
      }
      for (double v : column) {
        sum[j] += v;
        sum_sq[j] += v * v;
      }
    }
    pooled += trace.iterations() - burn_in;
  }

  out.acceptance_median = median(acceptance);
  out.acceptance_iqr = iqr(acceptance);
  const std::vector<std::string>& names = traces.front().param_names;
  for (int j = 0; j < d; ++j) {
    ParameterSummary p;
    p.name = j < static_cast<int>(names.size()) ? names[j] : "theta" + std::to_string(j + 1);
    p.iact_median = median(iacts[j]);
    p.iact_iqr = iqr(iacts[j]);
    p.mean = sum[j] / pooled;
    const double var = (sum_sq[j] - pooled * p.mean * p.mean) / std::max<long>(1, pooled - 1);
    p.sd = std::sqrt(std::max(0.0, var));
    out.params.push_back(p);
  }
  return out;
}

void write_summary_csv(std::span<const SummaryRow> rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(10);
  out << "variant,filter,N,chains,acc_median,acc_iqr";
  if (!rows.empty()) {
    for (const ParameterSummary& p : rows.front().summary.params) {
      out << ",iact_median_" << p.name << ",iact_iqr_" << p.name << ",mean_" << p.name << ",sd_"
          << p.name;
    }
  }
  out << '\n';
  for (const SummaryRow& row : rows) {
    out << row.variant << ',' << row.filter << ',' << row.particles << ',' << row.summary.chains
        << ',' << row.summary.acceptance_median << ',' << row.summary.acceptance_iqr;
    for (const ParameterSummary& p : row.summary.params) {
      out << ',' << p.iact_median << ',' << p.iact_iqr << ',' << p.mean << ',' << p.sd;
    }
    out << '\n';
  }
}

std::string format_summary_table(std::span<const SummaryRow> rows) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "variant" << std::setw(8) << "filter" << std::setw(7)
      << "N" << std::setw(16) << "acc (IQR)";
  if (!rows.empty()) {
    for (const ParameterSummary& p : rows.front().summary.params) {
      out << std::setw(20) << ("IACT(" + p.name + ")") << std::setw(20) << ("mean(" + p.name + ")");
    }
  }
  out << '\n';
  auto pair = [](double a, double b, int precision) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << a << " (" << b << ")";
    return s.str();
  };
  for (const SummaryRow& row : rows) {
    out << std::left << std::setw(16) << row.variant << std::setw(8) << row.filter << std::setw(7)
        << row.particles << std::setw(16)
        << pair(row.summary.acceptance_median, row.summary.acceptance_iqr, 2);
    for (const ParameterSummary& p : row.summary.params) {
      out << std::setw(20) << pair(p.iact_median, p.iact_iqr, 1) << std::setw(20)
          << pair(p.mean, p.sd, 3);
    }
    out << '\n';
  }
  return out.str();
}

LogL1Error log_l1_error(double estimate, double truth) {
  if (!std::isfinite(truth)) throw std::invalid_argument("log_l1_error: truth must be finite");
  const double err = std::abs(estimate - truth);
  if (err == 0.0) return {std::log(std::numeric_limits<double>::epsilon()), true};
  return {std::log(err), false};
}

std::vector<LogL1Error> log_l1_error(std::span<const double> estimates, double truth) {
  std::vector<LogL1Error> out;
  out.reserve(estimates.size());
  for (double e : estimates) out.push_back(log_l1_error(e, truth));
  return out;
}

}  // namespace pmcmc
