#include "pmcmc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>

namespace pmcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Unchecked resampling kernel shared by the public entry point and the filter.
void systematic_kernel(std::span<const double> weights, double u, std::span<int> out) {
  const int n = static_cast<int>(weights.size());
  int last_positive = n - 1;
  while (last_positive > 0 && !(weights[last_positive] > 0.0)) --last_positive;

  // Work in units of 1/n: with uniform weights n * fl(1/n) <= 1, so the
  // cumulative sums never overshoot the integer positions at u = 0.
  const double scale = static_cast<double>(n);
  double cumulative = weights[0] * scale;
  int j = 0;
  for (int k = 0; k < n; ++k) {
    const double position = u + k;
    while (position >= cumulative && j < last_positive) {
      ++j;
      cumulative += weights[j] * scale;
    }
    out[k] = j;
  }
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  double max_value = kNegInf;
  for (double v : values) {
    if (v > max_value) max_value = v;
  }
  if (max_value == kNegInf) return kNegInf;
  if (max_value == std::numeric_limits<double>::infinity()) return max_value;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max_value);
  return max_value + std::log(sum);
}

double normalize_log_weights(std::span<const double> log_weights, std::span<double> out) {
  double max_value = kNegInf;
  for (double v : log_weights) {
    if (v > max_value) max_value = v;  // NaN never compares greater
  }
  if (max_value == kNegInf || !std::isfinite(max_value)) {
    throw DegenerateWeightsError("cannot normalize: no finite log weight");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    const double v = log_weights[i];
    out[i] = std::isnan(v) ? 0.0 : std::exp(v - max_value);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (double& w : out) w *= inv;
  return max_value + std::log(sum);
}

std::vector<int> systematic_resample(std::span<const double> weights, double u) {
  if (weights.empty()) throw std::invalid_argument("systematic_resample: no weights");
  if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("systematic_resample: u not in [0,1)");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("systematic_resample: negative or NaN weight");
    total += w;
  }
  if (total == 0.0) throw DegenerateWeightsError("systematic_resample: all weights are zero");
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("systematic_resample: weights do not sum to one");
  }
  std::vector<int> out(weights.size());
  systematic_kernel(weights, u, out);
  return out;
}

FilterOutput run_filter(const SsmModel& model, const Vector& theta,
                        std::span<const double> observations, const FilterConfig& config,
                        Rng& rng) {
  const int T = static_cast<int>(observations.size());
  const int N = config.particles;
  if (T < 1) throw std::invalid_argument("run_filter: need at least one observation");
  if (N < 1) throw std::invalid_argument("run_filter: need at least one particle");
  const FullyAdapted* adapted = model.fully_adapted();
  const bool fully_adapted = config.variant == FilterVariant::kFullyAdapted;
  if (fully_adapted && adapted == nullptr) {
    throw std::invalid_argument("run_filter: model has no fully adapted quantities");
  }

  FilterOutput out;
  out.variant = config.variant;
  out.observations.assign(observations.begin(), observations.end());
  out.particles.resize(T + 1, N);
  out.ancestors.resize(T + 1, N);
  out.log_weights.resize(T + 1, N);
  out.log_aux_weights.resize(T + 1, N);

  for (int i = 0; i < N; ++i) {
    out.particles(0, i) = model.sample_initial(theta, rng);
    out.ancestors(0, i) = i;
    out.log_weights(0, i) = 0.0;
    out.log_aux_weights(0, i) =
        fully_adapted ? adapted->log_predictive(theta, out.particles(0, i), observations[0]) : 0.0;
  }

  // The likelihood terms LSE(log nu_{t-1}) - log N fall out of the
  // normalization that precedes each resampling step.
  const double log_n = std::log(static_cast<double>(N));
  double log_likelihood = 0.0;
  std::vector<double> normalized(N);
  for (int t = 1; t <= T; ++t) {
    const double y = observations[t - 1];
    const std::span<const double> previous_aux(&out.log_aux_weights(t - 1, 0), N);
    try {
      log_likelihood += normalize_log_weights(previous_aux, normalized) - log_n;
    } catch (const DegenerateWeightsError&) {
      throw FilterCollapse(t - 1);
    }
    systematic_kernel(normalized, rng.uniform(), std::span<int>(&out.ancestors(t, 0), N));

    double max_weight = kNegInf;
    for (int i = 0; i < N; ++i) {
      const double parent = out.particles(t - 1, out.ancestors(t, i));
      double x = 0.0;
      double log_w = 0.0;
      double log_nu = 0.0;
      if (fully_adapted) {
        x = adapted->sample_optimal_proposal(theta, parent, y, rng);
        log_nu = t < T ? adapted->log_predictive(theta, x, observations[t]) : 0.0;
      } else {
        x = model.sample_transition(theta, parent, rng);
        log_w = model.log_observation(theta, x, y, t);
        log_nu = log_w;
      }
      if (std::isnan(log_w)) log_w = kNegInf;
      if (std::isnan(log_nu)) log_nu = kNegInf;
      out.particles(t, i) = x;
      out.log_weights(t, i) = log_w;
      out.log_aux_weights(t, i) = log_nu;
      max_weight = std::max(max_weight, fully_adapted ? log_nu : log_w);
    }
    if (max_weight == kNegInf) throw FilterCollapse(t);
  }

  out.log_likelihood =
      log_likelihood + log_sum_exp(std::span<const double>(&out.log_weights(T, 0), N)) - log_n;
  return out;
}

FilterOutput run_filter(const SsmModel& model, const Vector& theta,
                        std::span<const double> observations, const FilterConfig& config) {
  Rng rng(config.seed);
  return run_filter(model, theta, observations, config, rng);
}

double estimate_log_likelihood(const FilterOutput& output) {
  const int T = output.steps();
  const int N = output.size();
  const double log_n = std::log(static_cast<double>(N));
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    total += log_sum_exp(std::span<const double>(&output.log_aux_weights(t, 0), N)) - log_n;
  }
  total += log_sum_exp(std::span<const double>(&output.log_weights(T, 0), N)) - log_n;
  return total;
}

void dump_filter_csv(const FilterOutput& output, const std::string& directory) {
  std::filesystem::create_directories(directory);
  const int T = output.steps();
  const int N = output.size();
  auto write = [&](const std::string& name, auto&& cell, int blocks) {
    std::ofstream f(std::filesystem::path(directory) / name);
    f << std::setprecision(17);
    f << "t";
    if (blocks == 2) f << ",kind";
    for (int i = 0; i < N; ++i) f << ",p" << i;
    f << '\n';
    for (int b = 0; b < blocks; ++b) {
      for (int t = 0; t <= T; ++t) {
        f << t;
        if (blocks == 2) f << (b == 0 ? ",log_w" : ",log_nu");
        for (int i = 0; i < N; ++i) f << ',' << cell(b, t, i);
        f << '\n';
      }
    }
  };
  write("particles.csv", [&](int, int t, int i) { return output.particles(t, i); }, 1);
  write("ancestors.csv", [&](int, int t, int i) { return double(output.ancestors(t, i)); }, 1);
  write("weights.csv",
        [&](int b, int t, int i) {
          return b == 0 ? output.log_weights(t, i) : output.log_aux_weights(t, i);
        },
        2);
}

}  // namespace pmcmc
