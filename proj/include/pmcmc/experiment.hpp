#ifndef PMCMC_EXPERIMENT_HPP
#define PMCMC_EXPERIMENT_HPP

#include "pmcmc/pmh.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pmcmc {

/// Flat `key = value` configuration. '#' starts a comment; lists are
/// comma-separated. Keys are case-sensitive and may appear once.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Original file text, echoed into the manifest.
  const std::string& text() const { return text_; }

 private:
  std::map<std::string, std::string> values_;
  std::string text_;
};

/// A sampler label such as "PMH0", "PMH1-pre" or "PMH2-hybrid".
struct SamplerSpec {
  std::string label;
  ProposalKind kind = ProposalKind::kPmh0;
  HessianPolicy policy = HessianPolicy::kStandard;
};

SamplerSpec parse_sampler(const std::string& label);
FilterVariant parse_filter(const std::string& name);
std::string filter_label(FilterVariant variant);

/// Model by name: lgss, lgss-rescaled or poisson.
std::unique_ptr<SsmModel> make_model(const std::string& name, double sigma_e);

/// Typed experiment settings. See README for the meaning of each key.
struct ExperimentConfig {
  std::string experiment;
  std::string model = "lgss";
  std::vector<std::string> models;
  double sigma_e = 0.1;
  int T = 100;
  std::vector<double> true_theta{0.5, 1.0};
  std::string data_path;
  std::vector<FilterVariant> filters{FilterVariant::kFullyAdapted};
  std::vector<int> particles{100};
  std::vector<int> lags{12};
  std::vector<SamplerSpec> samplers;
  std::vector<double> gammas;
  std::vector<double> gamma_grid;
  std::vector<int> lag_grid;
  int hybrid_window = 2500;
  int iterations = 1000;
  int burn_in = 0;
  int replicates = 1;
  int datasets = 1;
  std::vector<double> theta0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int workers = 0;
  std::string pilot_sampler = "PMH2-hybrid";
  double pilot_gamma = 1.0;
  int pilot_iterations = 5000;
  int pilot_burn_in = 2500;
  std::string tune_criterion = "acceptance";
  double target_low = 0.7;
  double target_high = 0.8;
  std::vector<double> grid_phi{-0.2, 1.0, 60};
  std::vector<double> grid_sigma_v{0.4, 2.6, 60};
  Config raw;

  /// Validates and converts. Throws ConfigError on unknown keys or bad values.
  static ExperimentConfig from(const Config& config);
  /// Gamma of sampler i.
  double gamma_for(int sampler) const;
};

/// Worker count: explicit request > PMCMC_WORKERS > config > hardware, capped
/// at the job count.
int resolve_workers(int requested, int config_value, int jobs);

/// Runs job(i) for i in [0, n) on `workers` threads. Exceptions are captured
/// per job; the returned vector holds an error message per failed job index
/// (empty string on success).
std::vector<std::string> parallel_for(int n, int workers, const std::function<void(int)>& job);

/// Seed of dataset k: derive_seed(master, kDatasetStream + k).
inline constexpr std::uint64_t kDatasetStream = 1ULL << 40;
/// Seed of the preconditioning pilot chain.
inline constexpr std::uint64_t kPilotStream = 1ULL << 41;

/// Dataset k of the experiment: read from `data_path` when given, otherwise
/// simulated from `true_theta` with the dataset seed.
std::vector<double> experiment_dataset(const ExperimentConfig& config, const SsmModel& model,
                                       int k, std::vector<std::string>* warnings = nullptr);

/// theta_0 in the model's parameterization. For the LGSS models `theta0` is
/// given in natural (phi, sigma_v) units.
Vector experiment_theta0(const ExperimentConfig& config, const SsmModel& model);

struct RunReport {
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
};

/// Runs the configured experiment and writes its bundle (manifest.json,
/// per-chain traces, aggregate tables, plot data) to `out_dir`.
RunReport run_experiment(const ExperimentConfig& config, int workers);

struct TuneEntry {
  std::string sampler;
  double gamma = 0.0;
  double acceptance = 0.0;
  double total_iact = 0.0;
  std::vector<double> iacts;
};

struct TuneRecommendation {
  std::string sampler;
  double gamma = 0.0;
  bool meets_criterion = false;
};

struct TuneReport {
  std::vector<TuneEntry> entries;
  std::vector<TuneRecommendation> recommendations;
  std::vector<std::string> warnings;
};

/// Pilot chains for every (sampler, gamma in gamma_grid) pair. Acceptance and
/// IACT are medians over `replicates` chains. With criterion "acceptance" the
/// recommendation is the gamma whose acceptance is inside
/// [target_low, target_high] and closest to the band centre (nearest to the
/// band with a warning if none is inside); with "iact" it minimises the total
/// IACT.
TuneReport tune_step(const ExperimentConfig& config, int workers);

}  // namespace pmcmc

#endif
