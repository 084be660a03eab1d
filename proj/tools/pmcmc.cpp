// Command-line front end: run/tune experiments from a config file and
// simulate datasets.

#include "pmcmc/experiment.hpp"
#include "pmcmc/io.hpp"
#include "pmcmc/lgss.hpp"
#include "pmcmc/poisson.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

pmcmc::ExperimentConfig load_config(const std::string& path, const std::string& out_dir,
                                    const std::string& seed) {
  pmcmc::Config raw = pmcmc::Config::load(path);
  if (!out_dir.empty()) raw.set("out_dir", out_dir);
  if (!seed.empty()) raw.set("seed", seed);
  return pmcmc::ExperimentConfig::from(raw);
}

int run(const std::string& path, const std::string& out_dir, const std::string& seed, int workers) {
  const pmcmc::ExperimentConfig cfg = load_config(path, out_dir, seed);
  const pmcmc::RunReport report =
      pmcmc::run_experiment(cfg, pmcmc::resolve_workers(workers, cfg.workers, 1 << 20));
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const std::string& e : report.errors) std::cerr << "error: " << e << '\n';
  std::cout << "wrote " << report.outputs.size() << " files to " << cfg.out_dir << '\n';
  return report.errors.empty() ? 0 : kRuntimeError;
}

int tune(const std::string& path, const std::string& out_dir, const std::string& seed, int workers) {
  const pmcmc::ExperimentConfig cfg = load_config(path, out_dir, seed);
  const pmcmc::TuneReport report =
      pmcmc::tune_step(cfg, pmcmc::resolve_workers(workers, cfg.workers, 1 << 20));
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const pmcmc::TuneEntry& e : report.entries) {
    std::cout << e.sampler << " gamma=" << e.gamma << " acceptance=" << e.acceptance
              << " total_iact=" << e.total_iact << '\n';
  }
  for (const pmcmc::TuneRecommendation& r : report.recommendations) {
    std::cout << "recommended " << r.sampler << " gamma=" << r.gamma
              << (r.meets_criterion ? "" : " (criterion not met)") << '\n';
  }

  return 0;
}

int simulate(const std::string& model_name, int T, std::uint64_t seed, const std::string& out,
             double sigma_e, std::vector<double> theta) {
  if (T < 1) throw pmcmc::ConfigError("T must be at least 1");
  const auto model = pmcmc::make_model(model_name, sigma_e);
  if (theta.empty()) {
    theta = model_name == "poisson" ? std::vector<double>{0.88, 0.15, 16.58}
                                    : std::vector<double>{0.5, 1.0};
  }
  if (static_cast<int>(theta.size()) != model->dim()) {
    throw pmcmc::ConfigError("--theta needs " + std::to_string(model->dim()) + " values");
  }
  pmcmc::Vector th(model->dim());
  for (int j = 0; j < model->dim(); ++j) th[j] = theta[j];
  if (const auto* lgss = dynamic_cast<const pmcmc::LgssModel*>(model.get())) {
    th = lgss->theta({th[0], th[1], sigma_e});
  }
  if (!model->in_support(th)) throw pmcmc::ConfigError("--theta is outside the prior support");
  pmcmc::Rng rng(seed);
  pmcmc::write_observations_csv(out, pmcmc::simulate(*model, th, T, rng).observations);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle Metropolis-Hastings toolkit"};
  app.require_subcommand(1);
  std::string out_dir;
  std::string seed;
  int workers = 0;
  app.add_option("--out-dir", out_dir, "Output directory (overrides out_dir)");
  app.add_option("--seed", seed, "Master seed (overrides seed)");
  app.add_option("--workers", workers, "Worker threads (overrides PMCMC_WORKERS and workers)")
      ->check(CLI::NonNegativeNumber);

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("config", config_path)->required();
  auto* tune_cmd = app.add_subcommand("tune", "Pilot runs over gamma_grid; recommend a step size");
  tune_cmd->add_option("config", config_path)->required();

  std::string model_name;
  int T = 0;
  std::uint64_t sim_seed = 0;
  std::string out_csv;
  double sigma_e = 0.1;
  std::vector<double> theta;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a dataset to a t,y CSV");
  sim_cmd->add_option("model", model_name, "lgss | lgss-rescaled | poisson")->required();
  sim_cmd->add_option("T", T)->required();
  sim_cmd->add_option("seed", sim_seed)->required();
  sim_cmd->add_option("out", out_csv)->required();
  sim_cmd->add_option("--sigma-e", sigma_e, "Observation noise for the LGSS models");
  sim_cmd->add_option("--theta", theta, "Parameters (phi,sigma_v for LGSS)")->delimiter(',');

  // Global flags are accepted after the subcommand too.
  for (CLI::App* sub : {run_cmd, tune_cmd, sim_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run_cmd) return run(config_path, out_dir, seed, workers);
    if (*tune_cmd) return tune(config_path, out_dir, seed, workers);
    return simulate(model_name, T, sim_seed, out_csv, sigma_e, theta);
  } catch (const pmcmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pmcmc::ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
