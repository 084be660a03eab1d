#include "pmcmc/experiment.hpp"

#include "pmcmc/diagnostics.hpp"
#include "pmcmc/io.hpp"
#include "pmcmc/lgss.hpp"
#include "pmcmc/oracle.hpp"
#include "pmcmc/poisson.hpp"

#include <boost/version.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace pmcmc {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "experiment",   "model",          "models",         "sigma_e",          "T",
      "true_theta",   "data",           "filter",         "particles",        "lag",
      "samplers",     "gamma",          "gamma_grid",     "lag_grid",         "hybrid_window",
      "iterations",   "burn_in",        "replicates",     "datasets",         "theta0",
      "seed",         "out_dir",        "workers",        "pilot_sampler",    "pilot_gamma",
      "pilot_iterations", "pilot_burn_in", "tune_criterion", "target_low",   "target_high",
      "grid_phi",     "grid_sigma_v"};
  return keys;
}

bool is_lgss_name(const std::string& name) { return name == "lgss" || name == "lgss-rescaled"; }

std::string csv_value(double v) { return std::isfinite(v) ? format_double(v) : (v > 0 ? "inf" : "-inf"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

/// Chain for one (sampler, gamma, filter, N, lag) combination.
ChainTrace run_sampler(const ExperimentConfig& cfg, const SsmModel& model,
                       const std::vector<double>& y, const SamplerSpec& sampler, double gamma,
                       FilterVariant filter, int particles, int lag, const Vector& theta0,
                       std::uint64_t seed, const Matrix* preconditioner, int iterations,
                       int burn_in) {
  ChainConfig chain;
  const int d = model.dim();
  switch (sampler.policy) {
    case HessianPolicy::kStandard:
      chain.proposal = ProposalSpec::isotropic(sampler.kind, gamma, d);
      break;
    case HessianPolicy::kHybrid:
      chain.proposal = ProposalSpec::hybrid(gamma, d, cfg.hybrid_window, burn_in);
      break;
    case HessianPolicy::kPreconditioned:
      if (!preconditioner) throw ConfigError("preconditioned sampler without a preconditioner");
      chain.proposal = ProposalSpec::preconditioned(sampler.kind, gamma, *preconditioner);
      break;
  }
  chain.filter.particles = particles;
  chain.filter.variant = filter;
  chain.lag = lag;
  chain.iterations = iterations;
  chain.theta0 = theta0;
  chain.seed = seed;
  return run_chain(model, y, chain);
}

std::vector<double> chain_iacts(const ChainTrace& trace, int burn_in) {
  std::vector<double> out;
  for (Eigen::Index j = 0; j < trace.samples.cols(); ++j) {
    try {
      out.push_back(iact(trace.column(static_cast<int>(j), burn_in)).iact);
    } catch (const DegenerateChainError&) {
      out.push_back(std::numeric_limits<double>::infinity());
    }
  }
  return out;
}

struct Bundle {
  explicit Bundle(fs::path directory) : dir(std::move(directory)) {}

  fs::path dir;
  nlohmann::json outputs = nlohmann::json::array();
  RunReport report;

  fs::path file(const std::string& relative, const std::string& artifact, const std::string& role) {
    outputs.push_back({{"file", relative}, {"artifact", artifact}, {"role", role}});
    report.outputs.push_back(relative);
    const fs::path path = dir / relative;
    ensure_dir(path.parent_path());
    return path;
  }
};

void write_manifest(const ExperimentConfig& cfg, Bundle& bundle, const nlohmann::json& extra) {
  nlohmann::json manifest;
  manifest["experiment"] = cfg.experiment;
  manifest["seed"] = cfg.seed;
  manifest["seed_rule"] =
      "job i uses derive_seed(seed, i); dataset k uses derive_seed(seed, 2^40 + k); "
      "pilot uses derive_seed(seed, 2^41)";
  nlohmann::json config = nlohmann::json::object();
  for (const auto& [k, v] : cfg.raw.values()) config[k] = v;
  manifest["config"] = config;
  manifest["config_text"] = cfg.raw.text();
  manifest["versions"] = {{"pmcmc", "1.0.0"},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"boost", BOOST_LIB_VERSION},
                          {"compiler", __VERSION__}};
  manifest["outputs"] = bundle.outputs;
  manifest["warnings"] = bundle.report.warnings;
  manifest["errors"] = bundle.report.errors;
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream out(bundle.dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << manifest.dump(2) << '\n';
  bundle.report.outputs.push_back("manifest.json");
}

void record_errors(Bundle& bundle, const std::vector<std::string>& errors,
                   const std::function<std::string(int)>& describe) {
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      bundle.report.errors.push_back(describe(static_cast<int>(i)) + ": " + errors[i]);
    }
  }
}

std::string param_header(const std::vector<std::string>& names, const std::string& prefix) {
  std::string out;
  for (const std::string& n : names) out += "," + prefix + n;
  return out;
}

// ---------------------------------------------------------------------------

RunReport run_error_sweep(const ExperimentConfig& cfg, int workers) {
  const auto model_ptr = make_model(cfg.model, cfg.sigma_e);
  const auto* model = dynamic_cast<const LgssModel*>(model_ptr.get());
  if (!model) throw ConfigError("error-sweep needs an LGSS model");
  Bundle bundle(cfg.out_dir);
  ensure_dir(bundle.dir);

  const std::vector<double> y = experiment_dataset(cfg, *model, 0, &bundle.report.warnings);
  const Vector theta = experiment_theta0(cfg, *model);
  const double true_ll = kalman_loglik(model->params(theta), y);
  const double true_grad = exact_gradient(*model, theta, y)[0];

  const int nf = static_cast<int>(cfg.filters.size());
  const int nn = static_cast<int>(cfg.particles.size());
  const int nl = static_cast<int>(cfg.lags.size());
  const int R = cfg.replicates;
  const int jobs = nf * nn * R;

  std::vector<double> ll(jobs);
  std::vector<std::vector<double>> grad(jobs, std::vector<double>(nl));
  const auto errors = parallel_for(jobs, workers, [&](int j) {
    const int f = j / (nn * R);
    const int n = (j / R) % nn;
    FilterConfig fc;
    fc.particles = cfg.particles[n];
    fc.variant = cfg.filters[f];
    Rng rng(derive_seed(cfg.seed, j));
    const FilterOutput out = run_filter(*model, theta, y, fc, rng);
    ll[j] = out.log_likelihood;
    for (int l = 0; l < nl; ++l) {
      grad[j][l] = estimate_gradient(*model, theta, out, cfg.lags[l])[0];
    }
  });
  record_errors(bundle, errors, [&](int j) {
    return filter_label(cfg.filters[j / (nn * R)]) + " N=" +
           std::to_string(cfg.particles[(j / R) % nn]) + " replicate " + std::to_string(j % R);
  });

  std::ofstream raw = open_csv(bundle.file("error_sweep.csv", "figure-1,figure-2", "per-replicate"));
  raw << "filter,N,lag,replicate,loglik,grad_phi,log_l1_loglik,log_l1_grad_phi,clamped\n";
  std::ofstream fig1 = open_csv(bundle.file("figure1.csv", "figure-1", "plot-data"));
  fig1 << "filter,N,replicate,log_l1_loglik,log_l1_grad_phi\n";
  std::ofstream fig2 = open_csv(bundle.file("figure2.csv", "figure-2", "plot-data"));
  fig2 << "filter,N,lag,replicate,log_l1_grad_phi\n";
  std::ofstream summary =
      open_csv(bundle.file("error_sweep_summary.csv", "figure-1,figure-2", "aggregate"));
  summary << "filter,N,lag,replicates,median_log_l1_loglik,iqr_log_l1_loglik,"
             "median_log_l1_grad_phi,iqr_log_l1_grad_phi\n";

  for (int f = 0; f < nf; ++f) {
    for (int n = 0; n < nn; ++n) {
      for (int l = 0; l < nl; ++l) {
        std::vector<double> e_ll;
        std::vector<double> e_g;
        for (int r = 0; r < R; ++r) {
          const int j = (f * nn + n) * R + r;
          if (!errors[j].empty()) continue;
          const LogL1Error a = log_l1_error(ll[j], true_ll);
          const LogL1Error b = log_l1_error(grad[j][l], true_grad);
          const std::string label = filter_label(cfg.filters[f]);
          raw << label << ',' << cfg.particles[n] << ',' << cfg.lags[l] << ',' << r << ','
              << format_double(ll[j]) << ',' << format_double(grad[j][l]) << ','
              << format_double(a.value) << ',' << format_double(b.value) << ','
              << (a.clamped || b.clamped ? 1 : 0) << '\n';
          if (l == 0) {
            fig1 << label << ',' << cfg.particles[n] << ',' << r << ',' << format_double(a.value)
                 << ',' << format_double(b.value) << '\n';
          }
          fig2 << label << ',' << cfg.particles[n] << ',' << cfg.lags[l] << ',' << r << ','
               << format_double(b.value) << '\n';
          e_ll.push_back(a.value);
          e_g.push_back(b.value);
        }
        if (e_ll.empty()) continue;
        summary << filter_label(cfg.filters[f]) << ',' << cfg.particles[n] << ',' << cfg.lags[l]
                << ',' << e_ll.size() << ',' << format_double(median(e_ll)) << ','
                << format_double(iqr(e_ll)) << ',' << format_double(median(e_g)) << ','
                << format_double(iqr(e_g)) << '\n';
      }
    }
  }
  write_observations_csv(bundle.file("observations.csv", "figure-1,figure-2", "data"), y);
  write_manifest(cfg, bundle,
                 {{"truth", {{"log_likelihood", true_ll}, {"grad_phi", true_grad}}}});
  return bundle.report;
}

// ---------------------------------------------------------------------------

RunReport run_burnin_demo(const ExperimentConfig& cfg, int workers) {
  Bundle bundle(cfg.out_dir);
  ensure_dir(bundle.dir);
  std::vector<std::unique_ptr<SsmModel>> models;
  for (const std::string& name : cfg.models) {
    if (!is_lgss_name(name)) throw ConfigError("burnin-demo needs LGSS models");
    models.push_back(make_model(name, cfg.sigma_e));
  }
  const std::vector<double> y =
      experiment_dataset(cfg, *models.front(), 0, &bundle.report.warnings);

  const int nm = static_cast<int>(models.size());
  const int ns = static_cast<int>(cfg.samplers.size());
  std::vector<ChainTrace> traces(nm * ns);
  const auto errors = parallel_for(nm * ns, workers, [&](int j) {
    const int m = j / ns;
    const int s = j % ns;
    traces[j] = run_sampler(cfg, *models[m], y, cfg.samplers[s], cfg.gamma_for(s),
                            cfg.filters.front(), cfg.particles.front(), cfg.lags.front(),
                            experiment_theta0(cfg, *models[m]), derive_seed(cfg.seed, j), nullptr,
                            cfg.iterations, cfg.burn_in);
  });
  record_errors(bundle, errors, [&](int j) {
    return cfg.models[j / ns] + " " + cfg.samplers[j % ns].label;
  });

  std::ofstream fig = open_csv(bundle.file("figure3_traces.csv", "figure-3", "plot-data"));
  fig << "model,sampler,iteration,accepted,phi,sigma_v\n";
  std::ofstream summary = open_csv(bundle.file("burnin_summary.csv", "figure-3", "aggregate"));
  summary << "model,sampler,gamma,iterations,acceptance_rate,filter_runs\n";
  for (int j = 0; j < nm * ns; ++j) {
    if (!errors[j].empty()) continue;
    const auto& model = dynamic_cast<const LgssModel&>(*models[j / ns]);
    const std::string& mname = cfg.models[j / ns];
    const std::string& sname = cfg.samplers[j % ns].label;
    const ChainTrace& t = traces[j];
    write_trace_csv(bundle.file("traces/" + mname + "_" + sname + ".csv", "figure-3", "trace"), t);
    auto emit = [&](int k, const Vector& theta, int accepted) {
      const LgssParams p = model.params(theta);
      fig << mname << ',' << sname << ',' << k << ',' << accepted << ',' << format_double(p.phi)
          << ',' << format_double(p.sigma_v) << '\n';
    };
    emit(0, t.theta0, 1);
    for (int k = 0; k < t.iterations(); ++k) {
      emit(k + 1, Vector(t.samples.row(k).transpose()), t.accepted[k]);
    }
    summary << mname << ',' << sname << ',' << format_double(cfg.gamma_for(j % ns)) << ','
            << t.iterations() << ',' << format_double(t.acceptance_rate(0)) << ','
            << t.filter_runs << '\n';
  }

  // Exact log-posterior over (phi, sigma_v) for contour overlays.
  std::ofstream grid = open_csv(bundle.file("figure3_grid.csv", "figure-3", "plot-data"));
  grid << "phi,sigma_v,log_posterior\n";
  const GridAxis phi_axis{cfg.grid_phi[0], cfg.grid_phi[1], static_cast<int>(cfg.grid_phi[2])};
  const GridAxis sv_axis{cfg.grid_sigma_v[0], cfg.grid_sigma_v[1],
                         static_cast<int>(cfg.grid_sigma_v[2])};
  for (int a = 0; a < phi_axis.cells; ++a) {
    for (int b = 0; b < sv_axis.cells; ++b) {
      const LgssParams p{phi_axis.center(a), sv_axis.center(b), cfg.sigma_e};
      const bool inside = std::abs(p.phi) < 1.0 && p.sigma_v > 0.0;
      const double lp = inside ? kalman_loglik(p, y) : -std::numeric_limits<double>::infinity();
      grid << format_double(p.phi) << ',' << format_double(p.sigma_v) << ',' << csv_value(lp)
           << '\n';
    }
  }
  write_observations_csv(bundle.file("observations.csv", "figure-3", "data"), y);
  write_manifest(cfg, bundle, nlohmann::json::object());
  return bundle.report;
}

// ---------------------------------------------------------------------------

void write_chain_table(std::ofstream& out, const std::vector<std::string>& names) {
  out << "dataset,sampler,filter,N,chain,gamma,acceptance,filter_runs" << param_header(names, "iact_")
      << param_header(names, "mean_") << '\n';
}

void write_chain_row(std::ofstream& out, int dataset, const std::string& sampler,
                     const std::string& filter, int N, int chain, double gamma,
                     const ChainTrace& t, int burn_in) {
  out << dataset << ',' << sampler << ',' << filter << ',' << N << ',' << chain << ','
      << format_double(gamma) << ',' << format_double(t.acceptance_rate(burn_in)) << ','
      << t.filter_runs;
  for (double v : chain_iacts(t, burn_in)) out << ',' << csv_value(v);
  for (Eigen::Index j = 0; j < t.samples.cols(); ++j) {
    const std::vector<double> c = t.column(static_cast<int>(j), burn_in);
    double s = 0.0;
    for (double v : c) s += v;
    out << ',' << format_double(s / c.size());
  }
  out << '\n';
}

RunReport run_lgss_iact(const ExperimentConfig& cfg, int workers) {
  const auto model = make_model(cfg.model, cfg.sigma_e);
  Bundle bundle(cfg.out_dir);
  ensure_dir(bundle.dir);
  const int D = cfg.datasets;
  std::vector<std::vector<double>> data(D);
  for (int k = 0; k < D; ++k) data[k] = experiment_dataset(cfg, *model, k, &bundle.report.warnings);
  const Vector theta0 = experiment_theta0(cfg, *model);

  const int ns = static_cast<int>(cfg.samplers.size());
  const int nf = static_cast<int>(cfg.filters.size());
  const int nn = static_cast<int>(cfg.particles.size());
  const int combos = ns * nf * nn;
  const int jobs = combos * D;
  std::vector<ChainTrace> traces(jobs);
  auto decode = [&](int j, int& k, int& s, int& f, int& n) {
    k = j % D;
    const int c = j / D;
    s = c / (nf * nn);
    f = (c / nn) % nf;
    n = c % nn;
  };
  const auto errors = parallel_for(jobs, workers, [&](int j) {
    int k, s, f, n;
    decode(j, k, s, f, n);
    traces[j] = run_sampler(cfg, *model, data[k], cfg.samplers[s], cfg.gamma_for(s),
                            cfg.filters[f], cfg.particles[n], cfg.lags.front(), theta0,
                            derive_seed(cfg.seed, j), nullptr, cfg.iterations, cfg.burn_in);
  });
  record_errors(bundle, errors, [&](int j) {
    int k, s, f, n;
    decode(j, k, s, f, n);
    return "dataset " + std::to_string(k) + " " + cfg.samplers[s].label + " " +
           filter_label(cfg.filters[f]) + " N=" + std::to_string(cfg.particles[n]);
  });

  const auto names = model->param_names();
  std::ofstream chains = open_csv(bundle.file("chains.csv", "table-1", "per-chain"));
  write_chain_table(chains, names);
  std::vector<SummaryRow> rows;
  for (int c = 0; c < combos; ++c) {
    std::vector<ChainTrace> ok;
    for (int k = 0; k < D; ++k) {
      const int j = c * D + k;
      if (!errors[j].empty()) continue;
      int kk, s, f, n;
      decode(j, kk, s, f, n);
      const std::string stem = "d" + std::to_string(k) + "_" + cfg.samplers[s].label + "_" +
                               filter_label(cfg.filters[f]) + "_N" +
                               std::to_string(cfg.particles[n]);
      write_trace_csv(bundle.file("traces/" + stem + ".csv", "table-1", "trace"), traces[j]);
      write_chain_row(chains, k, cfg.samplers[s].label, filter_label(cfg.filters[f]),
                      cfg.particles[n], 0, cfg.gamma_for(s), traces[j], cfg.burn_in);
      ok.push_back(std::move(traces[j]));
    }
    if (ok.empty()) continue;
    const int s = c / (nf * nn);
    const int f = (c / nn) % nf;
    const int n = c % nn;
    rows.push_back({cfg.samplers[s].label, filter_label(cfg.filters[f]), cfg.particles[n],
                    summarize(ok, cfg.burn_in)});
  }
  write_summary_csv(rows, bundle.file("table1.csv", "table-1", "aggregate").string());
  std::ofstream(bundle.file("table1.txt", "table-1", "aggregate")) << format_summary_table(rows);
  for (int k = 0; k < D; ++k) {
    write_observations_csv(
        bundle.file("data/dataset_" + std::to_string(k) + ".csv", "table-1", "data"), data[k]);
  }
  write_manifest(cfg, bundle, nlohmann::json::object());
  return bundle.report;
}

// ---------------------------------------------------------------------------

Matrix pilot_covariance(const ExperimentConfig& cfg, const SsmModel& model,
                        const std::vector<double>& y, const Vector& theta0) {
  const SamplerSpec pilot = parse_sampler(cfg.pilot_sampler);
  if (pilot.policy == HessianPolicy::kPreconditioned) {
    throw ConfigError("pilot sampler cannot itself be preconditioned");
  }
  const ChainTrace t = run_sampler(cfg, model, y, pilot, cfg.pilot_gamma, cfg.filters.front(),
                                   cfg.particles.front(), cfg.lags.front(), theta0,
                                   derive_seed(cfg.seed, kPilotStream), nullptr,
                                   cfg.pilot_iterations, cfg.pilot_burn_in);
  const Eigen::MatrixXd post =
      t.samples.bottomRows(t.iterations() - cfg.pilot_burn_in);
  const Eigen::RowVectorXd mean = post.colwise().mean();
  const Eigen::MatrixXd centered = post.rowwise() - mean;
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(post.rows() - 1);
  if (!is_positive_definite(cov)) throw NumericalError("pilot covariance is not positive definite");
  return cov;
}

RunReport run_earthquake(const ExperimentConfig& cfg, int workers) {
  const auto model = make_model(cfg.model, cfg.sigma_e);
  Bundle bundle(cfg.out_dir);
  ensure_dir(bundle.dir);
  const std::vector<double> y = experiment_dataset(cfg, *model, 0, &bundle.report.warnings);
  const Vector theta0 = experiment_theta0(cfg, *model);

  std::optional<Matrix> preconditioner;
  nlohmann::json extra = nlohmann::json::object();
  const bool needs_pilot =
      std::any_of(cfg.samplers.begin(), cfg.samplers.end(),
                  [](const SamplerSpec& s) { return s.policy == HessianPolicy::kPreconditioned; });
  if (needs_pilot) {
    preconditioner = pilot_covariance(cfg, *model, y, theta0);
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < preconditioner->rows(); ++r) {
      std::vector<double> row(preconditioner->cols());
      for (Eigen::Index c = 0; c < preconditioner->cols(); ++c) row[c] = (*preconditioner)(r, c);
      rows.push_back(row);
    }
    extra["preconditioner"] = rows;
  }

  const int ns = static_cast<int>(cfg.samplers.size());
  const int R = cfg.replicates;
  std::vector<ChainTrace> traces(ns * R);
  const auto errors = parallel_for(ns * R, workers, [&](int j) {
    const int s = j / R;
    traces[j] = run_sampler(cfg, *model, y, cfg.samplers[s], cfg.gamma_for(s),
                            cfg.filters.front(), cfg.particles.front(), cfg.lags.front(), theta0,
                            derive_seed(cfg.seed, j), preconditioner ? &*preconditioner : nullptr,
                            cfg.iterations, cfg.burn_in);
  });
  record_errors(bundle, errors, [&](int j) {
    return cfg.samplers[j / R].label + " chain " + std::to_string(j % R);
  });

  const auto names = model->param_names();
  std::ofstream chains = open_csv(bundle.file("chains.csv", "table-2", "per-chain"));
  write_chain_table(chains, names);
  std::ofstream fig = open_csv(bundle.file("figure4.csv", "figure-4", "plot-data"));
  fig << "sampler,chain,iteration,burn_in" << param_header(names, "") << '\n';
  std::vector<SummaryRow> rows;
  for (int s = 0; s < ns; ++s) {
    std::vector<ChainTrace> ok;
    for (int r = 0; r < R; ++r) {
      const int j = s * R + r;
      if (!errors[j].empty()) continue;
      const std::string& label = cfg.samplers[s].label;
      const ChainTrace& t = traces[j];
      write_trace_csv(
          bundle.file("traces/" + label + "_chain" + std::to_string(r) + ".csv", "table-2", "trace"),
          t);
      write_chain_row(chains, 0, label, filter_label(cfg.filters.front()), cfg.particles.front(),
                      r, cfg.gamma_for(s), t, cfg.burn_in);
      if (ok.empty()) {
        for (int k = 0; k < t.iterations(); ++k) {
          fig << label << ',' << r << ',' << k + 1 << ',' << (k < cfg.burn_in ? 1 : 0);
          for (Eigen::Index c = 0; c < t.samples.cols(); ++c) fig << ',' << format_double(t.samples(k, c));
          fig << '\n';
        }
      }
      if (t.hybrid_rejections > 0 || t.hybrid_replacements > 0) {
        bundle.report.warnings.push_back(
            label + " chain " + std::to_string(r) + ": " + std::to_string(t.hybrid_rejections) +
            " non-PD rejections, " + std::to_string(t.hybrid_replacements) +
            " covariance replacements");
      }
      ok.push_back(std::move(traces[j]));
    }
    if (ok.empty()) continue;
    rows.push_back({cfg.samplers[s].label, filter_label(cfg.filters.front()),
                    cfg.particles.front(), summarize(ok, cfg.burn_in)});
  }
  write_summary_csv(rows, bundle.file("table2.csv", "table-2", "aggregate").string());
  std::ofstream(bundle.file("table2.txt", "table-2", "aggregate")) << format_summary_table(rows);
  write_manifest(cfg, bundle, extra);
  return bundle.report;
}

// ---------------------------------------------------------------------------

RunReport run_sensitivity(const ExperimentConfig& cfg, int workers) {
  const auto model = make_model(cfg.model, cfg.sigma_e);
  Bundle bundle(cfg.out_dir);
  ensure_dir(bundle.dir);
  const std::vector<double> y = experiment_dataset(cfg, *model, 0, &bundle.report.warnings);
  const Vector theta0 = experiment_theta0(cfg, *model);

  struct Point {
    std::string sweep;
    int sampler;
    double gamma;
    int lag;
    int replicate;
  };
  std::vector<Point> points;
  const int ns = static_cast<int>(cfg.samplers.size());
  for (int s = 0; s < ns; ++s) {
    for (double g : cfg.gamma_grid) {
      for (int r = 0; r < cfg.replicates; ++r) points.push_back({"gamma", s, g, cfg.lags.front(), r});
    }
    for (int l : cfg.lag_grid) {
      for (int r = 0; r < cfg.replicates; ++r) points.push_back({"lag", s, cfg.gamma_for(s), l, r});
    }
  }
  const int jobs = static_cast<int>(points.size());
  std::vector<ChainTrace> traces(jobs);
  const auto errors = parallel_for(jobs, workers, [&](int j) {
    const Point& p = points[j];
    traces[j] = run_sampler(cfg, *model, y, cfg.samplers[p.sampler], p.gamma, cfg.filters.front(),
                            cfg.particles.front(), p.lag, theta0, derive_seed(cfg.seed, j),
                            nullptr, cfg.iterations, cfg.burn_in);
  });
  record_errors(bundle, errors, [&](int j) {
    const Point& p = points[j];
    return cfg.samplers[p.sampler].label + " gamma=" + format_double(p.gamma) +
           " lag=" + std::to_string(p.lag) + " replicate " + std::to_string(p.replicate);
  });

  const auto names = model->param_names();
  std::ofstream fig = open_csv(bundle.file("figure5.csv", "figure-5", "plot-data"));
  fig << "sweep,sampler,gamma,lag,replicate,acceptance" << param_header(names, "iact_") << '\n';
  std::ofstream summary = open_csv(bundle.file("figure5_summary.csv", "figure-5", "aggregate"));
  summary << "sweep,sampler,gamma,lag,replicates,median_acceptance"
          << param_header(names, "median_iact_") << '\n';
  for (int start = 0; start < jobs; start += cfg.replicates) {
    std::vector<double> acc;
    std::vector<std::vector<double>> iacts(names.size());
    for (int j = start; j < start + cfg.replicates; ++j) {
      if (!errors[j].empty()) continue;
      const Point& p = points[j];
      const double a = traces[j].acceptance_rate(cfg.burn_in);
      const std::vector<double> ia = chain_iacts(traces[j], cfg.burn_in);
      fig << p.sweep << ',' << cfg.samplers[p.sampler].label << ',' << format_double(p.gamma)
          << ',' << p.lag << ',' << p.replicate << ',' << format_double(a);
      for (std::size_t c = 0; c < ia.size(); ++c) {
        fig << ',' << csv_value(ia[c]);
        iacts[c].push_back(ia[c]);
      }
      fig << '\n';
      acc.push_back(a);
    }
    if (acc.empty()) continue;
    const Point& p = points[start];
    summary << p.sweep << ',' << cfg.samplers[p.sampler].label << ',' << format_double(p.gamma)
            << ',' << p.lag << ',' << acc.size() << ',' << format_double(median(acc));
    for (const auto& v : iacts) summary << ',' << csv_value(median(v));
    summary << '\n';
  }
  write_manifest(cfg, bundle, nlohmann::json::object());
  return bundle.report;
}

}  // namespace

// ---------------------------------------------------------------------------

Config Config::parse(const std::string& text) {
  Config config;
  config.text_ = text;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (config.values_.count(key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    config.values_[key] = value;
  }
  return config;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<int>(key, it->second);
}

std::uint64_t Config::get_uint64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::uint64_t>(key, it->second);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  auto items = split_list(it->second);
  if (items.empty()) throw ConfigError("key '" + key + "': empty list");
  return items;
}

std::vector<int> Config::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  for (const std::string& s : get_strings(key, {})) out.push_back(parse_number<int>(key, s));
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const std::string& s : get_strings(key, {})) out.push_back(parse_number<double>(key, s));
  return out;
}

SamplerSpec parse_sampler(const std::string& label) {
  SamplerSpec s;
  s.label = label;
  const std::string base = label.substr(0, 4);
  if (base == "PMH0") {
    s.kind = ProposalKind::kPmh0;
  } else if (base == "PMH1") {
    s.kind = ProposalKind::kPmh1;
  } else if (base == "PMH2") {
    s.kind = ProposalKind::kPmh2;
  } else {
    throw ConfigError("unknown sampler '" + label + "'");
  }
  const std::string suffix = label.substr(4);
  if (suffix.empty()) {
    s.policy = HessianPolicy::kStandard;
  } else if (suffix == "-hybrid" && s.kind == ProposalKind::kPmh2) {
    s.policy = HessianPolicy::kHybrid;
  } else if (suffix == "-pre" && s.kind != ProposalKind::kPmh2) {
    s.policy = HessianPolicy::kPreconditioned;
  } else {
    throw ConfigError("unknown sampler '" + label + "'");
  }
  return s;
}

FilterVariant parse_filter(const std::string& name) {
  if (name == "bPF" || name == "bootstrap") return FilterVariant::kBootstrap;
  if (name == "faPF" || name == "fully-adapted") return FilterVariant::kFullyAdapted;
  throw ConfigError("unknown filter '" + name + "'");
}

std::string filter_label(FilterVariant variant) {
  return variant == FilterVariant::kBootstrap ? "bPF" : "faPF";
}

std::unique_ptr<SsmModel> make_model(const std::string& name, double sigma_e) {
  if (name == "lgss") return std::make_unique<LgssModel>(make_lgss(sigma_e, false));
  if (name == "lgss-rescaled") return std::make_unique<LgssModel>(make_lgss(sigma_e, true));
  if (name == "poisson") return std::make_unique<PoissonCountModel>(make_poisson_model());
  throw ConfigError("unknown model '" + name + "'");
}

ExperimentConfig ExperimentConfig::from(const Config& raw) {
  for (const auto& [key, value] : raw.values()) {
    if (!known_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
  }
  ExperimentConfig c;
  c.raw = raw;
  c.experiment = raw.get_string("experiment", "");
  static const std::set<std::string> experiments{"error-sweep", "burnin-demo", "lgss-iact",
                                                 "earthquake", "sensitivity", "tune"};
  if (!experiments.count(c.experiment)) {
    throw ConfigError("experiment must be one of error-sweep, burnin-demo, lgss-iact, "
                      "earthquake, sensitivity, tune");
  }
  const bool quake = c.experiment == "earthquake";
  c.model = raw.get_string("model", quake ? "poisson" : "lgss");
  c.models = raw.get_strings("models", c.experiment == "burnin-demo"
                                           ? std::vector<std::string>{"lgss", "lgss-rescaled"}
                                           : std::vector<std::string>{c.model});
  for (const std::string& m : c.models) make_model(m, 1.0);
  const bool poisson = c.model == "poisson";
  c.sigma_e = raw.get_double("sigma_e", 0.1);
  if (!(c.sigma_e > 0.0)) throw ConfigError("sigma_e must be positive");
  c.T = raw.get_int("T", 100);
  if (c.T < 1) throw ConfigError("T must be at least 1");
  c.true_theta = raw.get_doubles("true_theta", poisson ? std::vector<double>{0.88, 0.15, 16.58}
                                                       : std::vector<double>{0.5, 1.0});
  c.data_path = raw.get_string("data", quake ? "data/earthquakes.csv" : "");
  std::vector<std::string> filters =
      raw.get_strings("filter", {poisson ? std::string("bPF") : std::string("faPF")});
  c.filters.clear();
  for (const std::string& f : filters) c.filters.push_back(parse_filter(f));
  if (poisson && std::count(c.filters.begin(), c.filters.end(), FilterVariant::kFullyAdapted)) {
    throw ConfigError("the poisson model supports only the bootstrap filter");
  }
  c.particles = raw.get_ints("particles", {100});
  for (int n : c.particles) {
    if (n < 1) throw ConfigError("particles must be at least 1");
  }
  c.lags = raw.get_ints("lag", {12});
  for (int l : c.lags) {
    if (l < 1) throw ConfigError("lag must be at least 1");
  }
  std::vector<std::string> samplers = raw.get_strings("samplers", {"PMH0", "PMH1", "PMH2"});
  for (const std::string& s : samplers) c.samplers.push_back(parse_sampler(s));
  c.gammas = raw.get_doubles("gamma", {});
  c.gamma_grid = raw.get_doubles("gamma_grid", {});
  c.lag_grid = raw.get_ints("lag_grid", {});
  c.hybrid_window = raw.get_int("hybrid_window", 2500);
  c.iterations = raw.get_int("iterations", 1000);
  c.burn_in = raw.get_int("burn_in", 0);
  c.replicates = raw.get_int("replicates", 1);
  c.datasets = raw.get_int("datasets", 1);
  c.theta0 = raw.get_doubles("theta0", c.true_theta);
  c.seed = raw.get_uint64("seed", 1);
  c.out_dir = raw.get_string("out_dir", "out");
  c.workers = raw.get_int("workers", 0);
  c.pilot_sampler = raw.get_string("pilot_sampler", "PMH2-hybrid");
  c.pilot_gamma = raw.get_double("pilot_gamma", 1.0);
  c.pilot_iterations = raw.get_int("pilot_iterations", 5000);
  c.pilot_burn_in = raw.get_int("pilot_burn_in", 2500);
  c.tune_criterion = raw.get_string("tune_criterion", "acceptance");
  c.target_low = raw.get_double("target_low", 0.7);
  c.target_high = raw.get_double("target_high", 0.8);
  c.grid_phi = raw.get_doubles("grid_phi", c.grid_phi);
  c.grid_sigma_v = raw.get_doubles("grid_sigma_v", c.grid_sigma_v);

  if (c.iterations < 1) throw ConfigError("iterations must be at least 1");
  if (c.burn_in < 0 || c.burn_in >= c.iterations) {
    throw ConfigError("burn_in must be in [0, iterations)");
  }
  if (c.replicates < 1 || c.datasets < 1) throw ConfigError("replicates and datasets must be >= 1");
  if (c.workers < 0) throw ConfigError("workers must be non-negative");
  const int dim = make_model(c.model, c.sigma_e)->dim();
  const int natural_dim = poisson ? 3 : 2;
  if (static_cast<int>(c.true_theta.size()) != natural_dim ||
      static_cast<int>(c.theta0.size()) != natural_dim) {
    throw ConfigError("true_theta and theta0 need " + std::to_string(dim) + " values");
  }
  if (!c.gammas.empty() && c.gammas.size() != 1 && c.gammas.size() != c.samplers.size()) {
    throw ConfigError("gamma needs one value or one per sampler");
  }
  for (double g : c.gammas) {
    if (!(g > 0.0)) throw ConfigError("gamma must be positive");
  }
  const bool chains = c.experiment != "error-sweep";
  if (chains && c.experiment != "tune" && c.gammas.empty()) {
    throw ConfigError("gamma is required for chain experiments");
  }
  if (c.experiment == "tune" || c.experiment == "sensitivity") {
    if (c.gamma_grid.empty() && c.experiment == "tune") throw ConfigError("tune needs gamma_grid");
  }
  if (c.hybrid_window < 2) throw ConfigError("hybrid_window must be at least 2");
  if (c.pilot_burn_in < 0 || c.pilot_burn_in + 2 > c.pilot_iterations) {
    throw ConfigError("pilot_burn_in must leave at least two pilot samples");
  }
  if (c.tune_criterion != "acceptance" && c.tune_criterion != "iact") {
    throw ConfigError("tune_criterion must be acceptance or iact");
  }
  if (!(c.target_low < c.target_high)) throw ConfigError("target_low must be below target_high");
  if (c.grid_phi.size() != 3 || c.grid_sigma_v.size() != 3 || c.grid_phi[2] < 1 ||
      c.grid_sigma_v[2] < 1) {
    throw ConfigError("grid_phi and grid_sigma_v take lower,upper,cells");
  }
  for (int l : c.lags) {
    if (l > c.T && c.data_path.empty()) throw ConfigError("lag must not exceed T");
  }
  for (int l : c.lag_grid) {
    if (l < 1) throw ConfigError("lag_grid entries must be at least 1");
  }
  return c;
}

double ExperimentConfig::gamma_for(int sampler) const {
  if (gammas.empty()) throw ConfigError("no gamma configured");
  return gammas.size() == 1 ? gammas.front() : gammas.at(sampler);
}

int resolve_workers(int requested, int config_value, int jobs) {
  int workers = requested;
  if (workers <= 0) {
    if (const char* env = std::getenv("PMCMC_WORKERS")) {
      try {
        workers = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("PMCMC_WORKERS is not an integer: ") + env);
      }
      if (workers < 1) throw ConfigError("PMCMC_WORKERS must be positive");
    }
  }
  if (workers <= 0) workers = config_value;
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::max(1, std::min(workers, std::max(1, jobs)));
}

std::vector<std::string> parallel_for(int n, int workers, const std::function<void(int)>& job) {
  std::vector<std::string> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const int threads = std::max(1, std::min(workers, n));
  if (threads == 1) {
    worker();
    return errors;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return errors;
}

std::vector<double> experiment_dataset(const ExperimentConfig& config, const SsmModel& model, int k,
                                       std::vector<std::string>* warnings) {
  if (!config.data_path.empty()) {
    if (k != 0) throw ConfigError("a data file provides a single dataset");
    if (dynamic_cast<const PoissonCountModel*>(&model)) {
      EarthquakeData data = load_earthquake_data(config.data_path);
      if (warnings) warnings->insert(warnings->end(), data.warnings.begin(), data.warnings.end());
      return data.counts;
    }
    return read_observations_csv(config.data_path);
  }
  Vector truth(static_cast<Eigen::Index>(config.true_theta.size()));
  for (std::size_t j = 0; j < config.true_theta.size(); ++j) truth[j] = config.true_theta[j];
  if (const auto* lgss = dynamic_cast<const LgssModel*>(&model)) {
    truth = lgss->theta({truth[0], truth[1], lgss->sigma_e()});
  }
  Rng rng(derive_seed(config.seed, kDatasetStream + static_cast<std::uint64_t>(k)));
  return simulate(model, truth, config.T, rng).observations;
}

Vector experiment_theta0(const ExperimentConfig& config, const SsmModel& model) {
  Vector theta(static_cast<Eigen::Index>(config.theta0.size()));
  for (std::size_t j = 0; j < config.theta0.size(); ++j) theta[j] = config.theta0[j];
  if (const auto* lgss = dynamic_cast<const LgssModel*>(&model)) {
    theta = lgss->theta({theta[0], theta[1], lgss->sigma_e()});
  }
  if (!model.in_support(theta)) throw ConfigError("theta0 is outside the prior support");
  return theta;
}

RunReport run_experiment(const ExperimentConfig& config, int workers) {
  if (config.experiment == "error-sweep") return run_error_sweep(config, workers);
  if (config.experiment == "burnin-demo") return run_burnin_demo(config, workers);
  if (config.experiment == "lgss-iact") return run_lgss_iact(config, workers);
  if (config.experiment == "earthquake") return run_earthquake(config, workers);
  if (config.experiment == "sensitivity") {
    if (config.gamma_grid.empty() && config.lag_grid.empty()) {
      throw ConfigError("sensitivity needs gamma_grid and/or lag_grid");
    }
    return run_sensitivity(config, workers);
  }
  throw ConfigError("experiment '" + config.experiment + "' is not runnable; use tune");
}

TuneReport tune_step(const ExperimentConfig& cfg, int workers) {
  if (cfg.gamma_grid.empty()) throw ConfigError("tune needs gamma_grid");
  const auto model = make_model(cfg.model, cfg.sigma_e);
  TuneReport report;
  const std::vector<double> y = experiment_dataset(cfg, *model, 0, &report.warnings);
  const Vector theta0 = experiment_theta0(cfg, *model);
  const int ns = static_cast<int>(cfg.samplers.size());
  const int ng = static_cast<int>(cfg.gamma_grid.size());
  const int R = cfg.replicates;
  if (std::any_of(cfg.samplers.begin(), cfg.samplers.end(),
                  [](const SamplerSpec& s) { return s.policy == HessianPolicy::kPreconditioned; })) {
    throw ConfigError("tune does not support preconditioned samplers");
  }
  std::vector<ChainTrace> traces(ns * ng * R);
  const auto errors = parallel_for(ns * ng * R, workers, [&](int j) {
    const int s = j / (ng * R);
    const int g = (j / R) % ng;
    traces[j] = run_sampler(cfg, *model, y, cfg.samplers[s], cfg.gamma_grid[g],
                            cfg.filters.front(), cfg.particles.front(), cfg.lags.front(), theta0,
                            derive_seed(cfg.seed, j), nullptr, cfg.iterations, cfg.burn_in);
  });
  for (std::size_t j = 0; j < errors.size(); ++j) {
    if (!errors[j].empty()) report.warnings.push_back("pilot " + std::to_string(j) + ": " + errors[j]);
  }

  for (int s = 0; s < ns; ++s) {
    std::vector<TuneEntry> entries;
    for (int g = 0; g < ng; ++g) {
      std::vector<double> acc;
      std::vector<std::vector<double>> iacts(model->dim());
      for (int r = 0; r < R; ++r) {
        const int j = (s * ng + g) * R + r;
        if (!errors[j].empty()) continue;
        acc.push_back(traces[j].acceptance_rate(cfg.burn_in));
        const auto ia = chain_iacts(traces[j], cfg.burn_in);
        for (std::size_t c = 0; c < ia.size(); ++c) iacts[c].push_back(ia[c]);
      }
      if (acc.empty()) continue;
      TuneEntry e;
      e.sampler = cfg.samplers[s].label;
      e.gamma = cfg.gamma_grid[g];
      e.acceptance = median(acc);
      for (const auto& v : iacts) {
        e.iacts.push_back(median(v));
        e.total_iact += e.iacts.back();
      }
      entries.push_back(e);
    }
    if (entries.empty()) {
      report.warnings.push_back(cfg.samplers[s].label + ": every pilot chain failed");
      continue;
    }
    TuneRecommendation rec;
    rec.sampler = cfg.samplers[s].label;
    if (cfg.tune_criterion == "iact") {
      const auto best = std::min_element(entries.begin(), entries.end(), [](auto& a, auto& b) {
        return a.total_iact < b.total_iact;
      });
      rec.gamma = best->gamma;
      rec.meets_criterion = std::isfinite(best->total_iact);
    } else {
      const double centre = 0.5 * (cfg.target_low + cfg.target_high);
      auto distance = [&](const TuneEntry& e) {
        if (e.acceptance >= cfg.target_low && e.acceptance <= cfg.target_high) {
          return std::abs(e.acceptance - centre) - 1.0;  // in-band entries rank first
        }
        return std::min(std::abs(e.acceptance - cfg.target_low),
                        std::abs(e.acceptance - cfg.target_high));
      };
      const auto best = std::min_element(entries.begin(), entries.end(), [&](auto& a, auto& b) {
        return distance(a) < distance(b);
      });
      rec.gamma = best->gamma;
      rec.meets_criterion = best->acceptance >= cfg.target_low && best->acceptance <= cfg.target_high;
      if (!rec.meets_criterion) {
        report.warnings.push_back(rec.sampler + ": no gamma reaches the acceptance band; nearest is " +
                                  format_double(rec.gamma));
      }
    }
    report.entries.insert(report.entries.end(), entries.begin(), entries.end());
    report.recommendations.push_back(rec);
  }

  ensure_dir(cfg.out_dir);
  std::ofstream out = open_csv(fs::path(cfg.out_dir) / "tune.csv");
  const auto names = model->param_names();
  out << "sampler,gamma,acceptance,total_iact" << param_header(names, "iact_") << '\n';
  for (const TuneEntry& e : report.entries) {
    out << e.sampler << ',' << format_double(e.gamma) << ',' << format_double(e.acceptance) << ','
        << csv_value(e.total_iact);
    for (double v : e.iacts) out << ',' << csv_value(v);
    out << '\n';
  }
  std::ofstream rec = open_csv(fs::path(cfg.out_dir) / "tune_recommendation.csv");
  rec << "sampler,gamma,criterion,meets_criterion\n";
  for (const TuneRecommendation& r : report.recommendations) {
    rec << r.sampler << ',' << format_double(r.gamma) << ',' << cfg.tune_criterion << ','
        << (r.meets_criterion ? 1 : 0) << '\n';
  }
  return report;
}

}  // namespace pmcmc
