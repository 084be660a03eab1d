#include "pmcmc/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pmcmc {

namespace {

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& text, int line) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError("not a number: '" + text + "'", line);
  return value;
}

}  // namespace

std::string format_double(double value) {
  char buffer[32];
  const auto [ptr, ec] =
      std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::general, 17);
  return std::string(buffer, ptr);
}

void write_observations_csv(const std::string& path, const std::vector<double>& observations) {
  std::ofstream out = open_for_write(path);
  out << "t,y\n";
  for (std::size_t t = 0; t < observations.size(); ++t) {
    out << t + 1 << ',' << format_double(observations[t]) << '\n';
  }
}

std::vector<double> read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty observation file " + path, 1);
  if (line != "t,y") throw ParseError("expected header 't,y'", 1);
  std::vector<double> y;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 2) throw ParseError("expected two columns", lineno);
    if (parse_double(fields[0], lineno) != static_cast<double>(y.size() + 1)) {
      throw ParseError("time index out of sequence", lineno);
    }
    y.push_back(parse_double(fields[1], lineno));
  }
  if (y.empty()) throw ParseError("no observations in " + path, lineno);
  return y;
}

void write_trace_csv(const std::string& path, const ChainTrace& trace) {
  std::ofstream out = open_for_write(path);
  out << "iteration";
  for (const std::string& name : trace.param_names) out << ',' << name;
  out << ",accepted,log_likelihood\n";
  auto row = [&](int k, const auto& theta, int accepted, double log_likelihood) {
    out << k;
    for (Eigen::Index j = 0; j < theta.size(); ++j) out << ',' << format_double(theta[j]);
    out << ',' << accepted << ',' << format_double(log_likelihood) << '\n';
  };
  row(0, trace.theta0, 1, trace.info0.log_likelihood);
  for (int k = 0; k < trace.iterations(); ++k) {
    row(k + 1, trace.samples.row(k), trace.accepted[k], trace.infos[k].log_likelihood);
  }
}

ChainTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trace file " + path, 1);
  const auto header = split(line);
  if (header.size() < 4 || header.front() != "iteration" || header[header.size() - 2] != "accepted" ||
      header.back() != "log_likelihood") {
    throw ParseError("unexpected trace header", 1);
  }
  const int d = static_cast<int>(header.size()) - 3;
  ChainTrace trace;
  trace.param_names.assign(header.begin() + 1, header.end() - 2);

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (static_cast<int>(fields.size()) != d + 3) throw ParseError("wrong column count", lineno);
    std::vector<double> values;
    for (const std::string& f : fields) values.push_back(parse_double(f, lineno));
    if (values[0] != static_cast<double>(rows.size())) {
      throw ParseError("iteration out of sequence", lineno);
    }
    rows.push_back(std::move(values));
  }
  if (rows.size() < 2) throw ParseError("trace needs theta_0 and at least one iteration", lineno);

  trace.theta0.resize(d);
  for (int j = 0; j < d; ++j) trace.theta0[j] = rows[0][j + 1];
  trace.info0.log_likelihood = rows[0][d + 2];
  trace.info0.valid = true;
  const int M = static_cast<int>(rows.size()) - 1;
  trace.samples.resize(M, d);
  for (int k = 0; k < M; ++k) {
    const auto& r = rows[k + 1];
    for (int j = 0; j < d; ++j) trace.samples(k, j) = r[j + 1];
    trace.accepted.push_back(r[d + 1] != 0.0 ? 1 : 0);
    PosteriorInfo info;
    info.log_likelihood = r[d + 2];
    info.valid = true;
    trace.infos.push_back(info);
  }
  return trace;
}

}  // namespace pmcmc
