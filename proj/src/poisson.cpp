#include "pmcmc/poisson.hpp"

#include <boost/random/poisson_distribution.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pmcmc {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr int kTableSize = 1024;

}  // namespace

PoissonCountModel::PoissonCountModel() : log_factorial_table_(kTableSize) {
  for (int k = 0; k < kTableSize; ++k) log_factorial_table_[k] = std::lgamma(k + 1.0);
}

double PoissonCountModel::log_factorial(double y) const {
  if (y >= 0.0 && y < kTableSize && y == std::floor(y)) {
    return log_factorial_table_[static_cast<int>(y)];
  }
  return std::lgamma(y + 1.0);
}

double PoissonCountModel::log_transition(const Vector& theta, double x_prev, double x_curr,
                                         int) const {
  const double z = (x_curr - theta[0] * x_prev) / theta[1];
  return -kHalfLog2Pi - std::log(theta[1]) - 0.5 * z * z;
}

double PoissonCountModel::log_observation(const Vector& theta, double x_curr, double y,
                                          int) const {
  // log P(y; beta e^x) = y log beta + y x - beta e^x - log y!
  return y * (std::log(theta[2]) + x_curr) - theta[2] * std::exp(x_curr) - log_factorial(y);
}

Vector PoissonCountModel::grad_log_transition(const Vector& theta, double x_prev, double x_curr,
                                              int) const {
  const double s = theta[1];
  const double r = x_curr - theta[0] * x_prev;
  Vector g(3);
  g << r * x_prev / (s * s), -1.0 / s + r * r / (s * s * s), 0.0;
  return g;
}

Vector PoissonCountModel::grad_log_observation(const Vector& theta, double x_curr, double y,
                                               int) const {
  Vector g(3);
  g << 0.0, 0.0, y / theta[2] - std::exp(x_curr);
  return g;
}

Matrix PoissonCountModel::hess_log_transition(const Vector& theta, double x_prev, double x_curr,
                                              int) const {
  const double s = theta[1];
  const double s2 = s * s;
  const double r = x_curr - theta[0] * x_prev;
  Matrix h = Matrix::Zero(3, 3);
  h(0, 0) = -x_prev * x_prev / s2;
  h(0, 1) = h(1, 0) = -2.0 * r * x_prev / (s2 * s);
  h(1, 1) = 1.0 / s2 - 3.0 * r * r / (s2 * s2);
  return h;
}

Matrix PoissonCountModel::hess_log_observation(const Vector& theta, double, double y,
                                               int) const {
  Matrix h = Matrix::Zero(3, 3);
  h(2, 2) = -y / (theta[2] * theta[2]);
  return h;
}

double PoissonCountModel::sample_initial(const Vector& theta, Rng& rng) const {
  const double phi = theta[0];
  return rng.normal(0.0, theta[1] / std::sqrt(1.0 - phi * phi));
}

double PoissonCountModel::sample_transition(const Vector& theta, double x_prev, Rng& rng) const {
  return rng.normal(theta[0] * x_prev, theta[1]);
}

double PoissonCountModel::sample_observation(const Vector& theta, double x_curr, Rng& rng) const {
  boost::random::poisson_distribution<long, double> pois(theta[2] * std::exp(x_curr));
  return static_cast<double>(pois(rng.engine()));
}

bool PoissonCountModel::in_support(const Vector& theta) const {
  return theta.size() == 3 && theta.allFinite() && std::abs(theta[0]) < 1.0 && theta[1] > 0.0 &&
         theta[2] > 0.0;
}

double PoissonCountModel::log_prior(const Vector& theta) const {
  return in_support(theta) ? 0.0 : -std::numeric_limits<double>::infinity();
}

Vector PoissonCountModel::grad_log_prior(const Vector&) const { return Vector::Zero(3); }

Matrix PoissonCountModel::hess_log_prior(const Vector&) const { return Matrix::Zero(3, 3); }

PoissonCountModel make_poisson_model() { return PoissonCountModel(); }

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

EarthquakeData load_earthquake_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open earthquake data file '" + path + "'", 0);

  EarthquakeData data;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty() || row[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (row != "year,count") throw ParseError("expected header 'year,count'", line_no);
      continue;
    }
    const auto comma = row.find(',');
    if (comma == std::string::npos) throw ParseError("expected two columns", line_no);
    const std::string year_text = trim(row.substr(0, comma));
    const std::string count_text = trim(row.substr(comma + 1));
    int year = 0;
    long count = 0;
    if (!parse_number(year_text, year)) throw ParseError("bad year '" + year_text + "'", line_no);
    if (!parse_number(count_text, count)) {
      throw ParseError("bad count '" + count_text + "'", line_no);
    }
    if (count < 0) throw ParseError("negative count", line_no);
    if (!data.years.empty()) {
      if (year == data.years.back()) throw ParseError("duplicate year", line_no);
      if (year != data.years.back() + 1) throw ParseError("non-contiguous year", line_no);
    }
    data.years.push_back(year);
    data.counts.push_back(static_cast<double>(count));
  }
  if (!header_seen) throw ParseError("empty earthquake data file", line_no);
  if (data.counts.empty()) throw ParseError("no data rows", line_no);

  const int expected = kEarthquakeLastYear - kEarthquakeFirstYear + 1;
  if (static_cast<int>(data.counts.size()) != expected) {
    std::ostringstream msg;
    msg << "expected " << expected << " annual counts, found " << data.counts.size();
    data.warnings.push_back(msg.str());
  }
  return data;
}

}  // namespace pmcmc
