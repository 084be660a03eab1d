#ifndef PMCMC_RANDOM_HPP
#define PMCMC_RANDOM_HPP

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>
#include <random>

namespace pmcmc {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed of the independent stream `index` derived from `master`:
/// mix64(mix64(master) ^ mix64(index + 0x9e3779b97f4a7c15)).
/// Used for replicate seeds and for the named substreams of a chain.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// Random generator handle. Wraps a 64-bit Mersenne twister with Boost's
/// distributions, whose output is specified exactly (unlike <random>'s), so
/// runs are bit-reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  boost::random::uniform_01<double> uniform_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace pmcmc

#endif
