#include "pmcmc/diagnostics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pmcmc;

namespace {

std::vector<double> ar1(double rho, int M, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(M);
  x[0] = rng.normal() / std::sqrt(1.0 - rho * rho);
  for (int i = 1; i < M; ++i) x[i] = rho * x[i - 1] + rng.normal();
  return x;
}

ChainTrace synthetic_trace(std::vector<double> phi, std::vector<std::uint8_t> accepted) {
  ChainTrace t;
  t.param_names = {"phi"};
  t.samples.resize(static_cast<Eigen::Index>(phi.size()), 1);
  for (std::size_t i = 0; i < phi.size(); ++i) t.samples(static_cast<Eigen::Index>(i), 0) = phi[i];
  t.accepted = std::move(accepted);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// IACT

TEST(Iact, PropertyWhiteNoiseIsOne) {
  const IactResult r = iact(ar1(0.0, 100000, 1));
  EXPECT_NEAR(r.iact, 1.0, 0.1);
  EXPECT_FALSE(r.capped);
}

TEST(Iact, PropertyAr1GeometricSum) {
  for (std::uint64_t seed : {2, 3, 4}) {
    const IactResult r = iact(ar1(0.9, 100000, seed));
    EXPECT_NEAR(r.iact, 19.0, 0.25 * 19.0) << "seed " << seed;
  }
}

TEST(Iact, CutoffIsFirstInsignificantLag) {
  const std::vector<double> x = ar1(0.5, 5000, 5);
  const IactResult r = iact(x);
  ASSERT_EQ(static_cast<int>(r.autocorrelations.size()), r.cutoff);
  const double threshold = 2.0 / std::sqrt(5000.0);
  for (int k = 0; k + 1 < r.cutoff; ++k) EXPECT_GE(std::abs(r.autocorrelations[k]), threshold);
  EXPECT_LT(std::abs(r.autocorrelations.back()), threshold);
  double sum = 0.0;
  for (double rho : r.autocorrelations) sum += rho;
  EXPECT_DOUBLE_EQ(r.iact, std::max(1.0, 1.0 + 2.0 * sum));
}

TEST(Iact, PropertyAffineInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::vector<double> x = ar1(0.7, 2000, 10 + seed);
    std::vector<double> y(x.size());
    const double a = 0.01 + 10.0 * (seed + 1);
    const double b = -3.0 * seed;
    std::transform(x.begin(), x.end(), y.begin(), [&](double v) { return a * v + b; });
    EXPECT_NEAR(iact(x).iact, iact(y).iact, 1e-9);
    std::transform(x.begin(), x.end(), y.begin(), [&](double v) { return -a * v; });
    EXPECT_NEAR(iact(x).iact, iact(y).iact, 1e-9);
  }
}

TEST(Iact, AtLeastOne) {
  std::vector<double> alternating(100);
  for (int i = 0; i < 100; ++i) alternating[i] = i % 2 ? 1.0 : -1.0;
  EXPECT_EQ(iact(alternating).iact, 1.0);
}

TEST(Iact, Errors) {
  EXPECT_THROW(iact(std::vector<double>(50, 0.3)), DegenerateChainError);
  EXPECT_THROW(iact(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}), std::invalid_argument);
}

TEST(Iact, CapWhenNeverInsignificant) {
  // Alternating signs: |rho_k| = (M - k) / M stays above 2/sqrt(M) up to M/2.
  std::vector<double> alternating(40);
  for (int i = 0; i < 40; ++i) alternating[i] = i % 2 ? 1.0 : -1.0;
  const IactResult r = iact(alternating);
  EXPECT_TRUE(r.capped);
  EXPECT_EQ(r.cutoff, 20);
  EXPECT_EQ(r.iact, 1.0);
}

// ---------------------------------------------------------------------------
// Quantiles

TEST(Quantile, Examples) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
  EXPECT_EQ(iqr({1.0, 2.0, 3.0, 4.0, 5.0}), 2.0);
  EXPECT_EQ(quantile({7.0}, 0.9), 7.0);
  EXPECT_THROW(quantile({}, 0.5), std::invalid_argument);
  EXPECT_THROW(quantile({1.0}, 1.5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// summarize

TEST(Summarize, AllAccepted) {
  const std::vector<double> x = ar1(0.3, 200, 20);
  const std::vector<ChainTrace> traces{synthetic_trace(x, std::vector<std::uint8_t>(200, 1))};
  const ChainSummary s = summarize(traces, 0);
  EXPECT_EQ(s.chains, 1);
  EXPECT_EQ(s.acceptance_median, 1.0);
  EXPECT_EQ(s.acceptance_iqr, 0.0);
  EXPECT_EQ(s.params[0].name, "phi");
}

TEST(Summarize, HandBuiltThreeChains) {
  std::vector<ChainTrace> traces;
  const std::vector<int> accepted_counts{10, 40, 25};
  for (int c = 0; c < 3; ++c) {
    std::vector<std::uint8_t> acc(100, 0);
    for (int k = 0; k < accepted_counts[c]; ++k) acc[k] = 1;
    traces.push_back(synthetic_trace(ar1(0.2 * c, 100, 30 + c), acc));
  }
  const ChainSummary s = summarize(traces, 0);
  EXPECT_DOUBLE_EQ(s.acceptance_median, 0.25);
  EXPECT_DOUBLE_EQ(s.acceptance_iqr, 0.325 - 0.175);
  std::vector<double> iacts;
  double sum = 0.0;
  for (const ChainTrace& t : traces) {
    iacts.push_back(iact(t.column(0)).iact);
    for (double v : t.column(0)) sum += v;
  }
  EXPECT_DOUBLE_EQ(s.params[0].iact_median, median(iacts));
  EXPECT_NEAR(s.params[0].mean, sum / 300.0, 1e-14);
}

TEST(Summarize, BurnInIsDropped) {
  std::vector<double> x = ar1(0.3, 120, 40);
  for (int i = 0; i < 20; ++i) x[i] = 1e6;
  std::vector<std::uint8_t> acc(120, 1);
  for (int i = 0; i < 20; ++i) acc[i] = 0;
  const std::vector<ChainTrace> traces{synthetic_trace(x, acc)};
  const ChainSummary s = summarize(traces, 20);
  EXPECT_EQ(s.acceptance_median, 1.0);
  EXPECT_LT(std::abs(s.params[0].mean), 1.0);
  EXPECT_THROW(summarize(traces, 120), std::invalid_argument);
}

TEST(Summarize, DegenerateChainHasInfiniteIact) {
  const std::vector<ChainTrace> traces{
      synthetic_trace(std::vector<double>(50, 0.1), std::vector<std::uint8_t>(50, 0))};
  const ChainSummary s = summarize(traces, 0);
  EXPECT_TRUE(std::isinf(s.params[0].iact_median));
  EXPECT_EQ(s.acceptance_median, 0.0);
}

TEST(Summarize, PropertyPermutationInvariant) {
  Rng rng(50);
  std::vector<ChainTrace> traces;
  for (int c = 0; c < 6; ++c) {
    std::vector<std::uint8_t> acc(300);
    for (auto& a : acc) a = rng.uniform() < 0.3 + 0.1 * c;
    traces.push_back(synthetic_trace(ar1(0.1 * c, 300, 60 + c), acc));
  }
  const ChainSummary base = summarize(traces, 50);
  for (int k = 0; k < 10; ++k) {
    std::vector<ChainTrace> shuffled = traces;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    const ChainSummary s = summarize(shuffled, 50);
    EXPECT_EQ(s.acceptance_median, base.acceptance_median);
    EXPECT_EQ(s.params[0].iact_median, base.params[0].iact_median);
    EXPECT_EQ(s.params[0].iact_iqr, base.params[0].iact_iqr);
    EXPECT_NEAR(s.params[0].mean, base.params[0].mean, 1e-14);
    EXPECT_NEAR(s.params[0].sd, base.params[0].sd, 1e-14);
  }
}

TEST(Summarize, EmptyInput) {
  EXPECT_THROW(summarize(std::vector<ChainTrace>{}, 0), std::invalid_argument);
}

TEST(Summarize, TableOutputs) {
  const std::vector<ChainTrace> traces{
      synthetic_trace(ar1(0.3, 200, 70), std::vector<std::uint8_t>(200, 1))};
  const std::vector<SummaryRow> rows{{"PMH0", "faPF", 100, summarize(traces, 0)}};
  const auto path = std::filesystem::temp_directory_path() / "pmcmc_summary_test.csv";
  write_summary_csv(rows, path.string());
  std::ifstream in(path);
  std::string header;
  std::string line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header, "variant,filter,N,chains,acc_median,acc_iqr,iact_median_phi,iact_iqr_phi,"
                    "mean_phi,sd_phi");
  EXPECT_EQ(line.rfind("PMH0,faPF,100,1,1,0,", 0), 0u);
  std::filesystem::remove(path);
  const std::string table = format_summary_table(rows);
  EXPECT_NE(table.find("IACT(phi)"), std::string::npos);
  EXPECT_NE(table.find("PMH0"), std::string::npos);
}

// ---------------------------------------------------------------------------
// log L1 error

TEST(LogL1, Examples) {
  EXPECT_NEAR(log_l1_error(3.0, 2.0).value, 0.0, 1e-15);
  EXPECT_NEAR(log_l1_error(2.0 + std::exp(1.0), 2.0).value, 1.0, 1e-15);
  const LogL1Error zero = log_l1_error(2.0, 2.0);
  EXPECT_TRUE(zero.clamped);
  EXPECT_EQ(zero.value, std::log(std::numeric_limits<double>::epsilon()));
  EXPECT_THROW(log_l1_error(1.0, std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST(LogL1, PropertyBatchMatchesScalar) {
  Rng rng(80);
  std::vector<double> est(1000);
  for (double& e : est) e = -130.0 + rng.normal();
  est[17] = -130.0;
  const std::vector<LogL1Error> batch = log_l1_error(est, -130.0);
  ASSERT_EQ(batch.size(), est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    const LogL1Error single = log_l1_error(est[i], -130.0);
    EXPECT_EQ(batch[i].value, single.value);
    EXPECT_EQ(batch[i].clamped, single.clamped);
  }
}
