#include "pmcmc/lgss.hpp"
#include "pmcmc/pmh.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace pmcmc;
using pmcmc::testing::mat2;
using pmcmc::testing::vec;

namespace {

PosteriorInfo synthetic_info(double loglik, const Vector& gradient, const Matrix& neg_hessian) {
  PosteriorInfo info;
  info.log_likelihood = loglik;
  info.gradient = gradient;
  info.neg_hessian = neg_hessian;
  info.raw_neg_hessian = neg_hessian;
  info.was_pd = is_positive_definite(neg_hessian);
  info.valid = true;
  info.order = DerivativeOrder::kHessian;
  return info;
}

PosteriorInfo random_info(Rng& rng, int d) {
  Vector g(d);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i) {
    g[i] = 3.0 * rng.normal();
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  }
  return synthetic_info(rng.normal(), g, a * a.transpose() + 0.5 * Matrix::Identity(d, d));
}

std::vector<double> lgss_data(int T, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_lgss(make_lgss(0.1, false), vec({0.5, 1.0}), T, rng).observations;
}

ChainConfig chain_config(ProposalSpec spec, int iterations, std::uint64_t seed) {
  ChainConfig c;
  c.proposal = std::move(spec);
  c.filter.particles = 50;
  c.filter.variant = FilterVariant::kFullyAdapted;
  c.lag = 5;
  c.iterations = iterations;
  c.theta0 = vec({0.5, 1.0});
  c.seed = seed;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Proposal moments and densities

TEST(Proposal, Pmh0StepFromTunedGamma) {
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh0, 0.04, 2);
  const PosteriorInfo info = synthetic_info(0.0, vec({5, 5}), Matrix::Identity(2, 2));
  const ProposalMoments m = proposal_mean_cov(spec, vec({0.3, 0.7}), info);
  EXPECT_EQ(m.mean, vec({0.3, 0.7}));
  EXPECT_LT((m.cov - 0.0016 * Matrix::Identity(2, 2)).norm(), 1e-18);
}

TEST(Proposal, Pmh1ZeroGradientIsRandomWalk) {
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh1, 0.3, 2);
  const PosteriorInfo info = synthetic_info(0.0, vec({0, 0}), Matrix::Identity(2, 2));
  EXPECT_EQ(proposal_mean_cov(spec, vec({0.1, 0.2}), info).mean, vec({0.1, 0.2}));
}

TEST(Proposal, Pmh2NaturalGradientStep) {
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh2, 1.0, 2);
  const PosteriorInfo info = synthetic_info(0.0, vec({2, 0}), Matrix::Identity(2, 2));
  const ProposalMoments m = proposal_mean_cov(spec, vec({0.1, 0.2}), info);
  EXPECT_LT((m.mean - vec({1.1, 0.2})).norm(), 1e-15);
  EXPECT_LT((m.cov - Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(Proposal, Pmh2RejectsNonPdCurvature) {
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh2, 1.0, 2);
  const PosteriorInfo info = synthetic_info(0.0, vec({1, 0}), mat2(1, 0, 0, -1));
  EXPECT_THROW(proposal_mean_cov(spec, vec({0, 0}), info), NumericalError);
}

TEST(Proposal, DensityAtMeanIsNormalizer) {
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh0, 1.0, 2);
  const PosteriorInfo info = synthetic_info(0.0, vec({0, 0}), Matrix::Identity(2, 2));
  EXPECT_NEAR(log_proposal_density(spec, vec({0.4, 0.1}), vec({0.4, 0.1}), info),
              -std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(Proposal, PropertyPmh0Symmetric) {
  Rng rng(3);
  const ProposalSpec spec = ProposalSpec::diagonal(ProposalKind::kPmh0, vec({0.2, 0.7}));
  for (int k = 0; k < 200; ++k) {
    const Vector a = vec({rng.normal(), rng.normal()});
    const Vector b = vec({rng.normal(), rng.normal()});
    const PosteriorInfo ia = random_info(rng, 2);
    const PosteriorInfo ib = random_info(rng, 2);
    EXPECT_NEAR(log_proposal_density(spec, a, b, ib), log_proposal_density(spec, b, a, ia), 1e-12);
  }
}

TEST(Proposal, PropertyPmh1Asymmetric) {
  Rng rng(4);
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh1, 0.5, 2);
  for (int k = 0; k < 200; ++k) {
    const Vector a = vec({rng.normal(), rng.normal()});
    const Vector b = vec({rng.normal(), rng.normal()});
    const PosteriorInfo ia = random_info(rng, 2);
    const PosteriorInfo ib = random_info(rng, 2);
    EXPECT_NE(log_proposal_density(spec, a, b, ib), log_proposal_density(spec, b, a, ia));
  }
}

TEST(Proposal, PropertySampleMomentsMatch) {
  Rng rng(5);
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh2, 0.8, 2);
  const PosteriorInfo info = synthetic_info(0.0, vec({1.0, -2.0}), mat2(2.0, 0.5, 0.5, 1.0));
  const ProposalMoments m = proposal_mean_cov(spec, vec({0, 0}), info);
  const int n = 100000;
  Vector mean = Vector::Zero(2);
  Matrix cov = Matrix::Zero(2, 2);
  for (int k = 0; k < n; ++k) {
    const Vector s = sample_proposal(spec, vec({0, 0}), info, rng);
    mean += s / n;
    cov += (s - m.mean) * (s - m.mean).transpose() / n;
  }
  EXPECT_LT((mean - m.mean).norm(), 0.02);
  EXPECT_LT((cov - m.cov).norm(), 0.03);
}

TEST(Proposal, PropertyPmh2AffineInvariance) {
  // Rescaled model: theta_r = A theta with A = diag(1, 1/10). Gradients map by
  // A^-1 and negative Hessians by A^-1 I A^-1.
  const LgssModel natural = make_lgss(0.1, false);
  const LgssModel rescaled = make_lgss(0.1, true);
  Rng rng(6);
  const Matrix A = vec({1.0, 0.1}).asDiagonal();
  const Matrix A_inv = A.inverse();
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh2, 0.7, 2);
  for (int k = 0; k < 100; ++k) {
    const Vector th = pmcmc::testing::random_interior(natural, rng);
    const Vector th_r = rescaled.theta(natural.params(th));
    ASSERT_LT((th_r - A * th).norm(), 1e-15);
    const PosteriorInfo info = random_info(rng, 2);
    const PosteriorInfo info_r =
        synthetic_info(info.log_likelihood, A_inv * info.gradient, A_inv * info.neg_hessian * A_inv);
    const ProposalMoments m = proposal_mean_cov(spec, th, info);
    const ProposalMoments m_r = proposal_mean_cov(spec, th_r, info_r);
    EXPECT_LT((m_r.mean - A * m.mean).norm(), 1e-10 * (1.0 + m.mean.norm()));
    EXPECT_LT((m_r.cov - A * m.cov * A).norm(), 1e-10 * (1.0 + m.cov.norm()));
  }
}

TEST(Proposal, CholeskyJitterEscalation) {
  const Matrix singular = mat2(1, 1, 1, 1);
  const Matrix L = cholesky_with_jitter(singular);
  EXPECT_LT((L * L.transpose() - singular).norm(), 1e-6);
  EXPECT_THROW(cholesky_with_jitter(mat2(1, 0, 0, -1)), NumericalError);
}

TEST(Proposal, ValidateRejectsBadSpecs) {
  EXPECT_THROW(ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 3).validate(2), ConfigError);
  ProposalSpec bad = ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2);
  bad.step(0, 0) = -1.0;
  EXPECT_THROW(bad.validate(2), ConfigError);
  EXPECT_THROW(ProposalSpec::hybrid(1.0, 2, 1, 10).validate(2), ConfigError);
  EXPECT_THROW(ProposalSpec::preconditioned(ProposalKind::kPmh2, 1.0, Matrix::Identity(2, 2))
                   .validate(2),
               ConfigError);
  ProposalSpec h = ProposalSpec::hybrid(1.0, 2, 10, 10);
  h.kind = ProposalKind::kPmh1;
  EXPECT_THROW(h.validate(2), ConfigError);
  EXPECT_NO_THROW(ProposalSpec::hybrid(1.0, 2, 10, 10).validate(2));
}

TEST(Proposal, RequiredOrder) {
  EXPECT_EQ(ProposalSpec::isotropic(ProposalKind::kPmh0, 1, 1).required_order(),
            DerivativeOrder::kNone);
  EXPECT_EQ(ProposalSpec::isotropic(ProposalKind::kPmh1, 1, 1).required_order(),
            DerivativeOrder::kGradient);
  EXPECT_EQ(ProposalSpec::isotropic(ProposalKind::kPmh2, 1, 1).required_order(),
            DerivativeOrder::kHessian);
}

// ---------------------------------------------------------------------------
// Acceptance

TEST(Acceptance, EqualTargetsSymmetricProposal) {
  const LgssModel m = make_lgss(0.1, false);
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2);
  const PosteriorInfo info = synthetic_info(-10.0, vec({0, 0}), Matrix::Identity(2, 2));
  EXPECT_EQ(acceptance_log_prob(vec({0.5, 1.0}), info, vec({0.4, 0.9}), info, spec, m), 0.0);
}

TEST(Acceptance, OutsideSupport) {
  const LgssModel m = make_lgss(0.1, false);
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2);
  const PosteriorInfo info = synthetic_info(-10.0, vec({0, 0}), Matrix::Identity(2, 2));
  EXPECT_EQ(acceptance_log_prob(vec({1.5, 1.0}), info, vec({0.4, 0.9}), info, spec, m),
            -std::numeric_limits<double>::infinity());
  EXPECT_EQ(acceptance_log_prob(vec({0.5, -1.0}), info, vec({0.4, 0.9}), info, spec, m),
            -std::numeric_limits<double>::infinity());
}

TEST(Acceptance, HandComposedRatio) {
  // One-dimensional PMH1 with gamma = 1/2 from theta' = 0 to theta'' = 1/2,
  // zero gradient at theta' and g'' = 4(sqrt 2 - 1) at theta'': the forward
  // standardized residual is 1 and the reverse one is sqrt 2, so the proposal
  // ratio is exp(-0.5). The likelihood ratio is e and the priors are equal.
  const LgssModel m = make_lgss_phi(1.0, 0.1);
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh1, 0.5, 1);
  const double g2 = 4.0 * (std::numbers::sqrt2 - 1.0);
  const PosteriorInfo from = synthetic_info(0.0, vec({0.0}), Matrix::Identity(1, 1));
  const PosteriorInfo to = synthetic_info(1.0, vec({g2}), Matrix::Identity(1, 1));
  const double ratio = log_acceptance_ratio(vec({0.5}), to, vec({0.0}), from, spec, m);
  EXPECT_NEAR(ratio, 0.5, 1e-14);
  EXPECT_EQ(acceptance_log_prob(vec({0.5}), to, vec({0.0}), from, spec, m), 0.0);
}

TEST(Acceptance, InvalidProposalInfo) {
  const LgssModel m = make_lgss(0.1, false);
  const ProposalSpec spec = ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2);
  PosteriorInfo bad = synthetic_info(-10.0, vec({0, 0}), Matrix::Identity(2, 2));
  bad.valid = false;
  const PosteriorInfo good = synthetic_info(-10.0, vec({0, 0}), Matrix::Identity(2, 2));
  EXPECT_EQ(acceptance_log_prob(vec({0.5, 1.0}), bad, vec({0.4, 0.9}), good, spec, m),
            -std::numeric_limits<double>::infinity());
}

TEST(Acceptance, PropertyAntisymmetric) {
  const LgssModel m = make_lgss(0.1, false);
  Rng rng(7);
  for (ProposalKind kind : {ProposalKind::kPmh0, ProposalKind::kPmh1, ProposalKind::kPmh2}) {
    const ProposalSpec spec = ProposalSpec::isotropic(kind, 0.3, 2);
    for (int k = 0; k < 100; ++k) {
      const Vector a = pmcmc::testing::random_interior(m, rng);
      const Vector b = pmcmc::testing::random_interior(m, rng);
      const PosteriorInfo ia = random_info(rng, 2);
      const PosteriorInfo ib = random_info(rng, 2);
      const double ab = log_acceptance_ratio(b, ib, a, ia, spec, m);
      const double ba = log_acceptance_ratio(a, ia, b, ib, spec, m);
      EXPECT_NEAR(ab, -ba, 1e-9 * (1.0 + std::abs(ab)));
      EXPECT_LE(acceptance_log_prob(b, ib, a, ia, spec, m), 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Hybrid curvature handling

TEST(Hybrid, PdPassesThrough) {
  const PosteriorInfo info = synthetic_info(-1.0, vec({1, 2}), mat2(2, 0, 0, 3));
  const auto out = hybrid_replace(info, Eigen::MatrixXd(), ChainPhase::kBurnIn);
  ASSERT_TRUE(out);
  EXPECT_EQ(out->neg_hessian, info.neg_hessian);
  EXPECT_EQ(out->gradient, info.gradient);
}

TEST(Hybrid, BurnInRejects) {
  const PosteriorInfo info = synthetic_info(-1.0, vec({1, 2}), mat2(-2, 0, 0, 3));
  Eigen::MatrixXd window(3, 2);
  window << 0, 0, 1, 1, 2, 0;
  EXPECT_FALSE(hybrid_replace(info, window, ChainPhase::kBurnIn));
}

TEST(Hybrid, StationaryUsesInverseWindowCovariance) {
  const PosteriorInfo info = synthetic_info(-1.0, vec({1, 2}), mat2(-2, 0, 0, 3));
  const double a = std::sqrt(3.0);
  const double b = std::sqrt(0.75);
  Eigen::MatrixXd window(4, 2);
  window << a, b, a, -b, -a, b, -a, -b;
  const auto out = hybrid_replace(info, window, ChainPhase::kStationary);
  ASSERT_TRUE(out);
  EXPECT_LT((out->neg_hessian - mat2(0.25, 0, 0, 1)).norm(), 1e-12);
  EXPECT_EQ(out->gradient, info.gradient);
  EXPECT_EQ(out->log_likelihood, info.log_likelihood);
}

TEST(Hybrid, DegenerateWindowRejects) {
  const PosteriorInfo info = synthetic_info(-1.0, vec({1, 2}), mat2(-2, 0, 0, 3));
  Eigen::MatrixXd same(5, 2);
  same.rowwise() = Eigen::RowVector2d(0.3, 0.4);
  EXPECT_FALSE(hybrid_replace(info, same, ChainPhase::kStationary));
  EXPECT_FALSE(hybrid_replace(info, Eigen::MatrixXd(1, 2), ChainPhase::kStationary));
}

TEST(Hybrid, SingularWindowGetsJitter) {
  Eigen::MatrixXd line(4, 2);
  line << 0, 0, 1, 1, 2, 2, 3, 3;
  const auto inv = inverse_sample_covariance(line);
  ASSERT_TRUE(inv);
  EXPECT_TRUE(inv->allFinite());
  EXPECT_TRUE(is_positive_definite(*inv));
}

// ---------------------------------------------------------------------------
// run_chain

TEST(Chain, ForcedRejectionRepeatsTheta0) {
  const LgssModel m = make_lgss_phi(1.0, 0.1);
  ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh0, 1e6, 1), 1, 1);
  c.theta0 = vec({0.5});
  const ChainTrace trace = run_chain(m, lgss_data(10, 1), c);
  ASSERT_EQ(trace.iterations(), 1);
  EXPECT_EQ(trace.samples(0, 0), 0.5);
  EXPECT_EQ(trace.accepted[0], 0);
  EXPECT_EQ(trace.filter_runs, 1);
  EXPECT_TRUE(std::isnan(trace.log_q_forward[0]));
  EXPECT_EQ(trace.infos[0].log_likelihood, trace.info0.log_likelihood);
}

TEST(Chain, OneFilterRunPerIteration) {
  const LgssModel m = make_lgss(0.1, false);
  const std::vector<double> y = lgss_data(20, 2);
  for (ProposalKind kind : {ProposalKind::kPmh0, ProposalKind::kPmh1, ProposalKind::kPmh2}) {
    const double gamma = kind == ProposalKind::kPmh2 ? 0.5 : 0.02;
    const ChainTrace trace =
        run_chain(m, y, chain_config(ProposalSpec::isotropic(kind, gamma, 2), 200, 3));
    EXPECT_EQ(trace.filter_runs, 201) << to_string(kind);
  }
}

TEST(Chain, OutOfSupportSkipsTheFilter) {
  const LgssModel m = make_lgss(0.1, false);
  ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh0, 0.6, 2), 300, 4);
  const ChainTrace trace = run_chain(m, lgss_data(20, 2), c);
  int in_support = 0;
  for (int k = 0; k < trace.iterations(); ++k) in_support += !std::isnan(trace.log_q_forward[k]);
  EXPECT_EQ(trace.filter_runs, 1 + in_support);
  EXPECT_LT(trace.filter_runs, 301);
}

TEST(Chain, PropertyRejectionCarriesStateAndInfo) {
  const LgssModel m = make_lgss(0.1, false);
  for (ProposalKind kind : {ProposalKind::kPmh0, ProposalKind::kPmh1, ProposalKind::kPmh2}) {
    const double gamma = kind == ProposalKind::kPmh2 ? 1.0 : 0.1;
    const ChainTrace trace =
        run_chain(m, lgss_data(20, 5), chain_config(ProposalSpec::isotropic(kind, gamma, 2), 300, 6));
    int accepted = 0;
    for (int k = 0; k < trace.iterations(); ++k) {
      const Vector prev = k == 0 ? trace.theta0 : Vector(trace.samples.row(k - 1).transpose());
      const PosteriorInfo& prev_info = k == 0 ? trace.info0 : trace.infos[k - 1];
      if (!trace.accepted[k]) {
        EXPECT_EQ(Vector(trace.samples.row(k).transpose()), prev);
        EXPECT_EQ(trace.infos[k].log_likelihood, prev_info.log_likelihood);
        EXPECT_EQ(trace.infos[k].gradient, prev_info.gradient);
        EXPECT_EQ(trace.infos[k].neg_hessian, prev_info.neg_hessian);
      } else {
        ++accepted;
        EXPECT_TRUE(m.in_support(trace.samples.row(k).transpose()));
      }
    }
    EXPECT_GT(accepted, 0);
    EXPECT_LT(accepted, trace.iterations());
  }
}

TEST(Chain, CollapseAtProposalIsRejection) {
  const pmcmc::testing::CollapsingModel m(0.55);
  ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2), 300, 7);
  c.filter.variant = FilterVariant::kBootstrap;
  const ChainTrace trace = run_chain(m, lgss_data(10, 8), c);
  // Collapsed proposals ran the filter but produced no proposal densities.
  int completed = 0;
  for (double q : trace.log_q_forward) completed += !std::isnan(q);
  EXPECT_GT(trace.filter_runs, 1 + completed);
  for (int k = 0; k < trace.iterations(); ++k) EXPECT_LE(trace.samples(k, 0), 0.55);
  EXPECT_GT(trace.acceptance_rate(), 0.0);
}

TEST(Chain, CollapseAtStartThrows) {
  const pmcmc::testing::CollapsingModel m(0.4);
  ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2), 10, 7);
  c.filter.variant = FilterVariant::kBootstrap;
  EXPECT_THROW(run_chain(m, lgss_data(10, 8), c), std::runtime_error);
}

TEST(Chain, Pmh0NeverEvaluatesDerivatives) {
  const pmcmc::testing::CollapsingModel m(2.0, /*derivatives_throw=*/true);
  ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2), 50, 9);
  c.filter.variant = FilterVariant::kBootstrap;
  EXPECT_NO_THROW(run_chain(m, lgss_data(10, 8), c));
}

TEST(Chain, InvalidStartRejected) {
  const LgssModel m = make_lgss(0.1, false);
  ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh0, 0.1, 2), 10, 1);
  c.theta0 = vec({1.2, 1.0});
  EXPECT_THROW(run_chain(m, lgss_data(10, 1), c), ConfigError);
  c.theta0 = vec({0.5, 1.0});
  c.iterations = 0;
  EXPECT_THROW(run_chain(m, lgss_data(10, 1), c), ConfigError);
}

TEST(Chain, SameSeedSameTrace) {
  const LgssModel m = make_lgss(0.1, false);
  const std::vector<double> y = lgss_data(20, 10);
  const ChainConfig c = chain_config(ProposalSpec::isotropic(ProposalKind::kPmh2, 1.0, 2), 100, 11);
  const ChainTrace a = run_chain(m, y, c);
  const ChainTrace b = run_chain(m, y, c);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.accepted, b.accepted);
  ChainConfig other = c;
  other.seed = 12;
  EXPECT_NE(run_chain(m, y, other).samples, a.samples);
}

TEST(Chain, HybridRunsAndCountsReplacements) {
  const LgssModel m = make_lgss(0.1, false);
  const std::vector<double> y = lgss_data(30, 13);
  ChainConfig c = chain_config(ProposalSpec::hybrid(1.0, 2, 50, 100), 300, 14);
  c.filter.particles = 10;
  c.lag = 2;
  const ChainTrace trace = run_chain(m, y, c);
  EXPECT_EQ(trace.iterations(), 300);
  EXPECT_GT(trace.acceptance_rate(100), 0.0);
  for (const PosteriorInfo& info : trace.infos) EXPECT_TRUE(is_positive_definite(info.neg_hessian));
}

TEST(Chain, AcceptanceRateAndColumns) {
  ChainTrace t;
  t.samples.resize(4, 1);
  t.samples << 1, 2, 3, 4;
  t.accepted = {1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(t.acceptance_rate(), 0.75);
  EXPECT_DOUBLE_EQ(t.acceptance_rate(2), 1.0);
  EXPECT_EQ(t.column(0, 1), (std::vector<double>{2, 3, 4}));
  EXPECT_THROW(t.acceptance_rate(4), std::invalid_argument);
}
