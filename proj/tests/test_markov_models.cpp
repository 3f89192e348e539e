#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "qsdkit/markov_models.hpp"
#include "qsdkit/spectral_oracle.hpp"
#include "qsdkit/tour_simulator.hpp"
#include "test_support.hpp"

namespace qsdkit {
namespace {

TEST(LoopyChain, EntriesAreHalfTheSurvivalProbability) {
  const auto chain = make_loopy_chain(0.98);
  EXPECT_EQ(chain.dim(), 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(chain.q()(i, j), 0.01, 1e-15);
  EXPECT_NEAR(chain.absorb_prob(0), 0.98, 1e-15);

  const auto half = make_loopy_chain(0.5);
  EXPECT_TRUE(half.q().isApprox(Matrix::Constant(2, 2, 0.25)));
}

TEST(LoopyChain, SpectrumIsSurvivalAndZero) {
  for (double eps : {0.2, 0.7, 0.98}) {
    const Spectrum s = full_spectrum(make_loopy_chain(eps).q());
    ASSERT_EQ(s.size(), 2u);
    EXPECT_NEAR(s[0].real(), 1.0 - eps, 1e-14);
    EXPECT_NEAR(std::abs(s[1]), 0.0, 1e-14);
  }
}

TEST(LoopyChain, RejectsEpsilonOutsideOpenInterval) {
  EXPECT_THROW(make_loopy_chain(0.0), DomainError);
  EXPECT_THROW(make_loopy_chain(1.0), DomainError);
  EXPECT_THROW(make_loopy_chain(-0.3), DomainError);
}

TEST(Mm1kChain, PaperSizedQueue) {
  const auto chain = make_mm1k_chain(1.25, 100);
  EXPECT_EQ(chain.dim(), 100);
  EXPECT_NEAR(chain.q()(0, 1), 5.0 / 9.0, 1e-15);
  EXPECT_NEAR(chain.q()(50, 49), 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(chain.q()(99, 99), 5.0 / 9.0, 1e-15);
  EXPECT_NEAR(chain.absorb_prob(0), 4.0 / 9.0, 1e-15);
}

TEST(Mm1kChain, SingleSlotQueueSelfLoops) {
  const auto chain = make_mm1k_chain(1.25, 1);
  ASSERT_EQ(chain.dim(), 1);
  EXPECT_NEAR(chain.q()(0, 0), 1.25 / 2.25, 1e-15);
  EXPECT_NEAR(chain.absorb_prob(0), 1.0 / 2.25, 1e-15);
}

TEST(Mm1kChain, OnlyTheFirstRowLeaks) {
  const auto chain = make_mm1k_chain(1.25, 3);
  EXPECT_NEAR(chain.q().row(0).sum(), 5.0 / 9.0, 1e-15);
  EXPECT_NEAR(chain.q().row(1).sum(), 1.0, 1e-15);
  EXPECT_NEAR(chain.q().row(2).sum(), 1.0, 1e-15);
}

TEST(Mm1kChain, RejectsBadParameters) {
  EXPECT_THROW(make_mm1k_chain(0.0, 10), DomainError);
  EXPECT_THROW(make_mm1k_chain(-1.0, 10), DomainError);
  EXPECT_THROW(make_mm1k_chain(1.0, 0), DomainError);
}

TEST(ContactChain, TwoNodeRates) {
  const auto chain = make_contact_complete(2, 1.0);
  Matrix expected(2, 2);
  expected << -2.0, 1.0,
               2.0, -2.0;
  EXPECT_TRUE(chain.q().isApprox(expected));
  EXPECT_DOUBLE_EQ(contact_birth_rate(2, 1.0, 1), 1.0);
  EXPECT_DOUBLE_EQ(contact_birth_rate(2, 1.0, 2), 0.0);
}

TEST(ContactChain, BirthDeathStructure) {
  const int n = 100;
  const auto chain = make_contact_complete(n, 1.5);
  ASSERT_EQ(chain.dim(), n);
  EXPECT_EQ(contact_birth_rate(n, 1.5, n), 0.0);
  for (int k = 1; k <= n; ++k) {
    const int i = k - 1;
    const double birth = contact_birth_rate(n, 1.5, k);
    if (k > 1) {
      EXPECT_EQ(chain.q()(i, i - 1), static_cast<double>(k));
    }
    EXPECT_DOUBLE_EQ(chain.exit_rate(i), birth + k);
  }
  EXPECT_DOUBLE_EQ(chain.killing_rate(0), 1.0);
}

TEST(ContactChain, RejectsTooFewNodes) {
  EXPECT_THROW(make_contact_complete(1, 1.5), DomainError);
  EXPECT_THROW(make_contact_complete(5, 0.0), DomainError);
}

TEST(ChainValidation, RejectsInvalidBlocks) {
  Matrix reducible(2, 2);
  reducible << 0.5, 0.0,
               0.0, 0.5;
  EXPECT_THROW(AbsorbingChainDT{reducible}, DomainError);

  Matrix stochastic(2, 2);
  stochastic << 0.5, 0.5,
                0.5, 0.5;
  EXPECT_THROW(AbsorbingChainDT{stochastic}, DomainError);

  Matrix overfull(2, 2);
  overfull << 0.6, 0.5,
              0.1, 0.1;
  EXPECT_THROW(AbsorbingChainDT{overfull}, DomainError);

  Matrix negative(2, 2);
  negative << -0.1, 0.5,
               0.1, 0.1;
  EXPECT_THROW(AbsorbingChainDT{negative}, DomainError);
  EXPECT_THROW(AbsorbingChainDT{Matrix(0, 0)}, ContractError);

  Matrix stuck(2, 2);
  stuck << 0.0, 0.0,
           1.0, -2.0;
  EXPECT_THROW(AbsorbingChainCT{stuck}, DegenerateChainError);

  Matrix conservative(2, 2);
  conservative << -1.0, 1.0,
                   1.0, -1.0;
  EXPECT_THROW(AbsorbingChainCT{conservative}, DomainError);

  Matrix ct_reducible(2, 2);
  ct_reducible << -1.0, 0.0,
                   1.0, -2.0;
  EXPECT_THROW(AbsorbingChainCT{ct_reducible}, DomainError);
}

TEST(ChainValidation, SingleStateWithoutSelfLoopIsValid) {
  const AbsorbingChainDT chain(Matrix::Zero(1, 1));
  EXPECT_EQ(chain.absorb_prob(0), 1.0);
}

TEST(Doeblinization, DiscreteScaling) {
  const auto loopy = make_loopy_chain(0.2);
  EXPECT_TRUE(doeblinize_dt(loopy, 1.0).q() == loopy.q());

  const auto scaled = doeblinize_dt(loopy, 0.5);
  EXPECT_TRUE(scaled.q().isApprox(Matrix::Constant(2, 2, 0.2)));
  const Spectrum s = full_spectrum(scaled.q());
  EXPECT_NEAR(s[0].real(), 0.4, 1e-14);
  EXPECT_NEAR(std::abs(s[1]), 0.0, 1e-14);

  const auto mm1 = make_mm1k_chain(1.25, 100);
  EXPECT_TRUE(doeblinize_dt(mm1, 0.95).q().isApprox(0.95 * mm1.q()));

  EXPECT_THROW(doeblinize_dt(loopy, 0.0), DomainError);
  EXPECT_THROW(doeblinize_dt(loopy, 1.5), DomainError);
}

TEST(Doeblinization, ContinuousShift) {
  const auto contact = make_contact_complete(10, 1.5);
  EXPECT_TRUE(doeblinize_ct(contact, 0.0).q() == contact.q());
  const auto shifted = doeblinize_ct(contact, 0.5);
  EXPECT_TRUE(shifted.q().isApprox(contact.q() - 0.5 * Matrix::Identity(10, 10)));

  const auto before = principal_left_eigenpair(contact.q(), ChainKind::continuous_time);
  const auto after = principal_left_eigenpair(shifted.q(), ChainKind::continuous_time);
  EXPECT_NEAR(after.value, before.value - 0.5, 1e-10);
  EXPECT_THROW(doeblinize_ct(contact, -0.1), DomainError);
}

TEST(Uniformization, TwoNodeContact) {
  const auto uni = uniformize(make_contact_complete(2, 1.0));
  Matrix expected(2, 2);
  expected << 0.0, 0.5,
              1.0, 0.0;
  EXPECT_TRUE(uni.q().isApprox(expected));
}

TEST(Uniformization, RowSumsFollowRateRowSums) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const AbsorbingChainCT ct(testing::random_rate_matrix(6, gen));
    const double nu = (-ct.q().diagonal()).maxCoeff();
    const auto dt = uniformize(ct);
    for (int i = 0; i < 6; ++i) {
      EXPECT_NEAR(dt.q().row(i).sum(), 1.0 + ct.q().row(i).sum() / nu, 1e-14);
      EXPECT_LE(dt.q().row(i).sum(), 1.0 + 1e-12);
    }
  }
}

// Both transforms keep the quasi-stationary distribution.
TEST(TransformInvariance, PrincipalVectorUnchanged) {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> dim(1, 50);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = dim(gen);
    const AbsorbingChainDT dt(testing::random_substochastic(d, gen));
    const auto base = principal_left_eigenpair(dt.q(), ChainKind::discrete_time);
    const auto scaled = principal_left_eigenpair(doeblinize_dt(dt, 0.6).q(), ChainKind::discrete_time);
    EXPECT_LT((base.vector.values() - scaled.vector.values()).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_NEAR(scaled.value, 0.6 * base.value, 1e-10);

    const AbsorbingChainCT ct(testing::random_rate_matrix(d, gen));
    const auto ct_base = principal_left_eigenpair(ct.q(), ChainKind::continuous_time);
    const auto ct_shift = principal_left_eigenpair(doeblinize_ct(ct, 0.5).q(), ChainKind::continuous_time);
    const auto uni = principal_left_eigenpair(uniformize(ct).q(), ChainKind::discrete_time);
    EXPECT_LT((ct_base.vector.values() - ct_shift.vector.values()).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((ct_base.vector.values() - uni.vector.values()).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(ChainFile, RoundTripIsExact) {
  std::mt19937_64 gen(5);
  for (int d : {1, 3, 8}) {
    const AnyChain dt = AbsorbingChainDT(testing::random_substochastic(d, gen));
    const AnyChain ct = AbsorbingChainCT(testing::random_rate_matrix(d, gen));
    for (const AnyChain& chain : {dt, ct}) {
      std::istringstream in(chain_to_string(chain));
      const AnyChain back = read_chain(in);
      EXPECT_EQ(kind_of(back), kind_of(chain));
      EXPECT_TRUE(transient_block(back) == transient_block(chain));
    }
  }
}

TEST(ChainFile, HeaderAndLayout) {
  const std::string text = chain_to_string(AnyChain{make_loopy_chain(0.5)});
  EXPECT_EQ(text, "dt 2\n0.25 0.25\n0.25 0.25\n");
}

TEST(ChainFile, RejectsMalformedInput) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return read_chain(in);
  };
  EXPECT_THROW(parse(""), DomainError);
  EXPECT_THROW(parse("xt 1\n0.5\n"), DomainError);
  EXPECT_THROW(parse("dt 2\n0.1 0.1\n0.1\n"), DomainError);
  EXPECT_THROW(parse("dt 1\n0.5 0.5\n"), DomainError);
  EXPECT_THROW(parse("dt 1\n1.0\n"), DomainError);
  EXPECT_NO_THROW(parse("ct 1\n-1\n"));
}

TEST(ContactSampler, MatchesExplicitChainInDistribution) {
  const auto explicit_chain = doeblinize_ct(make_contact_complete(6, 1.5), 0.3);
  const ContactCompleteSampler implicit_chain(6, 1.5, 0.3);
  Rng rng_a(1), rng_b(2);
  std::vector<Vector> a, b;
  for (int i = 0; i < 20000; ++i) {
    a.push_back(Vector::Constant(1, sample_tour_implicit(explicit_chain, 2, rng_a).tau));
    b.push_back(Vector::Constant(1, sample_tour_implicit(implicit_chain, 2, rng_b).tau));
  }
  const auto ma = testing::moments(a);
  const auto mb = testing::moments(b);
  const double se = std::hypot(ma.std_error[0], mb.std_error[0]);
  EXPECT_LT(std::abs(ma.mean[0] - mb.mean[0]), 3.0 * se);
}

}  // namespace
}  // namespace qsdkit
