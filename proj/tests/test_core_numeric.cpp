#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lifereid/core_numeric.hpp"
#include "lifereid/rng.hpp"

using namespace lifereid;

namespace {

FeatureVector random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return normalize(v);
}

std::vector<double> random_probs(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& x : p) s += (x = rng.uniform() + 1e-3);
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace

TEST(Normalize, PythagoreanTriple) {
  const auto f = normalize(std::vector<double>{3.0, 4.0});
  EXPECT_DOUBLE_EQ(f[0], 0.6);
  EXPECT_DOUBLE_EQ(f[1], 0.8);
}

TEST(Normalize, UnitInputUnchanged) {
  const auto f = normalize(std::vector<double>{1.0, 0.0, 0.0});
  EXPECT_EQ(f.vec(), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Normalize, ZeroVectorRejected) {
  try {
    normalize(std::vector<double>{0.0, 0.0});
    FAIL() << "expected ZeroVector";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
  EXPECT_THROW(normalize(std::vector<double>{1e-13, 0.0}), Error);
  EXPECT_THROW(normalize(std::vector<double>{NAN, 1.0}), Error);
}

TEST(Normalize, RandomVectorsLandOnSphere) {
  Rng rng(7);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v(1 + rng.below(40));
    for (auto& x : v) x = rng.normal(0.0, std::pow(10.0, rng.uniform(-5.0, 5.0)));
    EXPECT_NEAR(l2_norm(normalize(v).values()), 1.0, 1e-9);
  }
}

TEST(FromUnit, RejectsOffSphere) {
  EXPECT_NO_THROW(FeatureVector::from_unit({0.6, 0.8}));
  EXPECT_THROW(FeatureVector::from_unit({0.6, 0.81}), Error);
}

TEST(SoftmaxSimilarity, SingleKeyIsOne) {
  Rng rng(1);
  const auto q = random_unit(rng, 5);
  const std::vector<FeatureVector> keys{random_unit(rng, 5)};
  EXPECT_DOUBLE_EQ(softmax_similarity(q, keys, 0, 0.07), 1.0);
}

TEST(SoftmaxSimilarity, EqualSimilaritiesSplitEvenly) {
  const auto q = normalize(std::vector<double>{1.0, 0.0, 0.0});
  const std::vector<FeatureVector> keys{normalize(std::vector<double>{0.5, 1.0, 0.0}),
                                        normalize(std::vector<double>{0.5, 0.0, 1.0})};
  EXPECT_NEAR(softmax_similarity(q, keys, 0, 0.3), 0.5, 1e-15);
}

TEST(SoftmaxSimilarity, WorkedExample) {
  const auto q = normalize(std::vector<double>{1.0, 0.0});
  const std::vector<FeatureVector> keys{normalize(std::vector<double>{1.0, 0.0}),
                                        normalize(std::vector<double>{0.0, 1.0})};
  const double e2 = std::exp(2.0);
  const double expected = e2 / (e2 + 1.0);
  EXPECT_NEAR(softmax_similarity(q, keys, 0, 0.5), expected, 1e-15);
  EXPECT_NEAR(expected, 0.880797, 5e-7);
}

TEST(SoftmaxSimilarity, Errors) {
  const auto q = normalize(std::vector<double>{1.0, 0.0});
  const std::vector<FeatureVector> none;
  try {
    softmax_similarity(q, none, 0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyKeySet);
  }
  const std::vector<FeatureVector> one{q};
  try {
    softmax_similarity(q, one, 1, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(SoftmaxSimilarity, NoOverflowAtSmallTemperature) {
  const auto q = normalize(std::vector<double>{1.0, 0.0});
  const std::vector<FeatureVector> keys{q, normalize(std::vector<double>{-1.0, 0.0})};
  const double p = softmax_similarity(q, keys, 0, 1e-3);
  EXPECT_TRUE(std::isfinite(p));
  EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(SoftmaxSimilarity, ShiftInvariance) {
  std::vector<double> logits{0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = logits;
  for (auto& l : shifted) l += 17.25;
  const auto a = softmax_logits(logits), b = softmax_logits(shifted);
  for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(SoftmaxDistribution, SelfAndAntipode) {
  const auto q = normalize(std::vector<double>{0.2, -0.4, 0.7});
  std::vector<double> neg(q.begin(), q.end());
  for (auto& x : neg) x = -x;
  const std::vector<FeatureVector> keys{q, normalize(neg)};
  const auto p = softmax_distribution(q, keys, 1.0);
  const double e = std::exp(1.0), ei = std::exp(-1.0);
  EXPECT_NEAR(p[0], e / (e + ei), 1e-15);
  EXPECT_NEAR(p[1], ei / (e + ei), 1e-15);
  EXPECT_NEAR(p[0], 0.880797, 5e-7);
  EXPECT_NEAR(p[1], 0.119203, 5e-7);
}

TEST(SoftmaxDistribution, IdenticalKeysUniform) {
  Rng rng(3);
  const auto q = random_unit(rng, 4);
  const auto k = random_unit(rng, 4);
  const std::vector<FeatureVector> keys(6, k);
  const auto p = softmax_distribution(q, keys, 0.1);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(p[i], 1.0 / 6.0, 1e-15);
}

TEST(SoftmaxDistribution, HighTemperatureNearUniform) {
  Rng rng(4);
  const auto q = random_unit(rng, 8);
  std::vector<FeatureVector> keys;
  for (int i = 0; i < 10; ++i) keys.push_back(random_unit(rng, 8));
  const auto p = softmax_distribution(q, keys, 1e6);
  for (std::size_t i = 0; i < keys.size(); ++i) EXPECT_LT(std::abs(p[i] - 0.1), 1e-5);
}

TEST(SoftmaxDistribution, MatchesSimilarityAndSumsToOne) {
  Rng rng(5);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t d = 2 + rng.below(6), n = 1 + rng.below(12);
    const auto q = random_unit(rng, d);
    std::vector<FeatureVector> keys;
    for (std::size_t i = 0; i < n; ++i) keys.push_back(random_unit(rng, d));
    const double tau = rng.uniform(0.05, 2.0);
    const auto p = softmax_distribution(q, keys, tau);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    ASSERT_NEAR(s, 1.0, 1e-9);
    const std::size_t pos = rng.below(n);
    ASSERT_NEAR(p[pos], softmax_similarity(q, keys, pos, tau), 1e-12);
  }
}

TEST(KlDivergence, IdentityIsZero) {
  const ProbDistribution p({0.2, 0.3, 0.5});
  EXPECT_EQ(kl_divergence(p, p), 0.0);
}

TEST(KlDivergence, PointMassAgainstUniform) {
  const ProbDistribution p({1.0, 0.0}), r({0.5, 0.5});
  EXPECT_NEAR(kl_divergence(p, r), std::log(2.0), 1e-15);
  EXPECT_NEAR(kl_divergence(p, r), 0.693147, 5e-7);
}

TEST(KlDivergence, Asymmetry) {
  const ProbDistribution p({0.9, 0.1}), r({0.5, 0.5});
  const double pr = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  const double rp = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(kl_divergence(p, r), pr, 1e-15);
  EXPECT_NEAR(kl_divergence(r, p), rp, 1e-15);
  EXPECT_NEAR(pr, 0.368, 5e-4);
  EXPECT_NEAR(rp, 0.511, 5e-4);
  EXPECT_NE(kl_divergence(p, r), kl_divergence(r, p));
}

TEST(KlDivergence, LengthMismatch) {
  const std::vector<double> a{0.5, 0.5}, b{1.0};
  try {
    kl_divergence(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(KlDivergence, GibbsInequalityAndIndiscernibles) {
  Rng rng(11);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng.below(10);
    const auto p = random_probs(rng, n), r = random_probs(rng, n);
    ASSERT_GE(kl_divergence(p, r), 0.0);
    ASSERT_NEAR(kl_divergence(p, p), 0.0, 1e-9);
    // A visibly different pair has a visibly positive divergence.
    double l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) l1 += std::abs(p[i] - r[i]);
    if (l1 > 1e-3) {
      ASSERT_GT(kl_divergence(p, r), 0.0);
    }
  }
}

TEST(TangentProject, RemovesRadialComponent) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const auto u = random_unit(rng, 7);
    std::vector<double> g(7);
    for (auto& x : g) x = rng.normal();
    const auto p = tangent_project(u, g);
    ASSERT_NEAR(dot(u.values(), p), 0.0, 1e-12);
  }
}

TEST(TemperatureConfig, DefaultsAndValidation) {
  TemperatureConfig t;
  EXPECT_EQ(t.tau_pa, 0.5);
  EXPECT_EQ(t.tau_ia, 0.1);
  EXPECT_EQ(t.tau_c, 0.07);
  EXPECT_EQ(t.tau_ps, 0.1);
  EXPECT_EQ(t.tau_is, 0.2);
  EXPECT_NO_THROW(t.validate());
  t.tau_is = 0.0;
  EXPECT_THROW(t.validate(), Error);
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    (void)c;
  }
  EXPECT_NE(Rng(42).next(), Rng(43).next());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Rng, BelowIsUniform) {
  Rng rng(9);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  // Each bucket ~ Binomial(n, 1/7); allow 5 standard deviations.
  const double mean = n / 7.0, sd = std::sqrt(n * (1.0 / 7.0) * (6.0 / 7.0));
  for (int c : counts) EXPECT_NEAR(c, mean, 5 * sd);
}
