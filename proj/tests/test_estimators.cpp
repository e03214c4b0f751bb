#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "drmww/estimators.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace drmww;

namespace {

GpiModel constant_g(double g) {
  GpiModel m;
  m.constant_only = true;
  m.gamma = Eigen::VectorXd::Constant(1, 0.0);
  // bisection for the probit intercept
  double lo = -10, hi = 10;
  for (int k = 0; k < 200; ++k) {
    double mid = 0.5 * (lo + hi);
    (std_normal_cdf(mid) < g ? lo : hi) = mid;
  }
  m.gamma[0] = 0.5 * (lo + hi);
  return m;
}

GpiModel probit_model(std::vector<double> gamma) {
  GpiModel m;
  m.gamma = Eigen::Map<Eigen::VectorXd>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
  return m;
}

}  // namespace

TEST(Mww, HandEnumeratedExamples) {
  auto d = testutil::simple({1, 1, 0, 0}, {1, 3, 2, 4});
  EXPECT_DOUBLE_EQ(mww_estimate(d).delta_hat, 0.75);
  auto e = testutil::simple({1, 1, 0, 0}, {1, 4, 2, 3});
  EXPECT_DOUBLE_EQ(mww_estimate(e).delta_hat, 0.5);
  EXPECT_THROW(mww_estimate(testutil::simple({0, 0}, {1, 2})), EstimabilityError);
}

TEST(Mww, TieKernelOnCountOutcomes) {
  std::vector<Subject> s{{"a", 1, 2, {}}, {"b", 0, 2, {}}, {"c", 1, 1, {}}, {"d", 0, 3, {}}};
  Dataset counts(s, OutcomeKind::count);
  // 2 vs 2 tie -> 0.5; 2<=3; 1<=2; 1<=3
  EXPECT_DOUBLE_EQ(mww_estimate(counts).delta_hat, 3.5 / 4.0);
  Dataset cont(s, OutcomeKind::continuous);
  EXPECT_DOUBLE_EQ(mww_estimate(cont).delta_hat, 1.0);
  EXPECT_DOUBLE_EQ(mww_estimate(cont, {true, false}).delta_hat, 3.5 / 4.0);
}

TEST(Mww, ProjectionStandardError) {
  std::mt19937_64 rng(4);
  auto s = oracle::random_sample(rng, 30, 0, false);
  auto d = testutil::to_dataset(s);
  auto r = mww_estimate(d);
  std::vector<double> row, col;
  for (std::size_t a = 0; a < s.n(); ++a) {
    if (s.z[a] != 1) continue;
    double t = 0, c = 0;
    for (std::size_t b = 0; b < s.n(); ++b)
      if (s.z[b] == 0) t += oracle::ind(s.y[a], s.y[b], false), ++c;
    row.push_back(t / c);
  }
  for (std::size_t b = 0; b < s.n(); ++b) {
    if (s.z[b] != 0) continue;
    double t = 0, c = 0;
    for (std::size_t a = 0; a < s.n(); ++a)
      if (s.z[a] == 1) t += oracle::ind(s.y[a], s.y[b], false), ++c;
    col.push_back(t / c);
  }
  auto var = [&](const std::vector<double>& v) {
    double ss = 0;
    for (double x : v) ss += (x - r.delta_hat) * (x - r.delta_hat);
    return ss / static_cast<double>(v.size() - 1);
  };
  double expected = std::sqrt(var(row) / row.size() + var(col) / col.size());
  EXPECT_NEAR(*r.se, expected, 1e-14);
}

TEST(Mww, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    auto s = oracle::random_sample(rng, 5 + rep % 20, 0, rep % 3 == 0);
    auto base = mww_estimate(testutil::to_dataset(s)).delta_hat;
    for (int f = 0; f < 3; ++f) {
      auto t = s;
      for (auto& y : t.y) y = f == 0 ? std::exp(y) : f == 1 ? 3.0 * y + 1.0 : y * y * y;
      EXPECT_EQ(mww_estimate(testutil::to_dataset(t)).delta_hat, base);
    }
  }
}

TEST(Ipw, ConstantPropensityWithWeightNormalizationIsMww) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  for (int rep = 0; rep < 200; ++rep) {
    auto s = oracle::random_sample(rng, 2 + rep % 12, 0, rep % 2 == 0);
    auto d = testutil::to_dataset(s);
    std::vector<double> pi(d.size(), U(rng));
    auto r = ipw_estimate(d, pi, {false, true});
    EXPECT_NEAR(r.delta_hat, mww_estimate(d).delta_hat, 1e-12) << rep;
  }
  auto d = testutil::simple({1, 1, 0, 0}, {1, 3, 2, 4});
  std::vector<double> half(4, 0.5);
  EXPECT_NEAR(ipw_estimate(d, half, {false, true}).delta_hat, 0.75, 1e-15);
}

TEST(Msi, HandExpandedExample) {
  auto d = testutil::simple({1, 1, 0, 0}, {1, 3, 2, 4});
  auto r = msi_estimate(d, constant_g(0.5));
  EXPECT_NEAR(r.delta_hat, (2 * 0.75 + 4 * 0.5) / 6.0, 1e-12);
  EXPECT_NEAR(r.delta_hat, 0.5833333333333334, 1e-12);
  auto all_treated = testutil::simple({1, 1, 1}, {3, 1, 2});
  EXPECT_NEAR(msi_estimate(all_treated, constant_g(0.5)).delta_hat, 0.5, 1e-15);
}

TEST(Estimators, MatchBruteForceOnSmallSamples) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.1, 0.9), G(-1.0, 1.0);
  int checked = 0;
  for (std::size_t n = 2; n <= 6; ++n)
    for (int rep = 0; rep < 60; ++rep) {
      const bool coarse = rep % 2 == 0;
      auto s = oracle::random_sample(rng, n, 1, coarse);
      auto d = testutil::to_dataset(s);
      std::vector<double> pi(n);
      for (auto& p : pi) p = U(rng);
      std::vector<double> gamma{G(rng), G(rng), G(rng)};
      auto gm = probit_model(gamma);
      auto og = oracle::probit_g(s, gamma, false);
      for (bool ties : {false, true}) {
        EstimatorOptions plain{ties, false}, hajek{ties, true};
        EXPECT_NEAR(mww_estimate(d, plain).delta_hat, oracle::mww(s, ties), 1e-12);
        EXPECT_NEAR(ipw_estimate(d, pi, plain).delta_hat, oracle::ipw(s, pi, ties, false), 1e-12);
        EXPECT_NEAR(ipw_estimate(d, pi, hajek).delta_hat, oracle::ipw(s, pi, ties, true), 1e-12);
        EXPECT_NEAR(msi_estimate(d, gm, plain).delta_hat, oracle::msi(s, og, ties), 1e-12);
        EXPECT_NEAR(dr_estimate(d, pi, gm, plain).delta_hat, oracle::dr(s, pi, og, ties, false),
                    1e-12);
        EXPECT_NEAR(dr_estimate(d, pi, gm, hajek).delta_hat, oracle::dr(s, pi, og, ties, true),
                    1e-12);
        ++checked;
      }
    }
  EXPECT_EQ(checked, 600);
}

TEST(Dr, PairTermsMatchHandEvaluation) {
  // z_i = 1, z_j = 0, pi = (0.8, 0.2), indicator 1, g_ij = 0.6, g_ji = 0.4
  PairInputs in{1, 0, 0.8, 0.2, 0.6, 0.4, 1.0, 0.0};
  auto t = pair_terms(in);
  // 1/2 [(1/0.64) 1 + (1 - 1/0.64) 0.6] + 1/2 [0 + 1 * 0.4]
  EXPECT_NEAR(t.dr, 0.8125, 1e-12);
  PairInputs concordant{1, 1, 0.3, 0.6, 0.7, 0.2, 0.0, 0.0};
  EXPECT_NEAR(pair_terms(concordant).dr, 0.45, 1e-15);
  EXPECT_EQ(pair_terms(concordant).ipw, 0.0);
}

TEST(Dr, ReducesToMsiOrIpwWhenOneComponentIsExact) {
  // with w_ij residuals zero (g equals the indicator) DR is the imputation
  // mean; with g = 0 it is the IPW average
  std::mt19937_64 rng(12);
  auto s = oracle::random_sample(rng, 6, 0, false);
  auto d = testutil::to_dataset(s);
  std::vector<double> pi{0.3, 0.4, 0.5, 0.6, 0.7, 0.45};
  GpiModel tiny = constant_g(1e-12);
  EXPECT_NEAR(dr_estimate(d, pi, tiny).delta_hat, ipw_estimate(d, pi).delta_hat, 1e-9);
}

TEST(Notes, ClippedPropensitiesAreCounted) {
  auto d = testutil::simple({1, 1, 0, 0}, {1, 3, 2, 4});
  std::vector<double> pi{1e-6, 0.5, 0.5, 1 - 1e-6};
  auto r = ipw_estimate(d, pi);
  EXPECT_EQ(r.clipped, 2u);
  EXPECT_FALSE(r.notes.empty());
}
