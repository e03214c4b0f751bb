#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "drmww/core_math.hpp"

using namespace drmww;

TEST(SpecialFunctions, ExpitValues) {
  EXPECT_DOUBLE_EQ(expit(0.0), 0.5);
  EXPECT_NEAR(expit(1.0), 0.7310585786300049, 1e-15);
  EXPECT_DOUBLE_EQ(expit(40.0), 1.0 - 1e-12);
  EXPECT_DOUBLE_EQ(expit(-40.0), 1e-12);
  EXPECT_THROW(expit(std::nan("")), DomainError);
}

TEST(SpecialFunctions, NormalCdf) {
  EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(std_normal_cdf(1.0), 0.8413447460685429, 1e-15);
  for (double x : {0.1, 0.7, 1.3, 2.9, 5.0})
    EXPECT_NEAR(std_normal_cdf(x) + std_normal_cdf(-x), 1.0, 1e-15) << x;
  EXPECT_DOUBLE_EQ(std_normal_cdf(-50.0), 1e-12);
  EXPECT_NEAR(std_normal_pdf(0.0), 0.3989422804014327, 1e-15);
}

TEST(CompensatedSum, RecoversSmallTerms) {
  CompensatedSum s;
  s.add(1e16);
  for (int k = 0; k < 1000; ++k) s.add(1.0);
  s.add(-1e16);
  EXPECT_DOUBLE_EQ(s.value(), 1000.0);
}

// Known-answer vectors distributed with Random123.
TEST(Philox, KnownAnswers) {
  auto a = philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(a, (PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  auto b = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                         {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(b, (PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  auto c = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                         {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(c, (PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, ReproducibleAndStreamSeparated) {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differs_c = false, differs_d = false;
  for (int k = 0; k < 100; ++k) {
    auto x = a();
    EXPECT_EQ(x, b());
    differs_c |= x != c();
    differs_d |= x != d();
  }
  EXPECT_TRUE(differs_c);
  EXPECT_TRUE(differs_d);
}

TEST(RngStream, UniformInOpenInterval) {
  RngStream r(1, 0);
  double lo = 1, hi = 0, sum = 0;
  for (int k = 0; k < 100000; ++k) {
    double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Samplers, Boundaries) {
  RngStream r(3, 0);
  EXPECT_EQ(sample_normal(1.0, 0.0, r), 1.0);
  for (int k = 0; k < 100; ++k) {
    EXPECT_EQ(sample_bernoulli(0.0, r), 0);
    EXPECT_EQ(sample_bernoulli(1.0, r), 1);
  }
  EXPECT_THROW(sample_bernoulli(1.5, r), DomainError);
  EXPECT_THROW(sample_normal(0.0, -1.0, r), DomainError);
  EXPECT_THROW(sample_centered_chisq(0.0, r), DomainError);
}

TEST(Samplers, NormalMean) {
  RngStream r(11, 0);
  const int N = 1000000;
  double sum = 0;
  for (int k = 0; k < N; ++k) sum += sample_normal(1.0, 0.25, r);
  EXPECT_NEAR(sum / N, 1.0, 0.002);
}

TEST(Samplers, CenteredChisqMoments) {
  RngStream r(5, 1);
  const int N = 1000000;
  std::vector<double> x(N);
  double m = 0;
  for (auto& v : x) {
    v = sample_centered_chisq(1.0, r);
    m += v;
  }
  m /= N;
  double m2 = 0, m3 = 0;
  for (double v : x) {
    m2 += (v - m) * (v - m);
    m3 += (v - m) * (v - m) * (v - m);
  }
  m2 /= N;
  m3 /= N;
  EXPECT_NEAR(m, 0.0, 0.005);
  EXPECT_NEAR(m2, 1.0, 0.02);
  EXPECT_NEAR(m3 / std::pow(m2, 1.5), 2.83, 0.1);
}

TEST(Samplers, BernoulliRate) {
  RngStream r(9, 2);
  int hits = 0;
  for (int k = 0; k < 200000; ++k) hits += sample_bernoulli(0.3, r);
  EXPECT_NEAR(hits / 200000.0, 0.3, 0.004);
}
