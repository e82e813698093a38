#include "wmguide/stats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wmguide/errors.hpp"
#include "wmguide/numerics.hpp"
#include "wmguide/rng.hpp"

using namespace wmguide;
using namespace wmguide::stats;

namespace {

std::vector<double> unit_vector(std::size_t m, RngStream& rng) {
  std::vector<double> v(m);
  double s = 0.0;
  for (double& x : v) {
    x = rng.normal();
    s += x * x;
  }
  for (double& x : v) x /= std::sqrt(s);
  return v;
}

// Linear-domain RCU bound for small blocklengths, no log tricks.
double rcu_direct(int m, double rho, int k) {
  double total = 0.0;
  for (int t = 0; t <= m; ++t) {
    double cdf = 0.0;
    for (int s = 0; s <= t; ++s) {
      cdf += std::tgamma(m + 1.0) / (std::tgamma(s + 1.0) * std::tgamma(m - s + 1.0)) *
             std::pow(0.5, m);
    }
    const double b = std::tgamma(m + 1.0) / (std::tgamma(t + 1.0) * std::tgamma(m - t + 1.0)) *
                     std::pow(rho, t) * std::pow(1 - rho, m - t);
    total += b * std::min(1.0, (std::pow(2.0, k) - 1.0) * cdf);
  }
  return total;
}

}  // namespace

TEST(PValueCosine, ExactValues) {
  for (std::size_t m : {2u, 48u, 256u}) {
    EXPECT_EQ(pvalue_cosine(0.0, m), 0.5);
    EXPECT_EQ(pvalue_cosine(1.0, m), 0.0);
    EXPECT_EQ(pvalue_cosine(-1.0, m), 1.0);
  }
  EXPECT_NEAR(pvalue_cosine(std::sqrt(2.0) / 2.0, 2), 0.25, 1e-12);
  EXPECT_THROW(pvalue_cosine(1.01, 48), InvalidArgument);
  EXPECT_THROW(pvalue_cosine(0.1, 1), InvalidArgument);
}

TEST(PValueCosine, LowDimensionClosedForms) {
  for (double c = -0.99; c < 1.0; c += 0.0725) {
    EXPECT_NEAR(pvalue_cosine(c, 2), std::acos(c) / std::numbers::pi, 1e-10) << c;
    // Cosine with a fixed direction is uniform on [-1, 1] in three dimensions.
    EXPECT_NEAR(pvalue_cosine(c, 3), (1.0 - c) / 2.0, 1e-10) << c;
    const double p4 = 0.5 - (c * std::sqrt(1 - c * c) + std::asin(c)) / std::numbers::pi;
    EXPECT_NEAR(pvalue_cosine(c, 4), p4, 1e-10) << c;
  }
}

TEST(PValueCosine, SymmetryAndMonotonicity) {
  for (std::size_t m : {2u, 5u, 48u, 256u}) {
    double prev = 1.0;
    for (double c = -1.0; c <= 1.0; c += 0.01) {
      const double p = pvalue_cosine(c, m);
      EXPECT_NEAR(pvalue_cosine(-c, m), 1.0 - p, 1e-10);
      if (p > 1e-12 && p < 1.0 - 1e-12) EXPECT_LT(p, prev);
      EXPECT_LE(p, prev);
      prev = p;
    }
  }
}

TEST(PValueCosine, FarTailStaysPositiveAndAccurate) {
  // For M = 256 the tail is well approximated by ((1-c^2)^{(M-1)/2}) / (c sqrt(2 pi M)).
  const std::size_t m = 256;
  for (double c : {0.6, 0.8, 0.95}) {
    const double p = pvalue_cosine(c, m);
    ASSERT_GT(p, 0.0);
    const double approx = std::pow(1 - c * c, (m - 1) / 2.0) /
                          (c * std::sqrt(2 * std::numbers::pi * static_cast<double>(m)));
    EXPECT_NEAR(std::log(p), std::log(approx), 0.05);
  }
}

TEST(PValueCosine, MonteCarloOnRandomDirections) {
  RngStream rng(1);
  const std::size_t m = 48;
  const int n = 200000;
  std::vector<double> cs(n);
  for (double& c : cs) c = unit_vector(m, rng)[0];
  for (double c : {0.05, 0.2, 0.35}) {
    const double p = pvalue_cosine(c, m);
    const double emp =
        static_cast<double>(std::count_if(cs.begin(), cs.end(), [c](double x) { return x >= c; })) / n;
    EXPECT_LT(std::abs(emp - p), 3.0 * std::sqrt(p * (1 - p) / n) + 1e-6) << c;
  }
}

TEST(PValueCosine, UniformUnderIsotropicFeatures) {
  RngStream rng(2);
  for (std::size_t m : {2u, 48u, 256u}) {
    std::vector<double> ps;
    for (int i = 0; i < 10000; ++i) {
      const auto f = unit_vector(m, rng);
      const auto u = unit_vector(m, rng);
      ps.push_back(pvalue_cosine(decoder::cosine_score(f, u), m));
    }
    EXPECT_LT(numerics::ks_statistic(ps), numerics::ks_critical(ps.size(), 0.01)) << m;
  }
}

TEST(Detection, QuantileConvention) {
  const std::vector<double> same(7, 3e-5);
  for (double pd : {0.1, 0.5, 0.9, 1.0}) {
    EXPECT_NEAR(neglog10_pfa_at_detection(same, pd), -std::log10(3e-5), 1e-12);
  }
  std::vector<double> decades;
  for (int d = 1; d <= 10; ++d) decades.push_back(std::pow(10.0, -d));
  std::reverse(decades.begin(), decades.end());
  EXPECT_NEAR(neglog10_pfa_at_detection(decades, 0.9), 2.0, 1e-12);
  EXPECT_THROW(pvalue_at_detection(std::vector<double>{}, 0.9), InvalidArgument);

  RngStream rng(3);
  std::vector<double> uni(100001);
  for (double& p : uni) p = rng.uniform();
  EXPECT_NEAR(neglog10_pfa_at_detection(uni, 0.5), -std::log10(0.5), 0.01);

  double prev = 1e300;
  for (double pd = 0.05; pd <= 1.0; pd += 0.05) {
    const double v = neglog10_pfa_at_detection(uni, pd);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Detection, RateAtFalseAlarm) {
  const std::vector<double> p{1e-8, 1e-3, 0.2, 0.7};
  EXPECT_EQ(detection_at_fa(p, 1.0), 1.0);
  EXPECT_EQ(detection_at_fa(p, 0.0), 0.0);
  EXPECT_EQ(detection_at_fa(p, 0.1), 0.5);
  double prev = 0.0;
  for (double t = 1e-10; t < 1.0; t *= 3) {
    const double d = detection_at_fa(p, t);
    EXPECT_GE(d, prev);
    prev = d;
  }
  EXPECT_THROW(detection_at_fa(std::vector<double>{}, 0.1), InvalidArgument);
}

TEST(Detection, BitErrorRate) {
  decoder::BitMessage m{std::vector<std::uint8_t>(48, 0)};
  for (std::size_t i = 0; i < 48; i += 3) m.bits[i] = 1;
  decoder::BitMessage c = m;
  for (auto& b : c.bits) b ^= 1;
  EXPECT_EQ(bit_error_rate(m, m), 0.0);
  EXPECT_EQ(bit_error_rate(m, c), 1.0);
  decoder::BitMessage one = m;
  one.bits[5] ^= 1;
  EXPECT_DOUBLE_EQ(bit_error_rate(m, one), 1.0 / 48.0);
  decoder::BitMessage short_m{std::vector<std::uint8_t>(47, 0)};
  EXPECT_THROW(bit_error_rate(m, short_m), InvalidArgument);
}

TEST(Rcu, AnchorValues) {
  EXPECT_EQ(rcu_capacity(256, 0.5, 1e-3), 0);
  EXPECT_EQ(rcu_capacity(256, 0.0, 1e-3), 246);
  // Noiseless channel: (2^k - 1) 2^-m <= eps.
  for (std::size_t m : {16u, 48u, 100u}) {
    const int want = static_cast<int>(std::floor(static_cast<double>(m) + std::log2(1e-3)));
    EXPECT_EQ(rcu_capacity(m, 0.0, 1e-3), want) << m;
  }
}

TEST(Rcu, LogDomainMatchesDirectSum) {
  for (double rho : {0.01, 0.1, 0.3}) {
    for (int k = 1; k <= 12; k += 3) {
      EXPECT_NEAR(std::exp(rcu_log_bound(24, rho, k)), rcu_direct(24, rho, k),
                  1e-10 * rcu_direct(24, rho, k) + 1e-300)
          << rho << " " << k;
    }
  }
}

TEST(Rcu, MonotoneAndBelowShannon) {
  for (std::size_t m : {48u, 256u}) {
    int prev = static_cast<int>(m);
    for (int i = 0; i <= 10; ++i) {
      const double rho = 0.05 * i;
      const int k = rcu_capacity(m, rho, 1e-3);
      EXPECT_LE(k, prev) << rho;
      const double md = static_cast<double>(m);
      EXPECT_LE(k, md * (1 - binary_entropy(rho)) + 2 * std::sqrt(md)) << rho;
      prev = k;
    }
  }
  EXPECT_GE(rcu_capacity(256, 0.016, 1e-3), 150);
}

TEST(FalseAlarm, BandAndFloor) {
  EXPECT_NEAR(dkw_band(100000, 0.01), std::sqrt(-std::log(0.005) / 200000.0), 1e-15);
  const std::vector<double> p{0.01, 0.2, 0.5, 0.9};
  const double lv[] = {0.5};
  const auto curve = validate_false_alarm(p, lv);
  EXPECT_EQ(curve.floor, 2.5);
  EXPECT_FALSE(curve.points[0].testable);
  EXPECT_EQ(curve.points[0].count, 2u);
}

TEST(FalseAlarm, SyntheticIsotropicFeaturesStayInBand) {
  RngStream rng(4);
  const std::size_t m = 48;
  const int n = 20000;
  std::vector<double> features(m * n);
  for (double& x : features) x = rng.normal();
  std::vector<decoder::SecretVector> keys{decoder::modulate(decoder::BitMessage::random(m, rng))};
  const auto p = cosine_pvalues(features, m, keys);
  const auto levels = decade_grid(4);
  const auto curve = validate_false_alarm(p, levels);
  EXPECT_TRUE(curve.all_within_band());
  for (const auto& pt : curve.points) {
    if (!pt.testable) continue;
    // Tighter than the uniform band: binomial 4 sigma at each point.
    EXPECT_LT(std::abs(pt.empirical - pt.level), 4 * std::sqrt(pt.level / n)) << pt.level;
  }
}

TEST(Report, Fields) {
  const std::vector<double> p{1e-12, 1e-9, 1e-7, 1e-3};
  const std::vector<double> ber{0.0, 0.0, 0.01, 0.2};
  const auto r = make_report("guided", "identity", p, ber, 256);
  EXPECT_EQ(r.samples, 4u);
  EXPECT_EQ(r.pd_at_fa[2], 0.75);
  EXPECT_NEAR(r.ber_median, 0.005, 1e-15);
  EXPECT_EQ(r.capacity, rcu_capacity(256, 0.005));
  EXPECT_NEAR(r.neglog10_pfa_at_pd[1], 3.0, 1e-12);
  const auto z = make_report("treering", "identity", p, {}, 0);
  EXPECT_EQ(z.capacity, 0);
}
