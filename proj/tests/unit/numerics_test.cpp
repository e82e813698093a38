#include "wmguide/numerics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "wmguide/errors.hpp"

namespace nm = wmguide::numerics;

namespace {

// Hypoexponential closed form: Q = sum_j w_j chi2(2) with distinct weights.
double two_dof_mixture_cdf(const std::vector<double>& w, double x) {
  double sf = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    double coef = 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (k != j) coef *= w[j] / (w[j] - w[k]);
    }
    sf += coef * std::exp(-x / (2.0 * w[j]));
  }
  return 1.0 - sf;
}

// Non-central chi-square with one degree of freedom via the normal CDF.
double ncx2_one_dof_cdf(double x, double nc) {
  const double r = std::sqrt(x);
  const double m = std::sqrt(nc);
  return 0.5 * (std::erfc(-(r - m) / std::sqrt(2.0)) - std::erfc(-(-r - m) / std::sqrt(2.0)));
}

std::vector<std::complex<double>> direct_dft2(const std::vector<double>& g, std::size_t n) {
  std::vector<std::complex<double>> out(n * n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double ang = -2.0 * std::numbers::pi *
                             static_cast<double>(u * y + v * x) / static_cast<double>(n);
          acc += g[y * n + x] * std::polar(1.0, ang);
        }
      }
      out[u * n + v] = acc;
    }
  }
  return out;
}

}  // namespace

TEST(IncompleteBeta, ClosedForms) {
  for (double x : {0.0, 1e-8, 0.1, 0.37, 0.5, 0.81, 0.999, 1.0}) {
    for (double b : {0.5, 1.0, 3.0, 40.0}) {
      EXPECT_NEAR(nm::reg_inc_beta(x, 1.0, b), 1.0 - std::pow(1.0 - x, b), 1e-13);
      EXPECT_NEAR(nm::reg_inc_beta(x, b, 1.0), std::pow(x, b), 1e-13);
    }
    EXPECT_NEAR(nm::reg_inc_beta(x, 0.5, 0.5),
                2.0 / std::numbers::pi * std::asin(std::sqrt(x)), 1e-12);
  }
}

TEST(IncompleteBeta, SymmetryAndTailPrecision) {
  for (double x : {0.05, 0.3, 0.7, 0.95}) {
    EXPECT_NEAR(nm::reg_inc_beta(x, 2.5, 7.0) + nm::reg_inc_beta(1.0 - x, 7.0, 2.5), 1.0, 1e-13);
  }
  // I_x(a, 1) = x^a keeps relative precision deep in the tail.
  const double v = nm::reg_inc_beta(1e-3, 60.0, 1.0);
  EXPECT_NEAR(v / 1e-180, 1.0, 1e-10);
  EXPECT_THROW(nm::reg_inc_beta(1.5, 1.0, 1.0), wmguide::InvalidArgument);
  EXPECT_THROW(nm::reg_inc_beta(0.5, 0.0, 1.0), wmguide::InvalidArgument);
}

TEST(IncompleteGamma, ClosedForms) {
  for (double x : {0.0, 0.01, 0.5, 2.0, 10.0, 60.0}) {
    EXPECT_NEAR(nm::reg_lower_gamma(1.0, x), -std::expm1(-x), 1e-14);
    EXPECT_NEAR(nm::reg_upper_gamma(0.5, x), std::erfc(std::sqrt(x)), 1e-13);
    EXPECT_NEAR(nm::chi2_cdf(x, 2.0), -std::expm1(-x / 2.0), 1e-14);
  }
  // Upper tail stays relative-accurate.
  EXPECT_NEAR(nm::chi2_sf(200.0, 2.0) / std::exp(-100.0), 1.0, 1e-10);
}

TEST(NoncentralChiSquare, MatchesOneDofClosedForm) {
  for (double nc : {0.0, 0.3, 2.0, 9.0, 40.0}) {
    for (double x : {0.1, 1.0, 5.0, 20.0, 70.0}) {
      EXPECT_NEAR(nm::noncentral_chi2_cdf(x, 1.0, nc), ncx2_one_dof_cdf(x, nc), 1e-11)
          << "x=" << x << " nc=" << nc;
    }
  }
}

TEST(Ruben, SingleComponentReducesToScaledChiSquare) {
  nm::ChiSquareMixture mix{{2.5}, {3.0}, {4}};
  for (double x : {0.5, 5.0, 12.0, 40.0}) {
    EXPECT_NEAR(nm::ruben_cdf(mix, x), nm::noncentral_chi2_cdf(x / 2.5, 4.0, 3.0), 1e-11);
  }
}

TEST(Ruben, DistinctWeightsMatchHypoexponential) {
  const std::vector<double> w{0.4, 1.0, 2.3, 5.0};
  nm::ChiSquareMixture mix{w, {0, 0, 0, 0}, {2, 2, 2, 2}};
  for (double x : {0.2, 3.0, 10.0, 30.0, 80.0}) {
    EXPECT_NEAR(nm::ruben_cdf(mix, x), two_dof_mixture_cdf(w, x), 1e-11) << "x=" << x;
  }
}

TEST(Ruben, NoncentralMixtureMatchesMonteCarlo) {
  nm::ChiSquareMixture mix{{0.5, 1.5, 3.0}, {1.0, 4.0, 0.5}, {2, 2, 3}};
  std::mt19937_64 gen(99);
  std::normal_distribution<double> nd;
  const int n = 200000;
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double shift = std::sqrt(mix.noncentralities[j]);
      double comp = 0.0;
      for (int d = 0; d < mix.dofs[j]; ++d) {
        const double v = nd(gen) + (d == 0 ? shift : 0.0);
        comp += v * v;
      }
      s += mix.weights[j] * comp;
    }
    q[i] = s;
  }
  for (double x : {2.0, 8.0, 15.0, 30.0}) {
    const double emp =
        static_cast<double>(std::count_if(q.begin(), q.end(), [x](double v) { return v <= x; })) / n;
    const double se = std::sqrt(std::max(emp * (1 - emp), 1e-6) / n);
    EXPECT_NEAR(nm::ruben_cdf(mix, x), emp, 4.0 * se) << "x=" << x;
  }
  EXPECT_NEAR(mix.mean(), 0.5 * 3 + 1.5 * 6 + 3.0 * 3.5, 1e-12);
}

TEST(Ruben, ReportsPartialSumWhenTermsExhausted) {
  nm::ChiSquareMixture mix{{0.01, 10.0}, {0.0, 0.0}, {2, 2}};
  try {
    nm::ruben_cdf_detail(mix, 20.0, 1e-14, 5);
    FAIL() << "expected NumericFailure";
  } catch (const wmguide::NumericFailure& e) {
    EXPECT_GT(e.bound(), 1e-14);
    EXPECT_GE(e.partial(), 0.0);
    EXPECT_LE(e.partial(), 1.0);
  }
  EXPECT_THROW(nm::ruben_cdf(nm::ChiSquareMixture{{-1.0}, {0.0}, {1}}, 1.0),
               wmguide::InvalidArgument);
}

TEST(Ks, StatisticAndCritical) {
  std::vector<double> grid(100);
  for (int i = 0; i < 100; ++i) grid[i] = (i + 0.5) / 100.0;
  EXPECT_NEAR(nm::ks_statistic(grid), 0.005, 1e-15);
  std::vector<double> all_low(10, 0.0);
  EXPECT_NEAR(nm::ks_statistic(all_low), 1.0, 1e-15);
  EXPECT_NEAR(nm::ks_critical(1000, 0.05), std::sqrt(-std::log(0.025) / 2000.0), 1e-15);
}

TEST(Fft, MatchesDirectDftAndParseval) {
  const std::size_t n = 8;
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::vector<double> g(n * n);
  for (auto& v : g) v = nd(gen);
  const auto f = nm::fft2(g, n);
  const auto ref = direct_dft2(g, n);
  double energy_f = 0.0;
  double energy_g = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) {
    EXPECT_NEAR(std::abs(f.values()[i] - ref[i]), 0.0, 1e-11);
    energy_f += std::norm(f.values()[i]);
    energy_g += g[i] * g[i];
  }
  EXPECT_NEAR(energy_f / static_cast<double>(n * n), energy_g, 1e-10);
  const auto back = nm::ifft2(f);
  for (std::size_t i = 0; i < n * n; ++i) EXPECT_NEAR(back.values()[i].real(), g[i], 1e-12);
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<double> g(36, 1.0);
  EXPECT_THROW(nm::fft2(g, 6), wmguide::UnsupportedSize);
  EXPECT_THROW(nm::fft2(g, 5), wmguide::InvalidArgument);
}
