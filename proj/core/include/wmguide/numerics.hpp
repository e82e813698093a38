#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace wmguide::numerics {

// Regularized incomplete beta I_x(a, b). Continued fraction with the
// symmetry switch at x > a / (a + b). Absolute error below 1e-12 and relative
// accuracy in the far tails.
double reg_inc_beta(double x, double a, double b);

// Regularized incomplete gamma P(a, x) and its complement Q(a, x), each
// evaluated directly (no 1 - other cancellation in the tail).
double reg_lower_gamma(double a, double x);
double reg_upper_gamma(double a, double x);

double chi2_cdf(double x, double dof);
double chi2_sf(double x, double dof);
// Poisson mixture of central chi-square CDFs; nc is the usual
// non-centrality (sum of squared means).
double noncentral_chi2_cdf(double x, double dof, double nc);

double normal_cdf(double x);

// Weighted sum of independent non-central chi-squares:
//   Q = sum_j weights[j] * chi2(dofs[j], noncentralities[j]).
struct ChiSquareMixture {
  std::vector<double> weights;
  std::vector<double> noncentralities;
  std::vector<int> dofs;

  void validate() const;
  double mean() const;
  double variance() const;
};

struct RubenResult {
  double cdf = 0.0;
  double error_bound = 0.0;
  std::size_t terms = 0;
};

inline constexpr std::size_t kRubenMaxTerms = 1'000'000;

// P(Q <= x) by Ruben's series (central chi-square mixture with a common
// scale beta below the smallest weight). Stops once the series remainder
// bound is below tol; throws NumericFailure carrying the partial sum and the
// bound if max_terms is exhausted.
RubenResult ruben_cdf_detail(const ChiSquareMixture& mix, double x, double tol,
                             std::size_t max_terms = kRubenMaxTerms);
double ruben_cdf(const ChiSquareMixture& mix, double x, double tol = 1e-12);

// Sup-distance between the empirical CDF of samples and Uniform(0, 1).
double ks_statistic(std::span<const double> samples);
// Asymptotic Kolmogorov critical value sqrt(-ln(alpha / 2) / (2 n)).
double ks_critical(std::size_t n, double alpha);

// L×L grid of complex values, row-major.
class ComplexGrid {
 public:
  ComplexGrid() = default;
  explicit ComplexGrid(std::size_t side)
      : side_(side), values_(side * side) {}

  std::size_t side() const noexcept { return side_; }
  std::complex<double>& at(std::size_t r, std::size_t c) {
    return values_[r * side_ + c];
  }
  const std::complex<double>& at(std::size_t r, std::size_t c) const {
    return values_[r * side_ + c];
  }
  std::span<std::complex<double>> values() noexcept { return values_; }
  std::span<const std::complex<double>> values() const noexcept {
    return values_;
  }

 private:
  std::size_t side_ = 0;
  std::vector<std::complex<double>> values_;
};

bool is_power_of_two(std::size_t n) noexcept;

// In-place radix-2 decimation-in-time FFT. Unnormalized in both directions.
void fft_inplace(std::span<std::complex<double>> data, bool inverse);

// Unnormalized forward 2D DFT of a real L×L row-major grid.
ComplexGrid fft2(std::span<const double> grid, std::size_t side);
ComplexGrid fft2(const ComplexGrid& grid);
// Inverse 2D DFT including the 1/L² factor.
ComplexGrid ifft2(const ComplexGrid& grid);

}  // namespace wmguide::numerics
