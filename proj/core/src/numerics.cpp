#include "wmguide/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "wmguide/errors.hpp"

namespace wmguide::numerics {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericFailure("reg_inc_beta: continued fraction did not converge");
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// I_x(a, b) assuming x below the switch point.
double inc_beta_direct(double x, double a, double b) {
  const double log_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  return std::exp(log_front) * beta_continued_fraction(x, a, b) / a;
}

double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericFailure("reg_lower_gamma: series did not converge");
}

double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw NumericFailure("reg_upper_gamma: continued fraction did not converge");
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    throw InvalidArgument("incomplete gamma: need a > 0 and x >= 0");
  }
}

}  // namespace

double reg_inc_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0) || !(a > 0.0) || !(b > 0.0)) {
    throw InvalidArgument("reg_inc_beta: need x in [0,1], a > 0, b > 0");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x > a / (a + b)) {
    return 1.0 - inc_beta_direct(1.0 - x, b, a);
  }
  return inc_beta_direct(x, a, b);
}

double reg_lower_gamma(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double reg_upper_gamma(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi2_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return reg_upper_gamma(0.5 * dof, 0.5 * x);
}

double noncentral_chi2_cdf(double x, double dof, double nc) {
  if (!(dof > 0.0) || !(nc >= 0.0)) {
    throw InvalidArgument("noncentral_chi2_cdf: need dof > 0 and nc >= 0");
  }
  if (x <= 0.0) return 0.0;
  if (nc == 0.0) return chi2_cdf(x, dof);
  const double half = 0.5 * nc;
  const auto last = static_cast<std::size_t>(
      std::ceil(half + 20.0 * std::sqrt(half) + 40.0));
  double total = 0.0;
  for (std::size_t j = 0; j <= last; ++j) {
    const double jd = static_cast<double>(j);
    const double log_w = -half + jd * std::log(half) - std::lgamma(jd + 1.0);
    if (log_w < -745.0) continue;
    total += std::exp(log_w) * chi2_cdf(x, dof + 2.0 * jd);
  }
  return std::clamp(total, 0.0, 1.0);
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

void ChiSquareMixture::validate() const {
  if (weights.empty() || weights.size() != noncentralities.size() ||
      weights.size() != dofs.size()) {
    throw InvalidArgument("ChiSquareMixture: component lists must be non-empty and of equal length");
  }
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0) || !std::isfinite(weights[j])) {
      throw InvalidArgument("ChiSquareMixture: weights must be finite and > 0");
    }
    if (!(noncentralities[j] >= 0.0) || !std::isfinite(noncentralities[j])) {
      throw InvalidArgument("ChiSquareMixture: noncentralities must be >= 0");
    }
    if (dofs[j] <= 0) {
      throw InvalidArgument("ChiSquareMixture: degrees of freedom must be > 0");
    }
  }
}

double ChiSquareMixture::mean() const {
  double m = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    m += weights[j] * (dofs[j] + noncentralities[j]);
  }
  return m;
}

double ChiSquareMixture::variance() const {
  double v = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    v += weights[j] * weights[j] * 2.0 * (dofs[j] + 2.0 * noncentralities[j]);
  }
  return v;
}

RubenResult ruben_cdf_detail(const ChiSquareMixture& mix, double x, double tol,
                             std::size_t max_terms) {
  mix.validate();
  if (!(x >= 0.0) || !(tol > 0.0)) {
    throw InvalidArgument("ruben_cdf: need x >= 0 and tol > 0");
  }
  RubenResult result;
  if (x == 0.0) return result;

  const std::size_t n_comp = mix.weights.size();
  const double beta =
      0.90625 * *std::min_element(mix.weights.begin(), mix.weights.end());

  // Q = beta * chi2(n + 2K) with K ~ c_k; all c_k >= 0 since beta < min weight.
  std::vector<double> gamma(n_comp);
  double log_c0 = 0.0;
  int total_dof = 0;
  for (std::size_t j = 0; j < n_comp; ++j) {
    const double ratio = beta / mix.weights[j];
    gamma[j] = 1.0 - ratio;
    log_c0 += 0.5 * mix.dofs[j] * std::log(ratio) - 0.5 * mix.noncentralities[j];
    total_dof += mix.dofs[j];
  }
  if (log_c0 < -700.0) {
    throw NumericFailure("ruben_cdf: leading coefficient underflows", 0.0, 1.0);
  }

  const double z = x / beta;
  // F_m(z) for m = n, n+2, ... via F_{m+2} = F_m - (z/2)^{m/2} e^{-z/2} / Γ(m/2 + 1).
  double dof = total_dof;
  double chi_cdf = chi2_cdf(z, dof);
  double log_term = 0.5 * dof * std::log(0.5 * z) - 0.5 * z - std::lgamma(0.5 * dof + 1.0);

  std::vector<double> coeffs;
  std::vector<double> g;  // g[m - 1] for m >= 1
  std::vector<double> gamma_pow(n_comp, 1.0);  // gamma_j^{m-1}
  coeffs.push_back(std::exp(log_c0));
  double coeff_sum = coeffs[0];
  double cdf = coeffs[0] * chi_cdf;

  for (std::size_t k = 1; k <= max_terms; ++k) {
    // Remainder bound: sum_{m >= k} c_m F_{n+2m} <= (1 - sum_{m<k} c_m) F_{n+2k}.
    const double next_cdf = std::max(0.0, chi_cdf - std::exp(log_term));
    const double bound = std::max(0.0, 1.0 - coeff_sum) * next_cdf;
    if (bound <= tol) {
      result.cdf = std::clamp(cdf, 0.0, 1.0);
      result.error_bound = bound;
      result.terms = k;
      return result;
    }
    double gk = 0.0;
    for (std::size_t j = 0; j < n_comp; ++j) {
      const double pow_prev = gamma_pow[j];  // gamma^{k-1}
      const double pow_k = pow_prev * gamma[j];
      gk += 0.5 * mix.dofs[j] * pow_k +
            0.5 * static_cast<double>(k) * beta *
                (mix.noncentralities[j] / mix.weights[j]) * pow_prev;
      gamma_pow[j] = pow_k;
    }
    g.push_back(gk);
    double ck = 0.0;
    for (std::size_t r = 0; r < k; ++r) ck += g[k - r - 1] * coeffs[r];
    ck /= static_cast<double>(k);
    coeffs.push_back(ck);
    coeff_sum += ck;

    chi_cdf = next_cdf;
    log_term += std::log(0.5 * z) - std::log(0.5 * dof + 1.0);
    dof += 2.0;
    cdf += ck * chi_cdf;
  }
  const double bound = std::max(0.0, 1.0 - coeff_sum) * chi_cdf;
  throw NumericFailure("ruben_cdf: series did not reach tolerance within " +
                           std::to_string(max_terms) + " terms",
                       cdf, bound);
}

double ruben_cdf(const ChiSquareMixture& mix, double x, double tol) {
  return ruben_cdf_detail(mix, x, tol).cdf;
}

double ks_statistic(std::span<const double> samples) {
  if (samples.empty()) throw InvalidArgument("ks_statistic: empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double v = std::clamp(sorted[i], 0.0, 1.0);
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - v);
    d = std::max(d, v - static_cast<double>(i) / n);
  }
  return d;
}

double ks_critical(std::size_t n, double alpha) {
  return std::sqrt(-std::log(alpha / 2.0) / (2.0 * static_cast<double>(n)));
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) {
    throw UnsupportedSize("fft: length " + std::to_string(n) + " is not a power of two");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  // Forward twiddles e^{-2πij/n}, cached per thread for the last length used.
  thread_local std::vector<std::complex<double>> twiddles;
  if (twiddles.size() != n / 2) {
    twiddles.resize(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      twiddles[j] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j) /
                                        static_cast<double>(n));
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t k = 0; k < half; ++k) {
      const std::complex<double> tw = twiddles[k * stride];
      const std::complex<double> w = inverse ? std::conj(tw) : tw;
      for (std::size_t start = 0; start < n; start += len) {
        const std::complex<double> u = data[start + k];
        // Written out to avoid the NaN-recovery path of complex operator*.
        const std::complex<double> b = data[start + k + half];
        const std::complex<double> v(b.real() * w.real() - b.imag() * w.imag(),
                                     b.real() * w.imag() + b.imag() * w.real());
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

namespace {

void fft2_inplace(ComplexGrid& grid, bool inverse) {
  const std::size_t side = grid.side();
  if (!is_power_of_two(side)) {
    throw UnsupportedSize("fft2: side " + std::to_string(side) + " is not a power of two");
  }
  auto values = grid.values();
  for (std::size_t r = 0; r < side; ++r) {
    fft_inplace(values.subspan(r * side, side), inverse);
  }
  std::vector<std::complex<double>> column(side);
  for (std::size_t c = 0; c < side; ++c) {
    for (std::size_t r = 0; r < side; ++r) column[r] = grid.at(r, c);
    fft_inplace(column, inverse);
    for (std::size_t r = 0; r < side; ++r) grid.at(r, c) = column[r];
  }
}

}  // namespace

ComplexGrid fft2(std::span<const double> grid, std::size_t side) {
  if (grid.size() != side * side) {
    throw InvalidArgument("fft2: grid has " + std::to_string(grid.size()) +
                          " entries, expected side^2");
  }
  if (!is_power_of_two(side)) {
    throw UnsupportedSize("fft2: side " + std::to_string(side) + " is not a power of two");
  }
  ComplexGrid out(side);
  for (std::size_t i = 0; i < grid.size(); ++i) out.values()[i] = grid[i];
  fft2_inplace(out, false);
  return out;
}

ComplexGrid fft2(const ComplexGrid& grid) {
  ComplexGrid out = grid;
  fft2_inplace(out, false);
  return out;
}

ComplexGrid ifft2(const ComplexGrid& grid) {
  ComplexGrid out = grid;
  fft2_inplace(out, true);
  const double scale = 1.0 / static_cast<double>(grid.side() * grid.side());
  for (auto& v : out.values()) v *= scale;
  return out;
}

}  // namespace wmguide::numerics
