#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wmguide/decoder.hpp"

namespace wmguide::stats {

// Probability that a random direction in R^M has cosine at least c with a
// fixed one. Decreasing in c, exactly 0.5 at c = 0.
double pvalue_cosine(double c, std::size_t m);

// Lower-quantile convention: the ceil(P_D n)-th smallest p-value, i.e. the
// false-alarm level at which a fraction P_D of the samples is detected.
double pvalue_at_detection(std::span<const double> pvalues, double pd);
// -log10 of the above; p-values that underflowed to 0 are floored at the
// smallest normal double.
double neglog10_pfa_at_detection(std::span<const double> pvalues, double pd);

// Fraction of p-values strictly below pfa.
double detection_at_fa(std::span<const double> pvalues, double pfa);

double bit_error_rate(const decoder::BitMessage& m, const decoder::BitMessage& decoded);

// Largest k such that the random-coding-union bound on the error probability
// of 2^k codewords over a BSC(rho) with blocklength m stays at or below eps.
int rcu_capacity(std::size_t m, double rho, double eps = 1e-3);
// Natural log of the RCU bound for 2^k codewords.
double rcu_log_bound(std::size_t m, double rho, double k);

double binary_entropy(double p);

// Half-width of the uniform confidence band on an empirical CDF of n samples.
double dkw_band(std::size_t n, double alpha);

enum class Label { Watermarked, Clean };

struct PValueSample {
  double p = 1.0;
  Label label = Label::Watermarked;
  std::string attack;
  std::string method;
};

struct DetectionReport {
  std::string method;
  std::string attack;
  std::size_t samples = 0;
  std::size_t message_length = 0;
  std::vector<double> pfa_grid;
  std::vector<double> pd_at_fa;
  std::vector<double> pd_grid;
  std::vector<double> neglog10_pfa_at_pd;
  double median_pvalue = 1.0;
  double ber_median = 0.5;
  double ber_mean = 0.5;
  int capacity = 0;
  // P_D values below this resolution are a single sample.
  double empirical_floor = 1.0;
};

inline const std::vector<double> kDefaultPfaGrid{1e-2, 1e-4, 1e-6, 1e-8, 1e-10};
inline const std::vector<double> kDefaultPdGrid{0.5, 0.9};

// bers may be empty for zero-bit schemes; capacity uses the median BER.
DetectionReport make_report(std::string method, std::string attack,
                            std::span<const double> pvalues,
                            std::span<const double> bers, std::size_t message_length,
                            const std::vector<double>& pfa_grid = kDefaultPfaGrid,
                            const std::vector<double>& pd_grid = kDefaultPdGrid,
                            double rcu_eps = 1e-3);

struct FalseAlarmPoint {
  double level = 0.0;      // theoretical P_FA
  double empirical = 0.0;  // observed fraction of p-values below level
  std::size_t count = 0;
  bool testable = false;   // level >= floor
  bool within_band = false;
};

struct FalseAlarmCurve {
  std::size_t samples = 0;
  double alpha = 0.01;
  double band = 0.0;
  double floor = 0.0;  // 10 / n
  std::vector<FalseAlarmPoint> points;

  bool all_within_band() const;
  const FalseAlarmPoint& at(double level) const;
};

// Empirical false-alarm rates of null p-values against a grid of levels.
FalseAlarmCurve validate_false_alarm(std::span<const double> null_pvalues,
                                     std::span<const double> levels, double alpha = 0.01);

// Cosine p-values for every (feature column, key) pair. features is
// column-major, one length-M column per image.
std::vector<double> cosine_pvalues(std::span<const double> features, std::size_t m,
                                   std::span<const decoder::SecretVector> keys);

// Levels 10^-1, 10^-2, ... down to 10^-depth.
std::vector<double> decade_grid(int depth);

double median(std::vector<double> values);

}  // namespace wmguide::stats
