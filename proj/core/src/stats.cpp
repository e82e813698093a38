#include "wmguide/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmguide/errors.hpp"
#include "wmguide/numerics.hpp"

namespace wmguide::stats {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void require_nonempty(std::span<const double> v, const char* what) {
  if (v.empty()) throw InvalidArgument(std::string(what) + ": empty p-value list");
}

}  // namespace

double pvalue_cosine(double c, std::size_t m) {
  if (m < 2) throw InvalidArgument("pvalue_cosine: need M >= 2");
  if (!(std::abs(c) <= 1.0)) throw InvalidArgument("pvalue_cosine: |c| must be <= 1");
  const double a = 0.5;
  const double b = 0.5 * static_cast<double>(m - 1);
  if (c <= 0.0) return 0.5 * (1.0 + numerics::reg_inc_beta(c * c, a, b));
  if (c * c < a / (a + b)) return 0.5 * (1.0 - numerics::reg_inc_beta(c * c, a, b));
  // Upper tail through the complementary argument keeps tiny p-values exact.
  const double s = (1.0 - c) * (1.0 + c);
  return 0.5 * numerics::reg_inc_beta(s, b, a);
}

double pvalue_at_detection(std::span<const double> pvalues, double pd) {
  require_nonempty(pvalues, "pvalue_at_detection");
  if (!(pd > 0.0 && pd <= 1.0)) throw InvalidArgument("pvalue_at_detection: P_D must be in (0, 1]");
  std::vector<double> sorted(pvalues.begin(), pvalues.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // Guard against pd * n landing just above an integer through rounding.
  auto rank = static_cast<std::size_t>(std::ceil(pd * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double neglog10_pfa_at_detection(std::span<const double> pvalues, double pd) {
  const double p = pvalue_at_detection(pvalues, pd);
  return -std::log10(std::max(p, std::numeric_limits<double>::min()));
}

double detection_at_fa(std::span<const double> pvalues, double pfa) {
  require_nonempty(pvalues, "detection_at_fa");
  const auto hits = std::count_if(pvalues.begin(), pvalues.end(),
                                  [pfa](double p) { return p < pfa; });
  return static_cast<double>(hits) / static_cast<double>(pvalues.size());
}

double bit_error_rate(const decoder::BitMessage& m, const decoder::BitMessage& decoded) {
  if (m.size() != decoded.size() || m.size() == 0) {
    throw InvalidArgument("bit_error_rate: messages must have equal non-zero length");
  }
  return static_cast<double>(decoder::bit_errors(m, decoded)) / static_cast<double>(m.size());
}

double rcu_log_bound(std::size_t m, double rho, double k) {
  if (!(rho >= 0.0 && rho <= 0.5)) throw InvalidArgument("rcu: rho must be in [0, 0.5]");
  if (k <= 0.0) return kNegInf;
  const double md = static_cast<double>(m);
  const double log_codewords = k * std::log(2.0) + std::log1p(-std::exp2(-k));
  double log_cdf_half = kNegInf;
  double total = kNegInf;
  for (std::size_t t = 0; t <= m; ++t) {
    const double td = static_cast<double>(t);
    const double log_choose = std::lgamma(md + 1) - std::lgamma(td + 1) - std::lgamma(md - td + 1);
    log_cdf_half = log_add(log_cdf_half, log_choose);
    double log_b;
    if (rho == 0.0) {
      log_b = t == 0 ? 0.0 : kNegInf;
    } else {
      log_b = log_choose + td * std::log(rho) + (md - td) * std::log1p(-rho);
    }
    if (log_b == kNegInf) continue;
    const double log_union = log_codewords + log_cdf_half - md * std::log(2.0);
    total = log_add(total, log_b + std::min(0.0, log_union));
  }
  return total;
}

int rcu_capacity(std::size_t m, double rho, double eps) {
  if (m == 0) throw InvalidArgument("rcu_capacity: blocklength must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("rcu_capacity: eps must be in (0, 1)");
  const double log_eps = std::log(eps);
  const auto ok = [&](int k) { return rcu_log_bound(m, rho, k) <= log_eps; };
  int lo = 0;
  int hi = static_cast<int>(m);
  if (ok(hi)) return hi;
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double dkw_band(std::size_t n, double alpha) {
  if (n == 0) throw InvalidArgument("dkw_band: n must be positive");
  return std::sqrt(-std::log(alpha / 2.0) / (2.0 * static_cast<double>(n)));
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median: empty input");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  if (values.size() % 2 == 1) return values[mid];
  const double hi = values[mid];
  return 0.5 * (hi + *std::max_element(values.begin(), values.begin() + mid));
}

DetectionReport make_report(std::string method, std::string attack,
                            std::span<const double> pvalues, std::span<const double> bers,
                            std::size_t message_length, const std::vector<double>& pfa_grid,
                            const std::vector<double>& pd_grid, double rcu_eps) {
  require_nonempty(pvalues, "make_report");
  DetectionReport r;
  r.method = std::move(method);
  r.attack = std::move(attack);
  r.samples = pvalues.size();
  r.message_length = message_length;
  r.pfa_grid = pfa_grid;
  r.pd_grid = pd_grid;
  for (double pfa : pfa_grid) r.pd_at_fa.push_back(detection_at_fa(pvalues, pfa));
  for (double pd : pd_grid) r.neglog10_pfa_at_pd.push_back(neglog10_pfa_at_detection(pvalues, pd));
  r.median_pvalue = median({pvalues.begin(), pvalues.end()});
  r.empirical_floor = 1.0 / static_cast<double>(pvalues.size());
  if (!bers.empty()) {
    if (bers.size() != pvalues.size()) throw InvalidArgument("make_report: BER count mismatch");
    r.ber_median = median({bers.begin(), bers.end()});
    double s = 0.0;
    for (double b : bers) s += b;
    r.ber_mean = s / static_cast<double>(bers.size());
    r.capacity = rcu_capacity(message_length, std::min(r.ber_median, 0.5), rcu_eps);
  }
  return r;
}

bool FalseAlarmCurve::all_within_band() const {
  return std::all_of(points.begin(), points.end(),
                     [](const FalseAlarmPoint& p) { return !p.testable || p.within_band; });
}

const FalseAlarmPoint& FalseAlarmCurve::at(double level) const {
  for (const auto& p : points) {
    if (std::abs(p.level - level) <= 1e-12 * level) return p;
  }
  throw NotFound("false-alarm curve has no point at the requested level");
}

FalseAlarmCurve validate_false_alarm(std::span<const double> null_pvalues,
                                     std::span<const double> levels, double alpha) {
  require_nonempty(null_pvalues, "validate_false_alarm");
  FalseAlarmCurve curve;
  curve.samples = null_pvalues.size();
  curve.alpha = alpha;
  curve.band = dkw_band(curve.samples, alpha);
  curve.floor = 10.0 / static_cast<double>(curve.samples);
  std::vector<double> sorted(null_pvalues.begin(), null_pvalues.end());
  std::sort(sorted.begin(), sorted.end());
  for (double level : levels) {
    FalseAlarmPoint pt;
    pt.level = level;
    pt.count = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), level) -
                                        sorted.begin());
    pt.empirical = static_cast<double>(pt.count) / static_cast<double>(curve.samples);
    pt.testable = level >= curve.floor;
    pt.within_band = std::abs(pt.empirical - level) <= curve.band;
    curve.points.push_back(pt);
  }
  return curve;
}

std::vector<double> cosine_pvalues(std::span<const double> features, std::size_t m,
                                   std::span<const decoder::SecretVector> keys) {
  if (m == 0 || features.size() % m != 0) {
    throw InvalidArgument("cosine_pvalues: feature buffer is not a whole number of columns");
  }
  for (const auto& k : keys) {
    if (k.size() != m) throw InvalidArgument("cosine_pvalues: key length mismatch");
  }
  const std::size_t count = features.size() / m;
  std::vector<double> out;
  out.reserve(count * keys.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto f = features.subspan(i * m, m);
    for (const auto& k : keys) out.push_back(pvalue_cosine(decoder::cosine_score(f, k.u), m));
  }
  return out;
}

std::vector<double> decade_grid(int depth) {
  std::vector<double> g;
  for (int d = 1; d <= depth; ++d) g.push_back(std::pow(10.0, -d));
  return g;
}

}  // namespace wmguide::stats
