#include "wmguide/baselines.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>

#include "wmguide/errors.hpp"

namespace wmguide::baselines {

namespace {

constexpr const char* kPersonal = "wmguide-gs-mask";

long signed_freq(std::size_t i, std::size_t side) {
  const auto v = static_cast<long>(i);
  return v < static_cast<long>(side / 2) ? v : v - static_cast<long>(side);
}

std::vector<std::complex<double>> unit_spectrum(std::span<const double> channel,
                                                std::size_t side) {
  numerics::ComplexGrid g = numerics::fft2(channel, side);
  std::vector<std::complex<double>> out(g.values().begin(), g.values().end());
  const double inv = 1.0 / static_cast<double>(side);
  for (auto& v : out) v *= inv;
  return out;
}

void ensure_sodium() {
  static const int ok = sodium_init();
  if (ok < 0) throw Error("libsodium initialisation failed");
}

}  // namespace

RingKey RingKey::random(const RingGeometry& g, RngStream& rng, bool hermitian,
                        std::size_t channel, double amplitude) {
  if (!numerics::is_power_of_two(g.side) || g.rings == 0 || !(g.radius > 0.0) ||
      !(g.radius < static_cast<double>(g.side) / 2.0)) {
    throw InvalidArgument("RingKey: need power-of-two side, rings >= 1, 0 < radius < side/2");
  }
  if (!(amplitude > 0.0)) throw InvalidArgument("RingKey: amplitude must be positive");
  RingKey k;
  k.geometry = g;
  k.channel = channel;
  k.amplitude = amplitude;
  k.hermitian = hermitian;
  k.half.assign(g.rings, {});
  k.mirror.assign(g.rings, {});
  const long n = static_cast<long>(g.side);
  for (std::size_t r = 0; r < g.side; ++r) {
    for (std::size_t c = 0; c < g.side; ++c) {
      const long fy = signed_freq(r, g.side);
      const long fx = signed_freq(c, g.side);
      const bool first_half = fy > 0 || (fy == 0 && fx > 0);
      const double d = std::hypot(static_cast<double>(fy), static_cast<double>(fx));
      if (!first_half || d > g.radius) continue;
      const auto ring = std::min<std::size_t>(
          g.rings - 1, static_cast<std::size_t>(std::ceil(d / g.radius * g.rings)) - 1);
      k.half[ring].push_back(r * g.side + c);
      const auto mr = static_cast<std::size_t>((n - fy) % n);
      const auto mc = static_cast<std::size_t>((n - fx) % n);
      k.mirror[ring].push_back(mr * g.side + mc);
    }
  }
  const double s = amplitude * std::sqrt(0.5);
  for (std::size_t j = 0; j < g.rings; ++j) {
    if (k.half[j].empty()) throw InvalidArgument("RingKey: a ring has no frequency bins");
    const double re = rng.normal();
    const double im = rng.normal();
    k.values.emplace_back(s * re, s * im);
  }
  return k;
}

std::size_t RingKey::mask_size() const {
  std::size_t n = 0;
  for (const auto& h : half) n += 2 * h.size();
  return n;
}

std::vector<std::pair<std::size_t, std::complex<double>>> RingKey::reference() const {
  std::vector<std::pair<std::size_t, std::complex<double>>> out;
  for (std::size_t j = 0; j < values.size(); ++j) {
    for (std::size_t i : half[j]) out.emplace_back(i, values[j]);
    const auto mv = hermitian ? std::conj(values[j]) : values[j];
    for (std::size_t i : mirror[j]) out.emplace_back(i, mv);
  }
  return out;
}

void RingKey::validate() const {
  if (values.size() != half.size() || half.size() != mirror.size() || values.empty()) {
    throw InvalidArgument("RingKey: inconsistent ring tables");
  }
  std::vector<bool> used(geometry.side * geometry.side, false);
  for (std::size_t j = 0; j < half.size(); ++j) {
    if (half[j].size() != mirror[j].size()) throw InvalidArgument("RingKey: mirror table mismatch");
    for (const auto* table : {&half[j], &mirror[j]}) {
      for (std::size_t i : *table) {
        if (i >= used.size() || used[i]) throw InvalidArgument("RingKey: rings overlap");
        used[i] = true;
      }
    }
  }
}

Tensor treering_embed(const RingKey& key, Shape latent, RngStream& rng) {
  key.validate();
  if (!key.hermitian) {
    throw InvalidArgument("treering_embed: a real seed needs a Hermitian-symmetric key");
  }
  const std::size_t side = key.geometry.side;
  if (latent.height != side || latent.width != side || key.channel >= latent.channels) {
    throw InvalidArgument("treering_embed: key does not fit the latent shape");
  }
  Tensor z(latent);
  for (double& v : z.values()) v = rng.normal();
  numerics::ComplexGrid f = numerics::fft2(z.channel(key.channel), side);
  const double scale = static_cast<double>(side);
  for (const auto& [i, u] : key.reference()) f.values()[i] = u * scale;
  const numerics::ComplexGrid back = numerics::ifft2(f);
  auto ch = z.channel(key.channel);
  for (std::size_t i = 0; i < ch.size(); ++i) ch[i] = back.values()[i].real();
  return z;
}

TreeRingScore treering_score(const Tensor& z_hat, const RingKey& key) {
  key.validate();
  const std::size_t side = key.geometry.side;
  const Shape& s = z_hat.shape();
  if (s.height != side || s.width != side || key.channel >= s.channels) {
    throw InvalidArgument("treering_score: key does not fit the latent shape");
  }
  TreeRingScore out;
  out.mask_size = key.mask_size();
  double power = 0.0;
  std::vector<std::complex<double>> target;
  for (std::size_t c = 0; c < s.channels; ++c) {
    auto f = unit_spectrum(z_hat.channel(c), side);
    for (const auto& v : f) power += std::norm(v);
    if (c == key.channel) target = std::move(f);
  }
  out.sigma2 = power / static_cast<double>(z_hat.size());
  if (!(out.sigma2 > 0.0)) throw DegenerateInput("treering_score: latent has zero power");
  double full = 0.0;
  for (const auto& [i, u] : key.reference()) {
    full += std::norm(target[i] - u);
    out.full_power += std::norm(u);
  }
  for (std::size_t j = 0; j < key.ring_count(); ++j) {
    for (std::size_t i : key.half[j]) {
      out.half_residual += std::norm(target[i] - key.values[j]);
      out.half_power += std::norm(key.values[j]);
    }
  }
  out.score = full / out.sigma2;
  return out;
}

double treering_pvalue_unpatched(const TreeRingScore& s) {
  // Real and imaginary parts stacked over the whole mask, each normalized by
  // the per-component variance sigma^2 / 2, with one degree of freedom per
  // stacked entry. Mirror bins duplicate their partners, so the real law has
  // half that many degrees of freedom at twice the scale.
  const double var = 0.5 * s.sigma2;
  return numerics::noncentral_chi2_cdf(s.score * s.sigma2 / var,
                                       2.0 * static_cast<double>(s.mask_size),
                                       s.full_power / var);
}

double treering_pvalue_chi2(const TreeRingScore& s, const RingKey& key) {
  if (!key.hermitian) throw InvalidArgument("treering_pvalue_chi2: key is not Hermitian-symmetric");
  const double var = 0.5 * s.sigma2;
  return numerics::noncentral_chi2_cdf(s.half_residual / var, static_cast<double>(s.mask_size),
                                       s.half_power / var);
}

double treering_pvalue_chi2(const Tensor& z_hat, const RingKey& key) {
  return treering_pvalue_chi2(treering_score(z_hat, key), key);
}

RubenDecomposition treering_decompose(const Tensor& z_hat, const RingKey& key) {
  key.validate();
  const std::size_t side = key.geometry.side;
  const Shape& s = z_hat.shape();
  if (s.height != side || s.width != side || key.channel >= s.channels) {
    throw InvalidArgument("treering_decompose: key does not fit the latent shape");
  }
  const auto f = unit_spectrum(z_hat.channel(key.channel), side);
  RubenDecomposition d;
  const double a2 = key.amplitude * key.amplitude;
  for (std::size_t j = 0; j < key.ring_count(); ++j) {
    const std::size_t dj = key.half[j].size();
    std::complex<double> sum = 0.0;
    double energy = 0.0;
    for (std::size_t i : key.half[j]) {
      sum += f[i];
      energy += std::norm(f[i]);
      d.score += std::norm(f[i] - key.values[j]);
    }
    const std::complex<double> lambda = sum / static_cast<double>(dj);
    const double djd = static_cast<double>(dj);
    d.counts.push_back(dj);
    d.means.push_back(lambda);
    d.offset += djd * std::norm(lambda) - energy;
    // D_j |U_j - lambda_j|^2 = (D_j a^2 / 2) chi2_2(2 |lambda_j|^2 / a^2).
    d.mixture.weights.push_back(0.5 * djd * a2);
    d.mixture.noncentralities.push_back(2.0 * std::norm(lambda) / a2);
    d.mixture.dofs.push_back(2);
  }
  return d;
}

double treering_pvalue_ruben(const Tensor& z_hat, const RingKey& key) {
  const RubenDecomposition d = treering_decompose(z_hat, key);
  return numerics::ruben_cdf(d.mixture, std::max(0.0, d.score + d.offset));
}

GsKey GsKey::random(std::size_t message_length, RngStream& rng) {
  if (message_length == 0) throw InvalidArgument("GsKey: message length must be positive");
  GsKey k;
  k.message_length = message_length;
  for (std::size_t i = 0; i < k.secret.size(); i += 8) {
    const std::uint64_t w = rng.next_u64();
    for (std::size_t b = 0; b < 8; ++b) k.secret[i + b] = static_cast<std::uint8_t>(w >> (8 * b));
  }
  return k;
}

std::vector<std::uint8_t> GsKey::mask(std::size_t count) const {
  ensure_sodium();
  constexpr std::size_t kBlock = crypto_generichash_BYTES_MAX;
  std::vector<std::uint8_t> bits(count);
  std::array<unsigned char, kBlock> out{};
  for (std::size_t block = 0; block * kBlock * 8 < count; ++block) {
    std::array<unsigned char, 24> msg{};
    for (std::size_t b = 0; b < 8; ++b) msg[b] = static_cast<unsigned char>(block >> (8 * b));
    std::copy_n(kPersonal, 15, msg.begin() + 8);
    crypto_generichash(out.data(), out.size(), msg.data(), msg.size(), secret.data(),
                       secret.size());
    for (std::size_t k = 0; k < kBlock * 8; ++k) {
      const std::size_t i = block * kBlock * 8 + k;
      if (i >= count) break;
      bits[i] = (out[k / 8] >> (k % 8)) & 1u;
    }
  }
  return bits;
}

Tensor gs_embed(const decoder::BitMessage& m, const GsKey& key, Shape latent, RngStream& rng) {
  if (m.size() != key.message_length) throw InvalidArgument("gs_embed: message length mismatch");
  if (latent.size() < m.size()) throw InvalidArgument("gs_embed: latent smaller than message");
  const auto mask = key.mask(latent.size());
  Tensor z(latent);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const bool positive = (m.bits[i % m.size()] ^ mask[i]) != 0;
    const double mag = std::abs(rng.normal());
    z[i] = positive ? mag : -mag;
  }
  return z;
}

GsDecode gs_decode(const Tensor& z_hat, const GsKey& key) {
  const std::size_t m = key.message_length;
  if (z_hat.size() < m) throw InvalidArgument("gs_decode: latent smaller than message");
  const auto mask = key.mask(z_hat.size());
  GsDecode out;
  out.votes.assign(m, 0.0);
  for (std::size_t i = 0; i < z_hat.size(); ++i) {
    out.votes[i % m] += mask[i] ? -z_hat[i] : z_hat[i];
  }
  out.bits = decoder::decode_bits(out.votes);
  return out;
}

double gs_pvalue(std::size_t matches, std::size_t m) {
  if (m == 0 || matches > m) throw InvalidArgument("gs_pvalue: need 0 <= s <= M, M > 0");
  if (matches == 0) return 1.0;
  return numerics::reg_inc_beta(0.5, static_cast<double>(matches),
                                static_cast<double>(m - matches + 1));
}

}  // namespace wmguide::baselines
