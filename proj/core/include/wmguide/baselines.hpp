#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "wmguide/decoder.hpp"
#include "wmguide/numerics.hpp"
#include "wmguide/rng.hpp"
#include "wmguide/tensor.hpp"

namespace wmguide::baselines {

// Fourier-ring key on one latent channel. Coefficients are taken as
// fft2(z) / L so a white unit seed has unit expected power per bin.
struct RingGeometry {
  std::size_t side = 16;
  std::size_t rings = 4;
  double radius = 4.3;  // 60 bins at 16×16
};

struct RingKey {
  RingGeometry geometry;
  std::size_t channel = 0;
  // Per ring: flat indices on the first half plane and their mirrors.
  std::vector<std::vector<std::size_t>> half;
  std::vector<std::vector<std::size_t>> mirror;
  std::vector<std::complex<double>> values;
  double amplitude = 1.0;
  // When false the mirrored half repeats u_j instead of conj(u_j), as the
  // reference implementation of the scheme did.
  bool hermitian = true;

  static RingKey random(const RingGeometry& g, RngStream& rng, bool hermitian = true,
                        std::size_t channel = 0, double amplitude = 1.0);

  std::size_t ring_count() const noexcept { return values.size(); }
  std::size_t mask_size() const;
  // r_j: bins of ring j over the full mask.
  std::size_t occupancy(std::size_t j) const { return 2 * half[j].size(); }
  // Reference value at every mask bin, half bins first then mirrors per ring.
  std::vector<std::pair<std::size_t, std::complex<double>>> reference() const;
  void validate() const;
};

Tensor treering_embed(const RingKey& key, Shape latent, RngStream& rng);

struct TreeRingScore {
  double score = 0.0;          // sigma^-2 sum over the full mask of |F - u|^2
  double half_residual = 0.0;  // sum over the half mask of |F - u|^2
  double sigma2 = 0.0;         // mean |F|^2 over every bin of every channel
  double full_power = 0.0;     // sum over the full mask of |u|^2
  double half_power = 0.0;     // sum over the half mask of |u|^2
  std::size_t mask_size = 0;
};

TreeRingScore treering_score(const Tensor& z_hat, const RingKey& key);
// Full-mask statistic as originally published: real and imaginary parts of
// every mask bin counted as independent components (2|M| degrees of freedom).
double treering_pvalue_unpatched(const TreeRingScore& s);
// Half-mask statistic normalized by the per-component variance sigma^2 / 2;
// requires a Hermitian key.
double treering_pvalue_chi2(const TreeRingScore& s, const RingKey& key);
double treering_pvalue_chi2(const Tensor& z_hat, const RingKey& key);

struct RubenDecomposition {
  numerics::ChiSquareMixture mixture;
  std::vector<std::size_t> counts;  // D_j
  std::vector<std::complex<double>> means;  // lambda_j
  double offset = 0.0;  // c with s = sum_j D_j |U_j - lambda_j|^2 - c
  double score = 0.0;   // observed s(z_hat, u)
};

// Score of z_hat against a random key U_j ~ CN(0, amplitude^2), written as a
// weighted non-central chi-square mixture minus an offset.
RubenDecomposition treering_decompose(const Tensor& z_hat, const RingKey& key);
double treering_pvalue_ruben(const Tensor& z_hat, const RingKey& key);

// Keyed pseudorandom sign mask with bit i of the message reused at every
// coordinate congruent to i modulo M.
struct GsKey {
  std::array<std::uint8_t, 32> secret{};
  std::size_t message_length = 256;

  static GsKey random(std::size_t message_length, RngStream& rng);
  std::vector<std::uint8_t> mask(std::size_t count) const;
};

Tensor gs_embed(const decoder::BitMessage& m, const GsKey& key, Shape latent, RngStream& rng);

struct GsDecode {
  decoder::BitMessage bits;
  std::vector<double> votes;
};

// Soft majority vote: sum of mask-corrected coordinates per message bit.
GsDecode gs_decode(const Tensor& z_hat, const GsKey& key);
// P(Bin(M, 1/2) >= s).
double gs_pvalue(std::size_t matches, std::size_t m);

}  // namespace wmguide::baselines
