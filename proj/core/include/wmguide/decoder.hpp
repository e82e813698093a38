#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "wmguide/corpus.hpp"
#include "wmguide/rng.hpp"
#include "wmguide/tensor.hpp"

namespace wmguide::decoder {

struct BitMessage {
  std::vector<std::uint8_t> bits;

  static BitMessage random(std::size_t length, RngStream& rng);
  std::size_t size() const noexcept { return bits.size(); }
};

struct SecretVector {
  std::vector<double> u;

  std::size_t size() const noexcept { return u.size(); }
};

// Antipodal map: bit 0 → -1, bit 1 → +1.
SecretVector modulate(const BitMessage& m);
// Bit i is 1 iff f[i] > 0; exact zeros decode to 0.
BitMessage decode_bits(std::span<const double> f);
std::size_t bit_errors(const BitMessage& a, const BitMessage& b);

// ⟨f, u⟩ / (‖f‖ ‖u‖); throws DegenerateInput on a zero-norm argument.
double cosine_score(std::span<const double> f, std::span<const double> u);

struct ExtractorParams {
  std::size_t length = 48;
  std::uint64_t seed = 0;
  double smoothing = 1.5;    // Gaussian low-pass of the projection rows, pixels
  double correlation = 0.5;  // strength of the off-diagonal mixing
  double bias_scale = 0.6;   // std of the injected per-feature offsets
};

// Affine extractor f = mixing · (Q x) + bias. Q rows are smooth zero-sum
// unit-norm random fields, so features ignore uniform brightness shifts and
// scale with contrast around any constant level.
class FeatureExtractor {
 public:
  FeatureExtractor(Shape image_shape, ExtractorParams params);
  // "short" (M = 48) or "long" (M = 256).
  static FeatureExtractor preset(std::string_view name, Shape image_shape = {3, 32, 32});

  std::size_t length() const noexcept;
  const Shape& image_shape() const noexcept;
  const ExtractorParams& params() const noexcept;
  std::span<const double> bias() const noexcept;

  std::vector<double> extract(const Image& x) const;
  Tensor extract_vjp(std::span<const double> cotangent) const;
  // Feature vector of images[k] goes to column k of out (length × count,
  // column-major).
  void extract_batch(std::span<const Image> images, std::span<double> out) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

// Affine whitening φ_w = L⁻¹ (f - b) with Σ = L Lᵀ.
class WhiteningTransform {
 public:
  WhiteningTransform() = default;
  // lower is row-major M×M; must be lower-triangular with positive diagonal.
  WhiteningTransform(std::vector<double> bias, std::vector<double> lower);
  static WhiteningTransform identity(std::size_t length);

  std::size_t length() const noexcept { return bias_.size(); }
  const std::vector<double>& bias() const noexcept { return bias_; }
  const std::vector<double>& lower() const noexcept { return lower_; }

  std::vector<double> apply(std::span<const double> f) const;
  // Lᵀ⁻¹ g: cotangent on whitened features pulled back to raw features.
  std::vector<double> apply_vjp(std::span<const double> cotangent) const;

  void save(const std::filesystem::path& path) const;
  static WhiteningTransform load(const std::filesystem::path& path);

  friend bool operator==(const WhiteningTransform&, const WhiteningTransform&) = default;

 private:
  std::vector<double> bias_;
  std::vector<double> lower_;
};

// Streaming moment estimate from feature vectors, then Cholesky.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(std::size_t length);
  // Adds count column-major feature vectors.
  void add(std::span<const double> features, std::size_t count);
  std::size_t count() const noexcept { return n_; }
  std::vector<double> mean() const;
  // Sample covariance with divisor n - 1, row-major.
  std::vector<double> covariance() const;
  // Requires n ≥ 10·M; throws CalibrationFailure if Σ is not positive definite.
  WhiteningTransform finish() const;

 private:
  std::size_t m_;
  std::size_t n_ = 0;
  std::vector<double> shift_;
  std::vector<double> sum_;
  std::vector<double> cross_;  // column-major M×M upper part is authoritative
};

WhiteningTransform whiten_calibrate(const FeatureExtractor& extractor,
                                    std::span<const Image> images);
// Streams corpus images [first, first + n).
WhiteningTransform whiten_calibrate(const FeatureExtractor& extractor,
                                    const corpus::TextureCorpus& corpus, std::uint64_t first,
                                    std::size_t n);

std::vector<double> extract_whitened(const FeatureExtractor& extractor, const Image& x,
                                     const WhiteningTransform& w);

}  // namespace wmguide::decoder
