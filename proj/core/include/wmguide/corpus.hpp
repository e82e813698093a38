#pragma once

#include <cstdint>
#include <vector>

#include "wmguide/tensor.hpp"

namespace wmguide::corpus {

struct TextureParams {
  double mean = 0.5;
  double pixel_std = 0.12;
  // Gaussian smoothing scales in pixels; amplitude of each band is
  // proportional to its scale, a crude 1/f spectrum.
  std::vector<double> scales{1.0, 2.0, 4.0, 8.0};
  // Correlation between colour channels through a shared component.
  double channel_correlation = 0.6;
};

// Random-access corpus of synthetic textures: image i is a deterministic
// function of (seed, i), so corpora can be streamed and held out by index
// range without storing them.
class TextureCorpus {
 public:
  TextureCorpus(Shape image_shape, std::uint64_t seed, TextureParams params = {});

  Image image(std::uint64_t index) const;
  const Shape& image_shape() const noexcept { return shape_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  Shape shape_;
  std::uint64_t seed_;
  TextureParams params_;
  std::vector<double> transfer_;  // spectral filter for one L×L channel
};

}  // namespace wmguide::corpus
