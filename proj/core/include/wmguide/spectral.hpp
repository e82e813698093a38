#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wmguide/tensor.hpp"

namespace wmguide::spectral {

inline constexpr double kLogFloor = 1e-12;

// L×L row-major log-magnitude grid, DC at (0, 0).
struct SpectrumGrid {
  std::size_t side = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * side + c]; }
};

// S = log(mean over images and channels of |fft2| + floor), unnormalized DFT.
SpectrumGrid batch_spectrum(std::span<const Image> images);
SpectrumGrid spectrum_diff(const SpectrumGrid& a, const SpectrumGrid& b);

}  // namespace wmguide::spectral
