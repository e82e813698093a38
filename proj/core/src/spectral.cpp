#include "wmguide/spectral.hpp"

#include <cmath>
#include <complex>

#include "wmguide/errors.hpp"
#include "wmguide/numerics.hpp"

namespace wmguide::spectral {

namespace {

std::vector<double> magnitude_sum(const Image& x) {
  const std::size_t side = x.shape().height;
  std::vector<double> acc(side * side, 0.0);
  for (std::size_t c = 0; c < x.shape().channels; ++c) {
    const auto f = numerics::fft2(x.channel(c), side);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::abs(f.values()[i]);
  }
  return acc;
}

// Pairwise reduction so the summation order depends only on batch size.
std::vector<double> reduce(std::span<const Image> images) {
  if (images.size() == 1) return magnitude_sum(images[0]);
  const std::size_t half = images.size() / 2;
  std::vector<double> a = reduce(images.first(half));
  const std::vector<double> b = reduce(images.subspan(half));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace

SpectrumGrid batch_spectrum(std::span<const Image> images) {
  if (images.empty()) throw InvalidArgument("batch_spectrum: empty batch");
  const Shape s = images[0].shape();
  if (s.height != s.width || !numerics::is_power_of_two(s.height) || s.channels == 0) {
    throw UnsupportedSize("batch_spectrum: images must be square with power-of-two side");
  }
  for (const auto& x : images) require_same_shape(x.shape(), s, "batch_spectrum");
  SpectrumGrid g;
  g.side = s.height;
  g.values = reduce(images);
  const double inv = 1.0 / static_cast<double>(s.channels * images.size());
  for (double& v : g.values) v = std::log(v * inv + kLogFloor);
  return g;
}

SpectrumGrid spectrum_diff(const SpectrumGrid& a, const SpectrumGrid& b) {
  if (a.side != b.side || a.values.size() != b.values.size()) {
    throw InvalidArgument("spectrum_diff: grid sizes differ");
  }
  SpectrumGrid d{a.side, a.values};
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] -= b.values[i];
  return d;
}

}  // namespace wmguide::spectral
