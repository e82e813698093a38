#include "wmguide/corpus.hpp"

#include <cmath>
#include <numbers>

#include "wmguide/errors.hpp"
#include "wmguide/numerics.hpp"
#include "wmguide/rng.hpp"

namespace wmguide::corpus {

TextureCorpus::TextureCorpus(Shape image_shape, std::uint64_t seed, TextureParams params)
    : shape_(image_shape), seed_(seed), params_(std::move(params)) {
  if (shape_.height != shape_.width || !numerics::is_power_of_two(shape_.height)) {
    throw UnsupportedSize("TextureCorpus: image must be square with power-of-two side");
  }
  if (shape_.channels == 0 || params_.scales.empty() || !(params_.pixel_std > 0.0) ||
      params_.channel_correlation < 0.0 || params_.channel_correlation >= 1.0) {
    throw InvalidArgument("TextureCorpus: bad parameters");
  }
  const std::size_t side = shape_.height;
  const double l = static_cast<double>(side);
  transfer_.resize(side * side);
  double power = 0.0;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double fy = static_cast<double>(r <= side / 2 ? r : side - r) / l;
      const double fx = static_cast<double>(c <= side / 2 ? c : side - c) / l;
      const double f2 = fy * fy + fx * fx;
      double h = 0.0;
      for (double s : params_.scales) {
        h += s * std::exp(-2.0 * std::numbers::pi * std::numbers::pi * s * s * f2);
      }
      transfer_[r * side + c] = h;
      power += h * h;
    }
  }
  // Per-pixel variance of the filtered unit white field is sum |H|² / L².
  const double scale = params_.pixel_std / std::sqrt(power / (l * l));
  for (double& h : transfer_) h *= scale;
}

Image TextureCorpus::image(std::uint64_t index) const {
  RngStream rng = RngStream::derive(seed_, index, "texture");
  const std::size_t side = shape_.height;
  const std::size_t area = side * side;
  const double shared = std::sqrt(params_.channel_correlation);
  const double own = std::sqrt(1.0 - params_.channel_correlation);
  // Field 0 is shared by all channels, field 1 + c is channel c's own. The
  // filter is real and even, so two real fields share one complex transform.
  const std::size_t fields = shape_.channels + 1;
  std::vector<std::vector<double>> filtered(fields, std::vector<double>(area));
  numerics::ComplexGrid packed(side);
  for (std::size_t f = 0; f < fields; f += 2) {
    const bool pair = f + 1 < fields;
    for (std::size_t i = 0; i < area; ++i) {
      const double re = rng.normal();
      packed.values()[i] = {re, pair ? rng.normal() : 0.0};
    }
    numerics::ComplexGrid spec = numerics::fft2(packed);
    for (std::size_t i = 0; i < area; ++i) spec.values()[i] *= transfer_[i];
    const numerics::ComplexGrid field = numerics::ifft2(spec);
    for (std::size_t i = 0; i < area; ++i) {
      filtered[f][i] = field.values()[i].real();
      if (pair) filtered[f + 1][i] = field.values()[i].imag();
    }
  }
  Image out(shape_);
  for (std::size_t ch = 0; ch < shape_.channels; ++ch) {
    auto dst = out.channel(ch);
    for (std::size_t i = 0; i < area; ++i) {
      dst[i] = params_.mean + shared * filtered[0][i] + own * filtered[ch + 1][i];
    }
  }
  return out;
}

}  // namespace wmguide::corpus
