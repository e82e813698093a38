#pragma once

#include <array>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wmguide/tensor.hpp"
#include "wmguide/vae.hpp"

namespace wmguide::augment {

struct Identity {};
struct Brightness {
  double delta = 0.0;
};
struct Contrast {
  double gamma = 1.0;
};
// Keeps the central `ratio` of the image area (side fraction √ratio) and
// resizes back to the input size with bilinear interpolation.
struct CenterCrop {
  double ratio = 1.0;
};
// Blockwise DCT quantization. The default soft mode rounds with
// round(y) + (y - round(y))³ and differentiates that exactly; hard mode is
// the evaluation attack: true rounding plus 8-bit pixel output.
struct JpegApprox {
  int quality = 50;
  bool hard = false;
};
// Counter-clockwise quarter turn of square images.
struct Rotate90 {};
struct MedianFilter {
  int k = 3;
};
// decode(encode(x)) with the model's VAE.
struct VaeRoundtrip {};

using Transform = std::variant<Identity, Brightness, Contrast, CenterCrop, JpegApprox, Rotate90,
                               MedianFilter, VaeRoundtrip>;

struct Context {
  const vae::LinearVae* vae = nullptr;
};

void validate(const Transform& t);

// Grammar: identity | brightness:<δ> | contrast:<γ> | crop:<ratio> |
// jpeg:<QF> | rotate90 | median:<k> | vae. Lists are comma-separated.
Transform parse(std::string_view text);
std::vector<Transform> parse_list(std::string_view text);
std::string to_string(const Transform& t);
std::string to_string(const std::vector<Transform>& ts);

// The evaluation version of a transform (JPEG switches to hard rounding).
Transform as_attack(const Transform& t);

Image apply(const Transform& t, const Image& x, const Context& ctx = {});
Image vjp(const Transform& t, const Image& x, const Image& cotangent, const Context& ctx = {});

// IJG-scaled standard luminance table, row-major 8×8.
std::array<int, 64> quant_table(int quality);
Image jpeg_approx(const Image& x, int quality, bool hard = false);

}  // namespace wmguide::augment
