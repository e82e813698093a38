#include "wmguide/augment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "wmguide/errors.hpp"

namespace wmguide::augment {

namespace {

constexpr std::array<int, 64> kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

double parse_number(std::string_view s, std::string_view whole) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("transform '" + std::string(whole) + "': bad number '" +
                          std::string(s) + "'");
  }
  return v;
}

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("transform '" + std::string(whole) + "': bad integer '" +
                          std::string(s) + "'");
  }
  return v;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Orthonormal 8-point DCT-II basis: c[u][x].
const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      for (int x = 0; x < 8; ++x) {
        b[u * 8 + x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

// out = C · in · Cᵀ (forward) or Cᵀ · in · C (inverse) for one 8×8 block.
void dct_block(const double* in, double* out, bool inverse) {
  const auto& c = dct_basis();
  double tmp[64];
  for (int u = 0; u < 8; ++u) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += (inverse ? c[y * 8 + u] : c[u * 8 + y]) * in[y * 8 + x];
      tmp[u * 8 + x] = s;
    }
  }
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += tmp[u * 8 + x] * (inverse ? c[x * 8 + v] : c[v * 8 + x]);
      out[u * 8 + v] = s;
    }
  }
}

void require_jpeg_shape(const Shape& s) {
  if (s.height % 8 != 0 || s.width % 8 != 0 || s.height == 0 || s.width == 0) {
    throw InvalidArgument("jpeg: image dimensions must be divisible by 8, got " + s.str());
  }
}

// Visits every 8×8 block, giving the block's DCT coefficients in units of
// the quantization step, and stores what fn writes back.
template <class Fn>
Image blockwise(const Image& x, int quality, Fn&& fn) {
  require_jpeg_shape(x.shape());
  const auto q = quant_table(quality);
  Image out(x.shape());
  double block[64], coef[64];
  for (std::size_t ch = 0; ch < x.shape().channels; ++ch) {
    for (std::size_t by = 0; by < x.shape().height; by += 8) {
      for (std::size_t bx = 0; bx < x.shape().width; bx += 8) {
        for (int i = 0; i < 8; ++i) {
          for (int j = 0; j < 8; ++j) block[i * 8 + j] = x.at(ch, by + i, bx + j);
        }
        dct_block(block, coef, false);
        for (int k = 0; k < 64; ++k) coef[k] = fn(coef[k], q[k], k);
        dct_block(coef, block, true);
        for (int i = 0; i < 8; ++i) {
          for (int j = 0; j < 8; ++j) out.at(ch, by + i, bx + j) = block[i * 8 + j];
        }
      }
    }
  }
  return out;
}

double soft_round(double y) {
  const double r = std::nearbyint(y);
  const double d = y - r;
  return r + d * d * d;
}

double soft_round_grad(double y) {
  const double d = y - std::nearbyint(y);
  return 3.0 * d * d;
}

struct CropGeometry {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
  std::vector<double> frac;
};

CropGeometry crop_axis(std::size_t n, double side_fraction) {
  CropGeometry g;
  const double len = static_cast<double>(n);
  const double side = side_fraction * len;
  const double start = 0.5 * (len - side);
  const double scale = side / len;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = start + (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double f = std::floor(s);
    const auto clampi = [n](double v) {
      return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
    };
    g.lo.push_back(clampi(f));
    g.hi.push_back(clampi(f + 1.0));
    g.frac.push_back(s - f);
  }
  return g;
}

Image crop_apply(const Image& x, double ratio, const Image* cotangent) {
  const Shape& s = x.shape();
  const double side = std::sqrt(ratio);
  const CropGeometry gy = crop_axis(s.height, side);
  const CropGeometry gx = crop_axis(s.width, side);
  Image out(s);
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t i = 0; i < s.height; ++i) {
      const double wy1 = gy.frac[i], wy0 = 1.0 - wy1;
      for (std::size_t j = 0; j < s.width; ++j) {
        const double wx1 = gx.frac[j], wx0 = 1.0 - wx1;
        const std::size_t y0 = gy.lo[i], y1 = gy.hi[i], x0 = gx.lo[j], x1 = gx.hi[j];
        if (cotangent == nullptr) {
          out.at(c, i, j) = wy0 * (wx0 * x.at(c, y0, x0) + wx1 * x.at(c, y0, x1)) +
                            wy1 * (wx0 * x.at(c, y1, x0) + wx1 * x.at(c, y1, x1));
        } else {
          const double g = cotangent->at(c, i, j);
          out.at(c, y0, x0) += wy0 * wx0 * g;
          out.at(c, y0, x1) += wy0 * wx1 * g;
          out.at(c, y1, x0) += wy1 * wx0 * g;
          out.at(c, y1, x1) += wy1 * wx1 * g;
        }
      }
    }
  }
  return out;
}

void require_square(const Shape& s) {
  if (s.height != s.width) throw InvalidArgument("rotate90: image must be square, got " + s.str());
}

// Index of the selected median for every output pixel (flat index into x).
std::vector<std::size_t> median_sources(const Image& x, int k) {
  const Shape& s = x.shape();
  const long h = static_cast<long>(s.height), w = static_cast<long>(s.width);
  const long r = k / 2;
  std::vector<std::size_t> src(x.size());
  std::vector<std::pair<double, std::size_t>> window(static_cast<std::size_t>(k * k));
  const std::size_t mid = window.size() / 2;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        std::size_t n = 0;
        for (long dy = -r; dy <= r; ++dy) {
          const long sy = std::clamp(y + dy, 0L, h - 1);
          for (long dx = -r; dx <= r; ++dx) {
            const long sx = std::clamp(xx + dx, 0L, w - 1);
            const std::size_t idx = (c * s.height + static_cast<std::size_t>(sy)) * s.width +
                                    static_cast<std::size_t>(sx);
            window[n++] = {x[idx], idx};
          }
        }
        std::nth_element(window.begin(), window.begin() + static_cast<long>(mid), window.end());
        src[(c * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(xx)] =
            window[mid].second;
      }
    }
  }
  return src;
}

const vae::LinearVae& require_vae(const Context& ctx, const Image& x) {
  if (ctx.vae == nullptr) throw InvalidArgument("vae transform needs a VAE in the context");
  require_same_shape(x.shape(), ctx.vae->image_shape(), "vae transform");
  return *ctx.vae;
}

}  // namespace

void validate(const Transform& t) {
  std::visit(Overloaded{
                 [](const Identity&) {},
                 [](const Brightness& b) {
                   if (!std::isfinite(b.delta)) throw InvalidArgument("brightness: delta must be finite");
                 },
                 [](const Contrast& c) {
                   if (!(c.gamma > 0.0) || !std::isfinite(c.gamma)) {
                     throw InvalidArgument("contrast: gamma must be positive");
                   }
                 },
                 [](const CenterCrop& c) {
                   if (!(c.ratio > 0.0 && c.ratio <= 1.0)) {
                     throw InvalidArgument("crop: ratio must lie in (0, 1]");
                   }
                 },
                 [](const JpegApprox& j) {
                   if (j.quality < 1 || j.quality > 100) {
                     throw InvalidArgument("jpeg: quality must lie in 1..100");
                   }
                 },
                 [](const Rotate90&) {},
                 [](const MedianFilter& m) {
                   if (m.k < 3 || m.k % 2 == 0) {
                     throw InvalidArgument("median: kernel size must be odd and >= 3");
                   }
                 },
                 [](const VaeRoundtrip&) {},
             },
             t);
}

Transform parse(std::string_view text) {
  const std::string_view s = trim(text);
  const auto colon = s.find(':');
  const std::string_view name = trim(s.substr(0, colon));
  const bool has_arg = colon != std::string_view::npos;
  const std::string_view arg = has_arg ? trim(s.substr(colon + 1)) : std::string_view{};
  const auto need = [&](bool want) {
    if (want != has_arg) {
      throw InvalidArgument("transform '" + std::string(s) +
                            (want ? "' needs a parameter" : "' takes no parameter"));
    }
  };
  Transform t;
  if (name == "identity") {
    need(false);
    t = Identity{};
  } else if (name == "brightness") {
    need(true);
    t = Brightness{parse_number(arg, s)};
  } else if (name == "contrast") {
    need(true);
    t = Contrast{parse_number(arg, s)};
  } else if (name == "crop") {
    need(true);
    t = CenterCrop{parse_number(arg, s)};
  } else if (name == "jpeg") {
    need(true);
    t = JpegApprox{parse_int(arg, s), false};
  } else if (name == "rotate90") {
    need(false);
    t = Rotate90{};
  } else if (name == "median") {
    need(true);
    t = MedianFilter{parse_int(arg, s)};
  } else if (name == "vae") {
    need(false);
    t = VaeRoundtrip{};
  } else {
    throw InvalidArgument("unknown transform '" + std::string(s) + "'");
  }
  validate(t);
  return t;
}

std::vector<Transform> parse_list(std::string_view text) {
  std::vector<Transform> out;
  if (trim(text).empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    out.push_back(parse(piece));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string to_string(const Transform& t) {
  return std::visit(Overloaded{
                        [](const Identity&) { return std::string("identity"); },
                        [](const Brightness& b) { return "brightness:" + format_number(b.delta); },
                        [](const Contrast& c) { return "contrast:" + format_number(c.gamma); },
                        [](const CenterCrop& c) { return "crop:" + format_number(c.ratio); },
                        [](const JpegApprox& j) { return "jpeg:" + std::to_string(j.quality); },
                        [](const Rotate90&) { return std::string("rotate90"); },
                        [](const MedianFilter& m) { return "median:" + std::to_string(m.k); },
                        [](const VaeRoundtrip&) { return std::string("vae"); },
                    },
                    t);
}

std::string to_string(const std::vector<Transform>& ts) {
  std::string out;
  for (const auto& t : ts) {
    if (!out.empty()) out += ',';
    out += to_string(t);
  }
  return out;
}

Transform as_attack(const Transform& t) {
  if (const auto* j = std::get_if<JpegApprox>(&t)) return JpegApprox{j->quality, true};
  return t;
}

std::array<int, 64> quant_table(int quality) {
  if (quality < 1 || quality > 100) throw InvalidArgument("jpeg: quality must lie in 1..100");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (int k = 0; k < 64; ++k) q[k] = std::clamp((kLuminance[k] * scale + 50) / 100, 1, 255);
  return q;
}

Image jpeg_approx(const Image& x, int quality, bool hard) {
  // Pixels map to the usual 0..255 range centred on zero.
  Image shifted = x;
  for (double& v : shifted.values()) v = 255.0 * v - 128.0;
  Image y = blockwise(shifted, quality, [hard](double c, int q, int) {
    const double t = c / q;
    return (hard ? std::nearbyint(t) : soft_round(t)) * q;
  });
  for (double& v : y.values()) {
    v = (v + 128.0) / 255.0;
    if (hard) v = std::clamp(std::nearbyint(v * 255.0), 0.0, 255.0) / 255.0;
  }
  return y;
}

Image apply(const Transform& t, const Image& x, const Context& ctx) {
  validate(t);
  return std::visit(
      Overloaded{
          [&](const Identity&) { return x; },
          [&](const Brightness& b) {
            Image y = x;
            for (double& v : y.values()) v = std::clamp(v + b.delta, 0.0, 1.0);
            return y;
          },
          [&](const Contrast& c) {
            Image y = x;
            for (double& v : y.values()) v = std::clamp(0.5 + c.gamma * (v - 0.5), 0.0, 1.0);
            return y;
          },
          [&](const CenterCrop& c) { return crop_apply(x, c.ratio, nullptr); },
          [&](const JpegApprox& j) { return jpeg_approx(x, j.quality, j.hard); },
          [&](const Rotate90&) {
            require_square(x.shape());
            const std::size_t n = x.shape().width;
            Image y(x.shape());
            for (std::size_t c = 0; c < x.shape().channels; ++c) {
              for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) y.at(c, i, j) = x.at(c, j, n - 1 - i);
              }
            }
            return y;
          },
          [&](const MedianFilter& m) {
            const auto src = median_sources(x, m.k);
            Image y(x.shape());
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[src[i]];
            return y;
          },
          [&](const VaeRoundtrip&) { return require_vae(ctx, x).roundtrip(x); },
      },
      t);
}

Image vjp(const Transform& t, const Image& x, const Image& cotangent, const Context& ctx) {
  validate(t);
  require_same_shape(x.shape(), cotangent.shape(), "transform vjp");
  return std::visit(
      Overloaded{
          [&](const Identity&) { return cotangent; },
          [&](const Brightness& b) {
            Image g = cotangent;
            for (std::size_t i = 0; i < g.size(); ++i) {
              const double v = x[i] + b.delta;
              if (!(v > 0.0 && v < 1.0)) g[i] = 0.0;
            }
            return g;
          },
          [&](const Contrast& c) {
            Image g = cotangent;
            for (std::size_t i = 0; i < g.size(); ++i) {
              const double v = 0.5 + c.gamma * (x[i] - 0.5);
              g[i] = (v > 0.0 && v < 1.0) ? c.gamma * g[i] : 0.0;
            }
            return g;
          },
          [&](const CenterCrop& c) { return crop_apply(x, c.ratio, &cotangent); },
          [&](const JpegApprox& j) {
            if (j.hard) return cotangent;  // straight-through; attack only
            // The forward map is DCT → soft rounding → IDCT (pixel scaling
            // cancels), so the adjoint applies the rounding slopes in the
            // coefficient domain.
            Image shifted = x;
            for (double& v : shifted.values()) v = 255.0 * v - 128.0;
            std::vector<double> slopes;
            slopes.reserve(x.size());
            blockwise(shifted, j.quality, [&slopes](double c, int q, int) {
              slopes.push_back(soft_round_grad(c / q));
              return c;
            });
            std::size_t cursor = 0;
            return blockwise(cotangent, j.quality, [&slopes, &cursor](double c, int, int) {
              return c * slopes[cursor++];
            });
          },
          [&](const Rotate90&) {
            require_square(x.shape());
            const std::size_t n = x.shape().width;
            Image g(x.shape());
            for (std::size_t c = 0; c < x.shape().channels; ++c) {
              for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) g.at(c, j, n - 1 - i) = cotangent.at(c, i, j);
              }
            }
            return g;
          },
          [&](const MedianFilter& m) {
            const auto src = median_sources(x, m.k);
            Image g(x.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[src[i]] += cotangent[i];
            return g;
          },
          [&](const VaeRoundtrip&) { return require_vae(ctx, x).roundtrip(cotangent); },
      },
      t);
}

}  // namespace wmguide::augment
