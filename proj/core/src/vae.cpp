#include "wmguide/vae.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "wmguide/errors.hpp"

namespace wmguide::vae {

namespace {

// Zero-insertion upsampling: upsampled position p holds latent p / 2 when p
// is even and nothing otherwise. Positions past the far edge replicate the
// last latent row/column.
long source_index(long p, long latent_extent) {
  if (p < 0 || (p % 2) != 0) return -1;
  return std::min(p / 2, latent_extent - 1);
}

}  // namespace

struct LinearVae::Impl {
  Shape latent;
  Shape image;
  std::vector<double> weights;  // [o][c][9], mixing folded into the kernel
  Eigen::LLT<Eigen::MatrixXd> gram;
  double min_eig = 0.0;
  double max_eig = 0.0;

  const double* kernel(std::size_t o, std::size_t c) const {
    return &weights[(o * latent.channels + c) * 9];
  }

  void decode_into(std::span<const double> z, std::span<double> out) const {
    const auto h = static_cast<long>(image.height);
    const auto w = static_cast<long>(image.width);
    const auto lh = static_cast<long>(latent.height);
    const auto lw = static_cast<long>(latent.width);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t o = 0; o < image.channels; ++o) {
      for (std::size_t c = 0; c < latent.channels; ++c) {
        const double* k = kernel(o, c);
        const double* zc = z.data() + c * latent.height * latent.width;
        double* oc = out.data() + o * image.height * image.width;
        for (long y = 0; y < h; ++y) {
          for (long x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long dy = -1; dy <= 1; ++dy) {
              const long sy = source_index(y + dy, lh);
              if (sy < 0) continue;
              for (long dx = -1; dx <= 1; ++dx) {
                const long sx = source_index(x + dx, lw);
                if (sx < 0) continue;
                acc += k[(dy + 1) * 3 + (dx + 1)] *
                       zc[sy * static_cast<long>(latent.width) + sx];
              }
            }
            oc[y * w + x] += acc;
          }
        }
      }
    }
  }

  void vjp_into(std::span<const double> cot, std::span<double> out) const {
    const auto h = static_cast<long>(image.height);
    const auto w = static_cast<long>(image.width);
    const auto lh = static_cast<long>(latent.height);
    const auto lw = static_cast<long>(latent.width);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t o = 0; o < image.channels; ++o) {
      for (std::size_t c = 0; c < latent.channels; ++c) {
        const double* k = kernel(o, c);
        double* zc = out.data() + c * latent.height * latent.width;
        const double* oc = cot.data() + o * image.height * image.width;
        for (long y = 0; y < h; ++y) {
          for (long x = 0; x < w; ++x) {
            const double g = oc[y * w + x];
            if (g == 0.0) continue;
            for (long dy = -1; dy <= 1; ++dy) {
              const long sy = source_index(y + dy, lh);
              if (sy < 0) continue;
              for (long dx = -1; dx <= 1; ++dx) {
                const long sx = source_index(x + dx, lw);
                if (sx < 0) continue;
                zc[sy * static_cast<long>(latent.width) + sx] +=
                    k[(dy + 1) * 3 + (dx + 1)] * g;
              }
            }
          }
        }
      }
    }
  }
};

LinearVae::LinearVae(Shape latent_shape, std::vector<double> mixing,
                     std::vector<std::array<double, 9>> kernels) {
  if (latent_shape.size() == 0) throw InvalidArgument("LinearVae: empty latent shape");
  const std::size_t lc = latent_shape.channels;
  if (mixing.size() != 3 * lc || kernels.size() != 3 * lc) {
    throw InvalidArgument("LinearVae: need 3×C mixing weights and 3×C kernels");
  }
  auto impl = std::make_shared<Impl>();
  impl->latent = latent_shape;
  impl->image = Shape{3, 2 * latent_shape.height, 2 * latent_shape.width};
  impl->weights.resize(3 * lc * 9);
  for (std::size_t pair = 0; pair < 3 * lc; ++pair) {
    for (std::size_t i = 0; i < 9; ++i) {
      impl->weights[pair * 9 + i] = mixing[pair] * kernels[pair][i];
    }
  }

  // Gram matrix AᵀA column by column: Aᵀ(A e_j).
  const auto n = static_cast<Eigen::Index>(latent_shape.size());
  Eigen::MatrixXd gram(n, n);
  std::vector<double> basis(latent_shape.size(), 0.0);
  std::vector<double> image(impl->image.size());
  std::vector<double> column(latent_shape.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    basis[static_cast<std::size_t>(j)] = 1.0;
    impl->decode_into(basis, image);
    impl->vjp_into(image, column);
    basis[static_cast<std::size_t>(j)] = 0.0;
    gram.col(j) = Eigen::Map<const Eigen::VectorXd>(column.data(), n);
  }
  gram = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  impl->min_eig = eig.eigenvalues().minCoeff();
  impl->max_eig = eig.eigenvalues().maxCoeff();
  if (!(impl->min_eig > 1e-10 * impl->max_eig)) {
    throw InvalidArgument("LinearVae: decode map is not full column rank");
  }
  impl->gram.compute(gram);
  if (impl->gram.info() != Eigen::Success) {
    throw NumericFailure("LinearVae: Cholesky of the Gram matrix failed");
  }
  impl_ = std::move(impl);
}

LinearVae LinearVae::toy(Shape latent_shape) {
  const std::size_t lc = latent_shape.channels;
  // Base mixing for four latent channels, tiled if more are requested.
  static constexpr double kMix[3][4] = {
      {0.55, 0.25, 0.10, -0.15},
      {0.20, 0.50, -0.20, 0.25},
      {0.10, -0.15, 0.55, 0.30},
  };
  std::vector<double> mixing(3 * lc);
  std::vector<std::array<double, 9>> kernels(3 * lc);
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t c = 0; c < lc; ++c) {
      mixing[o * lc + c] = kMix[o][c % 4] * (1.0 + 0.1 * static_cast<double>(c / 4));
      // Near-bilinear kernels. The per-pair asymmetry gives every sub-pixel
      // phase a distinct gain at both low and high latent frequencies, which
      // keeps all latent channels recoverable from three image channels.
      static constexpr double kSkew[4] = {-0.3, -0.1, 0.1, 0.3};
      const double p = kSkew[(o + 2 * c) % 4];
      const double q = 0.5 * kSkew[(2 * o + 3 * c + 1) % 4];
      const double r = kSkew[(3 * o + c + 2) % 4];
      const double u = 0.5 * kSkew[(o + c + 3) % 4];
      const double row[3] = {0.5 + p + q, 1.0, 0.5 - p + q};
      const double col[3] = {0.5 + r + u, 1.0, 0.5 - r + u};
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) kernels[o * lc + c][i * 3 + j] = row[i] * col[j];
      }
    }
  }
  return LinearVae(latent_shape, std::move(mixing), std::move(kernels));
}

const Shape& LinearVae::latent_shape() const noexcept { return impl_->latent; }
const Shape& LinearVae::image_shape() const noexcept { return impl_->image; }
double LinearVae::min_gram_eigenvalue() const noexcept { return impl_->min_eig; }
double LinearVae::max_gram_eigenvalue() const noexcept { return impl_->max_eig; }

Image LinearVae::decode(const Tensor& z) const {
  require_same_shape(z.shape(), impl_->latent, "vae decode");
  Image out(impl_->image);
  impl_->decode_into(z.values(), out.values());
  return out;
}

Tensor LinearVae::decode_vjp(const Tensor& cotangent) const {
  require_same_shape(cotangent.shape(), impl_->image, "vae decode_vjp");
  Tensor out(impl_->latent);
  impl_->vjp_into(cotangent.values(), out.values());
  return out;
}

Tensor LinearVae::decode_vjp(const Tensor& z, const Tensor& cotangent) const {
  require_same_shape(z.shape(), impl_->latent, "vae decode_vjp");
  return decode_vjp(cotangent);
}

Tensor LinearVae::encode(const Image& x) const {
  require_same_shape(x.shape(), impl_->image, "vae encode");
  Tensor rhs = decode_vjp(x);
  const auto n = static_cast<Eigen::Index>(rhs.size());
  Eigen::VectorXd sol =
      impl_->gram.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data().data(), n));
  Tensor out(impl_->latent);
  Eigen::Map<Eigen::VectorXd>(out.data().data(), n) = sol;
  return out;
}

}  // namespace wmguide::vae
