#pragma once

#include <array>
#include <memory>
#include <vector>

#include "wmguide/tensor.hpp"

namespace wmguide::vae {

// Fixed linear latent-to-image map: zero-insertion ×2 upsampling, then a
// 3×3 smoothing kernel and a mixing weight per (image channel, latent channel)
// pair, with edge-replicating borders. Immutable after construction.
class LinearVae {
 public:
  // mixing is row-major [3][latent channels]; kernels is indexed
  // [image channel * latent channels + latent channel], each row-major 3×3.
  LinearVae(Shape latent_shape, std::vector<double> mixing,
            std::vector<std::array<double, 9>> kernels);

  // Default toy map: latent 4×16×16 → image 3×32×32.
  static LinearVae toy(Shape latent_shape = {4, 16, 16});

  const Shape& latent_shape() const noexcept;
  const Shape& image_shape() const noexcept;

  Image decode(const Tensor& z) const;
  // Aᵀ·cotangent. The map is linear so the linearization point is unused
  // beyond its shape.
  Tensor decode_vjp(const Tensor& cotangent) const;
  Tensor decode_vjp(const Tensor& z, const Tensor& cotangent) const;
  // Least-squares inverse (AᵀA)⁻¹Aᵀx.
  Tensor encode(const Image& x) const;
  // decode(encode(x)): orthogonal projection onto the range of decode.
  Image roundtrip(const Image& x) const { return decode(encode(x)); }

  // Smallest and largest eigenvalue of AᵀA, computed at construction.
  double min_gram_eigenvalue() const noexcept;
  double max_gram_eigenvalue() const noexcept;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

}  // namespace wmguide::vae
