#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wmguide/augment.hpp"
#include "wmguide/decoder.hpp"
#include "wmguide/rng.hpp"
#include "wmguide/toy_ldm.hpp"
#include "wmguide/vae.hpp"

namespace wmguide::guidance {

enum class GradientMode { FullUnroll, FastIdentity };
enum class Aggregator { PCGrad, Mean };
// MaxEta divides by max(η, ‖g‖) (unit-norm direction once ‖g‖ ≥ η);
// Rescale caps the norm at η instead.
enum class NormControl { MaxEta, Rescale };

std::string to_string(GradientMode m);
std::string to_string(Aggregator a);
std::string to_string(NormControl n);
GradientMode parse_gradient_mode(std::string_view s);
Aggregator parse_aggregator(std::string_view s);
NormControl parse_norm_control(std::string_view s);

struct GuidanceConfig {
  double omega = 0.0;
  double tau = 0.10;
  double eta = 0.3;
  // Guidance runs at steps t ≤ start_step; 0 disables it.
  int start_step = 25;
  std::vector<augment::Transform> transforms{augment::Identity{}};
  GradientMode mode = GradientMode::FastIdentity;
  Aggregator aggregator = Aggregator::PCGrad;
  NormControl norm = NormControl::MaxEta;

  void validate(int steps) const;
};

// Everything needed to map a latent to whitened features.
struct Pipeline {
  const ldm::NoiseSchedule* schedule = nullptr;
  const ldm::LatentPrior* prior = nullptr;
  const vae::LinearVae* vae = nullptr;
  const decoder::FeatureExtractor* extractor = nullptr;
  const decoder::WhiteningTransform* whitening = nullptr;

  augment::Context context() const { return augment::Context{vae}; }
  void validate() const;
};

// x₀(z_t): the unguided completion of z down to level 0, decoded.
Image predict_x0(const Pipeline& p, const ldm::Latent& z);

struct ImageLoss {
  double loss = 0.0;  // 1 - cos(φ_w(T(x)), u)
  Image grad;         // ∂loss/∂x
};

// Loss and gradient with respect to the image fed to the transform.
ImageLoss image_loss(const Pipeline& p, const Image& x, const decoder::SecretVector& u,
                     const augment::Transform& t);

double loss(const Pipeline& p, const ldm::Latent& z, const decoder::SecretVector& u,
            const augment::Transform& t);
Tensor grad_loss(const Pipeline& p, const ldm::Latent& z, const decoder::SecretVector& u,
                 const augment::Transform& t, GradientMode mode);

struct LossEvaluation {
  std::vector<double> losses;
  std::vector<Tensor> gradients;  // ∇ log L per transform
  Tensor aggregated;
  Image predicted;
};

LossEvaluation evaluate(const Pipeline& p, const ldm::Latent& z, const decoder::SecretVector& u,
                        const GuidanceConfig& cfg, RngStream& rng);

Tensor pcgrad_aggregate(std::span<const Tensor> gradients, RngStream& rng);
Tensor mean_aggregate(std::span<const Tensor> gradients);
// Clamps entries to the (τ/2, 1 - τ/2) quantiles (linear interpolation
// between order statistics).
Tensor clip_extremes(const Tensor& g, double tau);
double quantile(std::vector<double> values, double p);

// Guided noise estimate ε + ω√(1-ᾱ_t)·ĝ/max(η, ‖ĝ‖) (or the rescale
// variant). The sign makes the DDIM step a descent step on log L.
Tensor guided_eps(const Pipeline& p, const ldm::Latent& z, const Tensor& eps,
                  const decoder::SecretVector& u, const GuidanceConfig& cfg, RngStream& rng,
                  ldm::StepRecord* record = nullptr);

class WatermarkGuide final : public ldm::EpsGuide {
 public:
  WatermarkGuide(const Pipeline& pipeline, decoder::SecretVector u, GuidanceConfig cfg,
                 RngStream rng);

  bool active(int t) const override;
  Tensor guide(const ldm::Latent& z, const Tensor& eps, ldm::StepRecord& record) override;

 private:
  Pipeline pipeline_;
  decoder::SecretVector u_;
  GuidanceConfig cfg_;
  RngStream rng_;
};

}  // namespace wmguide::guidance
