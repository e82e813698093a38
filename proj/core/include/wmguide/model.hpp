#pragma once

#include <cstddef>
#include <cstdint>

#include "wmguide/corpus.hpp"
#include "wmguide/toy_ldm.hpp"
#include "wmguide/vae.hpp"

namespace wmguide {

// The default toy latent diffusion model: 25-step schedule, linear VAE and
// a diagonal Gaussian prior moment-matched to encoded corpus textures.
struct ToyModel {
  ldm::NoiseSchedule schedule;
  ldm::LatentPrior prior;
  vae::LinearVae vae;
};

struct ModelParams {
  int steps = 25;
  Shape latent{4, 16, 16};
  std::uint64_t prior_seed = 0x7072696f72ULL;
  std::size_t prior_images = 2000;
};

// Per-coordinate mean and variance of encode(x) over corpus images.
ldm::LatentPrior fit_prior(const vae::LinearVae& vae, const corpus::TextureCorpus& corpus,
                           std::size_t count);

ToyModel make_toy_model(const ModelParams& params = {});

// Encode then invert the deterministic sampler back to a seed estimate.
ldm::Latent recover_seed(const ToyModel& model, const Image& x);

}  // namespace wmguide
