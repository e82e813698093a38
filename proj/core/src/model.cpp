#include "wmguide/model.hpp"

#include "wmguide/errors.hpp"

namespace wmguide {

ldm::LatentPrior fit_prior(const vae::LinearVae& vae, const corpus::TextureCorpus& corpus,
                           std::size_t count) {
  if (count < 2) throw InvalidArgument("fit_prior: need at least two images");
  require_same_shape(vae.image_shape(), corpus.image_shape(), "fit_prior");
  const Shape& s = vae.latent_shape();
  Tensor sum(s), sq(s);
  Tensor shift;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor z = vae.encode(corpus.image(i));
    if (shift.empty()) shift = z;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double d = z[k] - shift[k];
      sum[k] += d;
      sq[k] += d * d;
    }
  }
  const double n = static_cast<double>(count);
  ldm::LatentPrior p{Tensor(s), Tensor(s)};
  for (std::size_t k = 0; k < p.mean.size(); ++k) {
    p.mean[k] = shift[k] + sum[k] / n;
    p.variance[k] = (sq[k] - sum[k] * sum[k] / n) / (n - 1.0);
  }
  p.validate();
  return p;
}

ToyModel make_toy_model(const ModelParams& params) {
  auto vae = vae::LinearVae::toy(params.latent);
  const corpus::TextureCorpus corpus(vae.image_shape(), params.prior_seed);
  auto prior = fit_prior(vae, corpus, params.prior_images);
  return ToyModel{ldm::NoiseSchedule::subsampled_linear(params.steps), std::move(prior),
                  std::move(vae)};
}

ldm::Latent recover_seed(const ToyModel& model, const Image& x) {
  return ldm::invert_to_seed(ldm::Latent{model.vae.encode(x), 0}, model.prior, model.schedule);
}

}  // namespace wmguide
