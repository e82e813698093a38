#include "wmguide/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "wmguide/errors.hpp"

namespace wmguide::guidance {

namespace {

constexpr double kLossFloor = 1e-12;

// Product of the unguided step Jacobians for steps 1..t (all diagonal).
Tensor transport(const Pipeline& p, int t) {
  Tensor prod(p.prior->shape(), 1.0);
  for (int s = 1; s <= t; ++s) {
    const Tensor j = ldm::ddim_step_jacobian(s, *p.prior, *p.schedule);
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= j[i];
  }
  return prod;
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t k = v.size(); k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % k);
    std::swap(v[k - 1], v[j]);
  }
}

void require_grads(std::span<const Tensor> gradients) {
  if (gradients.empty()) throw InvalidArgument("aggregate: empty gradient list");
  for (const auto& g : gradients) require_same_shape(g.shape(), gradients[0].shape(), "aggregate");
}

}  // namespace

std::string to_string(GradientMode m) {
  return m == GradientMode::FullUnroll ? "full-unroll" : "fast-identity";
}
std::string to_string(Aggregator a) { return a == Aggregator::PCGrad ? "pcgrad" : "mean"; }
std::string to_string(NormControl n) { return n == NormControl::MaxEta ? "max-eta" : "rescale"; }

GradientMode parse_gradient_mode(std::string_view s) {
  if (s == "full-unroll") return GradientMode::FullUnroll;
  if (s == "fast-identity") return GradientMode::FastIdentity;
  throw InvalidArgument("gradient mode must be full-unroll or fast-identity, got '" +
                        std::string(s) + "'");
}

Aggregator parse_aggregator(std::string_view s) {
  if (s == "pcgrad") return Aggregator::PCGrad;
  if (s == "mean") return Aggregator::Mean;
  throw InvalidArgument("aggregator must be pcgrad or mean, got '" + std::string(s) + "'");
}

NormControl parse_norm_control(std::string_view s) {
  if (s == "max-eta") return NormControl::MaxEta;
  if (s == "rescale") return NormControl::Rescale;
  throw InvalidArgument("norm control must be max-eta or rescale, got '" + std::string(s) + "'");
}

void GuidanceConfig::validate(int steps) const {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw InvalidArgument("guidance.omega must be >= 0");
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidArgument("guidance.tau must lie in [0, 1)");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("guidance.eta must be > 0");
  if (start_step < 0 || start_step > steps) {
    throw InvalidArgument("guidance.t_w must lie in [0, " + std::to_string(steps) + "]");
  }
  if (transforms.empty()) throw InvalidArgument("guidance.transforms must not be empty");
  for (const auto& t : transforms) augment::validate(t);
}

void Pipeline::validate() const {
  if (!schedule || !prior || !vae || !extractor || !whitening) {
    throw InvalidArgument("guidance pipeline is missing a component");
  }
  require_same_shape(prior->shape(), vae->latent_shape(), "pipeline prior/vae");
  require_same_shape(vae->image_shape(), extractor->image_shape(), "pipeline vae/extractor");
  if (whitening->length() != extractor->length()) {
    throw InvalidArgument("pipeline: whitening length does not match extractor");
  }
}

Image predict_x0(const Pipeline& p, const ldm::Latent& z) {
  return p.vae->decode(ldm::complete(z, *p.prior, *p.schedule).value);
}

ImageLoss image_loss(const Pipeline& p, const Image& x, const decoder::SecretVector& u,
                     const augment::Transform& t) {
  const augment::Context ctx = p.context();
  const Image y = augment::apply(t, x, ctx);
  const std::vector<double> w = decoder::extract_whitened(*p.extractor, y, *p.whitening);
  if (w.size() != u.size()) throw InvalidArgument("secret vector length does not match extractor");
  const double c = decoder::cosine_score(w, u.u);
  const double nw = norm(w);
  const double nu = norm(u.u);
  std::vector<double> dw(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) dw[i] = -(u.u[i] / (nw * nu) - c * w[i] / (nw * nw));
  const std::vector<double> df = p.whitening->apply_vjp(dw);
  const Image dy = p.extractor->extract_vjp(df);
  return ImageLoss{1.0 - c, augment::vjp(t, x, dy, ctx)};
}

double loss(const Pipeline& p, const ldm::Latent& z, const decoder::SecretVector& u,
            const augment::Transform& t) {
  p.validate();
  return image_loss(p, predict_x0(p, z), u, t).loss;
}

Tensor grad_loss(const Pipeline& p, const ldm::Latent& z, const decoder::SecretVector& u,
                 const augment::Transform& t, GradientMode mode) {
  p.validate();
  const ImageLoss il = image_loss(p, predict_x0(p, z), u, t);
  Tensor g = p.vae->decode_vjp(il.grad);
  if (mode == GradientMode::FullUnroll) {
    const Tensor j = transport(p, z.timestep);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= j[i];
  }
  return g;
}

LossEvaluation evaluate(const Pipeline& p, const ldm::Latent& z, const decoder::SecretVector& u,
                        const GuidanceConfig& cfg, RngStream& rng) {
  p.validate();
  LossEvaluation ev;
  ev.predicted = predict_x0(p, z);
  Tensor jac;
  if (cfg.mode == GradientMode::FullUnroll) jac = transport(p, z.timestep);
  for (const auto& t : cfg.transforms) {
    const ImageLoss il = image_loss(p, ev.predicted, u, t);
    Tensor g = p.vae->decode_vjp(il.grad);
    const double scale = 1.0 / std::max(il.loss, kLossFloor);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale * (jac.empty() ? 1.0 : jac[i]);
    ev.losses.push_back(il.loss);
    ev.gradients.push_back(std::move(g));
  }
  ev.aggregated = cfg.aggregator == Aggregator::PCGrad ? pcgrad_aggregate(ev.gradients, rng)
                                                       : mean_aggregate(ev.gradients);
  return ev;
}

Tensor pcgrad_aggregate(std::span<const Tensor> gradients, RngStream& rng) {
  require_grads(gradients);
  const std::size_t n = gradients.size();
  std::vector<double> sq(n);
  for (std::size_t j = 0; j < n; ++j) sq[j] = dot(gradients[j].values(), gradients[j].values());
  Tensor out(gradients[0].shape());
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor gi = gradients[i];
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    shuffle(order, rng);
    for (std::size_t j : order) {
      if (sq[j] == 0.0) continue;
      const double d = dot(gi.values(), gradients[j].values());
      if (d < 0.0) axpy(-d / sq[j], gradients[j].values(), gi.values());
    }
    out += gi;
  }
  out *= 1.0 / static_cast<double>(n);
  return out;
}

Tensor mean_aggregate(std::span<const Tensor> gradients) {
  require_grads(gradients);
  Tensor out(gradients[0].shape());
  for (const auto& g : gradients) out += g;
  out *= 1.0 / static_cast<double>(gradients.size());
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile: p must lie in [0, 1]");
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(values.begin(), values.begin() + static_cast<long>(lo), values.end());
  const double a = values[lo];
  if (lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<long>(lo) + 1, values.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

Tensor clip_extremes(const Tensor& g, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidArgument("clip_extremes: tau must lie in [0, 1)");
  if (tau == 0.0 || g.empty()) return g;
  const double lo = quantile(g.data(), tau / 2.0);
  const double hi = quantile(g.data(), 1.0 - tau / 2.0);
  Tensor out = g;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

Tensor guided_eps(const Pipeline& p, const ldm::Latent& z, const Tensor& eps,
                  const decoder::SecretVector& u, const GuidanceConfig& cfg, RngStream& rng,
                  ldm::StepRecord* record) {
  cfg.validate(p.schedule->steps());
  require_same_shape(z.value.shape(), eps.shape(), "guided_eps");
  const LossEvaluation ev = evaluate(p, z, u, cfg, rng);
  const Tensor g = clip_extremes(ev.aggregated, cfg.tau);
  const double n = norm(g.values());
  if (record != nullptr) {
    double mean = 0.0;
    for (double l : ev.losses) mean += l;
    record->loss = mean / static_cast<double>(ev.losses.size());
    record->grad_norm = n;
    record->gradient_evaluations = ev.gradients.size();
  }
  if (cfg.omega == 0.0 || n == 0.0) return eps;
  const double budget = cfg.omega * std::sqrt(1.0 - p.schedule->alpha_bar(z.timestep));
  const double scale = cfg.norm == NormControl::MaxEta ? budget / std::max(cfg.eta, n)
                                                       : budget * std::min(1.0, cfg.eta / n);
  Tensor out = eps;
  axpy(scale, g.values(), out.values());
  return out;
}

WatermarkGuide::WatermarkGuide(const Pipeline& pipeline, decoder::SecretVector u,
                               GuidanceConfig cfg, RngStream rng)
    : pipeline_(pipeline), u_(std::move(u)), cfg_(std::move(cfg)), rng_(rng) {
  pipeline_.validate();
  cfg_.validate(pipeline_.schedule->steps());
  if (u_.size() != pipeline_.extractor->length()) {
    throw InvalidArgument("secret vector length does not match extractor");
  }
}

bool WatermarkGuide::active(int t) const { return t >= 1 && t <= cfg_.start_step; }

Tensor WatermarkGuide::guide(const ldm::Latent& z, const Tensor& eps, ldm::StepRecord& record) {
  return guided_eps(pipeline_, z, eps, u_, cfg_, rng_, &record);
}

}  // namespace wmguide::guidance
