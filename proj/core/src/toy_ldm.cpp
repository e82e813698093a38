#include "wmguide/toy_ldm.hpp"

#include <cmath>
#include <string>

#include "wmguide/errors.hpp"

namespace wmguide::ldm {

namespace {

void check_level(const NoiseSchedule& s, int t, int lo) {
  if (t < lo || t > s.steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(s.steps()) + "]");
  }
}

// Coefficient k with E[x0|z] = μ + k (z - √ᾱ μ), per coordinate.
double shrink(double abar, double var) { return std::sqrt(abar) * var / (abar * var + 1.0 - abar); }

}  // namespace

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("NoiseSchedule: need at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw InvalidArgument("NoiseSchedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> abar(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    abar[t] = abar[t - 1] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(abar));
}

NoiseSchedule NoiseSchedule::subsampled_linear(int steps, int train_steps, double beta_start,
                                               double beta_end) {
  if (steps < 1 || train_steps < steps) {
    throw InvalidArgument("NoiseSchedule: need 1 <= steps <= train_steps");
  }
  const NoiseSchedule full = linear(train_steps, beta_start, beta_end);
  std::vector<double> abar(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const int tau = static_cast<int>(std::llround(static_cast<double>(t) * train_steps / steps));
    abar[t] = full.alpha_bar(tau);
  }
  return NoiseSchedule(std::move(abar));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  if (alpha_bar.empty()) throw InvalidArgument("NoiseSchedule: empty alpha_bar");
  double prev = 1.0;
  for (double a : alpha_bar) {
    if (!(a > 0.0 && a < prev)) {
      throw InvalidArgument("NoiseSchedule: alpha_bar must decrease strictly inside (0, 1)");
    }
    prev = a;
  }
  alpha_bar.insert(alpha_bar.begin(), 1.0);
  return NoiseSchedule(std::move(alpha_bar));
}

double NoiseSchedule::alpha_bar(int t) const {
  check_level(*this, t, 0);
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha(int t) const {
  check_level(*this, t, 1);
  return alpha_bar_[static_cast<std::size_t>(t)] / alpha_bar_[static_cast<std::size_t>(t) - 1];
}

LatentPrior LatentPrior::isotropic(Shape shape, double mean, double variance) {
  LatentPrior p{Tensor(shape, mean), Tensor(shape, variance)};
  p.validate();
  return p;
}

void LatentPrior::validate() const {
  require_same_shape(mean.shape(), variance.shape(), "LatentPrior mean/variance");
  if (mean.empty()) throw InvalidArgument("LatentPrior: empty shape");
  for (double v : variance.values()) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("LatentPrior: variances must be finite and positive");
    }
  }
}

Latent sample_seed(const Shape& shape, const NoiseSchedule& schedule, RngStream& rng) {
  Latent z{Tensor(shape), schedule.steps()};
  for (double& v : z.value.values()) v = rng.normal();
  return z;
}

Tensor posterior_mean(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule) {
  require_same_shape(z.value.shape(), prior.shape(), "posterior_mean");
  const double abar = schedule.alpha_bar(z.timestep);
  const double ra = std::sqrt(abar);
  Tensor out(z.value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mu = prior.mean[i];
    out[i] = mu + shrink(abar, prior.variance[i]) * (z.value[i] - ra * mu);
  }
  return out;
}

Tensor denoiser_eps(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule) {
  check_level(schedule, z.timestep, 1);
  const double abar = schedule.alpha_bar(z.timestep);
  const double ra = std::sqrt(abar);
  const double rs = std::sqrt(1.0 - abar);
  Tensor x0 = posterior_mean(z, prior, schedule);
  Tensor eps(z.value.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (z.value[i] - ra * x0[i]) / rs;
  return eps;
}

Tensor ddim_update(const Tensor& z, const Tensor& eps, double abar_t, double abar_prev) {
  require_same_shape(z.shape(), eps.shape(), "ddim_update");
  if (!(abar_t > 0.0 && abar_t <= 1.0 && abar_prev > 0.0 && abar_prev <= 1.0)) {
    throw InvalidArgument("ddim_update: signal levels must lie in (0, 1]");
  }
  const double ra = std::sqrt(abar_t);
  const double rs = std::sqrt(1.0 - abar_t);
  const double rp = std::sqrt(abar_prev);
  const double rsp = std::sqrt(1.0 - abar_prev);
  Tensor out(z.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (z[i] - rs * eps[i]) / ra;
    out[i] = rp * x0 + rsp * eps[i];
  }
  return out;
}

Latent ddim_step(const Latent& z, const Tensor& eps, const NoiseSchedule& schedule) {
  check_level(schedule, z.timestep, 1);
  return Latent{ddim_update(z.value, eps, schedule.alpha_bar(z.timestep),
                            schedule.alpha_bar(z.timestep - 1)),
                z.timestep - 1};
}

Tensor ddim_step_jacobian(int t, const LatentPrior& prior, const NoiseSchedule& schedule) {
  check_level(schedule, t, 1);
  const double abar = schedule.alpha_bar(t);
  const double aprev = schedule.alpha_bar(t - 1);
  const double ra = std::sqrt(abar);
  const double rs = std::sqrt(1.0 - abar);
  const double a = std::sqrt(aprev) / ra;
  const double b = std::sqrt(1.0 - aprev) - std::sqrt(aprev) * rs / ra;
  Tensor jac(prior.shape());
  for (std::size_t i = 0; i < jac.size(); ++i) {
    const double deps = (1.0 - ra * shrink(abar, prior.variance[i])) / rs;
    jac[i] = a + b * deps;
  }
  return jac;
}

Tensor ddim_step_vjp(const Latent& z, const Tensor& cotangent, const LatentPrior& prior,
                     const NoiseSchedule& schedule) {
  require_same_shape(z.value.shape(), cotangent.shape(), "ddim_step_vjp");
  Tensor jac = ddim_step_jacobian(z.timestep, prior, schedule);
  for (std::size_t i = 0; i < jac.size(); ++i) jac[i] *= cotangent[i];
  return jac;
}

Latent ddim_invert(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule) {
  check_level(schedule, z.timestep, 0);
  if (z.timestep == schedule.steps()) throw InvalidArgument("ddim_invert: already at level T");
  const int up = z.timestep + 1;
  const double abar = schedule.alpha_bar(z.timestep);
  const double anext = schedule.alpha_bar(up);
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-8;
  Latent next{z.value, up};
  Tensor eps = denoiser_eps(next, prior, schedule);
  double change = 0.0;
  for (int it = 0; it < kMaxIter; ++it) {
    next.value = ddim_update(z.value, eps, abar, anext);
    Tensor fresh = denoiser_eps(next, prior, schedule);
    change = max_abs_diff(fresh.values(), eps.values());
    eps = std::move(fresh);
    if (change <= 1e-15 * (1.0 + norm(eps.values()))) break;
  }
  if (!(change <= kTol)) {
    throw NumericFailure("ddim_invert: fixed point did not converge (change " +
                         std::to_string(change) + ")");
  }
  next.value = ddim_update(z.value, eps, abar, anext);
  return next;
}

Latent invert_to_seed(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule) {
  Latent cur = z;
  while (cur.timestep < schedule.steps()) cur = ddim_invert(cur, prior, schedule);
  return cur;
}

Latent complete(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule) {
  check_level(schedule, z.timestep, 0);
  Latent cur = z;
  while (cur.timestep > 0) cur = ddim_step(cur, denoiser_eps(cur, prior, schedule), schedule);
  return cur;
}

Generation generate(const Latent& seed, const LatentPrior& prior, const NoiseSchedule& schedule,
                    const vae::LinearVae& vae, EpsGuide* guide) {
  prior.validate();
  require_same_shape(seed.value.shape(), prior.shape(), "generate seed");
  check_level(schedule, seed.timestep, 0);
  Generation g;
  Latent z = seed;
  while (z.timestep > 0) {
    StepRecord rec;
    rec.t = z.timestep;
    Tensor eps = denoiser_eps(z, prior, schedule);
    if (guide != nullptr && guide->active(z.timestep)) {
      rec.guided = true;
      Tensor guided = guide->guide(z, eps, rec);
      rec.eps_shift_norm = norm((guided - eps).values());
      eps = std::move(guided);
    }
    z = ddim_step(z, eps, schedule);
    g.trace.push_back(rec);
  }
  g.x0 = vae.decode(z.value);
  g.z0 = std::move(z);
  return g;
}

}  // namespace wmguide::ldm
