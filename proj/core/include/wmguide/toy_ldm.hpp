#pragma once

#include <cstddef>
#include <vector>

#include "wmguide/rng.hpp"
#include "wmguide/tensor.hpp"
#include "wmguide/vae.hpp"

namespace wmguide::ldm {

// Cumulative signal levels ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T > 0, indexed by timestep.
class NoiseSchedule {
 public:
  // β_t linear in t over the given number of steps.
  static NoiseSchedule linear(int steps, double beta_start = 1e-4, double beta_end = 0.02);
  // `steps` evenly spaced timesteps of a `train_steps` linear schedule, the
  // usual DDIM sub-sampling.
  static NoiseSchedule subsampled_linear(int steps, int train_steps = 1000,
                                         double beta_start = 1e-4, double beta_end = 0.02);
  // alpha_bar[t-1] is ᾱ_t for t = 1..T; must be strictly decreasing in (0, 1).
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

  int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;
  double alpha(int t) const;
  double beta(int t) const { return 1.0 - alpha(t); }

 private:
  explicit NoiseSchedule(std::vector<double> with_zero) : alpha_bar_(std::move(with_zero)) {}
  std::vector<double> alpha_bar_;  // index 0 holds ᾱ_0 = 1
};

// Diagonal Gaussian data prior x0 ~ N(mean, diag(variance)) in latent space.
struct LatentPrior {
  Tensor mean;
  Tensor variance;

  static LatentPrior isotropic(Shape shape, double mean = 0.0, double variance = 1.0);
  void validate() const;
  const Shape& shape() const noexcept { return mean.shape(); }
};

struct Latent {
  Tensor value;
  int timestep = 0;
};

Latent sample_seed(const Shape& shape, const NoiseSchedule& schedule, RngStream& rng);

// E[x0 | z_t] under the Gaussian prior.
Tensor posterior_mean(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule);
// Exact optimal noise prediction (z_t - √ᾱ_t E[x0|z_t]) / √(1-ᾱ_t).
Tensor denoiser_eps(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule);

// Deterministic DDIM update from level abar_t to abar_prev.
Tensor ddim_update(const Tensor& z, const Tensor& eps, double abar_t, double abar_prev);
Latent ddim_step(const Latent& z, const Tensor& eps, const NoiseSchedule& schedule);

// Per-coordinate derivative of z_{t-1} with respect to z_t when eps is the
// optimal denoiser; the composite step is affine and diagonal.
Tensor ddim_step_jacobian(int t, const LatentPrior& prior, const NoiseSchedule& schedule);
// Cotangent on z_{t-1} pulled back to z_t through the unguided step at t.
Tensor ddim_step_vjp(const Latent& z, const Tensor& cotangent, const LatentPrior& prior,
                     const NoiseSchedule& schedule);

// Finds z_{t+1} whose unguided DDIM step lands on z. Fixed-point iteration
// on the noise estimate; throws NumericFailure if it fails to reach 1e-8.
Latent ddim_invert(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule);
// Repeated inversion from any level back to the seed level T.
Latent invert_to_seed(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule);

// Completes the unguided trajectory from z down to level 0.
Latent complete(const Latent& z, const LatentPrior& prior, const NoiseSchedule& schedule);

struct StepRecord {
  int t = 0;
  bool guided = false;
  double loss = 0.0;           // mean watermark loss over the transform set
  double grad_norm = 0.0;      // norm of the aggregated, clipped gradient
  double eps_shift_norm = 0.0; // ‖ε̂ - ε‖
  std::size_t gradient_evaluations = 0;
};

// Hook that may replace the noise estimate at a step.
class EpsGuide {
 public:
  virtual ~EpsGuide() = default;
  virtual bool active(int t) const = 0;
  virtual Tensor guide(const Latent& z, const Tensor& eps, StepRecord& record) = 0;
};

struct Generation {
  Latent z0;
  Image x0;
  std::vector<StepRecord> trace;
};

Generation generate(const Latent& seed, const LatentPrior& prior, const NoiseSchedule& schedule,
                    const vae::LinearVae& vae, EpsGuide* guide = nullptr);

}  // namespace wmguide::ldm
