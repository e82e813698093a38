#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wmguide/baselines.hpp"
#include "wmguide/config.hpp"
#include "wmguide/corpus.hpp"
#include "wmguide/decoder.hpp"
#include "wmguide/guidance.hpp"
#include "wmguide/model.hpp"
#include "wmguide/spectral.hpp"
#include "wmguide/stats.hpp"

namespace wmguide::harness {

// Model, extractor and (once available) whitening for one configuration.
class Session {
 public:
  explicit Session(ExperimentConfig cfg);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const ToyModel& model() const noexcept { return model_; }
  const decoder::FeatureExtractor& extractor() const noexcept { return extractor_; }
  // Calibration textures; indices [0, n) calibrate, the next holdout images
  // check, and false-alarm runs start after both.
  const corpus::TextureCorpus& corpus() const noexcept { return corpus_; }

  bool has_whitening() const noexcept { return whitening_.has_value(); }
  const decoder::WhiteningTransform& whitening() const;
  void set_whitening(decoder::WhiteningTransform w) { whitening_ = std::move(w); }
  // Reads the configured whitening file; NotFound if it is missing.
  void load_whitening();

  guidance::Pipeline pipeline() const;

 private:
  ExperimentConfig cfg_;
  ToyModel model_;
  decoder::FeatureExtractor extractor_;
  corpus::TextureCorpus corpus_;
  std::optional<decoder::WhiteningTransform> whitening_;
};

struct Trial {
  std::size_t index = 0;
  ldm::Latent seed;
  decoder::BitMessage message;
  ldm::Generation generation;

  std::size_t guided_steps() const;
  std::size_t gradient_evaluations() const;
};

// Per-trial streams derive from (master seed, trial, stage), so trial i is
// the same whatever the guidance settings or trial count.
ldm::Latent trial_seed(const Session& s, std::size_t trial);
decoder::BitMessage trial_message(const Session& s, std::size_t trial);

Trial run_trial(const Session& s, const guidance::GuidanceConfig& g, std::size_t trial);
std::vector<Trial> run_trials(const Session& s, const guidance::GuidanceConfig& g,
                              std::size_t count);

struct Detection {
  double cosine = 0.0;
  double pvalue = 1.0;
  double ber = 0.5;
};

Detection detect(const Session& s, const Image& x, const decoder::BitMessage& m);
std::vector<Detection> detect_all(const Session& s, const std::vector<Image>& images,
                                  const std::vector<decoder::BitMessage>& messages,
                                  const augment::Transform& attack);
stats::DetectionReport summarize(const std::string& method, const augment::Transform& attack,
                                 const std::vector<Detection>& d, std::size_t message_length);

// Post-hoc comparator: signed-gradient descent on 1 - cos over the image,
// projected onto the l-inf ball of radius budget around x.
Image posthoc_embed(const Session& s, const Image& x, const decoder::SecretVector& u,
                    std::size_t steps, double budget);

// ‖z_a - z_b‖ / ‖z_b‖.
double latent_deviation(const Tensor& guided, const Tensor& unguided);

// Command pipelines. Every command validates the configuration first, writes
// its files atomically under cfg.out, and returns what it wrote.
struct CalibrationResult {
  std::filesystem::path whitening_file;
  std::size_t samples = 0;
  std::size_t holdout = 0;
  double bias_norm = 0.0;
  double raw_max_correlation = 0.0;       // held-out, before whitening
  double whitened_max_correlation = 0.0;  // held-out, after whitening
  double whitened_max_variance_error = 0.0;
};
CalibrationResult cmd_calibrate(const ExperimentConfig& cfg);

struct EmbedResult {
  std::vector<Trial> trials;
  double median_final_loss = 0.0;
};
EmbedResult cmd_embed(const ExperimentConfig& cfg);

struct DetectResult {
  std::vector<stats::DetectionReport> reports;
  // Per attack, per trial; same order as reports.
  std::vector<std::vector<Detection>> detections;

  const stats::DetectionReport& report(const std::string& attack) const;
};
DetectResult cmd_attack_detect(const ExperimentConfig& cfg);
DetectResult cmd_posthoc(const ExperimentConfig& cfg);

struct BaselineResult {
  std::vector<stats::DetectionReport> reports;  // tree-ring, tree-ring-ruben, gaussian-shading
  const stats::DetectionReport& report(const std::string& method, const std::string& attack) const;
};
BaselineResult cmd_baseline_seed(const ExperimentConfig& cfg);

struct FalseAlarmResult {
  struct Curve {
    std::string variant;  // raw | whitened
    std::string key;      // worst-case | random-<i>
    stats::FalseAlarmCurve curve;
  };
  std::size_t samples = 0;
  std::vector<Curve> curves;

  const stats::FalseAlarmCurve& curve(const std::string& variant, const std::string& key) const;
};
FalseAlarmResult cmd_validate_fa(const ExperimentConfig& cfg);

struct SpectrumResult {
  spectral::SpectrumGrid guided, clean, diff;
};
SpectrumResult cmd_spectrum(const ExperimentConfig& cfg);

struct AblationRow {
  int guided_steps_setting = 0;  // T_w
  std::string attack;            // "mean" for the average over attacks
  double neglog10_pfa_at_pd90 = 0.0;
  int capacity = 0;
  double ber_median = 0.5;
  std::size_t guided_steps = 0;
  std::size_t gradient_evaluations = 0;
};
struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationRow> summary() const;  // the "mean" rows, in setting order
};
AblationResult cmd_ablate_steps(const ExperimentConfig& cfg);

struct TuneRow {
  double omega = 0.0;
  double eta = 0.0;
  double median_cosine = 0.0;
  double median_deviation = 0.0;
  bool feasible = false;
};
struct TuneResult {
  std::vector<TuneRow> grid;
  std::optional<TuneRow> best;
};
TuneResult cmd_tune_omega(const ExperimentConfig& cfg);

}  // namespace wmguide::harness
