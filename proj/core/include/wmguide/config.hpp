#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wmguide/augment.hpp"
#include "wmguide/guidance.hpp"

namespace wmguide::harness {

// Flat key/value configuration.
//
//   # comment
//   trials = 100
//   [guidance]
//   omega = 5        -> key "guidance.omega"
//
// Keys are [a-z0-9_.-]; a value runs to the end of the line with surrounding
// blanks removed. A repeated key is an error.
class ConfigMap {
 public:
  static ConfigMap parse(std::string_view text, std::string_view origin = "<text>");
  static ConfigMap load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct ExperimentConfig {
  std::string preset = "long";  // extractor preset, "short" (M = 48) or "long" (M = 256)
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  std::filesystem::path out = "wmguide-out";

  std::size_t model_prior_images = 2000;

  guidance::GuidanceConfig guidance;
  std::vector<augment::Transform> attacks;

  std::size_t calibration_n = 20000;
  std::size_t calibration_holdout = 20000;
  std::filesystem::path whitening;  // empty: <out>/whitening.wmw

  std::size_t fa_n = 100000;
  std::size_t fa_keys = 4;
  int fa_depth = 6;

  double treering_amplitude = 1.0;
  std::vector<augment::Transform> baseline_attacks;

  std::size_t posthoc_steps = 100;
  double posthoc_budget = 2.0 / 255.0;

  std::vector<int> ablate_steps{25, 15, 10, 5};

  std::vector<double> tune_omegas{1, 2, 3, 5, 8};
  std::vector<double> tune_etas{0.1, 0.3, 0.5, 1.0};
  double tune_max_deviation = 0.15;

  // Defaults for a preset: calibrated omega and the benchmark attacks.
  static ExperimentConfig defaults(std::string_view preset = "long");
  // Preset from the map (if any) first, then every other key on top.
  static ExperimentConfig from_map(const ConfigMap& map);

  std::size_t message_length() const;
  std::filesystem::path whitening_path() const;
  void validate() const;
  // Canonical text form; from_map(parse(to_text())) reproduces the config.
  std::string to_text() const;
};

// CSV helpers for list-valued keys.
std::vector<int> parse_int_list(std::string_view s);
std::vector<double> parse_double_list(std::string_view s);
std::string format_double(double v);

}  // namespace wmguide::harness
