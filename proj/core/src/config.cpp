#include "wmguide/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "wmguide/errors.hpp"

namespace wmguide::harness {

namespace {

constexpr int kSteps = 25;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
  });
}

template <class T>
T parse_number(std::string_view s, std::string_view key) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw InvalidArgument("config key '" + std::string(key) + "': cannot parse '" +
                          std::string(s) + "' as a number");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(',');
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += f(v[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<int> parse_int_list(std::string_view s) {
  std::vector<int> out;
  for (auto item : split(s)) out.push_back(parse_number<int>(item, "list"));
  return out;
}

std::vector<double> parse_double_list(std::string_view s) {
  std::vector<double> out;
  for (auto item : split(s)) out.push_back(parse_number<double>(item, "list"));
  return out;
}

ConfigMap ConfigMap::parse(std::string_view text, std::string_view origin) {
  ConfigMap m;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto where = [&] { return std::string(origin) + ":" + std::to_string(line_no) + ": "; };
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidArgument(where() + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!section.empty() && !valid_key(section)) {
        throw InvalidArgument(where() + "bad section name '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument(where() + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw InvalidArgument(where() + "bad key '" + std::string(key) + "'");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (m.contains(full)) throw InvalidArgument(where() + "duplicate key '" + full + "'");
    m.values_[full] = std::string(trim(line.substr(eq + 1)));
  }
  return m;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void ConfigMap::set(const std::string& key, std::string value) {
  if (!valid_key(key)) throw InvalidArgument("bad config key '" + key + "'");
  values_[key] = std::move(value);
}

ExperimentConfig ExperimentConfig::defaults(std::string_view preset) {
  ExperimentConfig c;
  if (preset == "long") {
    c.guidance.omega = 5.0;
  } else if (preset == "short") {
    c.guidance.omega = 3.0;
  } else {
    throw InvalidArgument("unknown preset '" + std::string(preset) + "' (expected short or long)");
  }
  c.preset = std::string(preset);
  c.guidance.transforms = augment::parse_list("identity,jpeg:50,jpeg:80,brightness:0.2,contrast:2,crop:0.5");
  c.attacks = augment::parse_list("identity,jpeg:50,brightness:0.2,contrast:2,crop:0.5,rotate90,median:3,vae");
  c.baseline_attacks = augment::parse_list("identity,contrast:2,jpeg:50,crop:0.5");
  return c;
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  const auto& v = map.values();
  ExperimentConfig c = defaults(v.count("preset") ? std::string_view(v.at("preset")) : "long");
  using Setter = std::function<void(std::string_view, std::string_view)>;
  const std::map<std::string, Setter> setters{
      {"preset", [](auto, auto) {}},
      {"trials", [&](auto k, auto s) { c.trials = parse_number<std::size_t>(s, k); }},
      {"seed", [&](auto k, auto s) { c.seed = parse_number<std::uint64_t>(s, k); }},
      {"out", [&](auto, auto s) { c.out = std::string(s); }},
      {"model.prior_images", [&](auto k, auto s) { c.model_prior_images = parse_number<std::size_t>(s, k); }},
      {"guidance.omega", [&](auto k, auto s) { c.guidance.omega = parse_number<double>(s, k); }},
      {"guidance.tau", [&](auto k, auto s) { c.guidance.tau = parse_number<double>(s, k); }},
      {"guidance.eta", [&](auto k, auto s) { c.guidance.eta = parse_number<double>(s, k); }},
      {"guidance.start_step", [&](auto k, auto s) { c.guidance.start_step = parse_number<int>(s, k); }},
      {"guidance.transforms", [&](auto, auto s) { c.guidance.transforms = augment::parse_list(s); }},
      {"guidance.gradient_mode", [&](auto, auto s) { c.guidance.mode = guidance::parse_gradient_mode(s); }},
      {"guidance.aggregator", [&](auto, auto s) { c.guidance.aggregator = guidance::parse_aggregator(s); }},
      {"guidance.norm_control", [&](auto, auto s) { c.guidance.norm = guidance::parse_norm_control(s); }},
      {"attacks", [&](auto, auto s) { c.attacks = augment::parse_list(s); }},
      {"calibration.n", [&](auto k, auto s) { c.calibration_n = parse_number<std::size_t>(s, k); }},
      {"calibration.holdout", [&](auto k, auto s) { c.calibration_holdout = parse_number<std::size_t>(s, k); }},
      {"calibration.whitening", [&](auto, auto s) { c.whitening = std::string(s); }},
      {"fa.n", [&](auto k, auto s) { c.fa_n = parse_number<std::size_t>(s, k); }},
      {"fa.keys", [&](auto k, auto s) { c.fa_keys = parse_number<std::size_t>(s, k); }},
      {"fa.depth", [&](auto k, auto s) { c.fa_depth = parse_number<int>(s, k); }},
      {"treering.amplitude", [&](auto k, auto s) { c.treering_amplitude = parse_number<double>(s, k); }},
      {"baseline.attacks", [&](auto, auto s) { c.baseline_attacks = augment::parse_list(s); }},
      {"posthoc.steps", [&](auto k, auto s) { c.posthoc_steps = parse_number<std::size_t>(s, k); }},
      {"posthoc.budget", [&](auto k, auto s) { c.posthoc_budget = parse_number<double>(s, k); }},
      {"ablate.steps", [&](auto, auto s) { c.ablate_steps = parse_int_list(s); }},
      {"tune.omegas", [&](auto, auto s) { c.tune_omegas = parse_double_list(s); }},
      {"tune.etas", [&](auto, auto s) { c.tune_etas = parse_double_list(s); }},
      {"tune.max_deviation", [&](auto k, auto s) { c.tune_max_deviation = parse_number<double>(s, k); }},
  };
  for (const auto& [key, value] : v) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw InvalidArgument("unknown config key '" + key + "'");
    it->second(key, value);
  }
  return c;
}

std::size_t ExperimentConfig::message_length() const { return preset == "short" ? 48 : 256; }

std::filesystem::path ExperimentConfig::whitening_path() const {
  return whitening.empty() ? out / "whitening.wmw" : whitening;
}

void ExperimentConfig::validate() const {
  if (preset != "short" && preset != "long") {
    throw InvalidArgument("preset must be short or long, got '" + preset + "'");
  }
  if (trials < 1) throw InvalidArgument("trials must be at least 1");
  if (out.empty()) throw InvalidArgument("out must name an output directory");
  if (model_prior_images < 2) throw InvalidArgument("model.prior_images must be at least 2");
  guidance.validate(kSteps);
  for (const auto& t : attacks) augment::validate(t);
  for (const auto& t : baseline_attacks) augment::validate(t);
  if (attacks.empty()) throw InvalidArgument("attacks must list at least one transform");
  if (fa_keys < 1) throw InvalidArgument("fa.keys must be at least 1");
  if (fa_depth < 1 || fa_depth > 15) throw InvalidArgument("fa.depth must be in [1, 15]");
  if (!(treering_amplitude > 0.0)) throw InvalidArgument("treering.amplitude must be positive");
  if (posthoc_steps < 1) throw InvalidArgument("posthoc.steps must be at least 1");
  if (!(posthoc_budget >= 0.0)) throw InvalidArgument("posthoc.budget must be non-negative");
  for (int s : ablate_steps) {
    if (s < 0 || s > kSteps) throw InvalidArgument("ablate.steps entries must be in [0, 25]");
  }
  if (ablate_steps.empty()) throw InvalidArgument("ablate.steps must not be empty");
  if (tune_omegas.empty() || tune_etas.empty()) throw InvalidArgument("tune grids must not be empty");
  for (double o : tune_omegas) {
    if (!(o >= 0.0)) throw InvalidArgument("tune.omegas must be non-negative");
  }
  for (double e : tune_etas) {
    if (!(e > 0.0)) throw InvalidArgument("tune.etas must be positive");
  }
  if (!(tune_max_deviation > 0.0)) throw InvalidArgument("tune.max_deviation must be positive");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  o << "preset = " << preset << "\n"
    << "trials = " << trials << "\n"
    << "seed = " << seed << "\n"
    << "out = " << out.string() << "\n"
    << "attacks = " << augment::to_string(attacks) << "\n\n"
    << "[model]\nprior_images = " << model_prior_images << "\n\n"
    << "[guidance]\n"
    << "omega = " << format_double(guidance.omega) << "\n"
    << "tau = " << format_double(guidance.tau) << "\n"
    << "eta = " << format_double(guidance.eta) << "\n"
    << "start_step = " << guidance.start_step << "\n"
    << "transforms = " << augment::to_string(guidance.transforms) << "\n"
    << "gradient_mode = " << guidance::to_string(guidance.mode) << "\n"
    << "aggregator = " << guidance::to_string(guidance.aggregator) << "\n"
    << "norm_control = " << guidance::to_string(guidance.norm) << "\n\n"
    << "[calibration]\n"
    << "n = " << calibration_n << "\n"
    << "holdout = " << calibration_holdout << "\n";
  if (!whitening.empty()) o << "whitening = " << whitening.string() << "\n";
  o << "\n[fa]\nn = " << fa_n << "\nkeys = " << fa_keys << "\ndepth = " << fa_depth << "\n\n"
    << "[treering]\namplitude = " << format_double(treering_amplitude) << "\n\n"
    << "[baseline]\nattacks = " << augment::to_string(baseline_attacks) << "\n\n"
    << "[posthoc]\nsteps = " << posthoc_steps << "\nbudget = " << format_double(posthoc_budget)
    << "\n\n"
    << "[ablate]\nsteps = "
    << join<int>(ablate_steps, [](const int& s) { return std::to_string(s); }) << "\n\n"
    << "[tune]\nomegas = " << join<double>(tune_omegas, format_double)
    << "\netas = " << join<double>(tune_etas, format_double)
    << "\nmax_deviation = " << format_double(tune_max_deviation) << "\n";
  return o.str();
}

}  // namespace wmguide::harness
