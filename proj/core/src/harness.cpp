#include "wmguide/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "wmguide/errors.hpp"
#include "wmguide/io.hpp"

namespace wmguide::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kBatch = 256;
constexpr const char* kReportSchema = "wmguide.detection/1";

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::string trial_name(std::size_t i) {
  std::string s = std::to_string(i);
  return "trial_" + std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

void save_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

Image attacked(const Session& s, const augment::Transform& attack, const Image& x) {
  return augment::apply(augment::as_attack(attack), x, augment::Context{&s.model().vae});
}

json report_json(const stats::DetectionReport& r) {
  json j;
  j["method"] = r.method;
  j["attack"] = r.attack;
  j["samples"] = r.samples;
  j["message_length"] = r.message_length;
  j["median_pvalue"] = r.median_pvalue;
  json pd = json::array();
  for (std::size_t i = 0; i < r.pfa_grid.size(); ++i) {
    pd.push_back({{"pfa", r.pfa_grid[i]}, {"pd", r.pd_at_fa[i]}});
  }
  j["pd_at_pfa"] = pd;
  json fa = json::array();
  for (std::size_t i = 0; i < r.pd_grid.size(); ++i) {
    fa.push_back({{"pd", r.pd_grid[i]}, {"neglog10_pfa", r.neglog10_pfa_at_pd[i]}});
  }
  j["neglog10_pfa_at_pd"] = fa;
  j["ber_median"] = r.ber_median;
  j["ber_mean"] = r.ber_mean;
  j["capacity_bits"] = r.capacity;
  j["empirical_floor"] = r.empirical_floor;
  return j;
}

void save_reports(const fs::path& dir, const std::vector<stats::DetectionReport>& reports) {
  std::vector<std::string> header{"method", "attack", "samples", "message_length", "median_pvalue"};
  const auto& first = reports.front();
  for (double p : first.pfa_grid) header.push_back("pd_at_pfa_" + num(p));
  for (double p : first.pd_grid) header.push_back("neglog10_pfa_at_pd_" + num(p));
  for (const char* h : {"ber_median", "ber_mean", "capacity_bits", "empirical_floor"}) header.push_back(h);
  CsvTable t(header);
  json all = json::array();
  for (const auto& r : reports) {
    std::vector<std::string> row{r.method, r.attack, num(r.samples), num(r.message_length),
                                 num(r.median_pvalue)};
    for (double v : r.pd_at_fa) row.push_back(num(v));
    for (double v : r.neglog10_pfa_at_pd) row.push_back(num(v));
    row.push_back(num(r.ber_median));
    row.push_back(num(r.ber_mean));
    row.push_back(std::to_string(r.capacity));
    row.push_back(num(r.empirical_floor));
    t.add(std::move(row));
    all.push_back(report_json(r));
  }
  t.save(dir / "report.csv");
  save_json(dir / "report.json", json{{"schema", kReportSchema}, {"reports", all}});
}

struct StoredTrial {
  std::size_t index = 0;
  Tensor seed;
  Image x0;
  decoder::BitMessage message;
};

fs::path embed_dir(const ExperimentConfig& cfg) { return cfg.out / "embed"; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::vector<StoredTrial> load_embed(const ExperimentConfig& cfg) {
  const fs::path dir = embed_dir(cfg);
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) {
    throw NotFound("no embed outputs at " + manifest.string() + "; run 'embed' first");
  }
  std::istringstream in(read_file(manifest));
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  const auto col = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InvalidArgument("embed manifest lacks column " + std::string(name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_trial = col("trial"), c_msg = col("message"), c_seed = col("seed_file"),
                    c_x0 = col("x0_file");
  std::vector<StoredTrial> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw InvalidArgument("embed manifest row has wrong width");
    StoredTrial t;
    t.index = std::stoull(f[c_trial]);
    t.message.bits = bits_from_string(f[c_msg]);
    t.seed = load_tensor(dir / f[c_seed]);
    t.x0 = load_tensor(dir / f[c_x0]);
    out.push_back(std::move(t));
  }
  if (out.empty()) throw InvalidArgument("embed manifest lists no trials");
  return out;
}

Image unguided_from_seed(const Session& s, const Tensor& seed) {
  const auto& m = s.model();
  return ldm::generate(ldm::Latent{seed, m.schedule.steps()}, m.prior, m.schedule, m.vae).x0;
}

// Shared tail of attack-detect and posthoc.
DetectResult detect_and_write(const Session& s, const fs::path& dir, const std::string& method,
                              const std::vector<StoredTrial>& trials,
                              const std::vector<Image>& marked, const std::vector<Image>& clean) {
  const auto& cfg = s.config();
  std::vector<decoder::BitMessage> messages;
  for (const auto& t : trials) messages.push_back(t.message);
  DetectResult result;
  CsvTable samples({"trial", "label", "method", "attack", "cosine", "pvalue", "ber"});
  CsvTable roc({"method", "attack", "pfa", "pd"});
  const auto roc_grid = stats::decade_grid(30);
  for (const auto& attack : cfg.attacks) {
    const std::string name = augment::to_string(attack);
    auto det = detect_all(s, marked, messages, attack);
    const auto clean_det = detect_all(s, clean, messages, attack);
    for (std::size_t i = 0; i < det.size(); ++i) {
      samples.add({num(trials[i].index), "watermarked", method, name, num(det[i].cosine),
                   num(det[i].pvalue), num(det[i].ber)});
    }
    for (std::size_t i = 0; i < clean_det.size(); ++i) {
      samples.add({num(trials[i].index), "clean", method, name, num(clean_det[i].cosine),
                   num(clean_det[i].pvalue), num(clean_det[i].ber)});
    }
    auto report = summarize(method, attack, det, cfg.message_length());
    std::vector<double> p;
    for (const auto& d : det) p.push_back(d.pvalue);
    for (double pfa : roc_grid) roc.add({method, name, num(pfa), num(stats::detection_at_fa(p, pfa))});
    result.reports.push_back(std::move(report));
    result.detections.push_back(std::move(det));
  }
  samples.save(dir / "pvalues.csv");
  roc.save(dir / "roc.csv");
  save_reports(dir, result.reports);
  return result;
}

// Column-major feature batches over corpus images [first, first + n).
template <class F>
void for_each_feature_batch(const Session& s, std::uint64_t first, std::size_t n, F&& f) {
  const std::size_t m = s.extractor().length();
  std::vector<double> buf;
  std::vector<Image> images;
  for (std::size_t done = 0; done < n; done += kBatch) {
    const std::size_t count = std::min(kBatch, n - done);
    images.clear();
    for (std::size_t i = 0; i < count; ++i) images.push_back(s.corpus().image(first + done + i));
    buf.assign(m * count, 0.0);
    s.extractor().extract_batch(images, buf);
    f(std::span<const double>(buf), count);
  }
}

double pd90(const stats::DetectionReport& r) {
  for (std::size_t i = 0; i < r.pd_grid.size(); ++i) {
    if (r.pd_grid[i] == 0.9) return r.neglog10_pfa_at_pd[i];
  }
  throw NotFound("report has no P_D = 0.9 entry");
}

double max_offdiag_correlation(const std::vector<double>& cov, std::size_t m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const double c = cov[i * m + j] / std::sqrt(cov[i * m + i] * cov[j * m + j]);
      worst = std::max(worst, std::abs(c));
    }
  }
  return worst;
}

}  // namespace

Session::Session(ExperimentConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      model_(make_toy_model(ModelParams{25, Shape{4, 16, 16}, ModelParams{}.prior_seed,
                                        cfg_.model_prior_images})),
      extractor_(decoder::FeatureExtractor::preset(cfg_.preset, model_.vae.image_shape())),
      corpus_(model_.vae.image_shape(), RngStream::derive(cfg_.seed, 0, "corpus").next_u64()) {}

const decoder::WhiteningTransform& Session::whitening() const {
  if (!whitening_) throw NotFound("whitening not loaded; run 'calibrate' first");
  return *whitening_;
}

void Session::load_whitening() {
  const fs::path p = cfg_.whitening_path();
  if (!fs::exists(p)) {
    throw NotFound("whitening file " + p.string() + " not found; run 'calibrate' first");
  }
  auto w = decoder::WhiteningTransform::load(p);
  if (w.length() != extractor_.length()) {
    throw InvalidArgument("whitening file " + p.string() + " has length " +
                          std::to_string(w.length()) + " but preset '" + cfg_.preset +
                          "' needs " + std::to_string(extractor_.length()));
  }
  whitening_ = std::move(w);
}

guidance::Pipeline Session::pipeline() const {
  return guidance::Pipeline{&model_.schedule, &model_.prior, &model_.vae, &extractor_,
                            &whitening()};
}

std::size_t Trial::guided_steps() const {
  return static_cast<std::size_t>(std::count_if(generation.trace.begin(), generation.trace.end(),
                                                [](const auto& r) { return r.guided; }));
}

std::size_t Trial::gradient_evaluations() const {
  std::size_t n = 0;
  for (const auto& r : generation.trace) n += r.gradient_evaluations;
  return n;
}

ldm::Latent trial_seed(const Session& s, std::size_t trial) {
  RngStream rng = RngStream::derive(s.config().seed, trial, "seed");
  return ldm::sample_seed(s.model().prior.shape(), s.model().schedule, rng);
}

decoder::BitMessage trial_message(const Session& s, std::size_t trial) {
  RngStream rng = RngStream::derive(s.config().seed, trial, "message");
  return decoder::BitMessage::random(s.config().message_length(), rng);
}

Trial run_trial(const Session& s, const guidance::GuidanceConfig& g, std::size_t trial) {
  Trial t;
  t.index = trial;
  t.seed = trial_seed(s, trial);
  t.message = trial_message(s, trial);
  const auto& m = s.model();
  guidance::WatermarkGuide guide(s.pipeline(), decoder::modulate(t.message), g,
                                 RngStream::derive(s.config().seed, trial, "guide"));
  t.generation = ldm::generate(t.seed, m.prior, m.schedule, m.vae, &guide);
  return t;
}

std::vector<Trial> run_trials(const Session& s, const guidance::GuidanceConfig& g,
                              std::size_t count) {
  g.validate(s.model().schedule.steps());
  std::vector<Trial> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(run_trial(s, g, i));
  return out;
}

Detection detect(const Session& s, const Image& x, const decoder::BitMessage& m) {
  const auto f = decoder::extract_whitened(s.extractor(), x, s.whitening());
  Detection d;
  d.cosine = decoder::cosine_score(f, decoder::modulate(m).u);
  d.pvalue = stats::pvalue_cosine(std::clamp(d.cosine, -1.0, 1.0), f.size());
  d.ber = stats::bit_error_rate(m, decoder::decode_bits(f));
  return d;
}

std::vector<Detection> detect_all(const Session& s, const std::vector<Image>& images,
                                  const std::vector<decoder::BitMessage>& messages,
                                  const augment::Transform& attack) {
  if (images.size() != messages.size()) throw InvalidArgument("detect_all: count mismatch");
  std::vector<Detection> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(detect(s, attacked(s, attack, images[i]), messages[i]));
  }
  return out;
}

stats::DetectionReport summarize(const std::string& method, const augment::Transform& attack,
                                 const std::vector<Detection>& d, std::size_t message_length) {
  std::vector<double> p, ber;
  for (const auto& x : d) {
    p.push_back(x.pvalue);
    ber.push_back(x.ber);
  }
  return stats::make_report(method, augment::to_string(attack), p, ber, message_length);
}

Image posthoc_embed(const Session& s, const Image& x, const decoder::SecretVector& u,
                    std::size_t steps, double budget) {
  if (!(budget >= 0.0)) throw InvalidArgument("posthoc_embed: budget must be non-negative");
  if (budget == 0.0) return x;
  const auto p = s.pipeline();
  const double step = budget / 10.0;
  Image cur = x;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto il = guidance::image_loss(p, cur, u, augment::Identity{});
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double g = il.grad[i];
      const double moved = cur[i] - step * static_cast<double>((g > 0.0) - (g < 0.0));
      cur[i] = std::clamp(moved, x[i] - budget, x[i] + budget);
    }
  }
  return cur;
}

double latent_deviation(const Tensor& guided, const Tensor& unguided) {
  require_same_shape(guided.shape(), unguided.shape(), "latent_deviation");
  const double base = norm(unguided.values());
  if (!(base > 0.0)) throw DegenerateInput("latent_deviation: zero reference latent");
  return norm((guided - unguided).values()) / base;
}

CalibrationResult cmd_calibrate(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t m = cfg.message_length();
  if (cfg.calibration_n < 10 * m) {
    throw InvalidArgument("calibration.n = " + std::to_string(cfg.calibration_n) +
                          " is below 10*M = " + std::to_string(10 * m) +
                          "; increase calibration.n");
  }
  Session s(cfg);
  auto w = decoder::whiten_calibrate(s.extractor(), s.corpus(), 0, cfg.calibration_n);
  CalibrationResult r;
  r.whitening_file = cfg.whitening_path();
  r.samples = cfg.calibration_n;
  r.holdout = cfg.calibration_holdout;
  r.bias_norm = norm(w.bias());
  if (cfg.calibration_holdout >= 2) {
    decoder::CovarianceAccumulator raw(m), white(m);
    std::vector<double> wbuf;
    for_each_feature_batch(s, cfg.calibration_n, cfg.calibration_holdout,
                           [&](std::span<const double> f, std::size_t count) {
                             raw.add(f, count);
                             wbuf.clear();
                             for (std::size_t i = 0; i < count; ++i) {
                               const auto v = w.apply(f.subspan(i * m, m));
                               wbuf.insert(wbuf.end(), v.begin(), v.end());
                             }
                             white.add(wbuf, count);
                           });
    const auto rc = raw.covariance();
    const auto wc = white.covariance();
    r.raw_max_correlation = max_offdiag_correlation(rc, m);
    r.whitened_max_correlation = max_offdiag_correlation(wc, m);
    for (std::size_t i = 0; i < m; ++i) {
      r.whitened_max_variance_error = std::max(r.whitened_max_variance_error, std::abs(wc[i * m + i] - 1.0));
    }
  }
  if (r.whitening_file.has_parent_path()) fs::create_directories(r.whitening_file.parent_path());
  w.save(r.whitening_file);
  json j;
  j["preset"] = cfg.preset;
  j["message_length"] = m;
  j["samples"] = r.samples;
  j["holdout"] = r.holdout;
  j["bias_norm"] = r.bias_norm;
  j["raw_max_offdiag_correlation"] = r.raw_max_correlation;
  j["whitened_max_offdiag_correlation"] = r.whitened_max_correlation;
  j["whitened_max_variance_error"] = r.whitened_max_variance_error;
  save_json(cfg.out / "calibration.json", j);
  return r;
}

EmbedResult cmd_embed(const ExperimentConfig& cfg) {
  Session s(cfg);
  s.load_whitening();
  const fs::path dir = embed_dir(cfg);
  EmbedResult res;
  res.trials = run_trials(s, cfg.guidance, cfg.trials);
  CsvTable manifest({"trial", "message", "seed_file", "z0_file", "x0_file", "final_loss", "cosine",
                     "pvalue", "guided_steps", "gradient_evaluations"});
  CsvTable trace({"trial", "t", "guided", "loss", "grad_norm", "eps_shift_norm",
                  "gradient_evaluations"});
  std::vector<double> final_losses;
  for (const auto& t : res.trials) {
    const std::string base = trial_name(t.index);
    save_tensor(dir / (base + "_seed.wmt"), t.seed.value);
    save_tensor(dir / (base + "_z0.wmt"), t.generation.z0.value);
    save_tensor(dir / (base + "_x0.wmt"), t.generation.x0);
    save_netpbm(dir / (base + "_x0.ppm"), t.generation.x0);
    const auto d = detect(s, t.generation.x0, t.message);
    const auto& tr = t.generation.trace;
    final_losses.push_back(!tr.empty() && tr.back().guided ? tr.back().loss : 1.0 - d.cosine);
    manifest.add({num(t.index), bits_to_string(t.message.bits), base + "_seed.wmt", base + "_z0.wmt",
                  base + "_x0.wmt", num(final_losses.back()), num(d.cosine), num(d.pvalue),
                  num(t.guided_steps()), num(t.gradient_evaluations())});
    for (const auto& r : t.generation.trace) {
      trace.add({num(t.index), std::to_string(r.t), r.guided ? "1" : "0", num(r.loss),
                 num(r.grad_norm), num(r.eps_shift_norm), num(r.gradient_evaluations)});
    }
  }
  res.median_final_loss = stats::median(final_losses);
  manifest.save(dir / "manifest.csv");
  trace.save(dir / "trace.csv");
  atomic_write(dir / "config.txt", cfg.to_text());
  save_json(dir / "embed.json", json{{"trials", res.trials.size()},
                                     {"message_length", cfg.message_length()},
                                     {"median_final_loss", res.median_final_loss}});
  return res;
}

const stats::DetectionReport& DetectResult::report(const std::string& attack) const {
  for (const auto& r : reports) {
    if (r.attack == attack) return r;
  }
  throw NotFound("no report for attack " + attack);
}

DetectResult cmd_attack_detect(const ExperimentConfig& cfg) {
  Session s(cfg);
  s.load_whitening();
  const auto trials = load_embed(cfg);
  std::vector<Image> marked, clean;
  for (const auto& t : trials) {
    if (t.message.size() != cfg.message_length()) {
      throw InvalidArgument("embed outputs were made with a different preset");
    }
    marked.push_back(t.x0);
    clean.push_back(unguided_from_seed(s, t.seed));
  }
  return detect_and_write(s, cfg.out / "detect", "guided", trials, marked, clean);
}

DetectResult cmd_posthoc(const ExperimentConfig& cfg) {
  Session s(cfg);
  s.load_whitening();
  const auto trials = load_embed(cfg);
  std::vector<Image> marked, clean;
  for (const auto& t : trials) {
    clean.push_back(unguided_from_seed(s, t.seed));
    marked.push_back(posthoc_embed(s, clean.back(), decoder::modulate(t.message),
                                   cfg.posthoc_steps, cfg.posthoc_budget));
  }
  return detect_and_write(s, cfg.out / "posthoc", "posthoc", trials, marked, clean);
}

const stats::DetectionReport& BaselineResult::report(const std::string& method,
                                                     const std::string& attack) const {
  for (const auto& r : reports) {
    if (r.method == method && r.attack == attack) return r;
  }
  throw NotFound("no baseline report for " + method + " / " + attack);
}

BaselineResult cmd_baseline_seed(const ExperimentConfig& cfg) {
  Session s(cfg);
  const auto& m = s.model();
  const Shape latent = m.prior.shape();
  constexpr std::size_t kGsBits = 256;
  const std::size_t na = cfg.baseline_attacks.size();
  std::vector<std::vector<double>> tr_p(na), ruben_p(na), gs_p(na), gs_ber(na);
  CsvTable samples({"trial", "method", "attack", "pvalue", "ber"});
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    RngStream tr_rng = RngStream::derive(cfg.seed, t, "treering");
    const auto key = baselines::RingKey::random(baselines::RingGeometry{}, tr_rng, true, 0,
                                                cfg.treering_amplitude);
    const Image tr_x = unguided_from_seed(s, baselines::treering_embed(key, latent, tr_rng));
    RngStream gs_rng = RngStream::derive(cfg.seed, t, "gaussian-shading");
    const auto gkey = baselines::GsKey::random(kGsBits, gs_rng);
    const auto msg = decoder::BitMessage::random(kGsBits, gs_rng);
    const Image gs_x = unguided_from_seed(s, baselines::gs_embed(msg, gkey, latent, gs_rng));
    for (std::size_t a = 0; a < na; ++a) {
      const auto& attack = cfg.baseline_attacks[a];
      const std::string name = augment::to_string(attack);
      const Tensor z_tr = recover_seed(m, attacked(s, attack, tr_x)).value;
      tr_p[a].push_back(baselines::treering_pvalue_chi2(z_tr, key));
      ruben_p[a].push_back(baselines::treering_pvalue_ruben(z_tr, key));
      const auto dec = baselines::gs_decode(recover_seed(m, attacked(s, attack, gs_x)).value, gkey);
      const std::size_t errors = decoder::bit_errors(msg, dec.bits);
      gs_p[a].push_back(baselines::gs_pvalue(kGsBits - errors, kGsBits));
      gs_ber[a].push_back(static_cast<double>(errors) / kGsBits);
      samples.add({num(t), "tree-ring", name, num(tr_p[a].back()), ""});
      samples.add({num(t), "tree-ring-ruben", name, num(ruben_p[a].back()), ""});
      samples.add({num(t), "gaussian-shading", name, num(gs_p[a].back()), num(gs_ber[a].back())});
    }
  }
  BaselineResult res;
  for (std::size_t a = 0; a < na; ++a) {
    const std::string name = augment::to_string(cfg.baseline_attacks[a]);
    res.reports.push_back(stats::make_report("tree-ring", name, tr_p[a], {}, 0));
    res.reports.push_back(stats::make_report("tree-ring-ruben", name, ruben_p[a], {}, 0));
    res.reports.push_back(stats::make_report("gaussian-shading", name, gs_p[a], gs_ber[a], kGsBits));
  }
  const fs::path dir = cfg.out / "baseline";
  samples.save(dir / "pvalues.csv");
  save_reports(dir, res.reports);
  return res;
}

const stats::FalseAlarmCurve& FalseAlarmResult::curve(const std::string& variant,
                                                      const std::string& key) const {
  for (const auto& c : curves) {
    if (c.variant == variant && c.key == key) return c.curve;
  }
  throw NotFound("no false-alarm curve for " + variant + " / " + key);
}

FalseAlarmResult cmd_validate_fa(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.fa_n < 10000) throw InvalidArgument("fa.n must be at least 10000");
  Session s(cfg);
  if (fs::exists(cfg.whitening_path())) {
    s.load_whitening();
  } else {
    s.set_whitening(decoder::whiten_calibrate(s.extractor(), s.corpus(), 0, cfg.calibration_n));
  }
  const std::size_t m = s.extractor().length();
  std::vector<std::string> key_names{"worst-case"};
  std::vector<decoder::SecretVector> keys;
  {
    decoder::BitMessage worst;
    for (double b : s.extractor().bias()) worst.bits.push_back(b > 0.0);
    keys.push_back(decoder::modulate(worst));
  }
  for (std::size_t k = 0; k < cfg.fa_keys; ++k) {
    RngStream rng = RngStream::derive(cfg.seed, k, "fa-key");
    keys.push_back(decoder::modulate(decoder::BitMessage::random(m, rng)));
    key_names.push_back("random-" + std::to_string(k));
  }
  const std::size_t nk = keys.size();
  std::vector<std::vector<double>> raw_p(nk), white_p(nk);
  const auto& w = s.whitening();
  const std::uint64_t first = cfg.calibration_n + cfg.calibration_holdout;
  for_each_feature_batch(s, first, cfg.fa_n, [&](std::span<const double> f, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto col = f.subspan(i * m, m);
      const auto wf = w.apply(col);
      for (std::size_t k = 0; k < nk; ++k) {
        raw_p[k].push_back(stats::pvalue_cosine(decoder::cosine_score(col, keys[k].u), m));
        white_p[k].push_back(stats::pvalue_cosine(decoder::cosine_score(wf, keys[k].u), m));
      }
    }
  });
  FalseAlarmResult res;
  res.samples = cfg.fa_n;
  const auto levels = stats::decade_grid(cfg.fa_depth);
  CsvTable curves({"variant", "key", "level", "empirical", "count", "ratio", "band", "testable",
                   "within_band"});
  CsvTable hist({"variant", "key", "bin_low", "bin_high", "count"});
  json j;
  j["samples"] = cfg.fa_n;
  j["message_length"] = m;
  j["alpha"] = 0.01;
  json jc = json::array();
  for (const auto* variant : {"raw", "whitened"}) {
    const auto& pv = std::string(variant) == "raw" ? raw_p : white_p;
    for (std::size_t k = 0; k < nk; ++k) {
      auto c = stats::validate_false_alarm(pv[k], levels, 0.01);
      for (const auto& pt : c.points) {
        curves.add({variant, key_names[k], num(pt.level), num(pt.empirical), num(pt.count),
                    num(pt.empirical / pt.level), num(c.band), pt.testable ? "1" : "0",
                    pt.within_band ? "1" : "0"});
      }
      std::vector<std::size_t> bins(20, 0);
      for (double p : pv[k]) bins[std::min<std::size_t>(19, static_cast<std::size_t>(p * 20))]++;
      for (std::size_t b = 0; b < bins.size(); ++b) {
        hist.add({variant, key_names[k], num(b / 20.0), num((b + 1) / 20.0), num(bins[b])});
      }
      jc.push_back({{"variant", variant}, {"key", key_names[k]}, {"band", c.band},
                    {"floor", c.floor}, {"all_within_band", c.all_within_band()}});
      res.curves.push_back({variant, key_names[k], std::move(c)});
    }
  }
  j["curves"] = jc;
  const fs::path dir = cfg.out / "fa";
  curves.save(dir / "curves.csv");
  hist.save(dir / "histogram.csv");
  save_json(dir / "fa.json", j);
  return res;
}

SpectrumResult cmd_spectrum(const ExperimentConfig& cfg) {
  Session s(cfg);
  const auto trials = load_embed(cfg);
  std::vector<Image> guided, clean;
  for (const auto& t : trials) {
    guided.push_back(t.x0);
    clean.push_back(unguided_from_seed(s, t.seed));
  }
  SpectrumResult r;
  r.guided = spectral::batch_spectrum(guided);
  r.clean = spectral::batch_spectrum(clean);
  r.diff = spectral::spectrum_diff(r.guided, r.clean);
  const fs::path dir = cfg.out / "spectrum";
  const auto save_grid = [&](const char* name, const spectral::SpectrumGrid& g) {
    save_tensor(dir / name, Tensor(Shape{1, g.side, g.side}, g.values));
  };
  save_grid("guided.wmt", r.guided);
  save_grid("clean.wmt", r.clean);
  save_grid("diff.wmt", r.diff);
  std::vector<std::string> header;
  for (std::size_t c = 0; c < r.diff.side; ++c) header.push_back("f" + std::to_string(c));
  CsvTable t(header);
  for (std::size_t row = 0; row < r.diff.side; ++row) {
    std::vector<std::string> line;
    for (std::size_t c = 0; c < r.diff.side; ++c) line.push_back(num(r.diff.at(row, c)));
    t.add(std::move(line));
  }
  t.save(dir / "diff.csv");
  return r;
}

std::vector<AblationRow> AblationResult::summary() const {
  std::vector<AblationRow> out;
  for (const auto& r : rows) {
    if (r.attack == "mean") out.push_back(r);
  }
  return out;
}

AblationResult cmd_ablate_steps(const ExperimentConfig& cfg) {
  Session s(cfg);
  s.load_whitening();
  AblationResult res;
  for (int tw : cfg.ablate_steps) {
    auto g = cfg.guidance;
    g.start_step = tw;
    const auto trials = run_trials(s, g, cfg.trials);
    std::vector<Image> images;
    std::vector<decoder::BitMessage> messages;
    std::size_t steps = 0, evals = 0;
    for (const auto& t : trials) {
      images.push_back(t.generation.x0);
      messages.push_back(t.message);
      steps += t.guided_steps();
      evals += t.gradient_evaluations();
    }
    AblationRow mean;
    mean.guided_steps_setting = tw;
    mean.attack = "mean";
    mean.guided_steps = steps / trials.size();
    mean.gradient_evaluations = evals / trials.size();
    double cap = 0.0, ber = 0.0;
    for (const auto& attack : cfg.attacks) {
      const auto rep = summarize("guided", attack, detect_all(s, images, messages, attack),
                                 cfg.message_length());
      AblationRow r = mean;
      r.attack = rep.attack;
      r.neglog10_pfa_at_pd90 = pd90(rep);
      r.capacity = rep.capacity;
      r.ber_median = rep.ber_median;
      mean.neglog10_pfa_at_pd90 += r.neglog10_pfa_at_pd90;
      cap += r.capacity;
      ber += r.ber_median;
      res.rows.push_back(r);
    }
    const double na = static_cast<double>(cfg.attacks.size());
    mean.neglog10_pfa_at_pd90 /= na;
    mean.capacity = static_cast<int>(std::lround(cap / na));
    mean.ber_median = ber / na;
    res.rows.push_back(mean);
  }
  CsvTable t({"guided_steps_setting", "attack", "neglog10_pfa_at_pd_0.9", "capacity_bits",
              "ber_median", "guided_steps", "gradient_evaluations"});
  json rows = json::array();
  for (const auto& r : res.rows) {
    t.add({std::to_string(r.guided_steps_setting), r.attack, num(r.neglog10_pfa_at_pd90),
           std::to_string(r.capacity), num(r.ber_median), num(r.guided_steps),
           num(r.gradient_evaluations)});
    rows.push_back({{"guided_steps_setting", r.guided_steps_setting},
                    {"attack", r.attack},
                    {"neglog10_pfa_at_pd_0.9", r.neglog10_pfa_at_pd90},
                    {"capacity_bits", r.capacity},
                    {"ber_median", r.ber_median},
                    {"guided_steps", r.guided_steps},
                    {"gradient_evaluations", r.gradient_evaluations}});
  }
  const fs::path dir = cfg.out / "ablate";
  t.save(dir / "ablate.csv");
  save_json(dir / "ablate.json", json{{"trials", cfg.trials}, {"rows", rows}});
  return res;
}

TuneResult cmd_tune_omega(const ExperimentConfig& cfg) {
  Session s(cfg);
  s.load_whitening();
  auto plain_cfg = cfg.guidance;
  plain_cfg.omega = 0.0;
  const auto plain = run_trials(s, plain_cfg, cfg.trials);
  TuneResult res;
  for (double eta : cfg.tune_etas) {
    for (double omega : cfg.tune_omegas) {
      auto g = cfg.guidance;
      g.omega = omega;
      g.eta = eta;
      std::vector<double> cosines, devs;
      for (std::size_t i = 0; i < cfg.trials; ++i) {
        const Trial t = run_trial(s, g, i);
        cosines.push_back(detect(s, t.generation.x0, t.message).cosine);
        devs.push_back(latent_deviation(t.generation.z0.value, plain[i].generation.z0.value));
      }
      TuneRow row{omega, eta, stats::median(cosines), stats::median(devs), false};
      row.feasible = row.median_deviation <= cfg.tune_max_deviation;
      if (row.feasible && (!res.best || row.median_cosine > res.best->median_cosine)) res.best = row;
      res.grid.push_back(row);
    }
  }
  CsvTable t({"omega", "eta", "median_cosine", "median_latent_deviation", "feasible"});
  for (const auto& r : res.grid) {
    t.add({num(r.omega), num(r.eta), num(r.median_cosine), num(r.median_deviation),
           r.feasible ? "1" : "0"});
  }
  const fs::path dir = cfg.out / "tune";
  t.save(dir / "grid.csv");
  json best = nullptr;
  if (res.best) {
    best = {{"omega", res.best->omega},
            {"eta", res.best->eta},
            {"median_cosine", res.best->median_cosine},
            {"median_latent_deviation", res.best->median_deviation}};
  }
  save_json(dir / "best.json",
            json{{"max_deviation", cfg.tune_max_deviation}, {"trials", cfg.trials}, {"best", best}});
  return res;
}

}  // namespace wmguide::harness
