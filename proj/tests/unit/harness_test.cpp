#include "wmguide/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <unistd.h>

#include "wmguide/config.hpp"
#include "wmguide/errors.hpp"
#include "wmguide/io.hpp"

using namespace wmguide;
using namespace wmguide::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) /
                     ("wmguide-harness-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Short preset with a small calibration shared by every test.
const ExperimentConfig& base_config() {
  static const ExperimentConfig cfg = [] {
    ExperimentConfig c = ExperimentConfig::defaults("short");
    c.out = scratch("base");
    c.trials = 8;
    c.calibration_n = 5000;
    c.calibration_holdout = 2000;
    cmd_calibrate(c);
    return c;
  }();
  return cfg;
}

ExperimentConfig config_in(const std::string& name) {
  ExperimentConfig c = base_config();
  c.whitening = base_config().whitening_path();
  c.out = scratch(name);
  return c;
}

std::vector<std::string> csv_column(const std::string& text, std::size_t col) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    for (std::size_t i = 0; i <= col; ++i) std::getline(row, cell, ',');
    out.push_back(cell);
  }
  return out;
}

}  // namespace

TEST(ConfigMap, SectionsCommentsAndErrors) {
  const auto m = ConfigMap::parse(
      "# top\ntrials = 12\n\n[guidance]\nomega = 4.5   # trailing\n  eta=0.2\n[fa]\nn = 20000\n");
  EXPECT_EQ(m.values().at("trials"), "12");
  EXPECT_EQ(m.values().at("guidance.omega"), "4.5");
  EXPECT_EQ(m.values().at("guidance.eta"), "0.2");
  EXPECT_EQ(m.values().at("fa.n"), "20000");
  EXPECT_THROW(ConfigMap::parse("a = 1\na = 2\n"), InvalidArgument);
  EXPECT_THROW(ConfigMap::parse("[open\n"), InvalidArgument);
  EXPECT_THROW(ConfigMap::parse("no equals sign\n"), InvalidArgument);
  EXPECT_THROW(ConfigMap::parse("Bad Key = 1\n"), InvalidArgument);
  EXPECT_THROW(ConfigMap::load("/nonexistent/wmguide.cfg"), NotFound);
}

TEST(ExperimentConfig, PresetsAndRoundTrip) {
  const auto lng = ExperimentConfig::defaults("long");
  const auto shrt = ExperimentConfig::defaults("short");
  EXPECT_EQ(lng.message_length(), 256u);
  EXPECT_EQ(shrt.message_length(), 48u);
  EXPECT_EQ(lng.guidance.omega, 5.0);
  EXPECT_EQ(shrt.guidance.omega, 3.0);
  EXPECT_EQ(lng.guidance.transforms.size(), 6u);
  EXPECT_THROW(ExperimentConfig::defaults("medium"), InvalidArgument);

  ConfigMap m = ConfigMap::parse(lng.to_text());
  m.set("guidance.omega", "2.25");
  m.set("attacks", "identity,jpeg:50,rotate90");
  m.set("ablate.steps", "20,3");
  const auto cfg = ExperimentConfig::from_map(m);
  EXPECT_EQ(cfg.guidance.omega, 2.25);
  EXPECT_EQ(cfg.attacks.size(), 3u);
  EXPECT_EQ(cfg.ablate_steps, (std::vector<int>{20, 3}));
  EXPECT_EQ(ExperimentConfig::from_map(ConfigMap::parse(cfg.to_text())).to_text(), cfg.to_text());
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(std::stod(format_double(2.0 / 255.0)), 2.0 / 255.0);
}

TEST(ExperimentConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(ExperimentConfig::from_map(ConfigMap::parse("guidance.omgea = 1\n")),
               InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_map(ConfigMap::parse("trials = many\n")), InvalidArgument);
  auto bad = [](auto mutate) {
    ExperimentConfig c = ExperimentConfig::defaults("short");
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.trials = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.guidance.omega = -1; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.guidance.start_step = 26; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.attacks.clear(); }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](auto& c) { c.ablate_steps = {30}; }).validate(), InvalidArgument);
  EXPECT_NO_THROW(bad([](auto& c) { c.guidance.start_step = 0; }).validate());
}

TEST(TensorFile, RoundTripIsBitExact) {
  Tensor t(Shape{2, 3, 5});
  RngStream rng(1);
  for (double& v : t.values()) v = rng.normal() * 1e-300;
  t[0] = -0.0;
  t[1] = 1.0 / 3.0;
  const auto back = TensorFile::decode(TensorFile::from(t).encode()).to_tensor();
  EXPECT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(std::signbit(back[i]), std::signbit(t[i]));
    EXPECT_EQ(back[i], t[i]);
  }
  const fs::path dir = scratch("tensor");
  save_tensor(dir / "a.wmt", t);
  EXPECT_EQ(load_tensor(dir / "a.wmt").data(), t.data());
  EXPECT_THROW(load_tensor(dir / "missing.wmt"), NotFound);
}

TEST(TensorFile, RejectsCorruptInput) {
  const std::string good = TensorFile::from(Tensor(Shape{1, 2, 2}, 1.0)).encode();
  EXPECT_EQ(good.substr(0, 4), "WMT1");
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(TensorFile::decode(bad_magic), InvalidArgument);
  EXPECT_THROW(TensorFile::decode(good.substr(0, good.size() - 3)), InvalidArgument);
  EXPECT_THROW(TensorFile::decode(good + "x"), InvalidArgument);
  EXPECT_THROW(TensorFile::decode("WM"), InvalidArgument);
}

TEST(Io, AtomicWriteCsvAndBits) {
  const fs::path dir = scratch("io");
  atomic_write(dir / "f.txt", "one");
  atomic_write(dir / "f.txt", "two");
  EXPECT_EQ(read_file(dir / "f.txt"), "two");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1u);

  CsvTable t({"a", "b"});
  t.add({"1", "x"});
  t.add({"2", "y"});
  EXPECT_EQ(t.str(), "a,b\n1,x\n2,y\n");
  EXPECT_THROW(t.add({"3"}), InvalidArgument);

  const std::vector<std::uint8_t> bits{1, 0, 0, 1, 1};
  EXPECT_EQ(bits_to_string(bits), "10011");
  EXPECT_EQ(bits_from_string("10011"), bits);
  EXPECT_THROW(bits_from_string("10a"), InvalidArgument);
}

TEST(Session, MissingWhiteningIsNotFound) {
  ExperimentConfig c = ExperimentConfig::defaults("short");
  c.out = scratch("nowhite");
  Session s(c);
  EXPECT_FALSE(s.has_whitening());
  EXPECT_THROW(s.load_whitening(), NotFound);
  EXPECT_THROW(s.whitening(), Error);
  EXPECT_THROW(cmd_attack_detect(c), NotFound);
}

TEST(Trials, ZeroOmegaAndZeroStepAreUnguidedBitExact) {
  Session s(config_in("zero"));
  s.load_whitening();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto plain = ldm::generate(trial_seed(s, i), s.model().prior, s.model().schedule,
                                     s.model().vae);
    auto g = s.config().guidance;
    g.omega = 0.0;
    const auto a = run_trial(s, g, i);
    EXPECT_EQ(a.generation.z0.value.data(), plain.z0.value.data());
    EXPECT_EQ(a.generation.x0.data(), plain.x0.data());
    g = s.config().guidance;
    g.start_step = 0;
    const auto b = run_trial(s, g, i);
    EXPECT_EQ(b.generation.x0.data(), plain.x0.data());
    EXPECT_EQ(b.guided_steps(), 0u);
    EXPECT_EQ(b.gradient_evaluations(), 0u);
  }
}

TEST(Trials, StepCountsAndStreamsIndependentOfSettings) {
  Session s(config_in("steps"));
  s.load_whitening();
  auto g = s.config().guidance;
  for (int tw : {25, 10, 3}) {
    g.start_step = tw;
    const auto t = run_trial(s, g, 1);
    EXPECT_EQ(t.guided_steps(), static_cast<std::size_t>(tw));
    EXPECT_EQ(t.gradient_evaluations(), static_cast<std::size_t>(tw) * g.transforms.size());
    EXPECT_EQ(t.message.bits, trial_message(s, 1).bits);
    EXPECT_EQ(t.seed.value.data(), trial_seed(s, 1).value.data());
  }
  EXPECT_NE(trial_message(s, 1).bits, trial_message(s, 2).bits);
}

TEST(Commands, EmbedManifestAndDetection) {
  const ExperimentConfig c = config_in("embed");
  const auto e = cmd_embed(c);
  EXPECT_EQ(e.trials.size(), c.trials);
  EXPECT_LT(e.median_final_loss, 0.5);
  const std::string manifest = read_file(c.out / "embed" / "manifest.csv");
  const auto messages = csv_column(manifest, 1);
  EXPECT_EQ(messages.size(), c.trials);
  EXPECT_EQ(std::set<std::string>(messages.begin(), messages.end()).size(), c.trials);
  for (const auto& m : messages) EXPECT_EQ(m.size(), 48u);
  EXPECT_TRUE(fs::exists(c.out / "embed" / "trial_00000_x0.wmt"));

  const auto d = cmd_attack_detect(c);
  const auto& id = d.report("identity");
  EXPECT_EQ(id.samples, c.trials);
  EXPECT_LT(id.median_pvalue, 1e-6);
  EXPECT_THROW(d.report("nonexistent"), NotFound);
  for (const char* f : {"pvalues.csv", "roc.csv", "report.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(c.out / "detect" / f)) << f;
  }
}

TEST(Commands, RerunIsByteIdentical) {
  ExperimentConfig c = config_in("rerun");
  c.trials = 3;
  c.attacks = {augment::Identity{}, augment::JpegApprox{50}};
  cmd_embed(c);
  cmd_attack_detect(c);
  const std::string a = read_file(c.out / "detect" / "report.json");
  const std::string am = read_file(c.out / "embed" / "manifest.csv");
  const std::string ax = read_file(c.out / "embed" / "trial_00002_x0.wmt");
  cmd_embed(c);
  cmd_attack_detect(c);
  EXPECT_EQ(read_file(c.out / "detect" / "report.json"), a);
  EXPECT_EQ(read_file(c.out / "embed" / "manifest.csv"), am);
  EXPECT_EQ(read_file(c.out / "embed" / "trial_00002_x0.wmt"), ax);
}

TEST(Posthoc, ZeroBudgetLeavesImageAndBudgetBoundsChange) {
  Session s(config_in("posthoc"));
  s.load_whitening();
  const auto plain = ldm::generate(trial_seed(s, 0), s.model().prior, s.model().schedule,
                                   s.model().vae);
  const auto u = decoder::modulate(trial_message(s, 0));
  EXPECT_EQ(posthoc_embed(s, plain.x0, u, 20, 0.0).data(), plain.x0.data());
  const double budget = 4.0 / 255.0;
  const Image marked = posthoc_embed(s, plain.x0, u, 20, budget);
  EXPECT_LE(max_abs_diff(marked.values(), plain.x0.values()), budget * (1 + 1e-12));
  EXPECT_GT(detect(s, marked, trial_message(s, 0)).cosine,
            detect(s, plain.x0, trial_message(s, 0)).cosine);
}

TEST(Deviation, RelativeNorm) {
  const Tensor b(Shape{1, 1, 2}, std::vector<double>{3, 4});
  const Tensor a(Shape{1, 1, 2}, std::vector<double>{3, 5});
  EXPECT_DOUBLE_EQ(latent_deviation(a, b), 0.2);
  EXPECT_EQ(latent_deviation(b, b), 0.0);
}
