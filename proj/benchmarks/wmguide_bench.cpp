#include <benchmark/benchmark.h>

#include <vector>

#include "wmguide/augment.hpp"
#include "wmguide/corpus.hpp"
#include "wmguide/decoder.hpp"
#include "wmguide/guidance.hpp"
#include "wmguide/model.hpp"
#include "wmguide/numerics.hpp"
#include "wmguide/rng.hpp"
#include "wmguide/stats.hpp"

using namespace wmguide;

namespace {

Image random_image(Shape s, std::uint64_t seed) {
  RngStream rng(seed);
  Image x(s);
  for (double& v : x.values()) v = rng.uniform();
  return x;
}

void BM_Fft2(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  RngStream rng(1);
  std::vector<double> grid(side * side);
  for (double& v : grid) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(numerics::fft2(grid, side));
}
BENCHMARK(BM_Fft2)->RangeMultiplier(2)->Range(16, 256);

void BM_RubenCdf(benchmark::State& state) {
  numerics::ChiSquareMixture mix;
  for (int j = 0; j < state.range(0); ++j) {
    mix.weights.push_back(0.5 + 0.1 * j);
    mix.noncentralities.push_back(0.5);
    mix.dofs.push_back(2);
  }
  const double x = mix.mean();
  for (auto _ : state) benchmark::DoNotOptimize(numerics::ruben_cdf(mix, x));
}
BENCHMARK(BM_RubenCdf)->Arg(4)->Arg(16)->Arg(32);

void BM_PvalueCosine(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(stats::pvalue_cosine(0.4, m));
}
BENCHMARK(BM_PvalueCosine)->Arg(48)->Arg(256);

void BM_RcuCapacity(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(stats::rcu_capacity(256, 0.05));
}
BENCHMARK(BM_RcuCapacity);

void BM_JpegSoft(benchmark::State& state) {
  const Image x = random_image(Shape{3, 32, 32}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(augment::jpeg_approx(x, 50));
}
BENCHMARK(BM_JpegSoft);

void BM_TransformVjp(benchmark::State& state) {
  const augment::Transform t = augment::MedianFilter{3};
  const Image x = random_image(Shape{3, 32, 32}, 3);
  const Image w = random_image(Shape{3, 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(augment::vjp(t, x, w));
}
BENCHMARK(BM_TransformVjp);

void BM_ExtractBatch(benchmark::State& state) {
  const auto extractor = decoder::FeatureExtractor::preset("long");
  const corpus::TextureCorpus corpus(Shape{3, 32, 32}, 5);
  std::vector<Image> images;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(state.range(0)); ++i) {
    images.push_back(corpus.image(i));
  }
  std::vector<double> out(extractor.length() * images.size());
  for (auto _ : state) {
    extractor.extract_batch(images, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExtractBatch)->Arg(64)->Arg(512);

struct GuidedSetup {
  ToyModel model = make_toy_model();
  decoder::FeatureExtractor extractor = decoder::FeatureExtractor::preset("long");
  decoder::WhiteningTransform whitening = decoder::WhiteningTransform::identity(256);
  guidance::Pipeline pipeline{&model.schedule, &model.prior, &model.vae, &extractor, &whitening};
};

void BM_GuidedStep(benchmark::State& state) {
  static const GuidedSetup setup;
  RngStream rng(6);
  const auto z = ldm::sample_seed(setup.model.prior.shape(), setup.model.schedule, rng);
  const Tensor eps = ldm::denoiser_eps(z, setup.model.prior, setup.model.schedule);
  const auto u = decoder::modulate(decoder::BitMessage::random(256, rng));
  guidance::GuidanceConfig cfg;
  cfg.omega = 5.0;
  cfg.transforms = augment::parse_list(state.range(0) == 1
                                           ? "identity"
                                           : "identity,jpeg:50,jpeg:80,brightness:0.2,"
                                             "contrast:2,crop:0.5");
  cfg.mode = state.range(1) ? guidance::GradientMode::FullUnroll
                            : guidance::GradientMode::FastIdentity;
  for (auto _ : state) {
    benchmark::DoNotOptimize(guidance::guided_eps(setup.pipeline, z, eps, u, cfg, rng));
  }
}
BENCHMARK(BM_GuidedStep)->Args({1, 0})->Args({6, 0})->Args({1, 1})->Args({6, 1});

void BM_GenerateUnguided(benchmark::State& state) {
  static const ToyModel model = make_toy_model();
  RngStream rng(7);
  const auto z = ldm::sample_seed(model.prior.shape(), model.schedule, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ldm::generate(z, model.prior, model.schedule, model.vae));
  }
}
BENCHMARK(BM_GenerateUnguided);

}  // namespace

BENCHMARK_MAIN();
