#include "wmguide/decoder.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "wmguide/errors.hpp"

using namespace wmguide;
using namespace wmguide::decoder;

namespace {

const Shape kImage{3, 32, 32};

std::vector<double> random_vector(RngStream& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Row-major lower-triangular inverse by forward substitution on unit vectors.
std::vector<double> lower_inverse(const std::vector<double>& l, std::size_t m) {
  std::vector<double> inv(m * m, 0.0);
  for (std::size_t col = 0; col < m; ++col) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = i == col ? 1.0 : 0.0;
      for (std::size_t j = 0; j < i; ++j) acc -= l[i * m + j] * inv[j * m + col];
      inv[i * m + col] = acc / l[i * m + i];
    }
  }
  return inv;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("wmguide_decoder_" + name);
}

}  // namespace

TEST(Modulation, AntipodalMapAndSignDecoding) {
  BitMessage zeros{std::vector<std::uint8_t>(48, 0)};
  BitMessage ones{std::vector<std::uint8_t>(48, 1)};
  for (double v : modulate(zeros).u) EXPECT_EQ(v, -1.0);
  for (double v : modulate(ones).u) EXPECT_EQ(v, 1.0);
  RngStream rng(1);
  const BitMessage m = BitMessage::random(256, rng);
  const SecretVector u = modulate(m);
  EXPECT_EQ(decode_bits(u.u).bits, m.bits);
  std::vector<double> noisy = u.u;
  for (double& v : noisy) v += 0.99 * (2.0 * rng.uniform() - 1.0);
  EXPECT_EQ(decode_bits(noisy).bits, m.bits);
  for (auto b : decode_bits(std::vector<double>(10, 0.0)).bits) EXPECT_EQ(b, 0);
  std::vector<double> scaled = noisy;
  for (double& v : scaled) v *= 3.7;
  EXPECT_EQ(decode_bits(scaled).bits, decode_bits(noisy).bits);
}

TEST(CosineScore, ClosedForms) {
  const std::vector<double> u{1.0, -1.0, 1.0, 1.0};
  const std::vector<double> perp{1.0, 1.0, 0.0, 0.0};
  const std::vector<double> neg{-1.0, 1.0, -1.0, -1.0};
  EXPECT_NEAR(cosine_score(u, u), 1.0, 1e-15);
  EXPECT_NEAR(cosine_score(perp, u), 0.0, 1e-15);
  EXPECT_NEAR(cosine_score(neg, u), -1.0, 1e-15);
  EXPECT_THROW(cosine_score(std::vector<double>(4, 0.0), u), DegenerateInput);
}

TEST(FeatureExtractor, AffineStructureAndAdjoint) {
  const auto ex = FeatureExtractor::preset("short");
  EXPECT_EQ(ex.length(), 48u);
  const auto f0 = ex.extract(Image(kImage));
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(f0[i], ex.bias()[i], 1e-14);
  RngStream rng(2);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    Image x(kImage);
    for (double& v : x.values()) v = rng.normal();
    const auto g = random_vector(rng, 48);
    const auto f = ex.extract(x);
    double lhs = 0.0;
    for (std::size_t i = 0; i < 48; ++i) lhs += (f[i] - ex.bias()[i]) * g[i];
    worst = std::max(worst, std::abs(lhs - dot(ex.extract_vjp(g).values(), x.values())));
  }
  EXPECT_LT(worst, 1e-10);
  // Zero-sum rows: a uniform brightness shift leaves features unchanged.
  Image x(kImage, 0.3);
  const auto fx = ex.extract(x);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(fx[i], ex.bias()[i], 1e-12);
  EXPECT_THROW(FeatureExtractor::preset("medium"), InvalidArgument);
  EXPECT_THROW(ex.extract(Image(Shape{3, 16, 16})), InvalidArgument);
}

TEST(FeatureExtractor, BatchMatchesSingle) {
  const auto ex = FeatureExtractor::preset("long");
  corpus::TextureCorpus corpus(kImage, 3);
  std::vector<Image> imgs;
  for (int i = 0; i < 300; ++i) imgs.push_back(corpus.image(i));
  std::vector<double> out(300 * 256);
  ex.extract_batch(imgs, out);
  for (int i : {0, 137, 299}) {
    const auto f = ex.extract(imgs[i]);
    for (std::size_t j = 0; j < 256; ++j) EXPECT_NEAR(out[i * 256 + j], f[j], 1e-11);
  }
}

TEST(FeatureExtractor, TextureFeaturesAreBiasedAndCorrelated) {
  const auto ex = FeatureExtractor::preset("short");
  corpus::TextureCorpus corpus(kImage, 4);
  CovarianceAccumulator acc(48);
  std::vector<Image> imgs;
  std::vector<double> feats(48 * 250);
  for (int start = 0; start < 10000; start += 250) {
    imgs.clear();
    for (int k = 0; k < 250; ++k) imgs.push_back(corpus.image(start + k));
    ex.extract_batch(imgs, feats);
    acc.add(feats, 250);
  }
  const auto mean = acc.mean();
  const auto cov = acc.covariance();
  std::size_t far_from_zero = 0;
  double max_corr = 0.0;
  for (std::size_t i = 0; i < 48; ++i) {
    const double se = std::sqrt(cov[i * 48 + i] / 1e4);
    EXPECT_NEAR(mean[i], ex.bias()[i], 4.0 * se);
    far_from_zero += std::abs(mean[i]) > 4.0 * se;
    for (std::size_t j = 0; j < i; ++j) {
      max_corr = std::max(max_corr, std::abs(cov[i * 48 + j]) /
                                        std::sqrt(cov[i * 48 + i] * cov[j * 48 + j]));
    }
  }
  EXPECT_GE(far_from_zero, 24u);
  EXPECT_GT(max_corr, 0.2);
}

TEST(Whitening, RecoversParametricMoments) {
  const std::size_t m = 48, n = 100000;
  RngStream rng(5);
  // Σ = A Aᵀ + 0.5 I with a random A; b random.
  std::vector<double> a(m * m), sigma(m * m, 0.0), b = random_vector(rng, m);
  for (double& v : a) v = rng.normal() / std::sqrt(static_cast<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = i == j ? 0.5 : 0.0;
      for (std::size_t k = 0; k < m; ++k) s += a[i * m + k] * a[j * m + k];
      sigma[i * m + j] = s;
    }
  }
  // Cholesky of Σ in test code for sampling.
  std::vector<double> c(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = sigma[i * m + j];
      for (std::size_t k = 0; k < j; ++k) s -= c[i * m + k] * c[j * m + k];
      c[i * m + j] = i == j ? std::sqrt(s) : s / c[j * m + j];
    }
  }
  CovarianceAccumulator acc(m);
  std::vector<double> batch(m * 1000);
  for (std::size_t start = 0; start < n; start += 1000) {
    for (std::size_t k = 0; k < 1000; ++k) {
      const auto z = random_vector(rng, m);
      for (std::size_t i = 0; i < m; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j <= i; ++j) s += c[i * m + j] * z[j];
        batch[k * m + i] = s;
      }
    }
    acc.add(batch, 1000);
  }
  const WhiteningTransform w = acc.finish();
  for (std::size_t i = 0; i < m; ++i) {
    EXPECT_NEAR(w.bias()[i], b[i], 3.0 * std::sqrt(sigma[i * m + i] / n));
  }
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += w.lower()[i * m + k] * w.lower()[j * m + k];
      diff += (s - sigma[i * m + j]) * (s - sigma[i * m + j]);
      ref += sigma[i * m + j] * sigma[i * m + j];
    }
  }
  EXPECT_LT(std::sqrt(diff / ref), 0.05);
}

TEST(Whitening, AffineDefinitionAndAdjoint) {
  const std::size_t m = 6;
  RngStream rng(6);
  std::vector<double> lower(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) lower[i * m + j] = rng.normal();
    lower[i * m + i] = 0.5 + rng.uniform();
  }
  const auto bias = random_vector(rng, m);
  const WhiteningTransform w(bias, lower);
  for (double v : w.apply(bias)) EXPECT_NEAR(v, 0.0, 1e-15);
  const auto inv = lower_inverse(lower, m);
  for (double scale : {0.1, 1.0, 25.0}) {
    auto f = random_vector(rng, m);
    for (double& v : f) v *= scale;
    const auto y = w.apply(f);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += inv[i * m + j] * (f[j] - bias[j]);
      EXPECT_NEAR(y[i], s, 1e-10 * std::max(1.0, std::abs(s)));
    }
  }
  const auto g = random_vector(rng, m);
  const auto d = random_vector(rng, m);
  const auto wd = WhiteningTransform(std::vector<double>(m, 0.0), lower).apply(d);
  EXPECT_NEAR(dot(wd, g), dot(d, w.apply_vjp(g)), 1e-10);

  std::vector<double> upper = lower;
  upper[1] = 1.0;
  EXPECT_THROW(WhiteningTransform(bias, upper), InvalidArgument);
  std::vector<double> bad_diag = lower;
  bad_diag[0] = 0.0;
  EXPECT_THROW(WhiteningTransform(bias, bad_diag), InvalidArgument);
}

TEST(Whitening, FileRoundTrip) {
  RngStream rng(7);
  const std::size_t m = 5;
  std::vector<double> lower(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) lower[i * m + j] = i == j ? 1.0 + rng.uniform() : rng.normal();
  }
  const WhiteningTransform w(random_vector(rng, m), lower);
  const auto path = temp_path("roundtrip.bin");
  w.save(path);
  EXPECT_EQ(std::filesystem::file_size(path), 4 + 8 + 8 * (m + m * m));
  EXPECT_EQ(WhiteningTransform::load(path), w);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "XXXX";
  }
  EXPECT_THROW(WhiteningTransform::load(path), InvalidArgument);
  std::filesystem::remove(path);
  EXPECT_THROW(WhiteningTransform::load(path), NotFound);
}

TEST(Whitening, DegenerateCorporaAreRejected) {
  const auto ex = FeatureExtractor::preset("short");
  std::vector<Image> same(600, Image(kImage, 0.5));
  RngStream rng(8);
  for (double& v : same[0].values()) v = 0.5;
  for (std::size_t i = 1; i < same.size(); ++i) same[i] = same[0];
  EXPECT_THROW(whiten_calibrate(ex, same), CalibrationFailure);
  std::vector<Image> few(100, Image(kImage, 0.5));
  EXPECT_THROW(whiten_calibrate(ex, few), InvalidArgument);
}

TEST(Whitening, HeldOutCorpusIsWhite) {
  const auto ex = FeatureExtractor::preset("short");
  corpus::TextureCorpus corpus(kImage, 9);
  const std::size_t n = 100000;
  const WhiteningTransform w = whiten_calibrate(ex, corpus, 0, n);
  // Held-out indices start past the calibration range.
  CovarianceAccumulator held(48);
  std::vector<Image> imgs;
  std::vector<double> feats(48 * 500);
  for (std::size_t start = 0; start < n; start += 500) {
    imgs.clear();
    for (std::size_t k = 0; k < 500; ++k) imgs.push_back(corpus.image(n + start + k));
    ex.extract_batch(imgs, feats);
    for (std::size_t k = 0; k < 500; ++k) {
      const auto y = w.apply(std::span<const double>(feats).subspan(k * 48, 48));
      std::copy(y.begin(), y.end(), feats.begin() + static_cast<long>(k * 48));
    }
    held.add(feats, 500);
  }
  EXPECT_LE(norm(held.mean()), 0.05);
  const auto cov = held.covariance();
  double diff = 0.0;
  double max_off = 0.0;
  for (std::size_t i = 0; i < 48; ++i) {
    for (std::size_t j = 0; j < 48; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      diff += (cov[i * 48 + j] - target) * (cov[i * 48 + j] - target);
      if (i != j) {
        max_off = std::max(max_off, std::abs(cov[i * 48 + j]) /
                                        std::sqrt(cov[i * 48 + i] * cov[j * 48 + j]));
      }
    }
  }
  EXPECT_LT(std::sqrt(diff / 48.0), 0.05);
  EXPECT_LE(max_off, 0.05);
}
