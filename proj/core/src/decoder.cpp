#include "wmguide/decoder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "wmguide/errors.hpp"
#include "wmguide/numerics.hpp"

namespace wmguide::decoder {

namespace {

constexpr std::array<char, 4> kWhiteningMagic{'W', 'M', 'W', '1'};
constexpr std::size_t kBatch = 256;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

// Smooth random field over all channels: white noise low-passed per
// channel, made zero-sum over the whole image and scaled to unit norm.
std::vector<double> smooth_row(const Shape& shape, double sigma, RngStream& rng) {
  const std::size_t side = shape.height;
  const std::size_t area = side * side;
  const double l = static_cast<double>(side);
  std::vector<double> row(shape.size());
  std::vector<double> white(area);
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    for (double& v : white) v = rng.normal();
    numerics::ComplexGrid spec = numerics::fft2(white, side);
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double fy = static_cast<double>(r <= side / 2 ? r : side - r) / l;
        const double fx = static_cast<double>(c <= side / 2 ? c : side - c) / l;
        spec.at(r, c) *= std::exp(-2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma *
                                  (fy * fy + fx * fx));
      }
    }
    const numerics::ComplexGrid field = numerics::ifft2(spec);
    for (std::size_t i = 0; i < area; ++i) row[ch * area + i] = field.values()[i].real();
  }
  const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
  for (double& v : row) v -= mean;
  const double n = norm(row);
  if (!(n > 0.0)) throw NumericFailure("FeatureExtractor: degenerate projection row");
  for (double& v : row) v /= n;
  return row;
}

void write_raw(std::ofstream& out, const void* data, std::size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void read_raw(std::ifstream& in, void* data, std::size_t bytes, const std::string& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw InvalidArgument("whitening file " + path + " is truncated");
  }
}

}  // namespace

BitMessage BitMessage::random(std::size_t length, RngStream& rng) {
  BitMessage m;
  m.bits.resize(length);
  for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng.next_u64() >> 63);
  return m;
}

SecretVector modulate(const BitMessage& m) {
  SecretVector s;
  s.u.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) s.u[i] = m.bits[i] ? 1.0 : -1.0;
  return s;
}

BitMessage decode_bits(std::span<const double> f) {
  BitMessage m;
  m.bits.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) m.bits[i] = f[i] > 0.0 ? 1 : 0;
  return m;
}

std::size_t bit_errors(const BitMessage& a, const BitMessage& b) {
  if (a.size() != b.size()) throw InvalidArgument("bit_errors: message lengths differ");
  std::size_t e = 0;
  for (std::size_t i = 0; i < a.size(); ++i) e += a.bits[i] != b.bits[i];
  return e;
}

double cosine_score(std::span<const double> f, std::span<const double> u) {
  if (f.size() != u.size()) throw InvalidArgument("cosine_score: length mismatch");
  const double nf = norm(f);
  const double nu = norm(u);
  if (!(nf > 0.0) || !(nu > 0.0)) throw DegenerateInput("cosine_score: zero-norm vector");
  return std::clamp(dot(f, u) / (nf * nu), -1.0, 1.0);
}

struct FeatureExtractor::Impl {
  Shape shape;
  ExtractorParams params;
  Eigen::MatrixXd projection;  // mixing · Q, M × D
  std::vector<double> bias;
};

FeatureExtractor::FeatureExtractor(Shape image_shape, ExtractorParams params) {
  if (params.length < 2) throw InvalidArgument("FeatureExtractor: need M >= 2");
  if (image_shape.height != image_shape.width || !numerics::is_power_of_two(image_shape.height) ||
      image_shape.channels == 0) {
    throw UnsupportedSize("FeatureExtractor: image must be square with power-of-two side");
  }
  if (!(params.smoothing >= 0.0) || !(params.correlation >= 0.0) || !(params.bias_scale >= 0.0)) {
    throw InvalidArgument("FeatureExtractor: parameters must be non-negative");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = image_shape;
  impl->params = params;
  const auto m = static_cast<Eigen::Index>(params.length);
  const auto d = static_cast<Eigen::Index>(image_shape.size());
  RngStream rng = RngStream::derive(params.seed, params.length, "extractor");
  Eigen::MatrixXd q(m, d);
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::vector<double> row = smooth_row(image_shape, params.smoothing, rng);
    q.row(j) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), d);
  }
  Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(m, m);
  const double off = params.correlation / std::sqrt(static_cast<double>(params.length));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) mix(i, j) += off * rng.normal();
  }
  impl->projection = mix * q;
  impl->bias.resize(params.length);
  for (double& b : impl->bias) b = params.bias_scale * rng.normal();
  impl_ = std::move(impl);
}

FeatureExtractor FeatureExtractor::preset(std::string_view name, Shape image_shape) {
  ExtractorParams p;
  if (name == "short") {
    p.length = 48;
    p.seed = 0x5348'4f52'54ULL;
  } else if (name == "long") {
    p.length = 256;
    p.seed = 0x4c4f'4e47ULL;
  } else {
    throw InvalidArgument("unknown extractor preset '" + std::string(name) +
                          "' (expected short or long)");
  }
  return FeatureExtractor(image_shape, p);
}

std::size_t FeatureExtractor::length() const noexcept { return impl_->params.length; }
const Shape& FeatureExtractor::image_shape() const noexcept { return impl_->shape; }
const ExtractorParams& FeatureExtractor::params() const noexcept { return impl_->params; }
std::span<const double> FeatureExtractor::bias() const noexcept { return impl_->bias; }

std::vector<double> FeatureExtractor::extract(const Image& x) const {
  require_same_shape(x.shape(), impl_->shape, "extract");
  const auto d = static_cast<Eigen::Index>(x.size());
  std::vector<double> f(impl_->bias);
  Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())).noalias() +=
      impl_->projection * Eigen::Map<const Eigen::VectorXd>(x.data().data(), d);
  return f;
}

Tensor FeatureExtractor::extract_vjp(std::span<const double> cotangent) const {
  if (cotangent.size() != length()) throw InvalidArgument("extract_vjp: length mismatch");
  Tensor out(impl_->shape);
  Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(out.size())).noalias() =
      impl_->projection.transpose() *
      Eigen::Map<const Eigen::VectorXd>(cotangent.data(), static_cast<Eigen::Index>(length()));
  return out;
}

void FeatureExtractor::extract_batch(std::span<const Image> images, std::span<double> out) const {
  const std::size_t m = length();
  if (out.size() != m * images.size()) throw InvalidArgument("extract_batch: output size mismatch");
  const auto d = static_cast<Eigen::Index>(impl_->shape.size());
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(std::min(images.size(), kBatch)));
  for (std::size_t start = 0; start < images.size(); start += kBatch) {
    const std::size_t count = std::min(kBatch, images.size() - start);
    for (std::size_t k = 0; k < count; ++k) {
      require_same_shape(images[start + k].shape(), impl_->shape, "extract_batch");
      x.col(static_cast<Eigen::Index>(k)) =
          Eigen::Map<const Eigen::VectorXd>(images[start + k].data().data(), d);
    }
    Eigen::Map<Eigen::MatrixXd> dst(out.data() + start * m, static_cast<Eigen::Index>(m),
                                    static_cast<Eigen::Index>(count));
    dst.noalias() = impl_->projection * x.leftCols(static_cast<Eigen::Index>(count));
    dst.colwise() += Eigen::Map<const Eigen::VectorXd>(impl_->bias.data(),
                                                       static_cast<Eigen::Index>(m));
  }
}

WhiteningTransform::WhiteningTransform(std::vector<double> bias, std::vector<double> lower)
    : bias_(std::move(bias)), lower_(std::move(lower)) {
  const std::size_t m = bias_.size();
  if (m == 0 || lower_.size() != m * m) {
    throw InvalidArgument("WhiteningTransform: need M biases and an M×M factor");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!(lower_[i * m + i] > 0.0) || !std::isfinite(lower_[i * m + i])) {
      throw InvalidArgument("WhiteningTransform: factor diagonal must be positive");
    }
    for (std::size_t j = i + 1; j < m; ++j) {
      if (lower_[i * m + j] != 0.0) {
        throw InvalidArgument("WhiteningTransform: factor must be lower-triangular");
      }
    }
  }
}

WhiteningTransform WhiteningTransform::identity(std::size_t length) {
  std::vector<double> lower(length * length, 0.0);
  for (std::size_t i = 0; i < length; ++i) lower[i * length + i] = 1.0;
  return WhiteningTransform(std::vector<double>(length, 0.0), std::move(lower));
}

std::vector<double> WhiteningTransform::apply(std::span<const double> f) const {
  const std::size_t m = length();
  if (f.size() != m) throw InvalidArgument("whitening: feature length mismatch");
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = f[i] - bias_[i];
    const double* row = &lower_[i * m];
    for (std::size_t j = 0; j < i; ++j) acc -= row[j] * y[j];
    y[i] = acc / row[i];
  }
  return y;
}

std::vector<double> WhiteningTransform::apply_vjp(std::span<const double> cotangent) const {
  const std::size_t m = length();
  if (cotangent.size() != m) throw InvalidArgument("whitening vjp: length mismatch");
  std::vector<double> g(cotangent.begin(), cotangent.end());
  for (std::size_t ii = m; ii-- > 0;) {
    g[ii] /= lower_[ii * m + ii];
    const double gi = g[ii];
    for (std::size_t j = 0; j < ii; ++j) g[j] -= lower_[ii * m + j] * gi;
  }
  return g;
}

void WhiteningTransform::save(const std::filesystem::path& path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write whitening file " + path.string());
    const std::uint64_t m = length();
    write_raw(out, kWhiteningMagic.data(), kWhiteningMagic.size());
    write_raw(out, &m, sizeof m);
    write_raw(out, bias_.data(), bias_.size() * sizeof(double));
    write_raw(out, lower_.data(), lower_.size() * sizeof(double));
    if (!out) throw InvalidArgument("failed writing whitening file " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

WhiteningTransform WhiteningTransform::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("whitening file " + path.string() + " not found");
  std::array<char, 4> magic{};
  read_raw(in, magic.data(), magic.size(), path.string());
  if (magic != kWhiteningMagic) throw InvalidArgument(path.string() + " is not a whitening file");
  std::uint64_t m = 0;
  read_raw(in, &m, sizeof m, path.string());
  if (m == 0 || m > 65536) throw InvalidArgument("whitening file has implausible length");
  std::vector<double> bias(m);
  std::vector<double> lower(m * m);
  read_raw(in, bias.data(), bias.size() * sizeof(double), path.string());
  read_raw(in, lower.data(), lower.size() * sizeof(double), path.string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InvalidArgument("whitening file " + path.string() + " has trailing bytes");
  }
  return WhiteningTransform(std::move(bias), std::move(lower));
}

CovarianceAccumulator::CovarianceAccumulator(std::size_t length)
    : m_(length), sum_(length, 0.0), cross_(length * length, 0.0) {
  if (length == 0) throw InvalidArgument("CovarianceAccumulator: zero length");
}

void CovarianceAccumulator::add(std::span<const double> features, std::size_t count) {
  if (features.size() != m_ * count) throw InvalidArgument("CovarianceAccumulator: size mismatch");
  if (count == 0) return;
  const auto m = static_cast<Eigen::Index>(m_);
  // Shift by the first sample to keep the one-pass sums well conditioned.
  if (shift_.empty()) shift_.assign(features.begin(), features.begin() + static_cast<long>(m_));
  Eigen::Map<const Eigen::MatrixXd> f(features.data(), m, static_cast<Eigen::Index>(count));
  const Eigen::MatrixXd centered =
      f.colwise() - Eigen::Map<const Eigen::VectorXd>(shift_.data(), m);
  Eigen::Map<Eigen::VectorXd>(sum_.data(), m) += centered.rowwise().sum();
  Eigen::Map<Eigen::MatrixXd> cross(cross_.data(), m, m);
  cross.selfadjointView<Eigen::Upper>().rankUpdate(centered);
  n_ += count;
}

std::vector<double> CovarianceAccumulator::mean() const {
  if (n_ == 0) throw InvalidArgument("CovarianceAccumulator: no samples");
  std::vector<double> out(m_);
  for (std::size_t i = 0; i < m_; ++i) out[i] = shift_[i] + sum_[i] / static_cast<double>(n_);
  return out;
}

std::vector<double> CovarianceAccumulator::covariance() const {
  if (n_ < 2) throw InvalidArgument("CovarianceAccumulator: need at least two samples");
  const double n = static_cast<double>(n_);
  std::vector<double> cov(m_ * m_);
  for (std::size_t i = 0; i < m_; ++i) {
    for (std::size_t j = i; j < m_; ++j) {
      const double v = (cross_[j * m_ + i] - sum_[i] * sum_[j] / n) / (n - 1.0);
      cov[i * m_ + j] = v;
      cov[j * m_ + i] = v;
    }
  }
  return cov;
}

WhiteningTransform CovarianceAccumulator::finish() const {
  if (n_ < 10 * m_) {
    throw InvalidArgument("whitening calibration needs at least 10·M = " +
                          std::to_string(10 * m_) + " images, got " + std::to_string(n_));
  }
  const auto m = static_cast<Eigen::Index>(m_);
  const std::vector<double> cov = covariance();
  const Eigen::Map<const Eigen::MatrixXd> sigma(cov.data(), m, m);
  const double scale = sigma.diagonal().maxCoeff();
  const char* hint = "; the corpus is degenerate or too small, increase calibration.n";
  if (!(scale > 0.0)) throw CalibrationFailure(std::string("feature covariance is zero") + hint);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw CalibrationFailure(std::string("feature covariance is not positive definite") + hint);
  }
  const Eigen::MatrixXd l = llt.matrixL();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(l(i, i) * l(i, i) > 1e-12 * scale)) {
      throw CalibrationFailure(std::string("feature covariance is numerically singular") + hint);
    }
  }
  std::vector<double> lower(m_ * m_, 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) lower[static_cast<std::size_t>(i * m + j)] = l(i, j);
  }
  return WhiteningTransform(mean(), std::move(lower));
}

WhiteningTransform whiten_calibrate(const FeatureExtractor& extractor,
                                    std::span<const Image> images) {
  CovarianceAccumulator acc(extractor.length());
  std::vector<double> feats;
  for (std::size_t start = 0; start < images.size(); start += kBatch) {
    const std::size_t count = std::min(kBatch, images.size() - start);
    feats.resize(count * extractor.length());
    extractor.extract_batch(images.subspan(start, count), feats);
    acc.add(feats, count);
  }
  return acc.finish();
}

WhiteningTransform whiten_calibrate(const FeatureExtractor& extractor,
                                    const corpus::TextureCorpus& corpus, std::uint64_t first,
                                    std::size_t n) {
  if (n < 10 * extractor.length()) {
    throw InvalidArgument("whitening calibration needs at least 10·M = " +
                          std::to_string(10 * extractor.length()) + " images, got " +
                          std::to_string(n));
  }
  CovarianceAccumulator acc(extractor.length());
  std::vector<Image> batch;
  std::vector<double> feats;
  for (std::size_t start = 0; start < n; start += kBatch) {
    const std::size_t count = std::min(kBatch, n - start);
    batch.clear();
    for (std::size_t k = 0; k < count; ++k) batch.push_back(corpus.image(first + start + k));
    feats.resize(count * extractor.length());
    extractor.extract_batch(batch, feats);
    acc.add(feats, count);
  }
  return acc.finish();
}

std::vector<double> extract_whitened(const FeatureExtractor& extractor, const Image& x,
                                     const WhiteningTransform& w) {
  if (w.length() != extractor.length()) {
    throw InvalidArgument("extract_whitened: whitening length does not match extractor");
  }
  return w.apply(extractor.extract(x));
}

}  // namespace wmguide::decoder
