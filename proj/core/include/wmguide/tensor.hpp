#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace wmguide {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

// Dense C×H×W tensor of doubles, row-major with channel outermost.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * shape_.height * shape_.width,
                                            shape_.height * shape_.width);
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(
        c * shape_.height * shape_.width, shape_.height * shape_.width);
  }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// a += s * b
void axpy(double s, std::span<const double> b, std::span<double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

// Throws InvalidArgument naming `what` when the shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

// An image is a 3×H×W tensor with values nominally in [0, 1].
using Image = Tensor;

}  // namespace wmguide
