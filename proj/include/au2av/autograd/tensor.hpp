#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace au2av::ag {

using Shape = std::vector<int>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);
/// Row-major strides for `shape`.
std::vector<std::size_t> contiguous_strides(const Shape& shape);

/// Dense row-major tensor of doubles. Plain value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  /// Size along `axis`; negative axes count from the back.
  int dim(int axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// NCHW element access.
  double& at(int n, int c, int h, int w);
  double at(int n, int c, int h, int w) const;

  double item() const;
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace au2av::ag
