#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace nodebnn {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense n-dimensional array of 64-bit floats in row-major order.
/// A rank-0 tensor holds a single scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Integer ramp [start, start+count) as doubles; index tensors for gather.
  static Tensor iota(int start, int count);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty() && shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Row-major multi-index access; size of `idx` must equal rank.
  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(double value);
  double item() const;  // requires size() == 1

  const std::vector<double>& storage() const { return data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// max_i |a_i - b_i| / max(1, |b_i|); +inf if any entry is non-finite.
double max_rel_error(const Tensor& analytic, const Tensor& reference);

}  // namespace nodebnn
