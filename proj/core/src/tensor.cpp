#include "nodebnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nodebnn/errors.hpp"

namespace nodebnn {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (int e : shape_) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (int e : shape_) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape_));
  }
  if (static_cast<std::int64_t>(data_.size()) != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.data_.assign(1, value);
  return t;
}

Tensor Tensor::iota(int start, int count) {
  Tensor t(Shape{count});
  for (int i = 0; i < count; ++i) t.data_[static_cast<std::size_t>(i)] = start + i;
  return t;
}

double& Tensor::at(std::initializer_list<int> idx) {
  std::int64_t off = 0;
  std::size_t d = 0;
  for (int i : idx) {
    off = off * shape_[d] + i;
    ++d;
  }
  return data_[static_cast<std::size_t>(off)];
}

double Tensor::at(std::initializer_list<int> idx) const {
  return const_cast<Tensor*>(this)->at(idx);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(data_.size()));
  return data_[0];
}

double max_rel_error(const Tensor& analytic, const Tensor& reference) {
  if (!analytic.same_shape(reference)) throw ShapeError("max_rel_error shape mismatch");
  double worst = 0.0;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    double a = analytic[i], b = reference[i];
    if (!std::isfinite(a) || !std::isfinite(b)) return std::numeric_limits<double>::infinity();
    double err = std::abs(a - b) / std::max(1.0, std::abs(b));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace nodebnn
