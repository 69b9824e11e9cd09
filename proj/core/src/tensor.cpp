#include "archsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "archsim/errors.hpp"

namespace archsim {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

void check_dims(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError(-1, "tensor dimensions must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : Tensor(std::move(shape), 0.0f) {}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
  check_dims(shape);
  if (shape_size(shape) != data.size()) {
    throw ShapeError(-1, "shape " + shape_string(shape) + " does not match " + std::to_string(data.size()) +
                             " values");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  if (!t.all_finite()) throw NonFiniteError(-1, "tensor data contains NaN or Inf");
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

void Tensor::reshape(Shape shape) {
  check_dims(shape);
  if (shape_size(shape) != data_.size()) {
    throw ShapeError(-1, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

std::size_t Tensor::row_size() const {
  if (shape_.empty()) return 0;
  return data_.size() / shape_[0];
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin >= end || end > shape_[0]) {
    throw ShapeError(-1, "bad row slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                             shape_string(shape_));
  }
  Shape s = shape_;
  s[0] = end - begin;
  Tensor t(s);
  const std::size_t rs = row_size();
  std::memcpy(t.raw(), raw() + begin * rs, (end - begin) * rs * sizeof(float));
  return t;
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
  if (rows.empty()) throw ShapeError(-1, "gather of zero rows");
  Shape s = shape_;
  s[0] = rows.size();
  Tensor t(s);
  const std::size_t rs = row_size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= shape_[0]) throw ShapeError(-1, "row index out of range");
    std::memcpy(t.raw() + i * rs, raw() + rows[i] * rs, rs * sizeof(float));
  }
  return t;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace archsim
