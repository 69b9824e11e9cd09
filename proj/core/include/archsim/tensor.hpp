#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace archsim {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major f32 tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor. Every dimension must be positive.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, float fill);

  /// Builds a tensor from external data; rejects size mismatch and
  /// non-finite values.
  static Tensor from_data(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  /// Rows [begin, end) along the leading dimension.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Gathers rows along the leading dimension.
  Tensor gather_rows(std::span<const std::size_t> rows) const;
  /// Elements per leading-dimension row.
  std::size_t row_size() const;

  bool all_finite() const noexcept;
  void fill(float v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace archsim
