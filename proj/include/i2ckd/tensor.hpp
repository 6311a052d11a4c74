#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace i2ckd {

// Ordered list of positive extents. Rank 0 is a scalar (one element).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t extent(std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const { return numel_; }

  // Flat row-major offset of a coordinate tuple.
  std::size_t flat_index(std::span<const std::size_t> coords) const;
  // Inverse of flat_index.
  std::vector<std::size_t> coords(std::size_t flat) const;

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  std::string str() const;

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 1;
};

// Dense row-major tensor of 64-bit floats. Immutable after construction:
// every operation returns a new value. Safe to share across threads.
class Tensor {
 public:
  Tensor() = default;  // rank-0 scalar holding 0
  Tensor(const Shape& shape, double fill);
  // Validating constructor: element count must match and all values finite.
  Tensor(const Shape& shape, std::vector<double> data);

  // Trusted constructor for op outputs; checks the size, skips the finite
  // scan (ops validate their own inputs, trainers check losses/grads).
  static Tensor from_raw(const Shape& shape, std::vector<double>&& data);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return shape_.numel(); }
  std::span<const double> values() const { return {data_.data(), data_.size()}; }
  const double* data() const { return data_.data(); }
  double operator[](std::size_t flat) const { return data_[flat]; }
  double at(std::initializer_list<std::size_t> coords) const;

  // Debug-mode audit: throws if any stored value is NaN or Inf.
  void audit_finite() const;

  std::vector<double> take() && { return std::move(data_); }

 private:
  Shape shape_{std::vector<std::size_t>{}};
  std::vector<double> data_{0.0};
};

// H x W map of 8-bit class labels; 255 is the reserved "no annotation" value.
class LabelMap {
 public:
  static constexpr std::uint8_t kIgnore = 255;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0);
  LabelMap(std::size_t h, std::size_t w, std::vector<std::uint8_t> data);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t numel() const { return h_ * w_; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data_[y * w_ + x]; }
  std::uint8_t operator[](std::size_t flat) const { return data_[flat]; }
  std::span<const std::uint8_t> values() const { return {data_.data(), data_.size()}; }

  // Throws unless every non-ignore label is < num_classes.
  void validate_labels(int num_classes) const;

  bool operator==(const LabelMap& other) const { return h_ == other.h_ && w_ == other.w_ && data_ == other.data_; }

 private:
  std::size_t h_ = 0, w_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class BinaryOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Max, Mean };

Tensor new_tensor(const Shape& shape, double fill);

// Elementwise op over two tensors of identical shape. Division by an exact
// zero divisor is an error rather than a silent Inf.
Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op);

// Removes the named axes, accumulating in fixed row-major order so the
// result is bit-reproducible regardless of internal threading.
Tensor reduce(const Tensor& a, std::span<const std::size_t> axes, ReduceOp op);
Tensor reduce(const Tensor& a, std::initializer_list<std::size_t> axes, ReduceOp op);

}  // namespace i2ckd
