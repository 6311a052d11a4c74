#include "i2ckd/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace i2ckd {

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  numel_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("Shape: zero extent in " + str());
    if (numel_ > std::numeric_limits<std::size_t>::max() / d)
      throw std::invalid_argument("Shape: element count overflows in " + str());
    numel_ *= d;
  }
}

std::size_t Shape::flat_index(std::span<const std::size_t> coords) const {
  if (coords.size() != dims_.size()) throw std::invalid_argument("Shape::flat_index: rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (coords[i] >= dims_[i]) throw std::invalid_argument("Shape::flat_index: coordinate out of range");
    flat = flat * dims_[i] + coords[i];
  }
  return flat;
}

std::vector<std::size_t> Shape::coords(std::size_t flat) const {
  if (flat >= numel_) throw std::invalid_argument("Shape::coords: flat index out of range");
  std::vector<std::size_t> c(dims_.size());
  for (std::size_t i = dims_.size(); i-- > 0;) {
    c[i] = flat % dims_[i];
    flat /= dims_[i];
  }
  return c;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? ", " : "") << dims_[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(const Shape& shape, double fill) : shape_(shape), data_(shape.numel(), fill) {
  if (!std::isfinite(fill)) throw std::invalid_argument("Tensor: non-finite fill value");
}

Tensor::Tensor(const Shape& shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel())
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
  audit_finite();
}

Tensor Tensor::from_raw(const Shape& shape, std::vector<double>&& data) {
  if (data.size() != shape.numel())
    throw std::invalid_argument("Tensor::from_raw: data length does not match shape " + shape.str());
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::move(data);
#ifndef NDEBUG
  t.audit_finite();
#endif
  return t;
}

double Tensor::at(std::initializer_list<std::size_t> coords) const {
  std::vector<std::size_t> c(coords);
  return data_[shape_.flat_index(c)];
}

void Tensor::audit_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      throw std::invalid_argument("Tensor: non-finite value at flat index " + std::to_string(i));
  }
}

LabelMap::LabelMap(std::size_t h, std::size_t w, std::uint8_t fill) : h_(h), w_(w), data_(h * w, fill) {
  if (h == 0 || w == 0) throw std::invalid_argument("LabelMap: zero extent");
}

LabelMap::LabelMap(std::size_t h, std::size_t w, std::vector<std::uint8_t> data)
    : h_(h), w_(w), data_(std::move(data)) {
  if (h == 0 || w == 0) throw std::invalid_argument("LabelMap: zero extent");
  if (data_.size() != h * w) throw std::invalid_argument("LabelMap: data length does not match extents");
}

void LabelMap::validate_labels(int num_classes) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] != kIgnore && data_[i] >= num_classes)
      throw std::invalid_argument("LabelMap: label " + std::to_string(int(data_[i])) +
                                  " out of range for C=" + std::to_string(num_classes));
  }
}

Tensor new_tensor(const Shape& shape, double fill) { return Tensor(shape, fill); }

Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument("map_binary: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const double* pa = a.data();
  const double* pb = b.data();
  std::vector<double> out(a.numel());
  switch (op) {
    case BinaryOp::Add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
      break;
    case BinaryOp::Sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
      break;
    case BinaryOp::Mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
      break;
    case BinaryOp::Div:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (pb[i] == 0.0) throw std::invalid_argument("map_binary: division by zero at flat index " + std::to_string(i));
        out[i] = pa[i] / pb[i];
      }
      break;
  }
  return Tensor::from_raw(a.shape(), std::move(out));
}

Tensor reduce(const Tensor& a, std::span<const std::size_t> axes, ReduceOp op) {
  const Shape& in = a.shape();
  std::vector<bool> reduced(in.rank(), false);
  for (std::size_t ax : axes) {
    if (ax >= in.rank()) throw std::invalid_argument("reduce: axis " + std::to_string(ax) + " out of range");
    if (reduced[ax]) throw std::invalid_argument("reduce: duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }

  std::vector<std::size_t> out_dims;
  for (std::size_t i = 0; i < in.rank(); ++i)
    if (!reduced[i]) out_dims.push_back(in.extent(i));
  Shape out_shape(out_dims);

  std::size_t count = in.numel() / out_shape.numel();
  std::vector<double> acc;
  if (op == ReduceOp::Max)
    acc.assign(out_shape.numel(), -std::numeric_limits<double>::infinity());
  else
    acc.assign(out_shape.numel(), 0.0);

  // Single pass in row-major input order; per-output accumulation order is
  // therefore fixed, which keeps results bit-identical run to run.
  std::vector<std::size_t> coord(in.rank(), 0);
  const double* pa = a.data();
  for (std::size_t flat = 0; flat < in.numel(); ++flat) {
    std::size_t out_flat = 0;
    for (std::size_t i = 0; i < in.rank(); ++i)
      if (!reduced[i]) out_flat = out_flat * in.extent(i) + coord[i];
    if (op == ReduceOp::Max)
      acc[out_flat] = std::max(acc[out_flat], pa[flat]);
    else
      acc[out_flat] += pa[flat];
    for (std::size_t i = in.rank(); i-- > 0;) {
      if (++coord[i] < in.extent(i)) break;
      coord[i] = 0;
    }
  }
  if (op == ReduceOp::Mean)
    for (double& v : acc) v /= static_cast<double>(count);
  return Tensor::from_raw(out_shape, std::move(acc));
}

Tensor reduce(const Tensor& a, std::initializer_list<std::size_t> axes, ReduceOp op) {
  std::vector<std::size_t> v(axes);
  return reduce(a, std::span<const std::size_t>(v), op);
}

}  // namespace i2ckd
