#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "blindsnf/errors.hpp"

namespace blindsnf {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense row-major array of rank >= 1 with value semantics.
///
/// Images are rank 3 (channels, height, width); network activations are
/// rank 4 (batch, channels, height, width); vectors and matrices use rank 1
/// and 2. Storage is a contiguous Eigen column array, so `values()` composes
/// with Eigen array expressions.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_shape();
    values_ = Array::Constant(shape_size(shape_), fill);
  }

  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_size(shape_)) {
      throw DimensionError("tensor value count " + std::to_string(values_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar& operator()(Index c, Index h, Index w) { return values_[(c * shape_[1] + h) * shape_[2] + w]; }
  Scalar operator()(Index c, Index h, Index w) const {
    return values_[(c * shape_[1] + h) * shape_[2] + w];
  }
  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// View of a rank-2 tensor, or of the trailing dims flattened against the first.
  MatrixMap matrix() { return MatrixMap(data(), shape_[0], size() / shape_[0]); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data(), shape_[0], size() / shape_[0]); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  bool all_finite() const { return values_.isFinite().all(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.values_ == b.values_).all();
  }

 private:
  void check_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  Array values_;
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const std::string& what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(what + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& t, Index rank, const std::string& what) {
  if (t.rank() != rank) {
    throw DimensionError(what + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

/// Adds a leading batch axis of size 1.
template <typename Scalar>
Tensor<Scalar> unsqueeze(const Tensor<Scalar>& t) {
  Shape shape{1};
  shape.insert(shape.end(), t.shape().begin(), t.shape().end());
  return t.reshaped(std::move(shape));
}

/// Removes a leading batch axis of size 1.
template <typename Scalar>
Tensor<Scalar> squeeze(const Tensor<Scalar>& t) {
  if (t.rank() < 2 || t.dim(0) != 1) {
    throw DimensionError("squeeze expects a leading axis of size 1, got " + shape_string(t.shape()));
  }
  return t.reshaped(Shape(t.shape().begin() + 1, t.shape().end()));
}

/// Stacks equally shaped tensors along a new leading axis.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& items) {
  if (items.empty()) throw DimensionError("stack of zero tensors");
  Shape shape{static_cast<Index>(items.size())};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  Tensor<Scalar> out(shape);
  const Index stride = items[0].size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[0], items[i], "stack");
    out.values().segment(static_cast<Index>(i) * stride, stride) = items[i].values();
  }
  return out;
}

/// Selects entry `index` along the leading axis.
template <typename Scalar>
Tensor<Scalar> take(const Tensor<Scalar>& t, Index index) {
  if (index < 0 || index >= t.dim(0)) throw DimensionError("take: index out of range");
  const Index stride = t.size() / t.dim(0);
  return Tensor<Scalar>(Shape(t.shape().begin() + 1, t.shape().end()),
                        t.values().segment(index * stride, stride));
}

}  // namespace blindsnf
