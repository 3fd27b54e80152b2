#pragma once

#include <deque>
#include <vector>

#include "blindsnf/nn.hpp"

namespace blindsnf {

inline constexpr Index kRepresentationDim = 256;

/// Degradation representation encoder and projection head.
///
/// Six 3x3 convolutions (64, 64, 128, 128, 256, 256 channels; the third and
/// fifth with stride 2), each followed by batch norm and LeakyReLU, then
/// global average pooling. `num_layers` < 6 truncates the stack (used by
/// gradient tests).
template <typename Scalar>
class DegradationEncoder {
 public:
  DegradationEncoder() = default;
  DegradationEncoder(Rng& rng, Index proj_dim = kRepresentationDim, int num_layers = 6);

  /// (N,3,h,w) -> v (N,C_last). Throws DimensionError below 4x4.
  Var<Scalar> encode(const Var<Scalar>& x_lr, bool training) const;
  /// v -> w (N,proj_dim): three affine layers, LeakyReLU between.
  Var<Scalar> project(const Var<Scalar>& v) const;

  Index representation_dim() const { return convs_.back().out_channels(); }
  Index proj_dim() const { return head_[2].weight.dim(0); }

  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;

 private:
  std::vector<nn::Conv2d<Scalar>> convs_;
  std::vector<nn::BatchNorm2d<Scalar>> norms_;
  std::vector<nn::Linear<Scalar>> head_;
};

/// FIFO of detached projected vectors used as negatives.
template <typename Scalar>
class NegativeQueue {
 public:
  NegativeQueue(Index capacity, Index dim, Scalar temperature);

  /// Appends each row of `batch` (N,dim); the oldest rows are evicted past capacity.
  void push(const Tensor<Scalar>& batch);
  /// Entries as (size, dim), oldest first. Throws StateError when empty.
  Tensor<Scalar> matrix() const;

  Index size() const { return static_cast<Index>(entries_.size()); }
  Index capacity() const { return capacity_; }
  Index dim() const { return dim_; }
  Scalar temperature() const { return temperature_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  Index capacity_;
  Index dim_;
  Scalar temperature_;
  std::deque<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> entries_;
};

/// Contrastive loss of a query/positive batch against the queue contents.
template <typename Scalar>
Var<Scalar> contrastive_loss(const Var<Scalar>& w, const Var<Scalar>& w_pos, const NegativeQueue<Scalar>& queue,
                             bool include_positive = false) {
  if (queue.empty()) throw StateError("contrastive_loss: negative queue is empty");
  return contrastive_loss(w, w_pos, queue.matrix(), queue.temperature(), include_positive);
}

}  // namespace blindsnf
