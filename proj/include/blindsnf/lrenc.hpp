#pragma once

#include <vector>

#include "blindsnf/nn.hpp"

namespace blindsnf {

struct RRDBConfig {
  Index num_blocks = 4;
  Index channels = 64;
  Index dense_blocks_per_rrdb = 3;
  Index convs_per_dense_block = 5;
  Index growth_channels = 32;
  double residual_scale = 0.2;

  void validate() const;
};

/// Dense block: each conv sees the concatenation of all earlier features.
template <typename Scalar>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(const RRDBConfig& config, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;
  void zero();

 private:
  std::vector<nn::Conv2d<Scalar>> convs_;
  Scalar residual_scale_ = Scalar(0.2);
};

template <typename Scalar>
class RRDB {
 public:
  RRDB() = default;
  RRDB(const RRDBConfig& config, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;
  void zero();

 private:
  std::vector<DenseBlock<Scalar>> blocks_;
  Scalar residual_scale_ = Scalar(0.2);
};

/// LR content encoder: u = first(x) + trunk(RRDB chain(first(x))), plus a
/// sub-pixel upsampling head used only for its L1 supervision.
template <typename Scalar>
class LrEncoder {
 public:
  LrEncoder() = default;
  LrEncoder(const RRDBConfig& config, int scale, Rng& rng);

  /// (N,3,h,w) -> (N,channels,h,w). Throws DimensionError below 8x8.
  Var<Scalar> encode(const Var<Scalar>& x_lr) const;
  /// u -> (N,3,r*h,r*w)
  Var<Scalar> upsample(const Var<Scalar>& u) const;

  /// Zeroes the RRDB chain and trunk conv so u equals the first-conv features.
  void zero_body();

  Index channels() const { return first_.out_channels(); }
  int scale() const { return scale_; }
  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;

  nn::Conv2d<Scalar> first_;

 private:
  std::vector<RRDB<Scalar>> body_;
  nn::Conv2d<Scalar> trunk_;
  std::vector<nn::Conv2d<Scalar>> up_convs_;
  std::vector<Index> up_factors_;
  nn::Conv2d<Scalar> out_conv_;
  int scale_ = 4;
};

/// mean |up - x_hr|
template <typename Scalar>
Var<Scalar> encoder_loss(const Var<Scalar>& up, const Var<Scalar>& x_hr) {
  require_same_shape(up.value(), x_hr.value(), "encoder_loss");
  return mean_abs(sub(up, x_hr));
}

}  // namespace blindsnf
