#pragma once

#include <optional>
#include <vector>

#include "blindsnf/nn.hpp"

namespace blindsnf {

struct UNetConfig {
  Index base_channels = 64;
  Index depth = 4;
  Index blocks_per_group = 2;
  std::vector<Index> multipliers{1, 2, 2, 2};
  Index groupnorm_groups = 8;
  Index cond_channels = 64;        // channels of the LR encoding u
  Index representation_dim = 256;  // length of v
  Index daconv_hidden = 64;
  bool use_degradation = true;     // false: v is replaced by zeros (ablation)

  Index channels_at(Index level) const { return base_channels * multipliers.at(static_cast<std::size_t>(level)); }
  /// Required divisor of the input height and width.
  Index size_multiple() const { return Index{1} << (depth + 1); }
  void validate() const;
};

/// Sinusoidal features phi(t) = [sin w1 t, cos w1 t, sin w2 t, ...] with
/// w_k = 10000^(-(k-1)/K), followed by Linear-Swish-Linear-Swish-Linear.
template <typename Scalar>
class TimeEmbedding {
 public:
  TimeEmbedding() = default;
  TimeEmbedding(Index num_frequencies, Index out_dim, Rng& rng);

  /// (N, 2K) raw features for the given steps.
  static Tensor<Scalar> features(const std::vector<int>& steps, Index num_frequencies);

  Var<Scalar> operator()(const std::vector<int>& steps) const;
  /// The perceptron alone, applied to given raw features.
  Var<Scalar> mlp(const Var<Scalar>& phi) const;

  Index num_frequencies() const { return num_frequencies_; }
  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;

 private:
  Index num_frequencies_ = 0;
  nn::Linear<Scalar> l1_, l2_, l3_;
};

/// Degradation-aware convolution: a perceptron maps v to per-sample
/// depthwise 3x3 kernels; a learned 1x1 convolution then mixes channels.
template <typename Scalar>
class DAConv {
 public:
  DAConv() = default;
  DAConv(Index in_channels, Index out_channels, Index representation_dim, Index hidden, Rng& rng);

  /// (N,rep) -> (N, C*9)
  Var<Scalar> kernels(const Var<Scalar>& v) const;
  Var<Scalar> operator()(const Var<Scalar>& features, const Var<Scalar>& v) const;

  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;

  /// Test hook: when set, replaces the predicted kernels (N, C*9).
  std::optional<Tensor<Scalar>> forced_kernels;
  nn::Conv2d<Scalar> mix;

 private:
  Index channels_ = 0;
  nn::Linear<Scalar> k1_, k2_, k3_;
};

/// F1 = conv(swish(gn(F_in))); F2 = F1 + proj(t_e);
/// F_out = DAConv(swish(gn(F2)), v) + shortcut(F_in).
template <typename Scalar>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(Index in_channels, Index out_channels, Index time_dim, const UNetConfig& config, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x, const Var<Scalar>& time_embedding, const Var<Scalar>& v) const;
  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;

  nn::GroupNorm<Scalar> norm1;
  nn::Conv2d<Scalar> conv1;
  nn::Linear<Scalar> time_proj;
  nn::GroupNorm<Scalar> norm2;
  DAConv<Scalar> daconv;
  std::optional<nn::Conv2d<Scalar>> shortcut;
};

/// Conditional U-Net over pixel-folded latents; predicts the clean image.
template <typename Scalar>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const UNetConfig& config, Rng& rng);

  /// x_t (N,3,H,W), one step per sample, u (N,cond,h,w), v (N,rep) -> (N,3,H,W).
  Var<Scalar> operator()(const Var<Scalar>& x_t, const std::vector<int>& steps, const Var<Scalar>& u,
                         const Var<Scalar>& v) const;

  const UNetConfig& config() const { return config_; }
  void collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const;

 private:
  UNetConfig config_;
  TimeEmbedding<Scalar> time_;
  nn::Conv2d<Scalar> head_;
  std::vector<std::vector<ResBlock<Scalar>>> down_;
  std::vector<nn::Conv2d<Scalar>> downsample_;
  std::vector<ResBlock<Scalar>> mid_;
  std::vector<nn::Conv2d<Scalar>> upsample_;
  std::vector<std::vector<ResBlock<Scalar>>> up_;
  nn::GroupNorm<Scalar> out_norm_;
  nn::Conv2d<Scalar> out_conv_;
};

}  // namespace blindsnf
