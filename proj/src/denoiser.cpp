#include "blindsnf/denoiser.hpp"

#include <cmath>

namespace blindsnf {

namespace {
constexpr double kKernelSlope = 0.1;
}

void UNetConfig::validate() const {
  if (base_channels <= 0 || depth <= 0 || blocks_per_group <= 0 || groupnorm_groups <= 0 || cond_channels <= 0 ||
      representation_dim <= 0 || daconv_hidden <= 0) {
    throw ParameterError("U-Net sizes must be positive");
  }
  if (static_cast<Index>(multipliers.size()) != depth) throw ParameterError("need one channel multiplier per level");
  if (base_channels % 2 != 0) throw ParameterError("base channels must be even (sin/cos pairs)");
  auto divisible = [&](Index ch) { return ch % groupnorm_groups == 0; };
  if (!divisible(base_channels + cond_channels)) throw ParameterError("head channels not divisible by groups");
  for (Index l = 0; l < depth; ++l) {
    if (multipliers[static_cast<std::size_t>(l)] <= 0 || !divisible(channels_at(l))) {
      throw ParameterError("level channels not divisible by group count");
    }
  }
}

template <typename Scalar>
TimeEmbedding<Scalar>::TimeEmbedding(Index num_frequencies, Index out_dim, Rng& rng)
    : num_frequencies_(num_frequencies),
      l1_(2 * num_frequencies, out_dim, rng),
      l2_(out_dim, out_dim, rng),
      l3_(out_dim, out_dim, rng) {}

template <typename Scalar>
Tensor<Scalar> TimeEmbedding<Scalar>::features(const std::vector<int>& steps, Index num_frequencies) {
  Tensor<Scalar> phi(Shape{static_cast<Index>(steps.size()), 2 * num_frequencies});
  for (std::size_t n = 0; n < steps.size(); ++n)
    for (Index k = 0; k < num_frequencies; ++k) {
      const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(num_frequencies));
      const double arg = omega * steps[n];
      phi.matrix()(static_cast<Index>(n), 2 * k) = static_cast<Scalar>(std::sin(arg));
      phi.matrix()(static_cast<Index>(n), 2 * k + 1) = static_cast<Scalar>(std::cos(arg));
    }
  return phi;
}

template <typename Scalar>
Var<Scalar> TimeEmbedding<Scalar>::mlp(const Var<Scalar>& phi) const {
  return l3_(silu(l2_(silu(l1_(phi)))));
}

template <typename Scalar>
Var<Scalar> TimeEmbedding<Scalar>::operator()(const std::vector<int>& steps) const {
  return mlp(Var<Scalar>(features(steps, num_frequencies_)));
}

template <typename Scalar>
void TimeEmbedding<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  l1_.collect(prefix + ".l1", out);
  l2_.collect(prefix + ".l2", out);
  l3_.collect(prefix + ".l3", out);
}

template <typename Scalar>
DAConv<Scalar>::DAConv(Index in_channels, Index out_channels, Index representation_dim, Index hidden, Rng& rng)
    : mix(in_channels, out_channels, 1, 1, 0, rng),
      channels_(in_channels),
      k1_(representation_dim, hidden, rng),
      k2_(hidden, hidden, rng),
      k3_(hidden, in_channels * 9, rng) {}

template <typename Scalar>
Var<Scalar> DAConv<Scalar>::kernels(const Var<Scalar>& v) const {
  const auto slope = static_cast<Scalar>(kKernelSlope);
  return k3_(leaky_relu(k2_(leaky_relu(k1_(v), slope)), slope));
}

template <typename Scalar>
Var<Scalar> DAConv<Scalar>::operator()(const Var<Scalar>& features, const Var<Scalar>& v) const {
  const Var<Scalar> taps = forced_kernels ? Var<Scalar>(*forced_kernels) : kernels(v);
  return mix(depthwise_conv3x3(features, taps));
}

template <typename Scalar>
void DAConv<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  k1_.collect(prefix + ".k1", out);
  k2_.collect(prefix + ".k2", out);
  k3_.collect(prefix + ".k3", out);
  mix.collect(prefix + ".mix", out);
}

template <typename Scalar>
ResBlock<Scalar>::ResBlock(Index in_channels, Index out_channels, Index time_dim, const UNetConfig& config, Rng& rng)
    : norm1(config.groupnorm_groups, in_channels),
      conv1(nn::Conv2d<Scalar>::same3x3(in_channels, out_channels, rng)),
      time_proj(time_dim, out_channels, rng),
      norm2(config.groupnorm_groups, out_channels),
      daconv(out_channels, out_channels, config.representation_dim, config.daconv_hidden, rng) {
  if (in_channels != out_channels) shortcut.emplace(in_channels, out_channels, 1, 1, 0, rng);
}

template <typename Scalar>
Var<Scalar> ResBlock<Scalar>::operator()(const Var<Scalar>& x, const Var<Scalar>& time_embedding,
                                         const Var<Scalar>& v) const {
  Var<Scalar> h = conv1(silu(norm1(x)));
  h = add_channel_bias(h, time_proj(time_embedding));
  h = daconv(silu(norm2(h)), v);
  return add(h, shortcut ? (*shortcut)(x) : x);
}

template <typename Scalar>
void ResBlock<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  norm1.collect(prefix + ".norm1", out);
  conv1.collect(prefix + ".conv1", out);
  time_proj.collect(prefix + ".time", out);
  norm2.collect(prefix + ".norm2", out);
  daconv.collect(prefix + ".daconv", out);
  if (shortcut) shortcut->collect(prefix + ".shortcut", out);
}

template <typename Scalar>
Denoiser<Scalar>::Denoiser(const UNetConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const Index c = config.base_channels;
  const Index time_dim = 4 * c;
  time_ = TimeEmbedding<Scalar>(c / 2, time_dim, rng);
  head_ = nn::Conv2d<Scalar>::same3x3(12, c, rng);

  Index cur = c + config.cond_channels;
  std::vector<Index> skip_channels;
  for (Index l = 0; l < config.depth; ++l) {
    const Index ch = config.channels_at(l);
    std::vector<ResBlock<Scalar>> blocks;
    for (Index b = 0; b < config.blocks_per_group; ++b) {
      blocks.emplace_back(cur, ch, time_dim, config, rng);
      cur = ch;
    }
    down_.push_back(std::move(blocks));
    skip_channels.push_back(cur);
    downsample_.emplace_back(cur, cur, 3, 2, 1, rng);
  }
  for (Index b = 0; b < 2; ++b) mid_.emplace_back(cur, cur, time_dim, config, rng);
  for (Index l = config.depth - 1; l >= 0; --l) {
    const Index ch = config.channels_at(l);
    upsample_.push_back(nn::Conv2d<Scalar>::same3x3(cur, cur, rng));
    std::vector<ResBlock<Scalar>> blocks;
    Index in = cur + skip_channels[static_cast<std::size_t>(l)];
    for (Index b = 0; b < config.blocks_per_group; ++b) {
      blocks.emplace_back(in, ch, time_dim, config, rng);
      in = ch;
    }
    up_.push_back(std::move(blocks));
    cur = ch;
  }
  out_norm_ = nn::GroupNorm<Scalar>(config.groupnorm_groups, cur);
  out_conv_ = nn::Conv2d<Scalar>::same3x3(cur, 12, rng);
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::operator()(const Var<Scalar>& x_t, const std::vector<int>& steps, const Var<Scalar>& u,
                                         const Var<Scalar>& v) const {
  const Index multiple = config_.size_multiple();
  if (x_t.value().rank() != 4 || x_t.dim(1) != 3 || x_t.dim(2) % multiple != 0 || x_t.dim(3) % multiple != 0) {
    throw DimensionError("denoiser input " + shape_string(x_t.shape()) + " must be (N,3,H,W) with H,W divisible by " +
                         std::to_string(multiple));
  }
  const Index n = x_t.dim(0);
  if (static_cast<Index>(steps.size()) != n) throw DimensionError("denoiser needs one step per sample");
  if (u.value().rank() != 4 || u.dim(0) != n || u.dim(1) != config_.cond_channels) {
    throw DimensionError("denoiser: LR encoding " + shape_string(u.shape()) + " does not match the batch");
  }
  if (v.value().rank() != 2 || v.dim(0) != n || v.dim(1) != config_.representation_dim) {
    throw DimensionError("denoiser: representation " + shape_string(v.shape()) + " does not match the batch");
  }
  const Var<Scalar> rep = config_.use_degradation ? v : Var<Scalar>(Tensor<Scalar>(v.shape()));
  const Var<Scalar> te = time_(steps);

  const Index half_h = x_t.dim(2) / 2, half_w = x_t.dim(3) / 2;
  Var<Scalar> h = head_(space_to_depth(x_t, 2));
  h = concat_channels(h, resize_nearest(u, half_h, half_w));

  std::vector<Var<Scalar>> skips;
  for (std::size_t l = 0; l < down_.size(); ++l) {
    for (const auto& block : down_[l]) h = block(h, te, rep);
    skips.push_back(h);
    h = downsample_[l](h);
  }
  for (const auto& block : mid_) h = block(h, te, rep);
  for (std::size_t j = 0; j < up_.size(); ++j) {
    const Var<Scalar>& skip = skips[skips.size() - 1 - j];
    h = upsample_[j](resize_nearest(h, skip.dim(2), skip.dim(3)));
    h = concat_channels(h, skip);
    for (const auto& block : up_[j]) h = block(h, te, rep);
  }
  h = out_conv_(silu(out_norm_(h)));
  return depth_to_space(h, 2);
}

template <typename Scalar>
void Denoiser<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  time_.collect(prefix + ".time", out);
  head_.collect(prefix + ".head", out);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    for (std::size_t b = 0; b < down_[l].size(); ++b) {
      down_[l][b].collect(prefix + ".down" + std::to_string(l) + ".block" + std::to_string(b), out);
    }
    downsample_[l].collect(prefix + ".down" + std::to_string(l) + ".downsample", out);
  }
  for (std::size_t b = 0; b < mid_.size(); ++b) mid_[b].collect(prefix + ".mid.block" + std::to_string(b), out);
  for (std::size_t j = 0; j < up_.size(); ++j) {
    upsample_[j].collect(prefix + ".up" + std::to_string(j) + ".upsample", out);
    for (std::size_t b = 0; b < up_[j].size(); ++b) {
      up_[j][b].collect(prefix + ".up" + std::to_string(j) + ".block" + std::to_string(b), out);
    }
  }
  out_norm_.collect(prefix + ".out_norm", out);
  out_conv_.collect(prefix + ".out_conv", out);
}

template class TimeEmbedding<float>;
template class TimeEmbedding<double>;
template class DAConv<float>;
template class DAConv<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace blindsnf
