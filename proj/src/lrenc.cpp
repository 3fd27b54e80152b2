#include "blindsnf/lrenc.hpp"

namespace blindsnf {

namespace {
constexpr double kSlope = 0.2;
}

void RRDBConfig::validate() const {
  if (num_blocks < 0 || channels <= 0 || dense_blocks_per_rrdb <= 0 || convs_per_dense_block < 2 ||
      growth_channels <= 0) {
    throw ParameterError("RRDB sizes must be positive");
  }
  if (!(residual_scale > 0.0 && residual_scale <= 1.0)) throw ParameterError("RRDB residual scale outside (0, 1]");
}

template <typename Scalar>
DenseBlock<Scalar>::DenseBlock(const RRDBConfig& config, Rng& rng)
    : residual_scale_(static_cast<Scalar>(config.residual_scale)) {
  const Index n = config.convs_per_dense_block;
  for (Index i = 0; i < n; ++i) {
    const Index in = config.channels + i * config.growth_channels;
    const Index out = (i + 1 == n) ? config.channels : config.growth_channels;
    convs_.push_back(nn::Conv2d<Scalar>::same3x3(in, out, rng));
  }
}

template <typename Scalar>
Var<Scalar> DenseBlock<Scalar>::operator()(const Var<Scalar>& x) const {
  Var<Scalar> features = x;
  for (std::size_t i = 0; i + 1 < convs_.size(); ++i) {
    features = concat_channels(features, leaky_relu(convs_[i](features), static_cast<Scalar>(kSlope)));
  }
  return add(x, scale(convs_.back()(features), residual_scale_));
}

template <typename Scalar>
void DenseBlock<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
}

template <typename Scalar>
void DenseBlock<Scalar>::zero() {
  for (auto& c : convs_) c.zero();
}

template <typename Scalar>
RRDB<Scalar>::RRDB(const RRDBConfig& config, Rng& rng) : residual_scale_(static_cast<Scalar>(config.residual_scale)) {
  for (Index i = 0; i < config.dense_blocks_per_rrdb; ++i) blocks_.emplace_back(config, rng);
}

template <typename Scalar>
Var<Scalar> RRDB<Scalar>::operator()(const Var<Scalar>& x) const {
  Var<Scalar> h = x;
  for (const auto& block : blocks_) h = block(h);
  return add(x, scale(h, residual_scale_));
}

template <typename Scalar>
void RRDB<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".dense" + std::to_string(i), out);
}

template <typename Scalar>
void RRDB<Scalar>::zero() {
  for (auto& b : blocks_) b.zero();
}

template <typename Scalar>
LrEncoder<Scalar>::LrEncoder(const RRDBConfig& config, int scale, Rng& rng) : scale_(scale) {
  config.validate();
  if (scale < 1) throw ParameterError("scale must be positive");
  const Index c = config.channels;
  first_ = nn::Conv2d<Scalar>::same3x3(3, c, rng);
  for (Index i = 0; i < config.num_blocks; ++i) body_.emplace_back(config, rng);
  trunk_ = nn::Conv2d<Scalar>::same3x3(c, c, rng);
  // x2 stages for power-of-two scales, otherwise one stage of the full factor.
  int remaining = scale;
  const bool power_of_two = (scale & (scale - 1)) == 0;
  while (remaining > 1) {
    const Index factor = power_of_two ? 2 : remaining;
    up_convs_.push_back(nn::Conv2d<Scalar>::same3x3(c, c * factor * factor, rng));
    up_factors_.push_back(factor);
    remaining /= static_cast<int>(factor);
  }
  out_conv_ = nn::Conv2d<Scalar>::same3x3(c, 3, rng);
}

template <typename Scalar>
Var<Scalar> LrEncoder<Scalar>::encode(const Var<Scalar>& x_lr) const {
  if (x_lr.value().rank() != 4 || x_lr.dim(1) != 3 || x_lr.dim(2) < 8 || x_lr.dim(3) < 8) {
    throw DimensionError("LR encoder needs (N,3,h,w) with h,w >= 8, got " + shape_string(x_lr.shape()));
  }
  const Var<Scalar> features = first_(x_lr);
  Var<Scalar> h = features;
  for (const auto& block : body_) h = block(h);
  return add(features, trunk_(h));
}

template <typename Scalar>
Var<Scalar> LrEncoder<Scalar>::upsample(const Var<Scalar>& u) const {
  Var<Scalar> h = u;
  for (std::size_t i = 0; i < up_convs_.size(); ++i) {
    h = leaky_relu(depth_to_space(up_convs_[i](h), up_factors_[i]), static_cast<Scalar>(kSlope));
  }
  return out_conv_(h);
}

template <typename Scalar>
void LrEncoder<Scalar>::zero_body() {
  for (auto& block : body_) block.zero();
  trunk_.zero();
}

template <typename Scalar>
void LrEncoder<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  first_.collect(prefix + ".first", out);
  for (std::size_t i = 0; i < body_.size(); ++i) body_[i].collect(prefix + ".rrdb" + std::to_string(i), out);
  trunk_.collect(prefix + ".trunk", out);
  for (std::size_t i = 0; i < up_convs_.size(); ++i) up_convs_[i].collect(prefix + ".up" + std::to_string(i), out);
  out_conv_.collect(prefix + ".out", out);
}

template class DenseBlock<float>;
template class DenseBlock<double>;
template class RRDB<float>;
template class RRDB<double>;
template class LrEncoder<float>;
template class LrEncoder<double>;

}  // namespace blindsnf
