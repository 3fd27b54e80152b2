#include "blindsnf/model.hpp"

namespace blindsnf {

namespace {

ModelConfig checked(ModelConfig config) {
  config.unet.cond_channels = config.rrdb.channels;
  config.unet.representation_dim = kRepresentationDim;
  config.unet.validate();
  config.rrdb.validate();
  if (config.proj_dim <= 0) throw ParameterError("projection dimension must be positive");
  return config;
}

}  // namespace

template <typename Scalar>
BlindSrModel<Scalar>::BlindSrModel(const ModelConfig& config, Rng& rng) : config_(checked(config)) {
  lr_encoder = LrEncoder<Scalar>(config_.rrdb, config_.scale, rng);
  degradation = DegradationEncoder<Scalar>(rng, config_.proj_dim);
  denoiser = Denoiser<Scalar>(config_.unet, rng);
}

template <typename Scalar>
Var<Scalar> BlindSrModel<Scalar>::project(const Var<Scalar>& v) const {
  const Var<Scalar> w = degradation.project(v);
  return config_.normalize_projection ? l2_normalize_rows(w) : w;
}

template <typename Scalar>
Tensor<Scalar> BlindSrModel<Scalar>::encode_lr(const Tensor<Scalar>& x_lr) {
  NoGradGuard guard;
  return lr_encoder.encode(Var<Scalar>(x_lr)).value();
}

template <typename Scalar>
Tensor<Scalar> BlindSrModel<Scalar>::encode_degradation(const Tensor<Scalar>& x_lr) {
  NoGradGuard guard;
  return degradation.encode(Var<Scalar>(x_lr), false).value();
}

template <typename Scalar>
Tensor<Scalar> BlindSrModel<Scalar>::denoise(const Tensor<Scalar>& x_t, int step, const Tensor<Scalar>& u,
                                             const Tensor<Scalar>& v) {
  NoGradGuard guard;
  const std::vector<int> steps(static_cast<std::size_t>(x_t.dim(0)), step);
  return denoiser(Var<Scalar>(x_t), steps, Var<Scalar>(u), Var<Scalar>(v)).value();
}

template <typename Scalar>
nn::ParameterList<Scalar> BlindSrModel<Scalar>::parameters() const {
  nn::ParameterList<Scalar> out;
  lr_encoder.collect("lr_encoder", out);
  degradation.collect("degradation", out);
  denoiser.collect("denoiser", out);
  return out;
}

template class BlindSrModel<float>;
template class BlindSrModel<double>;

}  // namespace blindsnf
