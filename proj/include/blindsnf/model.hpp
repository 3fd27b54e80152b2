#pragma once

#include "blindsnf/degrep.hpp"
#include "blindsnf/denoiser.hpp"
#include "blindsnf/lrenc.hpp"

namespace blindsnf {

/// What the sampler needs from a trained model: the two encoders and the
/// clean-image predictor, on batched (N,...) tensors without graph recording.
template <typename Scalar>
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;

  virtual Tensor<Scalar> encode_lr(const Tensor<Scalar>& x_lr) = 0;
  virtual Tensor<Scalar> encode_degradation(const Tensor<Scalar>& x_lr) = 0;
  virtual Tensor<Scalar> denoise(const Tensor<Scalar>& x_t, int step, const Tensor<Scalar>& u,
                                 const Tensor<Scalar>& v) = 0;

  virtual int scale() const = 0;
  /// HR height and width must be multiples of this.
  virtual Index size_multiple() const = 0;
};

struct ModelConfig {
  int scale = 4;
  RRDBConfig rrdb;
  UNetConfig unet;
  Index proj_dim = kRepresentationDim;
  bool normalize_projection = true;
};

/// LR encoder f, degradation encoder g and denoiser h with shared parameter
/// bookkeeping.
template <typename Scalar>
class BlindSrModel final : public ConditionalModel<Scalar> {
 public:
  BlindSrModel(const ModelConfig& config, Rng& rng);

  /// Projected (and, when configured, unit-normalized) representation.
  Var<Scalar> project(const Var<Scalar>& v) const;

  Tensor<Scalar> encode_lr(const Tensor<Scalar>& x_lr) override;
  Tensor<Scalar> encode_degradation(const Tensor<Scalar>& x_lr) override;
  Tensor<Scalar> denoise(const Tensor<Scalar>& x_t, int step, const Tensor<Scalar>& u,
                         const Tensor<Scalar>& v) override;
  int scale() const override { return config_.scale; }
  Index size_multiple() const override { return config_.unet.size_multiple(); }

  /// Names are prefixed "lr_encoder.", "degradation." and "denoiser.".
  nn::ParameterList<Scalar> parameters() const;
  const ModelConfig& config() const { return config_; }

  LrEncoder<Scalar> lr_encoder;
  DegradationEncoder<Scalar> degradation;
  Denoiser<Scalar> denoiser;

 private:
  ModelConfig config_;
};

}  // namespace blindsnf
