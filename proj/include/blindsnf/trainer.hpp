#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "blindsnf/checkpoint.hpp"
#include "blindsnf/config.hpp"
#include "blindsnf/degradation.hpp"
#include "blindsnf/model.hpp"
#include "blindsnf/schedule.hpp"

namespace blindsnf {

template <typename Scalar>
using DenoiseGraphFn = std::function<Var<Scalar>(const Var<Scalar>& x_t, const std::vector<int>& steps,
                                                 const Var<Scalar>& u, const Var<Scalar>& v)>;

/// mean |x_hr - h(sqrt(abar_t) x_hr + sqrt(1 - abar_t) eps, t, u, v)| over a
/// batch x_hr (N,3,H,W) with one step per sample.
template <typename Scalar>
Var<Scalar> snf_loss(const Tensor<Scalar>& x_hr, const std::vector<int>& steps, const Tensor<Scalar>& eps,
                     const Var<Scalar>& u, const Var<Scalar>& v, const DiffusionSchedule& schedule,
                     const DenoiseGraphFn<Scalar>& denoiser);

/// Adaptive-moment optimizer over the trainable entries of a parameter list.
class Adam {
 public:
  Adam(nn::ParameterList<float> params, double learning_rate, double beta1, double beta2, double eps);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();

  std::int64_t iterations() const { return iterations_; }
  void save(CheckpointArchive& archive) const;
  void load(const CheckpointArchive& archive);

 private:
  nn::ParameterList<float> params_;
  std::vector<Tensor<float>> first_moment_;
  std::vector<Tensor<float>> second_moment_;
  double learning_rate_, beta1_, beta2_, eps_;
  std::int64_t iterations_ = 0;
};

struct LossBreakdown {
  std::int64_t step = 0;
  double snf = 0.0;
  double encoder = 0.0;
  double degrad = 0.0;
  double total = 0.0;
};

/// An HR training image, optionally pinned to one degradation; otherwise a
/// degradation is drawn per sample from the configured mode.
struct TrainingExample {
  Image hr;
  std::optional<DegradationSpec> spec;
};

/// Joint optimization of the LR encoder, degradation encoder and denoiser.
class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<TrainingExample> data);

  /// Draws batch_size triples from the data with the trainer's seeded stream.
  std::vector<TrainingTriple> next_batch();
  /// One optimization step on `batch`. Throws NumericalError (after writing
  /// the dump checkpoint, if configured) when a loss is not finite.
  LossBreakdown train_step(const std::vector<TrainingTriple>& batch);
  LossBreakdown step() { return train_step(next_batch()); }

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Rebuilds a trainer from a checkpoint; `data` must match the original run.
  static Trainer load_checkpoint(const std::filesystem::path& path, std::vector<TrainingExample> data);

  BlindSrModel<float>& model() { return *model_; }
  const BlindSrModel<float>& model() const { return *model_; }
  NegativeQueue<float>& queue() { return queue_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const TrainConfig& config() const { return config_; }
  std::int64_t steps_done() const { return step_; }
  Rng& rng() { return rng_; }

  /// Where to write model state when training hits a non-finite loss.
  std::optional<std::filesystem::path> dump_path;

 private:
  void restore(const CheckpointArchive& archive);

  TrainConfig config_;
  std::vector<TrainingExample> data_;
  Rng rng_;
  std::unique_ptr<BlindSrModel<float>> model_;
  DiffusionSchedule schedule_;
  NegativeQueue<float> queue_;
  std::unique_ptr<Adam> optimizer_;
  std::int64_t step_ = 0;
};

/// Model-only view of a checkpoint, for sampling.
struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<BlindSrModel<float>> model;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace blindsnf
