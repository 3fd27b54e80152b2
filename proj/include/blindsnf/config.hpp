#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blindsnf/model.hpp"

namespace blindsnf {

/// Every knob of a training run. Each field has a config-file key of the
/// same name and a CLI flag with underscores replaced by dashes.
struct TrainConfig {
  // diffusion
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  // data
  Index lr_patch = 64;
  int scale_r = 4;
  Index batch_size = 4;
  std::string degradation_mode = "isotropic_noisefree";
  std::string downsampler = "decimate";
  // optimization
  std::int64_t steps = 10000;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // contrastive
  Index queue_capacity = 2048;
  double temperature = 0.07;
  bool normalize_projection = true;
  bool include_positive = false;
  Index proj_dim = 256;
  // loss toggles
  bool use_snf_loss = true;
  bool use_encoder_loss = true;
  bool use_degrad_loss = true;
  // architecture
  Index base_channels = 64;
  Index unet_depth = 4;
  std::string channel_multipliers = "1,2,2,2";
  Index groupnorm_groups = 8;
  Index daconv_hidden = 64;
  bool use_degradation_conditioning = true;
  Index rrdb_blocks = 4;
  Index rrdb_channels = 64;
  Index rrdb_growth = 32;
  // bookkeeping
  std::int64_t checkpoint_every = 1000;
  // sampling defaults
  int gamma = 50;
  double eta = 1.0;

  /// Sets one field from text. Throws ParameterError for unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Range checks across fields.
  void validate() const;

  ModelConfig model_config() const;

  /// `key = value` lines, '#' comments; unknown keys are errors.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
  std::string to_text() const;
};

}  // namespace blindsnf
