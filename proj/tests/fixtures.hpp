#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "blindsnf/config.hpp"
#include "blindsnf/image.hpp"
#include "blindsnf/rng.hpp"

namespace blindsnf::testing {

/// Smooth stripes plus a disc, different per draw.
inline Image synthetic_image(Rng& rng, Index height, Index width) {
  Image image({3, height, width});
  double fx[3], fy[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = rng.uniform(0.05, 0.4);
    fy[k] = rng.uniform(0.05, 0.4);
    phase[k] = rng.uniform(0.0, 6.28);
  }
  const double cx = rng.uniform(0.15, 0.85) * width, cy = rng.uniform(0.15, 0.85) * height;
  const double radius = rng.uniform(0.1, 0.25) * std::min(height, width);
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        const bool inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) < radius * radius;
        const double value = 0.5 * std::sin(fx[c] * x + fy[(c + 1) % 3] * y + phase[c]) + (inside ? 0.4 : -0.2);
        image(c, y, x) = static_cast<float>(std::clamp(value, -1.0, 1.0));
      }
  return image;
}

/// Smallest sensible network sizes; HR patches are 16x16.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.T = 20;
  c.lr_patch = 8;
  c.scale_r = 2;
  c.batch_size = 2;
  c.steps = 4;
  c.learning_rate = 1e-3;
  c.queue_capacity = 16;
  c.proj_dim = 8;
  c.base_channels = 8;
  c.unet_depth = 2;
  c.channel_multipliers = "1,2";
  c.groupnorm_groups = 4;
  c.daconv_hidden = 8;
  c.rrdb_blocks = 1;
  c.rrdb_channels = 8;
  c.rrdb_growth = 4;
  c.gamma = 5;
  return c;
}

inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("blindsnf_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace blindsnf::testing
