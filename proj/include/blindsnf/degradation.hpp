#pragma once

#include <string>

#include "blindsnf/image.hpp"
#include "blindsnf/rng.hpp"

namespace blindsnf {

inline constexpr Index kKernelSize = 21;

/// Normalized, non-negative blur weights on a (1, size, size) grid.
struct BlurKernel {
  Tensor<double> grid;

  Index size() const { return grid.dim(1); }
  double operator()(Index row, Index col) const { return grid(0, row, col); }
};

enum class KernelKind { isotropic, anisotropic };
enum class SpecMode { isotropic_noisefree, anisotropic_noisy };
enum class Downsampler { decimate, bicubic };

/// Parametric blur + noise + scale description of one degradation.
///
/// Anisotropic widths are standard deviations along the principal axes, so
/// lambda1 == lambda2 == sigma reproduces the isotropic kernel. The noise
/// level is on the 0..255 scale.
struct DegradationSpec {
  KernelKind kind = KernelKind::isotropic;
  double sigma = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double theta = 0.0;
  double noise_level = 0.0;
  int scale = 4;

  /// Throws ParameterError outside the supported ranges.
  void validate() const;

  /// One `key = value` line per field.
  std::string to_text() const;
  static DegradationSpec from_text(const std::string& text);
};

BlurKernel make_iso_kernel(double sigma, Index size = kKernelSize);
BlurKernel make_aniso_kernel(double lambda1, double lambda2, double theta, Index size = kKernelSize);
BlurKernel realize_kernel(const DegradationSpec& spec);

/// Convolution of every channel with `kernel`, reflective boundary.
Image blur(const Image& image, const BlurKernel& kernel);

/// (x (*) k) decimated by the scale, plus Gaussian noise of standard
/// deviation 2*noise_level/255 in internal units.
Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng, Downsampler down = Downsampler::decimate);

DegradationSpec sample_spec(Rng& rng, SpecMode mode, int scale);
SpecMode parse_spec_mode(const std::string& name);
Downsampler parse_downsampler(const std::string& name);

struct TrainingTriple {
  Image x_lr;
  Image x_lr_pos;
  Image x_hr;
};

/// Degrades `hr_full` once, then crops a query and a positive LR patch plus
/// the HR patch aligned with the query.
TrainingTriple make_triple(const Image& hr_full, const DegradationSpec& spec, Index lr_patch, Rng& rng,
                           Downsampler down = Downsampler::decimate);

}  // namespace blindsnf
