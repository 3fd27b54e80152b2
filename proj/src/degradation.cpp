#include "blindsnf/degradation.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace blindsnf {

namespace {

constexpr double kMinWidth = 0.2;
constexpr double kMaxWidth = 4.0;
constexpr double kMaxNoise = 25.0;

void require_odd(Index size) {
  if (size <= 0 || size % 2 == 0) throw ParameterError("kernel size must be odd and positive");
}

BlurKernel normalized(Tensor<double> grid) {
  grid.values() /= grid.values().sum();
  return BlurKernel{std::move(grid)};
}

// Reflect-101 index into [0, n).
Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void DegradationSpec::validate() const {
  if (kind == KernelKind::isotropic) {
    // sigma = 0 is the delta kernel (noise-free bicubic-style benchmark setting).
    if (!(sigma >= 0.0 && sigma <= kMaxWidth)) throw ParameterError("isotropic sigma outside [0, 4]");
  } else {
    if (!(lambda1 >= kMinWidth && lambda1 <= kMaxWidth && lambda2 >= kMinWidth && lambda2 <= kMaxWidth)) {
      throw ParameterError("anisotropic widths outside [0.2, 4]");
    }
    if (!(theta >= 0.0 && theta < std::numbers::pi)) throw ParameterError("rotation outside [0, pi)");
  }
  if (!(noise_level >= 0.0 && noise_level <= kMaxNoise)) throw ParameterError("noise level outside [0, 25]");
  if (scale < 1) throw ParameterError("scale must be positive");
}

std::string DegradationSpec::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "kind = " << (kind == KernelKind::isotropic ? "isotropic" : "anisotropic") << '\n'
     << "sigma = " << sigma << '\n'
     << "lambda1 = " << lambda1 << '\n'
     << "lambda2 = " << lambda2 << '\n'
     << "theta = " << theta << '\n'
     << "noise_level = " << noise_level << '\n'
     << "scale = " << scale << '\n';
  return os.str();
}

DegradationSpec DegradationSpec::from_text(const std::string& text) {
  std::map<std::string, std::string> fields;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  DegradationSpec spec;
  try {
    const std::string kind = fields.at("kind");
    if (kind != "isotropic" && kind != "anisotropic") throw ParseError("unknown kernel kind " + kind);
    spec.kind = kind == "isotropic" ? KernelKind::isotropic : KernelKind::anisotropic;
    spec.sigma = std::stod(fields.at("sigma"));
    spec.lambda1 = std::stod(fields.at("lambda1"));
    spec.lambda2 = std::stod(fields.at("lambda2"));
    spec.theta = std::stod(fields.at("theta"));
    spec.noise_level = std::stod(fields.at("noise_level"));
    spec.scale = std::stoi(fields.at("scale"));
  } catch (const std::out_of_range&) {
    throw ParseError("degradation spec is missing a field");
  } catch (const std::invalid_argument&) {
    throw ParseError("degradation spec has a non-numeric field");
  }
  return spec;
}

BlurKernel make_iso_kernel(double sigma, Index size) {
  require_odd(size);
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be non-negative");
  Tensor<double> grid(Shape{1, size, size});
  const Index r = size / 2;
  if (sigma == 0.0) {
    grid(0, r, r) = 1.0;
    return BlurKernel{std::move(grid)};
  }
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j < size; ++j) {
      const double y = static_cast<double>(i - r), x = static_cast<double>(j - r);
      grid(0, i, j) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
    }
  return normalized(std::move(grid));
}

BlurKernel make_aniso_kernel(double lambda1, double lambda2, double theta, Index size) {
  require_odd(size);
  if (!(lambda1 > 0.0 && lambda2 > 0.0)) throw ParameterError("anisotropic widths must be positive");
  // Sigma = R diag(l1^2, l2^2) R^T, so Sigma^-1 = R diag(1/l1^2, 1/l2^2) R^T.
  const double c = std::cos(theta), s = std::sin(theta);
  const double a1 = 1.0 / (lambda1 * lambda1), a2 = 1.0 / (lambda2 * lambda2);
  const double ixx = c * c * a1 + s * s * a2;
  const double iyy = s * s * a1 + c * c * a2;
  const double ixy = c * s * (a1 - a2);
  Tensor<double> grid(Shape{1, size, size});
  const Index r = size / 2;
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j < size; ++j) {
      const double y = static_cast<double>(i - r), x = static_cast<double>(j - r);
      grid(0, i, j) = std::exp(-0.5 * (ixx * x * x + 2.0 * ixy * x * y + iyy * y * y));
    }
  return normalized(std::move(grid));
}

BlurKernel realize_kernel(const DegradationSpec& spec) {
  spec.validate();
  if (spec.kind == KernelKind::isotropic) return make_iso_kernel(spec.sigma);
  return make_aniso_kernel(spec.lambda1, spec.lambda2, spec.theta);
}

Image blur(const Image& image, const BlurKernel& kernel) {
  require_rank(image, 3, "blur");
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const Index size = kernel.size(), r = size / 2;
  Image out(image.shape());
  std::vector<Index> rows(static_cast<std::size_t>(h + 2 * r)), cols(static_cast<std::size_t>(w + 2 * r));
  for (Index i = 0; i < h + 2 * r; ++i) rows[i] = reflect(i - r, h);
  for (Index i = 0; i < w + 2 * r; ++i) cols[i] = reflect(i - r, w);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double acc = 0.0;
        // out(y,x) = sum_d k(r+d) in(y-d): tap (i,j) reads offset (r-i, r-j).
        for (Index i = 0; i < size; ++i) {
          const Index sy = rows[y + size - 1 - i];
          for (Index j = 0; j < size; ++j) {
            const double wgt = kernel(i, j);
            if (wgt != 0.0) acc += wgt * image(ch, sy, cols[x + size - 1 - j]);
          }
        }
        out(ch, y, x) = static_cast<float>(acc);
      }
  return out;
}

Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng, Downsampler down) {
  require_rank(hr, 3, "degrade");
  spec.validate();
  const Index h = hr.dim(1), w = hr.dim(2), r = spec.scale;
  if (h % r != 0 || w % r != 0) {
    throw DimensionError("degrade: HR size " + shape_string(hr.shape()) + " not divisible by scale " +
                         std::to_string(r));
  }
  const Image blurred = blur(hr, realize_kernel(spec));
  Image lr;
  if (down == Downsampler::bicubic) {
    lr = resize_bicubic(blurred, h / r, w / r);
  } else {
    lr = Image(Shape{hr.dim(0), h / r, w / r});
    for (Index c = 0; c < hr.dim(0); ++c)
      for (Index y = 0; y < h / r; ++y)
        for (Index x = 0; x < w / r; ++x) lr(c, y, x) = blurred(c, y * r, x * r);
  }
  if (spec.noise_level > 0.0) {
    const double stddev = 2.0 * spec.noise_level / 255.0;
    for (Index i = 0; i < lr.size(); ++i) lr[i] += static_cast<float>(stddev * rng.normal());
  }
  return lr;
}

DegradationSpec sample_spec(Rng& rng, SpecMode mode, int scale) {
  DegradationSpec spec;
  spec.scale = scale;
  switch (mode) {
    case SpecMode::isotropic_noisefree:
      spec.kind = KernelKind::isotropic;
      spec.sigma = rng.uniform(kMinWidth, kMaxWidth);
      break;
    case SpecMode::anisotropic_noisy:
      spec.kind = KernelKind::anisotropic;
      spec.lambda1 = rng.uniform(kMinWidth, kMaxWidth);
      spec.lambda2 = rng.uniform(kMinWidth, kMaxWidth);
      spec.theta = rng.uniform(0.0, std::numbers::pi);
      spec.noise_level = rng.uniform(0.0, kMaxNoise);
      break;
    default:
      throw ParameterError("unknown degradation mode");
  }
  spec.validate();
  return spec;
}

SpecMode parse_spec_mode(const std::string& name) {
  if (name == "isotropic_noisefree" || name == "iso") return SpecMode::isotropic_noisefree;
  if (name == "anisotropic_noisy" || name == "aniso") return SpecMode::anisotropic_noisy;
  throw ParameterError("unknown degradation mode '" + name + "'");
}

Downsampler parse_downsampler(const std::string& name) {
  if (name == "decimate") return Downsampler::decimate;
  if (name == "bicubic") return Downsampler::bicubic;
  throw ParameterError("downsampler must be 'decimate' or 'bicubic', got '" + name + "'");
}

TrainingTriple make_triple(const Image& hr_full, const DegradationSpec& spec, Index lr_patch, Rng& rng,
                           Downsampler down) {
  const Image lr = degrade(hr_full, spec, rng, down);
  const Index h = lr.dim(1), w = lr.dim(2), r = spec.scale;
  if (lr_patch <= 0 || h < lr_patch || w < lr_patch) {
    throw DimensionError("make_triple: degraded image " + shape_string(lr.shape()) + " smaller than patch " +
                         std::to_string(lr_patch));
  }
  const Index qy = rng.uniform_int(0, h - lr_patch), qx = rng.uniform_int(0, w - lr_patch);
  const Index py = rng.uniform_int(0, h - lr_patch), px = rng.uniform_int(0, w - lr_patch);
  return TrainingTriple{crop(lr, qy, qx, lr_patch, lr_patch), crop(lr, py, px, lr_patch, lr_patch),
                        crop(hr_full, qy * r, qx * r, lr_patch * r, lr_patch * r)};
}

}  // namespace blindsnf
