#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "blindsnf/tensor.hpp"

namespace blindsnf {

/// RGB image as (3,H,W) in the internal range [-1, 1].
using Image = Tensor<float>;

/// Full dynamic range of the internal convention.
inline constexpr double kInternalPeak = 2.0;
/// Returned by psnr() when the images are identical.
inline constexpr double kPsnrCap = 100.0;

Image make_image(Index height, Index width, float fill = 0.0f);

/// 8-bit interleaved RGB -> internal range.
Image image_from_rgb8(const std::vector<std::uint8_t>& rgb, Index height, Index width);
/// Internal range -> 8-bit interleaved RGB, clamping to [-1, 1] and rounding.
std::vector<std::uint8_t> image_to_rgb8(const Image& image);

/// Reads an 8-bit PNG; grayscale and palette images are expanded to RGB.
Image load_png(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG through a temporary file and rename.
void save_png(const std::filesystem::path& path, const Image& image);

/// 10*log10(peak^2 / MSE), or kPsnrCap when MSE is zero.
template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double peak = kInternalPeak);

/// Keys-cubic (a = -0.5) resize with antialiasing when shrinking.
Image resize_bicubic(const Image& image, Index out_height, Index out_width);

Image crop(const Image& image, Index top, Index left, Index height, Index width);

Image clamp_unit(const Image& image);

}  // namespace blindsnf
