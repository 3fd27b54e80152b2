#include "blindsnf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "blindsnf/io.hpp"

namespace blindsnf {

Image make_image(Index height, Index width, float fill) { return Image(Shape{3, height, width}, fill); }

Image image_from_rgb8(const std::vector<std::uint8_t>& rgb, Index height, Index width) {
  if (static_cast<Index>(rgb.size()) != 3 * height * width) throw DimensionError("rgb buffer size mismatch");
  Image out = make_image(height, width);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x)
      for (Index c = 0; c < 3; ++c) out(c, y, x) = static_cast<float>(rgb[(y * width + x) * 3 + c]) / 127.5f - 1.0f;
  return out;
}

std::vector<std::uint8_t> image_to_rgb8(const Image& image) {
  require_rank(image, 3, "image_to_rgb8");
  if (image.dim(0) != 3) throw DimensionError("image_to_rgb8: expected 3 channels");
  const Index h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(3 * h * w));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image(c, y, x)), -1.0, 1.0);
        out[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
      }
  return out;
}

Image load_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw ParseError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ParseError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  return image_from_rgb8(buffer, img.height, img.width);
}

void save_png(const std::filesystem::path& path, const Image& image) {
  const auto rgb = image_to_rgb8(image);
  write_atomic(path, [&](const std::filesystem::path& tmp) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.dim(2));
    img.height = static_cast<png_uint_32>(image.dim(1));
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, tmp.string().c_str(), 0, rgb.data(), 0, nullptr)) {
      throw std::runtime_error("cannot write PNG " + tmp.string() + ": " + img.message);
    }
  });
}

template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double peak) {
  require_same_shape(a, b, "psnr");
  const double mse = (a.values().template cast<double>() - b.values().template cast<double>()).square().mean();
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

template double psnr(const Tensor<float>&, const Tensor<float>&, double);
template double psnr(const Tensor<double>&, const Tensor<double>&, double);

namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  std::vector<Index> first;
  std::vector<std::vector<double>> weights;
};

Taps resize_taps(Index in, Index out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double support = 2.0 / stretch;
  Taps taps;
  for (Index i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const auto lo = static_cast<Index>(std::floor(center - support)) + 1;
    const auto hi = static_cast<Index>(std::ceil(center + support)) - 1;
    std::vector<double> w;
    double total = 0.0;
    for (Index j = lo; j <= hi; ++j) {
      const double v = cubic((static_cast<double>(j) - center) * stretch);
      w.push_back(v);
      total += v;
    }
    for (double& v : w) v /= total;
    taps.first.push_back(lo);
    taps.weights.push_back(std::move(w));
  }
  return taps;
}

}  // namespace

Image resize_bicubic(const Image& image, Index out_height, Index out_width) {
  require_rank(image, 3, "resize_bicubic");
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const Taps rows = resize_taps(h, out_height);
  const Taps cols = resize_taps(w, out_width);
  Tensor<double> tmp(Shape{c, h, out_width});
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < out_width; ++x) {
        double acc = 0.0;
        const auto& wt = cols.weights[x];
        for (std::size_t k = 0; k < wt.size(); ++k) {
          const Index src = std::clamp<Index>(cols.first[x] + static_cast<Index>(k), 0, w - 1);
          acc += wt[k] * image(ch, y, src);
        }
        tmp(ch, y, x) = acc;
      }
  Image out(Shape{c, out_height, out_width});
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < out_height; ++y) {
      const auto& wt = rows.weights[y];
      for (Index x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < wt.size(); ++k) {
          const Index src = std::clamp<Index>(rows.first[y] + static_cast<Index>(k), 0, h - 1);
          acc += wt[k] * tmp(ch, src, x);
        }
        out(ch, y, x) = static_cast<float>(acc);
      }
    }
  return out;
}

Image crop(const Image& image, Index top, Index left, Index height, Index width) {
  require_rank(image, 3, "crop");
  if (top < 0 || left < 0 || top + height > image.dim(1) || left + width > image.dim(2)) {
    throw DimensionError("crop window exceeds image " + shape_string(image.shape()));
  }
  Image out(Shape{image.dim(0), height, width});
  for (Index c = 0; c < image.dim(0); ++c)
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) out(c, y, x) = image(c, top + y, left + x);
  return out;
}

Image clamp_unit(const Image& image) { return Image(image.shape(), image.values().cwiseMax(-1.0f).cwiseMin(1.0f)); }

}  // namespace blindsnf
