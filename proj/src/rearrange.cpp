#include "blindsnf/rearrange.hpp"

#include <string>

namespace blindsnf {

namespace {

// Views rank-3 input as a batch of one.
template <typename Scalar>
Tensor<Scalar> as_batch(const Tensor<Scalar>& x, const char* what) {
  if (x.rank() == 3) return unsqueeze(x);
  if (x.rank() == 4) return x;
  throw DimensionError(std::string(what) + ": expected (C,H,W) or (N,C,H,W), got " + shape_string(x.shape()));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> space_to_depth(const Tensor<Scalar>& x, Index factor) {
  const Tensor<Scalar> in = as_batch(x, "space_to_depth");
  const Index n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (factor < 1 || h % factor != 0 || w % factor != 0) {
    throw DimensionError("space_to_depth: spatial dims " + shape_string(x.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  const Index oh = h / factor, ow = w / factor, oc = c * factor * factor;
  Tensor<Scalar> out(Shape{n, oc, oh, ow});
  for (Index b = 0; b < n; ++b)
    for (Index k = 0; k < c; ++k)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
          const Index ch = factor * factor * k + factor * (y % factor) + (xx % factor);
          out(b, ch, y / factor, xx / factor) = in(b, k, y, xx);
        }
  return x.rank() == 3 ? squeeze(out) : out;
}

template <typename Scalar>
Tensor<Scalar> depth_to_space(const Tensor<Scalar>& x, Index factor) {
  const Tensor<Scalar> in = as_batch(x, "depth_to_space");
  const Index n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (factor < 1 || c % (factor * factor) != 0) {
    throw DimensionError("depth_to_space: channels of " + shape_string(x.shape()) + " not divisible by " +
                         std::to_string(factor * factor));
  }
  const Index oc = c / (factor * factor);
  Tensor<Scalar> out(Shape{n, oc, h * factor, w * factor});
  for (Index b = 0; b < n; ++b)
    for (Index k = 0; k < oc; ++k)
      for (Index y = 0; y < h * factor; ++y)
        for (Index xx = 0; xx < w * factor; ++xx) {
          const Index ch = factor * factor * k + factor * (y % factor) + (xx % factor);
          out(b, k, y, xx) = in(b, ch, y / factor, xx / factor);
        }
  return x.rank() == 3 ? squeeze(out) : out;
}

template Tensor<float> space_to_depth(const Tensor<float>&, Index);
template Tensor<double> space_to_depth(const Tensor<double>&, Index);
template Tensor<float> depth_to_space(const Tensor<float>&, Index);
template Tensor<double> depth_to_space(const Tensor<double>&, Index);

}  // namespace blindsnf
