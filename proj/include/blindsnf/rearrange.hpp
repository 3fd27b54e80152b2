#pragma once

#include "blindsnf/tensor.hpp"

namespace blindsnf {

// Space-to-depth by `factor` on (C,H,W) or (N,C,H,W). Within each factor x
// factor block, spatial offset (r,c) of input channel k lands in output
// channel factor*factor*k + factor*r + c.
template <typename Scalar>
Tensor<Scalar> space_to_depth(const Tensor<Scalar>& x, Index factor);

// Exact inverse of space_to_depth.
template <typename Scalar>
Tensor<Scalar> depth_to_space(const Tensor<Scalar>& x, Index factor);

/// (C,H,W) -> (4C,H/2,W/2). Throws DimensionError on odd H or W.
template <typename Scalar>
Tensor<Scalar> pixel_fold(const Tensor<Scalar>& x) {
  return space_to_depth(x, 2);
}

/// (4C,h,w) -> (C,2h,2w). Throws DimensionError when channels are not divisible by 4.
template <typename Scalar>
Tensor<Scalar> pixel_shuffle(const Tensor<Scalar>& x) {
  return depth_to_space(x, 2);
}

}  // namespace blindsnf
