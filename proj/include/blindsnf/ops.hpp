#pragma once

#include "blindsnf/autograd.hpp"

namespace blindsnf {

// Differentiable primitives. Activations are (N,C,H,W) unless noted; dense
// vectors are batched as (N,D).

template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar factor);
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& a, Shape shape);

template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& a);
/// mean |a|
template <typename Scalar> Var<Scalar> mean_abs(const Var<Scalar>& a);

template <typename Scalar> Var<Scalar> silu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope);

/// x (N,in), weight (out,in), bias (out) -> (N,out). `bias` may be undefined.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);

/// Zero-padded 2-D convolution (cross-correlation); weight (O,C,k,k).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, Index stride,
                   Index padding);

/// Per-sample depthwise 3x3 convolution, zero padded. kernels (N, C*9) hold
/// the taps of channel c at [c*9, c*9+9) in row-major (dy,dx) order.
template <typename Scalar>
Var<Scalar> depthwise_conv3x3(const Var<Scalar>& x, const Var<Scalar>& kernels);

template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, Index groups, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps = Scalar(1e-5));

/// Batch normalization over (N,H,W) per channel. In training mode batch
/// statistics are used and the running estimates are updated in place.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training,
                       Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5));

template <typename Scalar> Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);
/// Rows [begin, begin+count) of the leading axis.
template <typename Scalar> Var<Scalar> slice_batch(const Var<Scalar>& x, Index begin, Index count);

/// Nearest-neighbour resize of (N,C,H,W) to (N,C,out_h,out_w).
template <typename Scalar> Var<Scalar> resize_nearest(const Var<Scalar>& x, Index out_h, Index out_w);

/// x (N,C,H,W) + bias (N,C) broadcast over space.
template <typename Scalar> Var<Scalar> add_channel_bias(const Var<Scalar>& x, const Var<Scalar>& bias);

/// (N,C,H,W) -> (N,C)
template <typename Scalar> Var<Scalar> global_avg_pool(const Var<Scalar>& x);

/// Row-wise x / max(||x||, eps) for (N,D).
template <typename Scalar> Var<Scalar> l2_normalize_rows(const Var<Scalar>& x, Scalar eps = Scalar(1e-12));

template <typename Scalar> Var<Scalar> space_to_depth(const Var<Scalar>& x, Index factor);
template <typename Scalar> Var<Scalar> depth_to_space(const Var<Scalar>& x, Index factor);

/// Batch mean of -log( exp(w.w+ / tau) / sum_i exp(w.q_i / tau) ) with the
/// constant negatives q (K,D). With `include_positive` the positive term is
/// also added to the denominator.
template <typename Scalar>
Var<Scalar> contrastive_loss(const Var<Scalar>& w, const Var<Scalar>& w_pos, const Tensor<Scalar>& negatives,
                             Scalar temperature, bool include_positive = false);

template <typename Scalar> Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar> Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }

}  // namespace blindsnf
