#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "blindsnf/ops.hpp"
#include "blindsnf/rng.hpp"

namespace blindsnf::nn {

template <typename Scalar>
struct NamedVar {
  std::string name;
  Var<Scalar> var;
  bool trainable;
};

template <typename Scalar>
using ParameterList = std::vector<NamedVar<Scalar>>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer shared by all layers.
template <typename Scalar>
Var<Scalar> init_param(Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Var<Scalar>(rng.uniform_tensor<Scalar>(std::move(shape), -bound, bound), true);
}

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in_features, Index out_features, Rng& rng)
      : weight(init_param<Scalar>({out_features, in_features}, in_features, rng)),
        bias(init_param<Scalar>({out_features}, in_features, rng)) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return linear(x, weight, bias); }

  void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
  }

  Var<Scalar> weight;
  Var<Scalar> bias;
};

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride, Index padding, Rng& rng)
      : weight(init_param<Scalar>({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
        bias(init_param<Scalar>({out_channels}, in_channels * kernel * kernel, rng)),
        stride(stride),
        padding(padding) {}

  /// 3x3, stride 1, "same" padding.
  static Conv2d same3x3(Index in_channels, Index out_channels, Rng& rng) {
    return Conv2d(in_channels, out_channels, 3, 1, 1, rng);
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight, bias, stride, padding); }

  Index out_channels() const { return weight.dim(0); }

  void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
  }

  void zero() {
    weight.mutable_value().values().setZero();
    bias.mutable_value().values().setZero();
  }

  Var<Scalar> weight;
  Var<Scalar> bias;
  Index stride = 1;
  Index padding = 0;
};

template <typename Scalar>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(Index groups, Index channels)
      : gamma(Tensor<Scalar>({channels}, Scalar(1)), true), beta(Tensor<Scalar>({channels}), true), groups(groups) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return group_norm(x, groups, gamma, beta); }

  void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
  }

  Var<Scalar> gamma;
  Var<Scalar> beta;
  Index groups = 1;
};

template <typename Scalar>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(Index channels)
      : gamma(Tensor<Scalar>({channels}, Scalar(1)), true),
        beta(Tensor<Scalar>({channels}), true),
        running_mean(Tensor<Scalar>({channels}), false),
        running_var(Tensor<Scalar>({channels}, Scalar(1)), false) {}

  // Running statistics are shared state; the handles below alias them.
  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const {
    Var<Scalar> mean_handle = running_mean;
    Var<Scalar> var_handle = running_var;
    return batch_norm(x, gamma, beta, mean_handle.mutable_value(), var_handle.mutable_value(), training);
  }

  void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
    out.push_back({prefix + ".running_mean", running_mean, false});
    out.push_back({prefix + ".running_var", running_var, false});
  }

  Var<Scalar> gamma;
  Var<Scalar> beta;
  Var<Scalar> running_mean;
  Var<Scalar> running_var;
};

/// Copies parameter values between two lists with matching names and shapes.
template <typename Scalar>
void copy_values(const ParameterList<Scalar>& from, ParameterList<Scalar>& to) {
  if (from.size() != to.size()) throw DimensionError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].name != to[i].name) throw DimensionError("copy_values: name mismatch " + from[i].name);
    require_same_shape(from[i].var.value(), to[i].var.value(), "copy_values");
    to[i].var.mutable_value() = from[i].var.value();
  }
}

template <typename Scalar>
Index count_trainable(const ParameterList<Scalar>& params) {
  Index total = 0;
  for (const auto& p : params)
    if (p.trainable) total += p.var.size();
  return total;
}

}  // namespace blindsnf::nn
