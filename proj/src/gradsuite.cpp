#include "blindsnf/gradsuite.hpp"

#include "blindsnf/degrep.hpp"
#include "blindsnf/denoiser.hpp"
#include "blindsnf/gradcheck.hpp"
#include "blindsnf/lrenc.hpp"

namespace blindsnf {

namespace {

template <typename Scalar>
struct Precision;

template <>
struct Precision<float> {
  static constexpr const char* name = "fp32";
  static constexpr double step = 1e-2;
  static constexpr double tolerance = kGradTolerance32;
};

template <>
struct Precision<double> {
  static constexpr const char* name = "fp64";
  static constexpr double step = 1e-6;
  static constexpr double tolerance = kGradTolerance64;
};

// Random linear functional of a tensor output, so every output element
// contributes to the checked gradient.
template <typename Scalar>
Var<Scalar> contract(const Var<Scalar>& out, const Tensor<Scalar>& weights) {
  return sum(mul(out, Var<Scalar>(weights)));
}

template <typename Scalar>
void run_precision(std::uint64_t seed, std::vector<GradSuiteEntry>& out) {
  using P = Precision<Scalar>;
  Rng rng(seed);
  const auto record = [&out](const std::string& name, const ScalarFunction<Scalar>& f, const Tensor<Scalar>& x) {
    out.push_back({name, P::name, grad_check(f, x, P::step), P::tolerance});
  };

  {
    const Index rep = 5;
    DAConv<Scalar> daconv(4, 4, rep, 8, rng);
    const Tensor<Scalar> features = rng.normal_tensor<Scalar>({1, 4, 6, 6});
    const Tensor<Scalar> v = rng.normal_tensor<Scalar>({1, rep});
    const Tensor<Scalar> weights = rng.normal_tensor<Scalar>({1, 4, 6, 6});
    record("daconv.features", [&](const Var<Scalar>& x) { return contract(daconv(x, Var<Scalar>(v)), weights); },
           features);
    record("daconv.v", [&](const Var<Scalar>& x) { return contract(daconv(Var<Scalar>(features), x), weights); },
           v);
  }
  {
    UNetConfig config;
    config.groupnorm_groups = 2;
    config.representation_dim = 5;
    config.daconv_hidden = 8;
    const Index time_dim = 8;
    ResBlock<Scalar> block(4, 6, time_dim, config, rng);
    const Tensor<Scalar> x = rng.normal_tensor<Scalar>({1, 4, 4, 4});
    const Tensor<Scalar> t_e = rng.normal_tensor<Scalar>({1, time_dim});
    const Tensor<Scalar> v = rng.normal_tensor<Scalar>({1, 5});
    const Tensor<Scalar> weights = rng.normal_tensor<Scalar>({1, 6, 4, 4});
    record("resblock.input",
           [&](const Var<Scalar>& in) { return contract(block(in, Var<Scalar>(t_e), Var<Scalar>(v)), weights); }, x);
    record("resblock.v",
           [&](const Var<Scalar>& in) { return contract(block(Var<Scalar>(x), Var<Scalar>(t_e), in), weights); }, v);
  }
  {
    TimeEmbedding<Scalar> embedding(4, 8, rng);
    const Tensor<Scalar> phi = TimeEmbedding<Scalar>::features({3, 40}, 4);
    const Tensor<Scalar> weights = rng.normal_tensor<Scalar>({2, 8});
    record("time_embedding.mlp", [&](const Var<Scalar>& x) { return contract(embedding.mlp(x), weights); }, phi);
  }
  {
    DegradationEncoder<Scalar> encoder(rng, 16, 2);
    const Tensor<Scalar> v = rng.normal_tensor<Scalar>({1, encoder.representation_dim()});
    const Tensor<Scalar> weights = rng.normal_tensor<Scalar>({1, 16});
    record("projection_head", [&](const Var<Scalar>& x) { return contract(encoder.project(x), weights); }, v);
  }
  {
    const Tensor<Scalar> up = rng.uniform_tensor<Scalar>({1, 3, 8, 8}, -1.0, 1.0);
    Tensor<Scalar> hr = rng.uniform_tensor<Scalar>({1, 3, 8, 8}, -1.0, 1.0);
    // Keep every residual away from the kink of |.| by more than the step.
    for (Index i = 0; i < hr.size(); ++i) {
      const Scalar gap = up[i] - hr[i];
      if (std::abs(gap) < Scalar(0.05)) hr[i] = up[i] - (gap < 0 ? Scalar(-0.05) : Scalar(0.05));
    }
    record("encoder_loss", [&](const Var<Scalar>& x) { return encoder_loss(x, Var<Scalar>(hr)); }, up);
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  run_precision<double>(seed, out);
  run_precision<float>(seed, out);
  return out;
}

}  // namespace blindsnf
