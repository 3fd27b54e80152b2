#include <doctest.h>

#include <cmath>
#include <set>

#include "blindsnf/denoiser.hpp"
#include "blindsnf/gradsuite.hpp"

using namespace blindsnf;

namespace {

UNetConfig small_config() {
  UNetConfig c;
  c.base_channels = 8;
  c.depth = 2;
  c.multipliers = {1, 2};
  c.groupnorm_groups = 4;
  c.cond_channels = 8;
  c.representation_dim = 6;
  c.daconv_hidden = 8;
  return c;
}

}  // namespace

TEST_CASE("sinusoidal features") {
  const Index k = 16;
  const auto zero = TimeEmbedding<double>::features({0}, k);
  for (Index i = 0; i < k; ++i) {
    CHECK(zero[2 * i] == 0.0);
    CHECK(zero[2 * i + 1] == 1.0);
  }
  std::vector<int> steps(1001);
  for (int t = 0; t <= 1000; ++t) steps[t] = t;
  const auto phi = TimeEmbedding<double>::features(steps, k);
  for (int t = 0; t <= 1000; ++t) CHECK(phi.matrix().row(t).squaredNorm() == doctest::Approx(double(k)));
  std::set<std::vector<double>> distinct;
  for (int t = 0; t <= 1000; ++t) {
    const auto row = phi.matrix().row(t);
    distinct.insert(std::vector<double>(row.data(), row.data() + row.size()));
  }
  CHECK(distinct.size() == 1001);
  double min_gap = INFINITY;
  for (int a = 0; a <= 1000; ++a)
    for (int b = a + 1; b <= 1000; ++b) min_gap = std::min(min_gap, (phi.matrix().row(a) - phi.matrix().row(b)).norm());
  CHECK(min_gap > 1e-3);
  // w_k = 10000^(-k/K): the second pair oscillates at 10000^(-1/16)
  const auto one = TimeEmbedding<double>::features({1}, k);
  CHECK(one[2] == doctest::Approx(std::sin(std::pow(10000.0, -1.0 / 16.0))));
}

TEST_CASE("time embedding width is four times the base channels") {
  Rng rng(1);
  TimeEmbedding<float> embed(32, 4 * 64, rng);
  CHECK(embed({0, 5, 999}).value().shape() == Shape{3, 256});
}

TEST_CASE("daconv forced kernels") {
  Rng rng(2);
  DAConv<double> conv(4, 5, 6, 8, rng);
  const Var<double> f(rng.normal_tensor<double>({2, 4, 6, 6}));
  const Var<double> v(rng.normal_tensor<double>({2, 6}));
  Tensor<double> delta({2, 36});
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 4; ++c) delta[n * 36 + c * 9 + 4] = 1.0;
  conv.forced_kernels = delta;
  CHECK(conv(f, v).value() == conv.mix(f).value());
  conv.forced_kernels = Tensor<double>({2, 36});
  CHECK(conv(f, v).value() == conv.mix(Var<double>(Tensor<double>({2, 4, 6, 6}))).value());
  conv.forced_kernels.reset();
  CHECK(conv.kernels(v).value().shape() == Shape{2, 36});
  CHECK(conv(f, v).value().shape() == Shape{2, 5, 6, 6});
}

TEST_CASE("residual block identity and shapes") {
  Rng rng(3);
  const UNetConfig config = small_config();
  ResBlock<double> block(8, 8, 16, config, rng);
  CHECK_FALSE(block.shortcut.has_value());
  const Var<double> x(rng.normal_tensor<double>({2, 8, 4, 4}));
  const Var<double> te(rng.normal_tensor<double>({2, 16}));
  const Var<double> v(rng.normal_tensor<double>({2, 6}));
  CHECK(block(x, te, v).value().shape() == x.shape());
  block.daconv.mix.zero();
  CHECK(block(x, te, v).value() == x.value());

  ResBlock<double> widen(8, 16, 16, config, rng);
  CHECK(widen.shortcut.has_value());
  CHECK(widen(x, te, v).value().shape() == Shape{2, 16, 4, 4});
}

TEST_CASE("finite-difference suite at fp64") {
  for (const auto& entry : run_grad_suite(0)) {
    if (entry.precision != "fp64") continue;
    INFO(entry.name << " " << entry.error);
    CHECK(entry.passed());
  }
}

TEST_CASE("denoiser shape contract with default widths") {
  Rng rng(4);
  UNetConfig config;
  Denoiser<float> net(config, rng);
  const Var<float> x(rng.normal_tensor<float>({1, 3, 64, 64}));
  const Var<float> u(rng.normal_tensor<float>({1, 64, 16, 16}));
  const Var<float> v(rng.normal_tensor<float>({1, 256}));
  const auto out = net(x, {500}, u, v).value();
  CHECK(out.shape() == Shape{1, 3, 64, 64});
  CHECK(out.all_finite());
  CHECK(config.size_multiple() == 32);
}

TEST_CASE("denoiser determinism and errors") {
  Rng rng(5);
  const UNetConfig config = small_config();
  Denoiser<float> net(config, rng);
  const Var<float> x(rng.normal_tensor<float>({2, 3, 16, 24}));
  const Var<float> u(rng.normal_tensor<float>({2, 8, 4, 6}));
  const Var<float> v(rng.normal_tensor<float>({2, 6}));
  const auto a = net(x, {3, 70}, u, v).value();
  CHECK(a.shape() == Shape{2, 3, 16, 24});
  CHECK(net(x, {3, 70}, u, v).value() == a);
  CHECK_FALSE(net(x, {4, 70}, u, v).value() == a);
  CHECK_THROWS_AS(net(Var<float>(Tensor<float>({2, 3, 12, 24})), {3, 70}, u, v), DimensionError);
  CHECK_THROWS_AS(net(x, {3}, u, v), DimensionError);
  CHECK_THROWS_AS(net(x, {3, 70}, u, Var<float>(Tensor<float>({2, 7}))), DimensionError);
}

TEST_CASE("ablation ignores the degradation vector") {
  Rng rng(6);
  UNetConfig config = small_config();
  config.use_degradation = false;
  Denoiser<float> net(config, rng);
  const Var<float> x(rng.normal_tensor<float>({1, 3, 8, 8}));
  const Var<float> u(rng.normal_tensor<float>({1, 8, 2, 2}));
  const auto a = net(x, {10}, u, Var<float>(rng.normal_tensor<float>({1, 6}))).value();
  const auto b = net(x, {10}, u, Var<float>(rng.normal_tensor<float>({1, 6}))).value();
  CHECK(a == b);
  CHECK(a.shape() == Shape{1, 3, 8, 8});
}

TEST_CASE("every denoiser parameter receives gradient") {
  Rng rng(7);
  Denoiser<double> net(small_config(), rng);
  const Var<double> x(rng.normal_tensor<double>({2, 3, 8, 8}));
  const Var<double> u(rng.normal_tensor<double>({2, 8, 2, 2}), true);
  const Var<double> v(rng.normal_tensor<double>({2, 6}), true);
  const auto target = rng.normal_tensor<double>({2, 3, 8, 8});
  backward(mean_abs(sub(net(x, {5, 60}, u, v), Var<double>(target))));
  nn::ParameterList<double> params;
  net.collect("denoiser", params);
  for (const auto& p : params) {
    INFO(p.name);
    CHECK(p.var.grad().values().abs().maxCoeff() > 0);
  }
  CHECK(u.grad().values().abs().maxCoeff() > 0);
  CHECK(v.grad().values().abs().maxCoeff() > 0);
}

TEST_CASE("U-Net config validation") {
  UNetConfig c = small_config();
  c.multipliers = {1};
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = small_config();
  c.groupnorm_groups = 3;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}
