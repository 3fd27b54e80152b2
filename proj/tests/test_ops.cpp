#include <doctest.h>

#include <cmath>

#include "blindsnf/gradcheck.hpp"
#include "blindsnf/ops.hpp"
#include "blindsnf/rng.hpp"

using namespace blindsnf;

namespace {

using V = Var<double>;
using T = Tensor<double>;
constexpr double kStep = 1e-6;
constexpr double kTol = 1e-5;

V contract(const V& out, const T& weights) { return sum(mul(out, V(weights))); }

T random(Rng& rng, Shape shape) { return rng.normal_tensor<double>(std::move(shape)); }

// Direct nested-loop convolution with zero padding.
T naive_conv(const T& x, const T& w, const T& b, Index stride, Index pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index o = w.dim(0), k = w.dim(2);
  const Index oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  T out({n, o, oh, ow});
  for (Index bi = 0; bi < n; ++bi)
    for (Index oc = 0; oc < o; ++oc)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          double acc = b[oc];
          for (Index ic = 0; ic < c; ++ic)
            for (Index di = 0; di < k; ++di)
              for (Index dj = 0; dj < k; ++dj) {
                const Index y = i * stride + di - pad, xx = j * stride + dj - pad;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                acc += x(bi, ic, y, xx) * w[((oc * c + ic) * k + di) * k + dj];
              }
          out(bi, oc, i, j) = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution") {
  Rng rng(1);
  for (auto [k, stride, pad] : {std::tuple<Index, Index, Index>{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {2, 2, 0}}) {
    const T x = random(rng, {2, 3, 7, 6});
    const T w = random(rng, {4, 3, k, k});
    const T b = random(rng, {4});
    const T got = conv2d(V(x), V(w), V(b), stride, pad).value();
    const T want = naive_conv(x, w, b, stride, pad);
    REQUIRE(got.shape() == want.shape());
    CHECK((got.values() - want.values()).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv2d gradients") {
  Rng rng(2);
  for (auto [k, stride, pad] : {std::tuple<Index, Index, Index>{3, 1, 1}, {3, 2, 1}, {1, 1, 0}}) {
    const T x = random(rng, {2, 2, 5, 5});
    const T w = random(rng, {3, 2, k, k});
    const T b = random(rng, {3});
    const T probe = conv2d(V(x), V(w), V(b), stride, pad).value();
    const T weights = random(rng, probe.shape());
    CHECK(grad_check<double>([&](const V& v) { return contract(conv2d(v, V(w), V(b), stride, pad), weights); }, x,
                             kStep) < kTol);
    CHECK(grad_check<double>([&](const V& v) { return contract(conv2d(V(x), v, V(b), stride, pad), weights); }, w,
                             kStep) < kTol);
    CHECK(grad_check<double>([&](const V& v) { return contract(conv2d(V(x), V(w), v, stride, pad), weights); }, b,
                             kStep) < kTol);
  }
}

TEST_CASE("linear and pointwise gradients") {
  Rng rng(3);
  const T x = random(rng, {3, 4});
  const T w = random(rng, {5, 4});
  const T b = random(rng, {5});
  const T weights = random(rng, {3, 5});
  CHECK(grad_check<double>([&](const V& v) { return contract(linear(v, V(w), V(b)), weights); }, x, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(linear(V(x), v, V(b)), weights); }, w, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(linear(V(x), V(w), v), weights); }, b, kStep) < kTol);

  const T y = random(rng, {2, 3, 4});
  const T wy = random(rng, {2, 3, 4});
  CHECK(grad_check<double>([&](const V& v) { return contract(silu(v), wy); }, y, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(leaky_relu(v, 0.1), wy); }, y, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return mean_abs(v); }, y, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return mean(mul(v, v)); }, y, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(scale(sub(v, V(wy)), 3.0), wy); }, y, kStep) < kTol);
}

TEST_CASE("pointwise forward values") {
  const T x(Shape{4}, T::Array{{-2.0, -0.5, 0.0, 1.5}});
  const T s = silu(V(x)).value();
  const T l = leaky_relu(V(x), 0.1).value();
  for (Index i = 0; i < 4; ++i) {
    CHECK(s[i] == doctest::Approx(x[i] / (1 + std::exp(-x[i]))));
    CHECK(l[i] == doctest::Approx(x[i] > 0 ? x[i] : 0.1 * x[i]));
  }
  CHECK(mean_abs(V(x)).value()[0] == doctest::Approx(1.0));
}

TEST_CASE("group norm forward and gradients") {
  Rng rng(4);
  const T x = random(rng, {2, 4, 3, 3});
  const T gamma = random(rng, {4});
  const T beta = random(rng, {4});
  const T y = group_norm(V(x), 2, V(T({4}, 1.0)), V(T({4}, 0.0)), 0.0).value();
  for (Index n = 0; n < 2; ++n)
    for (Index g = 0; g < 2; ++g) {
      double m = 0, sq = 0;
      for (Index c = 2 * g; c < 2 * g + 2; ++c)
        for (Index i = 0; i < 9; ++i) {
          m += y[(n * 4 + c) * 9 + i];
          sq += y[(n * 4 + c) * 9 + i] * y[(n * 4 + c) * 9 + i];
        }
      CHECK(std::abs(m / 18) < 1e-12);
      CHECK(sq / 18 == doctest::Approx(1.0));
    }
  const T weights = random(rng, x.shape());
  CHECK(grad_check<double>([&](const V& v) { return contract(group_norm(v, 2, V(gamma), V(beta)), weights); }, x,
                           kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(group_norm(V(x), 2, v, V(beta)), weights); }, gamma,
                           kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(group_norm(V(x), 2, V(gamma), v), weights); }, beta,
                           kStep) < kTol);
}

TEST_CASE("batch norm statistics and gradients") {
  Rng rng(5);
  const T x = random(rng, {3, 2, 4, 4});
  T mean_run({2}), var_run({2}, 1.0);
  const T y = batch_norm(V(x), V(T({2}, 1.0)), V(T({2}, 0.0)), mean_run, var_run, true).value();
  for (Index c = 0; c < 2; ++c) {
    double m = 0, xm = 0, xs = 0;
    for (Index n = 0; n < 3; ++n)
      for (Index i = 0; i < 16; ++i) {
        m += y[(n * 2 + c) * 16 + i];
        xm += x[(n * 2 + c) * 16 + i];
        xs += x[(n * 2 + c) * 16 + i] * x[(n * 2 + c) * 16 + i];
      }
    CHECK(std::abs(m / 48) < 1e-12);
    xm /= 48;
    const double unbiased = (xs / 48 - xm * xm) * 48 / 47;
    CHECK(mean_run[c] == doctest::Approx(0.1 * xm));
    CHECK(var_run[c] == doctest::Approx(0.9 + 0.1 * unbiased));
  }
  // eval mode uses the running estimates and leaves them untouched
  const T before_mean = mean_run, before_var = var_run;
  const T e = batch_norm(V(x), V(T({2}, 1.0)), V(T({2}, 0.0)), mean_run, var_run, false).value();
  CHECK(mean_run == before_mean);
  CHECK(e(0, 1, 0, 0) == doctest::Approx((x(0, 1, 0, 0) - mean_run[1]) / std::sqrt(var_run[1] + 1e-5)));

  const T gamma = random(rng, {2});
  const T beta = random(rng, {2});
  const T weights = random(rng, x.shape());
  const auto f = [&](const V& in, const V& g, const V& b) {
    T rm({2}), rv({2}, 1.0);
    return contract(batch_norm(in, g, b, rm, rv, true), weights);
  };
  CHECK(grad_check<double>([&](const V& v) { return f(v, V(gamma), V(beta)); }, x, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return f(V(x), v, V(beta)); }, gamma, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return f(V(x), V(gamma), v); }, beta, kStep) < kTol);
}

TEST_CASE("depthwise conv forward and gradients") {
  Rng rng(6);
  const T x = random(rng, {2, 3, 5, 4});
  const T k = random(rng, {2, 27});
  const T y = depthwise_conv3x3(V(x), V(k)).value();
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 3; ++c) {
      T w({1, 1, 3, 3});
      for (Index i = 0; i < 9; ++i) w[i] = k[n * 27 + c * 9 + i];
      T xs({1, 1, 5, 4});
      for (Index i = 0; i < 20; ++i) xs[i] = x[(n * 3 + c) * 20 + i];
      const T want = naive_conv(xs, w, T({1}), 1, 1);
      for (Index i = 0; i < 20; ++i) CHECK(y[(n * 3 + c) * 20 + i] == doctest::Approx(want[i]));
    }
  const T weights = random(rng, x.shape());
  CHECK(grad_check<double>([&](const V& v) { return contract(depthwise_conv3x3(v, V(k)), weights); }, x, kStep) <
        kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(depthwise_conv3x3(V(x), v), weights); }, k, kStep) <
        kTol);
}

TEST_CASE("structural op gradients") {
  Rng rng(7);
  const T a = random(rng, {2, 3, 4, 4});
  const T b = random(rng, {2, 2, 4, 4});
  const T wc = random(rng, {2, 5, 4, 4});
  CHECK(grad_check<double>([&](const V& v) { return contract(concat_channels(v, V(b)), wc); }, a, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(concat_channels(V(a), v), wc); }, b, kStep) < kTol);
  const T ws = random(rng, {1, 3, 4, 4});
  CHECK(grad_check<double>([&](const V& v) { return contract(slice_batch(v, 1, 1), ws); }, a, kStep) < kTol);
  const T wr = random(rng, {2, 3, 6, 10});
  CHECK(grad_check<double>([&](const V& v) { return contract(resize_nearest(v, 6, 10), wr); }, a, kStep) < kTol);
  const T bias = random(rng, {2, 3});
  CHECK(grad_check<double>([&](const V& v) { return contract(add_channel_bias(v, V(bias)), a); }, a, kStep) < kTol);
  CHECK(grad_check<double>([&](const V& v) { return contract(add_channel_bias(V(a), v), a); }, bias, kStep) < kTol);
  const T wp = random(rng, {2, 3});
  CHECK(grad_check<double>([&](const V& v) { return contract(global_avg_pool(v), wp); }, a, kStep) < kTol);
  const T wf = random(rng, {2, 12, 2, 2});
  CHECK(grad_check<double>([&](const V& v) { return contract(space_to_depth(v, 2), wf); }, a, kStep) < kTol);
  const T wd = random(rng, {2, 1, 8, 8});
  const T d = random(rng, {2, 4, 4, 4});
  CHECK(grad_check<double>([&](const V& v) { return contract(depth_to_space(v, 2), wd); }, d, kStep) < kTol);
  const T rows = random(rng, {3, 5});
  const T wn = random(rng, {3, 5});
  CHECK(grad_check<double>([&](const V& v) { return contract(l2_normalize_rows(v), wn); }, rows, kStep) < kTol);
  const T wreshape = random(rng, {6, 16});
  CHECK(grad_check<double>([&](const V& v) { return contract(reshape(v, {6, 16}), wreshape); }, random(rng, {2, 3, 4, 4}),
                           kStep) < kTol);
}

TEST_CASE("nearest resize and normalization forward values") {
  T x({1, 1, 2, 2});
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  x[3] = 4;
  const T y = resize_nearest(V(x), 4, 4).value();
  CHECK(y(0, 0, 0, 0) == 1);
  CHECK(y(0, 0, 1, 1) == 1);
  CHECK(y(0, 0, 0, 3) == 2);
  CHECK(y(0, 0, 3, 0) == 3);
  CHECK(y(0, 0, 3, 3) == 4);
  const T n = l2_normalize_rows(V(T({2, 2}, T::Array{{3.0, 4.0, 0.0, 2.0}}))).value();
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  CHECK(n[3] == doctest::Approx(1.0));
}

TEST_CASE("contrastive loss gradients") {
  Rng rng(8);
  const T w = random(rng, {3, 4});
  const T p = random(rng, {3, 4});
  const T q = random(rng, {5, 4});
  for (bool include : {false, true}) {
    CHECK(grad_check<double>([&](const V& v) { return contrastive_loss(v, V(p), q, 0.5, include); }, w, kStep) <
          kTol);
    CHECK(grad_check<double>([&](const V& v) { return contrastive_loss(V(w), v, q, 0.5, include); }, p, kStep) <
          kTol);
  }
}

TEST_CASE("contrastive loss errors") {
  const T w({2, 3}, 0.1);
  CHECK_THROWS_AS(contrastive_loss(V(w), V(w), T(), 0.1), StateError);
  CHECK_THROWS_AS(contrastive_loss(V(w), V(w), T({4, 2}), 0.1), DimensionError);
  CHECK_THROWS_AS(contrastive_loss(V(w), V(w), T({4, 3}), 0.0), ParameterError);
}

TEST_CASE("autograd graph behaviour") {
  V x(T({2}, 1.0), true);
  const V y = add(mul(x, x), x);  // x is reused
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  backward(sum(y));  // leaf gradients accumulate
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
  CHECK_THROWS_AS(backward(y), ContractError);
  {
    NoGradGuard guard;
    const V z = mul(x, x);
    CHECK_FALSE(z.requires_grad());
  }
  CHECK(mul(x, x).requires_grad());
  CHECK_FALSE(mul(x.detach(), x.detach()).requires_grad());
}
