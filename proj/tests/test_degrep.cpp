#include <doctest.h>

#include <cmath>

#include "blindsnf/degrep.hpp"
#include "blindsnf/gradcheck.hpp"

using namespace blindsnf;

namespace {

Tensor<double> rows(std::initializer_list<std::initializer_list<double>> values) {
  const Index n = static_cast<Index>(values.size()), d = static_cast<Index>(values.begin()->size());
  Tensor<double> t({n, d});
  Index i = 0;
  for (const auto& row : values)
    for (double v : row) t[i++] = v;
  return t;
}

}  // namespace

TEST_CASE("degradation encoder shapes and determinism") {
  Rng rng(1);
  DegradationEncoder<float> enc(rng);
  CHECK(enc.representation_dim() == 256);
  CHECK(enc.proj_dim() == 256);
  const auto x = rng.uniform_tensor<float>({2, 3, 64, 64}, -1, 1);
  const auto v = enc.encode(Var<float>(x), false).value();
  CHECK(v.shape() == Shape{2, 256});
  CHECK(v.all_finite());
  CHECK(enc.encode(Var<float>(x), false).value() == v);
  const auto w = enc.project(Var<float>(v)).value();
  CHECK(w.shape() == Shape{2, 256});
  CHECK(enc.project(Var<float>(v)).value() == w);

  Tensor<float> twin({2, 3, 64, 64});
  for (Index b = 0; b < 2; ++b)
    for (Index i = 0; i < 3 * 64 * 64; ++i) twin[b * 3 * 64 * 64 + i] = x[i];
  const auto vt = enc.encode(Var<float>(twin), false).value();
  CHECK(vt.matrix().row(0) == vt.matrix().row(1));

  CHECK_THROWS_AS(enc.encode(Var<float>(Tensor<float>({1, 3, 3, 8})), false), DimensionError);
  CHECK_THROWS_AS(enc.encode(Var<float>(Tensor<float>({1, 1, 8, 8})), false), DimensionError);
  CHECK(enc.encode(Var<float>(Tensor<float>({1, 3, 4, 4})), false).value().shape() == Shape{1, 256});
}

TEST_CASE("strided layers reduce 64x64 to 16x16") {
  Rng rng(2);
  for (int layers = 1; layers <= 6; ++layers) {
    DegradationEncoder<float> enc(rng, 8, layers);
    const Index expected[] = {64, 64, 128, 128, 256, 256};
    CHECK(enc.representation_dim() == expected[layers - 1]);
  }
  // the spatial path is fixed by the conv strides: 64 -> 64 -> 64 -> 32 -> 32 -> 16 -> 16
  Index size = 64;
  for (Index stride : {1, 1, 2, 1, 2, 1}) size = (size + 2 - 3) / stride + 1;
  CHECK(size == 16);
}

TEST_CASE("two-layer encoder gradient") {
  Rng rng(3);
  DegradationEncoder<double> enc(rng, 8, 2);
  const auto x = rng.normal_tensor<double>({2, 3, 8, 8});
  const auto weights = rng.normal_tensor<double>({2, 64});
  const double err = grad_check<double>(
      [&](const Var<double>& in) { return sum(mul(enc.encode(in, true), Var<double>(weights))); }, x, 1e-4);
  CHECK(err < 1e-5);
  const auto v = rng.normal_tensor<double>({2, 64});
  const auto wp = rng.normal_tensor<double>({2, 8});
  CHECK(grad_check<double>([&](const Var<double>& in) { return sum(mul(enc.project(in), Var<double>(wp))); }, v,
                           1e-6) < 1e-5);
}

TEST_CASE("contrastive loss closed forms") {
  for (Index nq : {1, 4, 2048}) {
    NegativeQueue<double> queue(nq, 3, 0.07);
    Tensor<double> q({nq, 3});
    for (Index i = 0; i < nq; ++i) q.matrix().row(i) << 0.6, 0.0, 0.8;
    queue.push(q);
    const Var<double> w(rows({{0.6, 0.0, 0.8}}));
    CHECK(std::abs(contrastive_loss(w, w, queue).value()[0] - std::log(double(nq))) < 1e-6);
  }
  NegativeQueue<double> single(1, 2, 0.5);
  single.push(rows({{0.3, -0.4}}));
  const Var<double> w(rows({{1.0, 2.0}}));
  const Var<double> pos(rows({{0.5, 0.25}}));
  const double s_pos = 1.0, s_neg = 0.3 - 0.8;
  CHECK(std::abs(contrastive_loss(w, pos, single).value()[0] - (s_neg - s_pos) / 0.5) < 1e-6);
  // with the positive term in the denominator the loss is a softplus of the gap
  CHECK(std::abs(contrastive_loss(w, pos, single, true).value()[0] - std::log1p(std::exp((s_neg - s_pos) / 0.5))) <
        1e-9);
}

TEST_CASE("contrastive loss decreases as the positive similarity grows") {
  Rng rng(4);
  NegativeQueue<double> queue(16, 4, 0.1);
  queue.push(rng.normal_tensor<double>({16, 4}));
  const auto w = rng.normal_tensor<double>({1, 4});
  double previous = INFINITY;
  for (double a : {-1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) {
    Tensor<double> pos = w;
    pos.values() *= a;
    const double loss = contrastive_loss(Var<double>(w), Var<double>(pos), queue).value()[0];
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("contrastive loss lower bound") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    NegativeQueue<double> queue(8, 5, 0.2);
    const Index k = rng.uniform_int(1, 8);
    queue.push(rng.normal_tensor<double>({k, 5}));
    const auto w = rng.normal_tensor<double>({1, 5});
    const auto p = rng.normal_tensor<double>({1, 5});
    const double loss = contrastive_loss(Var<double>(w), Var<double>(p), queue).value()[0];
    const auto qm = queue.matrix().matrix();
    const double s_pos = w.matrix().row(0).dot(p.matrix().row(0));
    double gap = -INFINITY;
    for (Index i = 0; i < k; ++i) gap = std::max(gap, s_pos - w.matrix().row(0).dot(qm.row(i)));
    CHECK(std::isfinite(loss));
    CHECK(loss >= -gap / 0.2 - 1e-12);
  }
}

TEST_CASE("gradient points toward the positive when negatives are orthogonal") {
  NegativeQueue<double> queue(2, 3, 0.5);
  queue.push(rows({{0.0, 0.0, 1.0}, {0.0, 0.0, -1.0}}));
  const auto w0 = rows({{1.0, 0.0, 0.0}});
  const auto pos = rows({{0.0, 1.0, 0.0}});
  Var<double> w(w0, true);
  backward(contrastive_loss(w, Var<double>(pos), queue));
  const auto g = w.grad();
  CHECK(-g.matrix().row(0).dot(pos.matrix().row(0)) > 0);
  CHECK(grad_check<double>(
            [&](const Var<double>& in) { return contrastive_loss(in, Var<double>(pos), queue); }, w0, 1e-6) < 1e-5);
}

TEST_CASE("negative queue FIFO") {
  NegativeQueue<double> queue(4, 1, 0.07);
  CHECK(queue.empty());
  CHECK_THROWS_AS(queue.matrix(), StateError);
  const Var<double> w(rows({{1.0}}));
  CHECK_THROWS_AS(contrastive_loss(w, w, queue), StateError);
  for (double v = 1; v <= 5; ++v) queue.push(rows({{v}}));
  const auto m = queue.matrix();
  CHECK(m.shape() == Shape{4, 1});
  CHECK(m[0] == 2);
  CHECK(m[3] == 5);
  queue.push(Tensor<double>());
  CHECK(queue.matrix() == m);
  CHECK_THROWS_AS(queue.push(Tensor<double>({1, 2})), DimensionError);
  CHECK_THROWS_AS(NegativeQueue<double>(0, 1, 0.07), ParameterError);

  Rng rng(6);
  NegativeQueue<double> bounded(37, 2, 0.07);
  for (int i = 0; i < 1000; ++i) {
    bounded.push(rng.normal_tensor<double>({rng.uniform_int(1, 9), 2}));
    CHECK(bounded.size() <= 37);
  }
  CHECK(bounded.size() == 37);
}
