#include <doctest.h>

#include <cmath>
#include <fstream>

#include "blindsnf/checkpoint.hpp"
#include "blindsnf/errors.hpp"
#include "blindsnf/trainer.hpp"
#include "fixtures.hpp"

using namespace blindsnf;
using blindsnf::testing::scratch;
using blindsnf::testing::synthetic_image;
using blindsnf::testing::tiny_config;

namespace {

std::vector<TrainingExample> tiny_data(int count = 3, Index size = 24) {
  Rng rng(99);
  std::vector<TrainingExample> data;
  for (int i = 0; i < count; ++i) data.push_back({synthetic_image(rng, size, size), std::nullopt});
  return data;
}

bool same_parameters(const BlindSrModel<float>& a, const BlindSrModel<float>& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(pa[i].var.value() == pb[i].var.value())) return false;
  return true;
}

}  // namespace

TEST_CASE("snf_loss of a perfect denoiser is zero") {
  const auto schedule = make_schedule(50, 1e-4, 2e-2);
  Rng rng(1);
  const auto x_hr = rng.normal_tensor<double>({2, 3, 4, 4});
  const auto eps = rng.normal_tensor<double>({2, 3, 4, 4});
  const DenoiseGraphFn<double> oracle = [&](const Var<double>&, const std::vector<int>&, const Var<double>&,
                                            const Var<double>&) { return Var<double>(x_hr); };
  CHECK(snf_loss(x_hr, {3, 50}, eps, Var<double>(), Var<double>(), schedule, oracle).value()[0] == 0.0);
}

TEST_CASE("snf_loss is the mean absolute residual") {
  const auto schedule = make_schedule(50, 1e-4, 2e-2);
  Rng rng(2);
  const auto x_hr = rng.normal_tensor<double>({2, 3, 4, 4});
  const auto eps = rng.normal_tensor<double>({2, 3, 4, 4});
  const DenoiseGraphFn<double> shifted = [&](const Var<double>&, const std::vector<int>&, const Var<double>&,
                                             const Var<double>&) {
    return Var<double>(Tensor<double>(x_hr.shape(), x_hr.values() + 0.3));
  };
  CHECK(snf_loss(x_hr, {1, 2}, eps, Var<double>(), Var<double>(), schedule, shifted).value()[0] ==
        doctest::Approx(0.3).epsilon(1e-12));

  std::vector<int> seen;
  Tensor<double> seen_input;
  const DenoiseGraphFn<double> identity = [&](const Var<double>& x_t, const std::vector<int>& steps,
                                              const Var<double>&, const Var<double>&) {
    seen = steps;
    seen_input = x_t.value();
    return x_t;
  };
  const double loss = snf_loss(x_hr, {7, 50}, eps, Var<double>(), Var<double>(), schedule, identity).value()[0];
  CHECK(seen == std::vector<int>{7, 50});
  double expected = 0.0;
  const Index per = x_hr.size() / 2;
  for (Index i = 0; i < x_hr.size(); ++i) {
    const int t = i < per ? 7 : 50;
    const double x_t = std::sqrt(schedule.alpha_bar[t]) * x_hr[i] + std::sqrt(1.0 - schedule.alpha_bar[t]) * eps[i];
    CHECK(seen_input[i] == doctest::Approx(x_t).epsilon(1e-14));
    expected += std::abs(x_hr[i] - x_t);
  }
  CHECK(loss == doctest::Approx(expected / static_cast<double>(x_hr.size())).epsilon(1e-12));
}

TEST_CASE("snf_loss rejects bad steps") {
  const auto schedule = make_schedule(10, 1e-4, 2e-2);
  const Tensor<double> x({2, 3, 2, 2});
  const DenoiseGraphFn<double> h = [](const Var<double>& x_t, const std::vector<int>&, const Var<double>&,
                                      const Var<double>&) { return x_t; };
  CHECK_THROWS_AS(snf_loss(x, {0, 1}, x, {}, {}, schedule, h), ParameterError);
  CHECK_THROWS_AS(snf_loss(x, {1, 11}, x, {}, {}, schedule, h), ParameterError);
  CHECK_THROWS_AS(snf_loss(x, {1}, x, {}, {}, schedule, h), DimensionError);
}

TEST_CASE("Adam matches the bias-corrected update") {
  Var<float> p(Tensor<float>({2}, 1.0f), true);
  Var<float> frozen(Tensor<float>({1}, 5.0f), false);
  const double lr = 0.1, b1 = 0.9, b2 = 0.99, eps = 1e-8;
  Adam adam({{"p", p, true}, {"frozen", frozen, false}}, lr, b1, b2, eps);
  const double grads[3][2] = {{0.5, -2.0}, {0.1, 1.0}, {-0.4, 0.0}};
  double value[2] = {1.0, 1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int k = 0; k < 3; ++k) {
    Tensor<float> g({2});
    g[0] = static_cast<float>(grads[k][0]);
    g[1] = static_cast<float>(grads[k][1]);
    backward(sum(mul(p, Var<float>(g))));
    adam.step();
    CHECK_FALSE(p.has_grad());
    for (int j = 0; j < 2; ++j) {
      m[j] = b1 * m[j] + (1 - b1) * grads[k][j];
      v[j] = b2 * v[j] + (1 - b2) * grads[k][j] * grads[k][j];
      const double mh = m[j] / (1 - std::pow(b1, k + 1)), vh = v[j] / (1 - std::pow(b2, k + 1));
      value[j] -= lr * mh / (std::sqrt(vh) + eps);
      CHECK(p.value()[j] == doctest::Approx(value[j]).epsilon(1e-5));
    }
  }
  CHECK(adam.iterations() == 3);
  CHECK(frozen.value()[0] == 5.0f);
}

TEST_CASE("one step updates every sub-model and the queue") {
  Trainer trainer(tiny_config(), tiny_data());
  std::map<std::string, Tensor<float>> before;
  for (const auto& p : trainer.model().parameters()) before[p.name] = p.var.value();
  const LossBreakdown loss = trainer.step();
  CHECK(loss.step == 1);
  CHECK(loss.snf > 0.0);
  CHECK(loss.encoder > 0.0);
  CHECK(loss.degrad == 0.0);
  CHECK(trainer.queue().size() == 2);
  for (const std::string prefix : {"lr_encoder.", "degradation.", "denoiser."}) {
    bool moved = false;
    for (const auto& p : trainer.model().parameters())
      if (p.trainable && p.name.rfind(prefix, 0) == 0 && !(p.var.value() == before[p.name])) moved = true;
    CHECK_MESSAGE(moved, prefix);
  }
  const LossBreakdown second = trainer.step();
  CHECK(second.degrad > 0.0);
  CHECK(second.total == second.snf + second.encoder + second.degrad);
}

TEST_CASE("training is deterministic for a seed") {
  Trainer a(tiny_config(), tiny_data()), b(tiny_config(), tiny_data());
  for (int k = 0; k < 3; ++k) {
    const auto la = a.step(), lb = b.step();
    CHECK(la.total == lb.total);
  }
  CHECK(same_parameters(a.model(), b.model()));
}

TEST_CASE("disabled losses contribute nothing") {
  auto config = tiny_config();
  config.use_degrad_loss = false;
  Trainer trainer(config, tiny_data());
  for (int k = 0; k < 3; ++k) {
    const auto loss = trainer.step();
    CHECK(loss.degrad == 0.0);
    CHECK(loss.total == loss.snf + loss.encoder);
  }
  CHECK(trainer.queue().empty());

  config = tiny_config();
  config.use_snf_loss = false;
  config.use_encoder_loss = false;
  Trainer contrastive(config, tiny_data());
  contrastive.step();
  const auto loss = contrastive.step();
  CHECK(loss.snf == 0.0);
  CHECK(loss.encoder == 0.0);
  CHECK(loss.total == loss.degrad);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted trajectory") {
  const auto dir = scratch("resume");
  Trainer straight(tiny_config(), tiny_data());
  for (int k = 0; k < 2; ++k) straight.step();
  straight.save_checkpoint(dir / "mid.ckpt");
  std::vector<double> expected;
  for (int k = 0; k < 2; ++k) expected.push_back(straight.step().total);

  Trainer resumed = Trainer::load_checkpoint(dir / "mid.ckpt", tiny_data());
  CHECK(resumed.steps_done() == 2);
  CHECK(resumed.queue().size() == 4);
  for (int k = 0; k < 2; ++k) CHECK(resumed.step().total == expected[static_cast<std::size_t>(k)]);
  CHECK(same_parameters(straight.model(), resumed.model()));

  const LoadedModel loaded = load_model(dir / "mid.ckpt");
  CHECK(loaded.config.T == tiny_config().T);
}

TEST_CASE("checkpoint reader rejects corrupt files") {
  const auto dir = scratch("corrupt");
  CheckpointArchive archive;
  archive.texts["note"] = "hello";
  archive.tensors["t"] = Tensor<float>({2, 3}, 1.5f);
  write_checkpoint(dir / "ok.ckpt", archive);
  const auto back = read_checkpoint(dir / "ok.ckpt");
  CHECK(back.text("note") == "hello");
  CHECK(back.tensor("t") == archive.tensors["t"]);
  CHECK_THROWS_AS(back.tensor("missing"), ParseError);

  std::string bytes;
  {
    std::ifstream in(dir / "ok.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(read_checkpoint(write("magic.ckpt", bad_magic)), ParseError);
  CHECK_THROWS_AS(read_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() - 3))), ParseError);
  std::string future = bytes;
  future[8] = 2;
  CHECK_THROWS_AS(read_checkpoint(write("version.ckpt", future)), VersionError);
  CHECK_THROWS_AS(read_checkpoint(dir / "absent.ckpt"), ParseError);
}

TEST_CASE("non-finite loss writes the dump and raises") {
  const auto dir = scratch("nan");
  Trainer trainer(tiny_config(), tiny_data());
  trainer.dump_path = dir / "dump.ckpt";
  for (auto& p : trainer.model().parameters())
    if (p.name.rfind("lr_encoder.", 0) == 0 && p.trainable) {
      Var<float> handle = p.var;
      handle.mutable_value().values().setConstant(NAN);
      break;
    }
  CHECK_THROWS_AS(trainer.step(), NumericalError);
  CHECK(std::filesystem::exists(dir / "dump.ckpt"));
}

TEST_CASE("trainer rejects empty data and invalid configs") {
  CHECK_THROWS_AS(Trainer(tiny_config(), {}), ParameterError);
  auto config = tiny_config();
  config.T = 0;
  CHECK_THROWS_AS(Trainer(config, tiny_data()), ParameterError);
}
