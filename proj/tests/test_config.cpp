#include <doctest.h>

#include "blindsnf/config.hpp"
#include "blindsnf/errors.hpp"

using namespace blindsnf;

TEST_CASE("config text round trip preserves every key") {
  TrainConfig config;
  config.learning_rate = 3.3e-5;
  config.temperature = 0.1 / 3.0;
  config.channel_multipliers = "1,2,4";
  config.unet_depth = 3;
  config.include_positive = true;
  config.seed = 18446744073709551615ULL;
  const TrainConfig back = TrainConfig::parse(config.to_text());
  for (const auto& key : TrainConfig::keys()) CHECK_MESSAGE(back.get(key) == config.get(key), key);
  CHECK(back.temperature == config.temperature);
  CHECK(back.seed == config.seed);
}

TEST_CASE("config parsing accepts comments and rejects junk") {
  const auto config = TrainConfig::parse("# comment\n  T = 100  # trailing\n\nuse_degrad_loss = false\n");
  CHECK(config.T == 100);
  CHECK_FALSE(config.use_degrad_loss);
  CHECK_THROWS_AS(TrainConfig::parse("nonsense = 1\n"), ParameterError);
  CHECK_THROWS_AS(TrainConfig::parse("T 100\n"), ParseError);
  CHECK_THROWS_AS(TrainConfig::parse("T = ten\n"), ParameterError);
  CHECK_THROWS_AS(TrainConfig::parse("use_snf_loss = maybe\n"), ParameterError);
}

TEST_CASE("defaults are valid and range errors are caught") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  auto expect_invalid = [](auto mutate) {
    TrainConfig config;
    mutate(config);
    CHECK_THROWS_AS(config.validate(), ParameterError);
  };
  expect_invalid([](TrainConfig& c) { c.gamma = 30; });
  expect_invalid([](TrainConfig& c) { c.eta = -0.1; });
  expect_invalid([](TrainConfig& c) { c.beta_end = 1.5; });
  expect_invalid([](TrainConfig& c) { c.temperature = 0; });
  expect_invalid([](TrainConfig& c) { c.degradation_mode = "gaussian"; });
  expect_invalid([](TrainConfig& c) { c.downsampler = "lanczos"; });
  expect_invalid([](TrainConfig& c) { c.channel_multipliers = "1,2"; });
  expect_invalid([](TrainConfig& c) { c.learning_rate = 0; });
}

TEST_CASE("model config mirrors the flat keys") {
  TrainConfig config;
  config.scale_r = 3;
  config.rrdb_channels = 12;
  const auto m = config.model_config();
  CHECK(m.scale == 3);
  CHECK(m.rrdb.channels == 12);
  CHECK(m.unet.cond_channels == 12);
  CHECK(m.unet.multipliers == std::vector<Index>{1, 2, 2, 2});
}
