#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "snndec/checkpoint.hpp"
#include "snndec/config.hpp"
#include "snndec/errors.hpp"

using namespace snndec;

TEST(Config, PresetsCarryReferenceHyperparameters) {
  const auto a = preset("paper_a");
  const auto b = preset("paper_b");
  EXPECT_EQ(a.bin_ms, 50.0);
  EXPECT_EQ(b.bin_ms, 32.0);
  EXPECT_EQ(a.train.network, NetworkConfig::paper());
  EXPECT_EQ(a.train.epochs_fp, 60u);
  EXPECT_EQ(a.train.quant.weight_bits, 4);
  EXPECT_THROW(preset("paper_c"), ConfigError);
}

TEST(Config, KeyValueParsing) {
  const auto j = parse_kv(R"(
# comment
preset = "paper_b"
[train]
epochs = 12      # trailing comment
learning_rate = 1e-3
[network]
layer_sizes = [96, 64, 2]
v_th = [0.5]
output_spiking = false
)");
  EXPECT_EQ(j["preset"], "paper_b");
  EXPECT_EQ(j["train"]["epochs"], 12);
  EXPECT_DOUBLE_EQ(j["train"]["learning_rate"].get<double>(), 1e-3);
  EXPECT_EQ(j["network"]["layer_sizes"].size(), 3u);
  EXPECT_EQ(j["network"]["output_spiking"], false);
}

TEST(Config, OverridesApplyOnTopOfPreset) {
  const auto c = parse_config(R"(
preset = "paper_b"
[train]
epochs = 3
dropout = 0.0
[quant]
weight_bits = 8
scale_rule = "power-of-two"
[machine]
dma_bytes_per_cycle = 16.0
)");
  EXPECT_EQ(c.preset, "paper_b");
  EXPECT_EQ(c.bin_ms, 32.0);
  EXPECT_EQ(c.train.epochs_fp, 3u);
  EXPECT_EQ(c.train.dropout_p, 0.0);
  EXPECT_EQ(c.train.quant.weight_bits, 8);
  EXPECT_EQ(c.train.quant.scale_rule, ScaleRule::PowerOfTwo);
  EXPECT_EQ(c.machine.dma_bytes_per_cycle, 16.0);
  EXPECT_EQ(c.train.learning_rate, 2e-3);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("[train]\nepochz = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs = 3\nepochs = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[train\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\ndropout = 1.0\n"), ConfigError);
  EXPECT_THROW(parse_config("[quant]\nscale_rule = \"odd\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[network]\nlayer_sizes = [96, 64\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/file.toml"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = preset("paper_b");
  c.train.seed = 99;
  c.machine.column_bytes = 128;
  c.ann.hidden = {128, 64};
  const auto j = to_json(c);
  const auto back = run_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.train.seed, 99u);
  EXPECT_EQ(back.ann.hidden, (std::vector<std::size_t>{128, 64}));
}

TEST(Config, ShippedConfigFilesLoad) {
  const std::filesystem::path dir = SNNDEC_SOURCE_DIR "/configs";
  for (const char* name : {"paper_a.toml", "paper_b.toml", "machine_gap9.toml"}) {
    EXPECT_NO_THROW(load_config(dir / name)) << name;
  }
  EXPECT_EQ(load_config(dir / "paper_b.toml").bin_ms, 32.0);
}

TEST(Checkpoint, RoundTripRestoresEverything) {
  auto cfg = preset("paper_a");
  cfg.train.network.layer_sizes = {6, 8, 2};
  cfg.train.network.v_th = {0.4};
  cfg.train.epochs_fp = 1;
  cfg.train.batch_size = 16;
  SyntheticSpec spec;
  spec.frames = 300;
  spec.channels = 6;
  const auto stream = make_synthetic(spec).stream;
  const auto [train, val] = split(stream);
  auto run = start_run(cfg.train, train);
  continue_run(run, cfg.train, val, 1);
  const auto ckpt = make_checkpoint(cfg, run);

  const auto path = std::filesystem::temp_directory_path() / "snndec_test.snnc";
  save_checkpoint(ckpt, path);
  const auto back = load_checkpoint(path);
  std::filesystem::remove(path);

  EXPECT_EQ(back.epochs_done, 1u);
  EXPECT_EQ(back.rng_state, ckpt.rng_state);
  EXPECT_EQ(back.optimizer.steps, ckpt.optimizer.steps);
  EXPECT_EQ(to_json(back.config), to_json(cfg));
  EXPECT_EQ(back.features.mean, ckpt.features.mean);
  EXPECT_EQ(back.velocities.std, ckpt.velocities.std);
  for (std::size_t l = 0; l < ckpt.net.layers.size(); ++l) {
    const auto& a = ckpt.net.layers[l];
    const auto& b = back.net.layers[l];
    EXPECT_EQ(a.params.weights, b.params.weights);
    EXPECT_EQ(a.params.decay, b.params.decay);
    EXPECT_EQ(a.bn.running_var, b.bn.running_var);
    EXPECT_EQ(a.bn.gamma, b.bn.gamma);
    EXPECT_EQ(ckpt.optimizer.m.layers[l].weights, back.optimizer.m.layers[l].weights);
    EXPECT_EQ(ckpt.optimizer.v.layers[l].beta, back.optimizer.v.layers[l].beta);
  }
  std::ofstream(path) << "garbage";
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
}
