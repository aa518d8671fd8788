#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "snndec/errors.hpp"
#include "snndec/quantizer.hpp"

using namespace snndec;

namespace {

std::vector<LayerParams> random_fused(const NetworkConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 0.3);
  std::uniform_real_distribution<double> d(0, 1);
  std::vector<LayerParams> out;
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    auto p = LayerParams::zeros(cfg.layer_sizes[l + 1], cfg.layer_sizes[l]);
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) {
      p.bias[i] = n(rng);
      p.decay[i] = d(rng);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TEST(LayerScale, Examples) {
  Matrix w(1, 2);
  w << 0.5, -0.25;
  EXPECT_DOUBLE_EQ(layer_scale(w, 8), 254.0);
  w << -1.0, 0.3;
  EXPECT_DOUBLE_EQ(layer_scale(w, 4), 7.0);
  EXPECT_DOUBLE_EQ(layer_scale(w, 4, ScaleRule::PowerOfTwo), 4.0);
  EXPECT_THROW(layer_scale(Matrix::Zero(2, 2), 8), ConfigError);
}

TEST(LayerScale, InvariantUnderRescaling) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> c(0.01, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix w(6, 9);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
    // Power-of-two factors keep every product exact, so codes must match bit for bit.
    const double k = std::ldexp(1.0, static_cast<int>(c(rng)) % 7 - 3);
    const double s = layer_scale(w, 8);
    const Matrix wk = w * k;
    const double sk = layer_scale(wk, 8);
    EXPECT_DOUBLE_EQ(sk, s / k);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      ASSERT_EQ(quantize_value(w.data()[i], s, 8), quantize_value(wk.data()[i], sk, 8));
    }
    // Arbitrary factors: codes agree except possibly on exact half-way ties.
    const double kr = c(rng);
    const Matrix wr = w * kr;
    const double sr = layer_scale(wr, 8);
    EXPECT_NEAR(sr * kr, s, 1e-12 * s);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      EXPECT_LE(std::abs(quantize_value(w.data()[i], s, 8) - quantize_value(wr.data()[i], sr, 8)), 1);
    }
  }
}

TEST(QuantizeValue, Examples) {
  EXPECT_EQ(quantize_value(0.0, 254.0, 8), 0);
  EXPECT_EQ(quantize_value(0.5, 254.0, 8), 127);
  EXPECT_EQ(quantize_value(0.25, 254.0, 8), 64);
  EXPECT_EQ(quantize_value(-0.25, 254.0, 8), -64);
  bool sat = false;
  EXPECT_EQ(quantize_value(10.0, 254.0, 8, &sat), 127);
  EXPECT_TRUE(sat);
  EXPECT_EQ(quantize_value(-10.0, 254.0, 8, &sat), -127);
  EXPECT_TRUE(sat);
}

// Ties away from zero, checked against exact rational rounding of p/q for small integers.
TEST(QuantizeValue, RoundingRuleAgainstExactRationals) {
  for (int num = -400; num <= 400; ++num) {
    for (int den : {2, 4, 8, 16}) {
      const double value = static_cast<double>(num) / den;  // exact in binary
      // Exact reference: floor((2|num| + den) / (2 den)) with the sign restored.
      const long long a = std::llabs(num);
      long long r = (2 * a + den) / (2 * den);
      if (num < 0) r = -r;
      r = std::clamp<long long>(r, -32767, 32767);
      ASSERT_EQ(quantize_value(value, 1.0, 16), r) << num << "/" << den;
    }
  }
}

TEST(QuantizeValue, DequantizationErrorBound) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> n(0, 1);
  Matrix w(20, 30);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  for (int bits : {2, 4, 8}) {
    const double s = layer_scale(w, bits);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double back = static_cast<double>(quantize_value(w.data()[i], s, bits)) / s;
      ASSERT_LE(std::abs(back - w.data()[i]), 0.5 / s + 1e-15);
    }
  }
}

TEST(FixedMembraneUpdate, Examples) {
  EXPECT_EQ(fixed_membrane_update(100, false, 0, 128, 0, 8, 16).membrane, 50);
  EXPECT_EQ(fixed_membrane_update(12345, true, 99, 0, 17, 8, 16).membrane, 17);
  EXPECT_EQ(fixed_membrane_update(-3, false, 0, 128, 0, 8, 16).membrane, -2);
}

TEST(FixedMembraneUpdate, MatchesExactFloorAndSaturates) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> u(-32767, 32767);
  std::uniform_int_distribution<int> lam(0, 256);
  std::uniform_int_distribution<int> vth(1, 2000);
  std::uniform_int_distribution<int> cur(-40000, 40000);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 100000; ++i) {
    const int uu = u(rng), l = lam(rng), v = vth(rng), c = cur(rng);
    const bool s = coin(rng);
    const auto got = fixed_membrane_update(uu, s, v, l, c, 8, 16);
    // Reference: floor of the exact rational l * (u - s v) / 256.
    const long double exact = static_cast<long double>(l) * (uu - (s ? v : 0)) / 256.0L;
    const auto expected = oracle::saturate(static_cast<std::int64_t>(std::floor(exact)) + c, 16);
    ASSERT_EQ(got.membrane, expected);
    ASSERT_EQ(got.saturated, expected != static_cast<std::int64_t>(std::floor(exact)) + c);
  }
}

TEST(QuantizeDecay, GridAndPadding) {
  const auto spec = QuantSpec::paper();  // 3 bit grid, shift 3
  EXPECT_EQ(quantize_decay(0.0, spec), 0);
  EXPECT_EQ(quantize_decay(1.0, spec), 8);
  EXPECT_EQ(quantize_decay(0.6, spec), 5);
  EXPECT_EQ(quantize_decay(0.5625, spec), 5);  // 4.5 ties up
  auto wide = spec;
  wide.decay_shift = 8;
  EXPECT_EQ(quantize_decay(0.6, wide), 5 << 5);
}

TEST(QuantSpec, Validation) {
  auto s = QuantSpec::paper();
  EXPECT_NO_THROW(s.validate());
  s.weight_bits = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = QuantSpec::paper();
  s.membrane_bits = 4;
  EXPECT_THROW(s.validate(), ConfigError);
  s = QuantSpec::paper();
  s.decay_shift = 2;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Footprint, ReferenceArchitecture) {
  const auto f = footprint(NetworkConfig::paper());
  EXPECT_EQ(f.weights, 156160u);
  EXPECT_EQ(f.decay, 1540u);
  EXPECT_EQ(f.bias, 1540u);
  EXPECT_EQ(f.vth, 6u);
  EXPECT_EQ(f.membrane, 1540u);
  EXPECT_EQ(f.total(), 160786u);
}

TEST(Footprint, TinyNetwork) {
  NetworkConfig c;
  c.layer_sizes = {2, 2};
  EXPECT_EQ(footprint(c).weights, 4u);
}

TEST(QuantizeModel, CodesWithinDeclaredWidths) {
  std::mt19937_64 rng(24);
  NetworkConfig cfg;
  cfg.layer_sizes = {12, 16, 10, 2};
  cfg.v_th = {0.4, 0.4};
  const auto fused = random_fused(cfg, rng);
  const auto m = quantize_model(cfg, fused, QuantSpec::paper());
  for (const auto& q : m.layers) {
    for (auto w : q.weights) {
      EXPECT_GE(w, -7);
      EXPECT_LE(w, 7);
    }
    EXPECT_GT(q.scale, 0.0);
  }
  // The largest weight of every layer lands on the top code.
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    int top = 0;
    for (auto w : m.layers[l].weights) top = std::max(top, std::abs(int{w}));
    EXPECT_EQ(top, 7);
  }
  EXPECT_EQ(m.layers[0].scale, m.weight_scale(0) * m.spec.input_scale);
}

TEST(QuantizeModel, DequantizedWithinHalfStep) {
  std::mt19937_64 rng(25);
  NetworkConfig cfg;
  cfg.layer_sizes = {8, 9, 3};
  cfg.v_th = {0.4};
  const auto fused = random_fused(cfg, rng);
  auto spec = QuantSpec::paper();
  spec.weight_bits = 8;
  const auto m = quantize_model(cfg, fused, spec);
  const auto back = dequantize_layers(m);
  for (std::size_t l = 0; l < back.size(); ++l) {
    const double ws = m.weight_scale(l);
    EXPECT_LE((back[l].weights - fused[l].weights).cwiseAbs().maxCoeff(), 0.5 / ws + 1e-15);
    EXPECT_LE((back[l].bias - fused[l].bias).cwiseAbs().maxCoeff(), 0.5 / m.layers[l].scale + 1e-15);
    EXPECT_LE((back[l].decay - fused[l].decay).cwiseAbs().maxCoeff(), 1.0 / 16 + 1e-15);
  }
}

TEST(ExportImport, RoundTripIsIdentity) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_model({7, 9, 5, 3}, rng, trial % 2 ? 8 : 4);
    const auto bytes = export_model(m);
    EXPECT_EQ(import_model(bytes), m);
    EXPECT_EQ(export_model(import_model(bytes)), bytes);
  }
}

TEST(ExportImport, HeaderLayout) {
  std::mt19937_64 rng(27);
  const auto m = oracle::random_model({3, 2, 2}, rng);
  const auto b = export_model(m);
  ASSERT_GE(b.size(), 7u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SNNQ");
  EXPECT_EQ(b[6], 2);  // layer count
}

TEST(ExportImport, RejectsCorruptInput) {
  std::mt19937_64 rng(28);
  const auto m = oracle::random_model({3, 2, 2}, rng);
  auto b = export_model(m);
  auto truncated = b;
  truncated.resize(b.size() - 3);
  EXPECT_THROW(import_model(truncated), DataError);
  b[0] = 'X';
  EXPECT_THROW(import_model(b), DataError);
}

TEST(ExportImport, FileRoundTrip) {
  std::mt19937_64 rng(29);
  const auto m = oracle::random_model({5, 4, 2}, rng);
  const auto path = std::filesystem::temp_directory_path() / "snndec_test_model.snnq";
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), DataError);
}
