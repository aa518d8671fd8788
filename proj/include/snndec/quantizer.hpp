#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "snndec/core.hpp"

namespace snndec {

/// How the per-layer scale maps the largest weight onto the integer grid.
enum class ScaleRule : std::uint8_t {
  SignedMax = 0,   // (2^(bits-1) - 1) / max|W|: the largest weight lands on the top code
  PowerOfTwo = 1,  // 2^(bits-2) / max|W|
};

/// Bit precision of every stored quantity.
///
/// Weights are trained at `weight_bits` and stored padded in int8. Decay
/// factors live on a 2^-decay_bits grid and are applied as
/// (lambda_q * v) >> decay_shift with lambda_q stored in int16.
struct QuantSpec {
  int weight_bits = 4;
  int bias_bits = 16;
  int vth_bits = 16;
  int membrane_bits = 16;
  int decay_bits = 3;
  int decay_shift = 3;
  int input_bits = 8;
  double input_scale = 16.0;  // codes per standardized input unit
  ScaleRule scale_rule = ScaleRule::SignedMax;

  void validate() const;
  bool operator==(const QuantSpec&) const = default;

  /// 4-bit weights, 3-bit decays, 16-bit bias/threshold/membrane.
  static QuantSpec paper() { return {}; }
};

/// Largest magnitude representable in a symmetric signed `bits`-wide integer.
constexpr std::int64_t symmetric_max(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

/// Per-layer weight scale; throws ConfigError for an all-zero layer.
double layer_scale(const Matrix& weights, int weight_bits, ScaleRule rule = ScaleRule::SignedMax);

/// round(value * scale), ties away from zero, saturated to the symmetric range.
std::int64_t quantize_value(double value, double scale, int bits, bool* saturated = nullptr);

/// round(lambda * 2^decay_bits), rescaled to the 2^decay_shift grid, in [0, 2^decay_shift].
std::int32_t quantize_decay(double lambda, const QuantSpec& spec);

/// Converts one standardized input frame to input codes.
std::vector<std::int8_t> quantize_input(std::span<const double> frame, const QuantSpec& spec);

struct FixedUpdate {
  std::int32_t membrane;
  bool saturated;
};

/// ((lambda_q * (u - s * vth_q)) >> shift) + i_q, saturated to membrane_bits.
/// The shift is arithmetic, so negative products round toward -infinity.
FixedUpdate fixed_membrane_update(std::int32_t u, bool spiked, std::int32_t vth_q, std::int32_t lambda_q,
                                  std::int64_t i_q, int decay_shift, int membrane_bits);

/// Integer parameters of one layer. `scale` converts membranes, biases and
/// thresholds to real units (real = int / scale). For the first layer it is
/// the weight scale times the input scale, elsewhere it equals the weight scale.
struct QuantizedLayer {
  std::size_t out = 0;
  std::size_t in = 0;
  int weight_bits = 8;
  bool spiking = true;
  double scale = 1.0;
  std::vector<std::int8_t> weights;  // row-major [out x in]
  std::vector<std::int16_t> bias;
  std::vector<std::int16_t> decay;
  std::int16_t vth = 0;  // unused for the non-spiking layer

  bool operator==(const QuantizedLayer&) const = default;
};

/// Deployable integer model. Immutable once built.
struct QuantizedModel {
  NetworkConfig config;
  QuantSpec spec;
  std::vector<QuantizedLayer> layers;

  void validate() const;
  /// Scale of the weights alone, i.e. `scale` without the input scale on layer 1.
  double weight_scale(std::size_t layer) const;
  bool operator==(const QuantizedModel&) const = default;
};

/// Quantizes a network whose normalization has already been fused.
QuantizedModel quantize_model(const NetworkConfig& config, std::span<const LayerParams> fused, const QuantSpec& spec);

/// Float network holding the dequantized parameters of `model`.
std::vector<LayerParams> dequantize_layers(const QuantizedModel& model);

/// Bytes needed on the device, per parameter kind.
struct Footprint {
  std::size_t weights = 0;
  std::size_t decay = 0;
  std::size_t bias = 0;
  std::size_t vth = 0;
  std::size_t membrane = 0;

  std::size_t parameters() const { return weights + decay + bias + vth; }
  std::size_t total() const { return parameters() + membrane; }
};

Footprint footprint(const NetworkConfig& config);

/// Little-endian "SNNQ" container; see docs/formats.md.
std::vector<std::uint8_t> export_model(const QuantizedModel& model);
QuantizedModel import_model(std::span<const std::uint8_t> bytes);

void save_model(const QuantizedModel& model, const std::filesystem::path& path);
QuantizedModel load_model(const std::filesystem::path& path);

}  // namespace snndec
