#include "snndec/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "bytes.hpp"
#include "snndec/errors.hpp"

namespace snndec {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace detail

namespace {

constexpr std::uint16_t kModelVersion = 1;
constexpr std::uint8_t kFlagSpiking = 0x1;

void check_bits(int bits, int max_bits, const char* what) {
  if (bits < 2 || bits > max_bits) {
    throw ConfigError(std::string(what) + " must be between 2 and " + std::to_string(max_bits) + " bits");
  }
}

}  // namespace

void QuantSpec::validate() const {
  check_bits(weight_bits, 8, "weight_bits");
  check_bits(bias_bits, 16, "bias_bits");
  check_bits(vth_bits, 16, "vth_bits");
  check_bits(membrane_bits, 16, "membrane_bits");
  check_bits(decay_bits, 15, "decay_bits");
  check_bits(input_bits, 8, "input_bits");
  if (decay_shift < decay_bits || decay_shift > 14) {
    throw ConfigError("decay_shift must be in [decay_bits, 14]");
  }
  if (membrane_bits <= weight_bits) throw ConfigError("membrane_bits must exceed weight_bits");
  if (!(input_scale > 0.0) || !std::isfinite(input_scale)) throw ConfigError("input_scale must be positive");
}

double layer_scale(const Matrix& weights, int weight_bits, ScaleRule rule) {
  const double w_max = weights.size() == 0 ? 0.0 : weights.cwiseAbs().maxCoeff();
  if (!(w_max > 0.0)) throw ConfigError("layer_scale: all-zero weight matrix");
  const double top = rule == ScaleRule::SignedMax ? static_cast<double>(symmetric_max(weight_bits))
                                                  : std::ldexp(1.0, weight_bits - 2);
  return top / w_max;
}

std::int64_t quantize_value(double value, double scale, int bits, bool* saturated) {
  const double limit = static_cast<double>(symmetric_max(bits));
  const double r = std::round(value * scale);  // std::round breaks ties away from zero
  const double clamped = std::clamp(r, -limit, limit);
  if (saturated != nullptr) *saturated = clamped != r;
  return static_cast<std::int64_t>(clamped);
}

std::int32_t quantize_decay(double lambda, const QuantSpec& spec) {
  const double grid = std::ldexp(1.0, spec.decay_bits);
  const double code = std::clamp(std::round(lambda * grid), 0.0, grid);
  return static_cast<std::int32_t>(code) << (spec.decay_shift - spec.decay_bits);
}

std::vector<std::int8_t> quantize_input(std::span<const double> frame, const QuantSpec& spec) {
  std::vector<std::int8_t> codes(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    codes[i] = static_cast<std::int8_t>(quantize_value(frame[i], spec.input_scale, spec.input_bits));
  }
  return codes;
}

FixedUpdate fixed_membrane_update(std::int32_t u, bool spiked, std::int32_t vth_q, std::int32_t lambda_q,
                                  std::int64_t i_q, int decay_shift, int membrane_bits) {
  const std::int64_t reset = static_cast<std::int64_t>(u) - (spiked ? vth_q : 0);
  const std::int64_t decayed = (static_cast<std::int64_t>(lambda_q) * reset) >> decay_shift;
  const std::int64_t next = decayed + i_q;
  const std::int64_t limit = symmetric_max(membrane_bits);
  const std::int64_t clamped = std::clamp(next, -limit, limit);
  return {static_cast<std::int32_t>(clamped), clamped != next};
}

void QuantizedModel::validate() const {
  spec.validate();
  config.validate();
  if (layers.size() != config.num_layers()) throw ConfigError("model layer count disagrees with its config");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& q = layers[l];
    if (q.in != config.layer_sizes[l] || q.out != config.layer_sizes[l + 1]) {
      throw ConfigError("model layer " + std::to_string(l + 1) + " shape disagrees with its config");
    }
    if (q.spiking != config.is_spiking(l)) throw ConfigError("model spiking flags disagree with its config");
    if (!(q.scale > 0.0) || !std::isfinite(q.scale)) throw ConfigError("layer scale must be positive");
    if (q.weights.size() != q.out * q.in || q.bias.size() != q.out || q.decay.size() != q.out) {
      throw ConfigError("model layer " + std::to_string(l + 1) + " has inconsistent array sizes");
    }
    const auto wmax = symmetric_max(q.weight_bits);
    for (auto w : q.weights) {
      if (w < -wmax || w > wmax) throw ConfigError("weight code outside its bit width");
    }
    const auto bmax = symmetric_max(spec.bias_bits);
    for (auto b : q.bias) {
      if (b < -bmax || b > bmax) throw ConfigError("bias code outside its bit width");
    }
    const auto dmax = std::int32_t{1} << spec.decay_shift;
    for (auto d : q.decay) {
      if (d < 0 || d > dmax) throw ConfigError("decay code outside [0, 2^decay_shift]");
    }
    if (q.spiking && (q.vth < -symmetric_max(spec.vth_bits) || q.vth > symmetric_max(spec.vth_bits))) {
      throw ConfigError("threshold code outside its bit width");
    }
  }
}

double QuantizedModel::weight_scale(std::size_t layer) const {
  return layer == 0 ? layers[0].scale / spec.input_scale : layers[layer].scale;
}

QuantizedModel quantize_model(const NetworkConfig& config, std::span<const LayerParams> fused, const QuantSpec& spec) {
  config.validate();
  spec.validate();
  if (fused.size() != config.num_layers()) throw ConfigError("quantize_model: layer count mismatch");

  QuantizedModel model{config, spec, {}};
  for (std::size_t l = 0; l < fused.size(); ++l) {
    const auto& p = fused[l];
    QuantizedLayer q;
    q.out = p.out_dim();
    q.in = p.in_dim();
    q.weight_bits = spec.weight_bits;
    q.spiking = config.is_spiking(l);
    const double ws = layer_scale(p.weights, spec.weight_bits, spec.scale_rule);
    q.scale = l == 0 ? ws * spec.input_scale : ws;

    q.weights.resize(q.out * q.in);
    for (std::size_t j = 0; j < q.out; ++j) {
      for (std::size_t k = 0; k < q.in; ++k) {
        const double w = p.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        q.weights[j * q.in + k] = static_cast<std::int8_t>(quantize_value(w, ws, spec.weight_bits));
      }
    }
    q.bias.resize(q.out);
    q.decay.resize(q.out);
    for (std::size_t j = 0; j < q.out; ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      q.bias[j] = static_cast<std::int16_t>(quantize_value(p.bias[i], q.scale, spec.bias_bits));
      q.decay[j] = static_cast<std::int16_t>(quantize_decay(p.decay[i], spec));
    }
    if (q.spiking) q.vth = static_cast<std::int16_t>(quantize_value(config.v_th[l], q.scale, spec.vth_bits));
    model.layers.push_back(std::move(q));
  }
  model.validate();
  return model;
}

std::vector<LayerParams> dequantize_layers(const QuantizedModel& model) {
  std::vector<LayerParams> out;
  const double decay_unit = std::ldexp(1.0, -model.spec.decay_shift);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& q = model.layers[l];
    const double ws = model.weight_scale(l);
    auto p = LayerParams::zeros(q.out, q.in);
    for (std::size_t j = 0; j < q.out; ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      for (std::size_t k = 0; k < q.in; ++k) p.weights(i, static_cast<Eigen::Index>(k)) = q.weights[j * q.in + k] / ws;
      p.bias[i] = q.bias[j] / q.scale;
      p.decay[i] = q.decay[j] * decay_unit;
    }
    out.push_back(std::move(p));
  }
  return out;
}

Footprint footprint(const NetworkConfig& config) {
  config.validate();
  Footprint f;
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    f.weights += config.layer_sizes[l] * config.layer_sizes[l + 1];  // padded to one byte each
  }
  const auto neurons = config.total_neurons();
  f.decay = 2 * neurons;
  f.bias = 2 * neurons;
  f.membrane = 2 * neurons;
  f.vth = 2 * config.num_spiking_layers();
  return f;
}

std::vector<std::uint8_t> export_model(const QuantizedModel& model) {
  model.validate();
  if (model.layers.size() > 255) throw ConfigError("export: more than 255 layers");
  detail::ByteWriter w;
  w.bytes("SNNQ");
  w.put<std::uint16_t>(kModelVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.layers.size()));
  const auto& s = model.spec;
  for (int bits : {s.weight_bits, s.bias_bits, s.vth_bits, s.membrane_bits, s.decay_bits, s.decay_shift,
                   s.input_bits}) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(bits));
  }
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.scale_rule));
  w.put<double>(s.input_scale);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.config.v_th.size()));
  for (double v : model.config.v_th) w.put<double>(v);

  for (const auto& q : model.layers) {
    if (q.out > 0xFFFF || q.in > 0xFFFF) throw ConfigError("export: layer dimension exceeds 65535");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(q.out));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(q.in));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(q.weight_bits));
    w.put<std::uint8_t>(q.spiking ? kFlagSpiking : 0);
    w.put<double>(q.scale);
    w.put_all<std::int8_t>(q.weights);
    w.put_all<std::int16_t>(q.bias);
    w.put_all<std::int16_t>(q.decay);
    if (q.spiking) w.put<std::int16_t>(q.vth);
  }
  return w.take();
}

QuantizedModel import_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect("SNNQ");
  const auto version = r.get<std::uint16_t>();
  if (version != kModelVersion) throw DataError("unsupported model version " + std::to_string(version));
  const auto n_layers = r.get<std::uint8_t>();

  QuantizedModel model;
  auto& s = model.spec;
  s.weight_bits = r.get<std::uint8_t>();
  s.bias_bits = r.get<std::uint8_t>();
  s.vth_bits = r.get<std::uint8_t>();
  s.membrane_bits = r.get<std::uint8_t>();
  s.decay_bits = r.get<std::uint8_t>();
  s.decay_shift = r.get<std::uint8_t>();
  s.input_bits = r.get<std::uint8_t>();
  const auto rule = r.get<std::uint8_t>();
  if (rule > 1) throw DataError("unknown scale rule");
  s.scale_rule = static_cast<ScaleRule>(rule);
  s.input_scale = r.get<double>();
  const auto n_vth = r.get<std::uint8_t>();
  model.config.v_th = r.get_all<double>(n_vth);

  for (std::size_t l = 0; l < n_layers; ++l) {
    QuantizedLayer q;
    q.out = r.get<std::uint16_t>();
    q.in = r.get<std::uint16_t>();
    q.weight_bits = r.get<std::uint8_t>();
    q.spiking = (r.get<std::uint8_t>() & kFlagSpiking) != 0;
    q.scale = r.get<double>();
    q.weights = r.get_all<std::int8_t>(q.out * q.in);
    q.bias = r.get_all<std::int16_t>(q.out);
    q.decay = r.get_all<std::int16_t>(q.out);
    if (q.spiking) q.vth = r.get<std::int16_t>();
    if (l == 0) model.config.layer_sizes.push_back(q.in);
    model.config.layer_sizes.push_back(q.out);
    model.layers.push_back(std::move(q));
  }
  if (!r.done()) throw DataError("trailing bytes after model");
  model.config.output_is_spiking = !model.layers.empty() && model.layers.back().spiking;
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid model file: ") + e.what());
  }
  return model;
}

void save_model(const QuantizedModel& model, const std::filesystem::path& path) {
  detail::write_file(path, export_model(model));
}

QuantizedModel load_model(const std::filesystem::path& path) {
  return import_model(detail::read_file(path));
}

}  // namespace snndec
