#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace snndec {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Static architecture of a fully connected LIF network.
///
/// `layer_sizes` includes the input width, so `{96, 256, 256, 256, 2}` has
/// four weight layers. Every layer spikes except possibly the last one.
struct NetworkConfig {
  std::vector<std::size_t> layer_sizes;
  std::vector<double> v_th;  // one entry per spiking layer
  bool output_is_spiking = false;

  void validate() const;

  std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t num_spiking_layers() const;
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t total_neurons() const;
  bool is_spiking(std::size_t layer) const;

  /// Threshold of a spiking layer. For the non-spiking output layer this is
  /// the threshold of the last spiking layer, which its normalization uses,
  /// or 1 when no layer spikes.
  double threshold(std::size_t layer) const;

  /// 96 -> 256 -> 256 -> 256 -> 2, V_th = 0.4, non-spiking output.
  static NetworkConfig paper();

  bool operator==(const NetworkConfig&) const = default;
};

/// Weights [out x in], bias [out] and per-neuron decay factor [out] of one layer.
struct LayerParams {
  Matrix weights;
  Vector bias;
  Vector decay;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }

  void validate() const;
  void clamp_decay();

  static LayerParams zeros(std::size_t out, std::size_t in);
};

/// Binary firing pattern of one layer at one step.
class SpikeVector {
 public:
  SpikeVector() = default;
  explicit SpikeVector(std::size_t size) : bits_(size, 0) {}
  static SpikeVector from_bits(std::span<const std::uint8_t> bits);

  std::size_t size() const { return bits_.size(); }
  std::size_t count() const { return count_; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool on);
  void clear();

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::vector<std::size_t> indices() const;

  bool operator==(const SpikeVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

struct LayerState {
  Vector membrane;
  SpikeVector last_spikes;

  static LayerState zeros(std::size_t n) { return {Vector::Zero(static_cast<Eigen::Index>(n)), SpikeVector(n)}; }
};

/// One LIF step for a single neuron: decay(u - s * v_th) + current.
/// Shared by every float path so that they round identically.
inline double lif_membrane(double u, bool spiked, double decay, double v_th, double current) {
  const double reset = spiked ? u - v_th : u;
  return decay * reset + current;
}

/// W * input + B, accumulating each row left to right before adding the bias.
Vector input_current(const LayerParams& params, std::span<const double> input);

/// Sum of the weight columns selected by set bits, plus bias. Bitwise equal
/// to the dense product with the 0/1 vector.
Vector input_current(const LayerParams& params, const SpikeVector& input);

/// Heaviside firing: bit j set iff membrane[j] - v_th >= 0.
SpikeVector spike_fn(std::span<const double> membrane, double v_th);

/// Reset-by-subtraction LIF update using the layer's own previous spikes,
/// followed by spike generation.
LayerState membrane_update(LayerState state, const LayerParams& params, const Vector& current, double v_th);

/// Leaky integrator without spike or reset; returns the new membrane.
Vector output_update(LayerState& state, const LayerParams& params, const Vector& current);

/// Stateful float reference network. One instance per stream.
class Network {
 public:
  Network(NetworkConfig config, std::vector<LayerParams> layers);

  /// Runs one frame through every layer and returns the output membranes.
  Vector forward_step(std::span<const double> input);
  void reset_state();

  /// Integrates `current` into the non-spiking output layer `layer`.
  Vector update_output_layer(std::size_t layer, const Vector& current);

  const NetworkConfig& config() const { return config_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  const std::vector<LayerState>& states() const { return states_; }

 private:
  NetworkConfig config_;
  std::vector<LayerParams> layers_;
  std::vector<LayerState> states_;
};

}  // namespace snndec
