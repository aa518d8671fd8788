#include "snndec/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snndec/errors.hpp"

namespace snndec {

void NetworkConfig::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("layer_sizes needs at least an input and one layer");
  for (auto n : layer_sizes) {
    if (n == 0) throw ConfigError("layer sizes must be >= 1");
  }
  if (v_th.size() != num_spiking_layers()) {
    throw ConfigError("expected " + std::to_string(num_spiking_layers()) + " thresholds, got " +
                      std::to_string(v_th.size()));
  }
  for (double v : v_th) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("thresholds must be positive and finite");
  }
}

std::size_t NetworkConfig::num_spiking_layers() const {
  const auto n = num_layers();
  return output_is_spiking ? n : (n == 0 ? 0 : n - 1);
}

std::size_t NetworkConfig::total_neurons() const {
  std::size_t total = 0;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) total += layer_sizes[l];
  return total;
}

bool NetworkConfig::is_spiking(std::size_t layer) const {
  return layer < num_spiking_layers();
}

double NetworkConfig::threshold(std::size_t layer) const {
  if (v_th.empty()) return 1.0;  // plain batch norm when nothing spikes
  return v_th[std::min(layer, v_th.size() - 1)];
}

NetworkConfig NetworkConfig::paper() {
  return {{96, 256, 256, 256, 2}, {0.4, 0.4, 0.4}, false};
}

void LayerParams::validate() const {
  if (bias.size() != weights.rows() || decay.size() != weights.rows()) {
    throw ConfigError("bias/decay length must equal the layer's output width");
  }
}

void LayerParams::clamp_decay() {
  decay = decay.cwiseMax(0.0).cwiseMin(1.0);
}

LayerParams LayerParams::zeros(std::size_t out, std::size_t in) {
  const auto o = static_cast<Eigen::Index>(out);
  return {Matrix::Zero(o, static_cast<Eigen::Index>(in)), Vector::Zero(o), Vector::Zero(o)};
}

SpikeVector SpikeVector::from_bits(std::span<const std::uint8_t> bits) {
  SpikeVector s(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) s.set(i, bits[i] != 0);
  return s;
}

void SpikeVector::set(std::size_t i, bool on) {
  const std::uint8_t v = on ? 1 : 0;
  if (bits_[i] != v) {
    count_ += on ? 1 : static_cast<std::size_t>(-1);
    bits_[i] = v;
  }
}

void SpikeVector::clear() {
  std::fill(bits_.begin(), bits_.end(), 0);
  count_ = 0;
}

std::vector<std::size_t> SpikeVector::indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(count_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) idx.push_back(i);
  }
  return idx;
}

Vector input_current(const LayerParams& params, std::span<const double> input) {
  if (input.size() != params.in_dim()) {
    throw ConfigError("input length " + std::to_string(input.size()) + " does not match layer input width " +
                      std::to_string(params.in_dim()));
  }
  const auto out = params.weights.rows();
  Vector current(out);
  for (Eigen::Index j = 0; j < out; ++j) {
    const double* row = params.weights.row(j).data();
    double acc = 0.0;
    for (std::size_t k = 0; k < input.size(); ++k) acc += row[k] * input[k];
    current[j] = acc + params.bias[j];
  }
  return current;
}

Vector input_current(const LayerParams& params, const SpikeVector& input) {
  if (input.size() != params.in_dim()) {
    throw ConfigError("spike vector length " + std::to_string(input.size()) +
                      " does not match layer input width " + std::to_string(params.in_dim()));
  }
  const auto active = input.indices();
  const auto out = params.weights.rows();
  Vector current(out);
  for (Eigen::Index j = 0; j < out; ++j) {
    const double* row = params.weights.row(j).data();
    double acc = 0.0;
    for (auto k : active) acc += row[k];
    current[j] = acc + params.bias[j];
  }
  return current;
}

SpikeVector spike_fn(std::span<const double> membrane, double v_th) {
  SpikeVector s(membrane.size());
  for (std::size_t j = 0; j < membrane.size(); ++j) s.set(j, membrane[j] - v_th >= 0.0);
  return s;
}

LayerState membrane_update(LayerState state, const LayerParams& params, const Vector& current, double v_th) {
  const auto n = static_cast<std::size_t>(params.decay.size());
  if (static_cast<std::size_t>(state.membrane.size()) != n || state.last_spikes.size() != n ||
      static_cast<std::size_t>(current.size()) != n) {
    throw ConfigError("membrane_update: state, current and params disagree on layer width");
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    state.membrane[i] = lif_membrane(state.membrane[i], state.last_spikes[j], params.decay[i], v_th, current[i]);
  }
  state.last_spikes = spike_fn({state.membrane.data(), n}, v_th);
  return state;
}

Vector output_update(LayerState& state, const LayerParams& params, const Vector& current) {
  if (state.membrane.size() != current.size() || params.decay.size() != current.size()) {
    throw ConfigError("output_update: state, current and params disagree on layer width");
  }
  for (Eigen::Index j = 0; j < current.size(); ++j) {
    state.membrane[j] = params.decay[j] * state.membrane[j] + current[j];
  }
  return state.membrane;
}

Network::Network(NetworkConfig config, std::vector<LayerParams> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  config_.validate();
  if (layers_.size() != config_.num_layers()) {
    throw ConfigError("network config has " + std::to_string(config_.num_layers()) + " layers but " +
                      std::to_string(layers_.size()) + " parameter sets were given");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].validate();
    if (layers_[l].in_dim() != config_.layer_sizes[l] || layers_[l].out_dim() != config_.layer_sizes[l + 1]) {
      throw ConfigError("layer " + std::to_string(l + 1) + " weight shape does not match layer_sizes");
    }
  }
  reset_state();
}

void Network::reset_state() {
  states_.clear();
  for (std::size_t l = 1; l < config_.layer_sizes.size(); ++l) {
    states_.push_back(LayerState::zeros(config_.layer_sizes[l]));
  }
}

Vector Network::update_output_layer(std::size_t layer, const Vector& current) {
  if (config_.is_spiking(layer)) {
    throw UsageError("output_update called on spiking layer " + std::to_string(layer + 1));
  }
  return output_update(states_[layer], layers_[layer], current);
}

Vector Network::forward_step(std::span<const double> input) {
  const auto n_layers = layers_.size();
  Vector current = input_current(layers_[0], input);
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (l > 0) current = input_current(layers_[l], states_[l - 1].last_spikes);
    if (config_.is_spiking(l)) {
      states_[l] = membrane_update(std::move(states_[l]), layers_[l], current, config_.v_th[l]);
    } else {
      update_output_layer(l, current);
    }
  }
  return states_.back().membrane;
}

}  // namespace snndec
