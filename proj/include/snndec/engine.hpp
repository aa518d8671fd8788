#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "snndec/core.hpp"
#include "snndec/quantizer.hpp"

namespace snndec {

/// What one frame cost and produced, per layer.
struct InferenceTrace {
  std::vector<SpikeVector> spikes;             // output spikes of each spiking layer
  std::vector<std::size_t> columns_gathered;   // per layer; 0 for the dense first layer
  std::vector<std::uint64_t> macs;             // dense multiply-accumulates, including membrane updates
  std::vector<std::uint64_t> adds;             // integer additions from column gathers
  std::size_t saturation_events = 0;

  std::vector<std::size_t> spike_counts() const;
  /// One-line JSON record for the simulator.
  std::string to_json_line() const;
};

struct EngineState {
  std::vector<std::vector<std::int32_t>> membranes;
  std::vector<SpikeVector> last_spikes;
  std::vector<std::uint64_t> spike_tally;  // cumulative spikes per layer since reset
  std::size_t frames = 0;
};

struct FrameResult {
  std::vector<std::int32_t> output;  // output-layer membranes
  InferenceTrace trace;
};

/// Event-driven integer inference. The first layer runs dense on the input
/// codes; every later layer adds only the weight columns of neurons that
/// fired in the layer below.
class SparseEngine {
 public:
  explicit SparseEngine(std::shared_ptr<const QuantizedModel> model);

  FrameResult infer_frame(std::span<const std::int8_t> frame);
  void reset();

  /// Output membranes in real units.
  std::vector<double> dequantize_output(std::span<const std::int32_t> output) const;

  const EngineState& state() const { return state_; }
  const QuantizedModel& model() const { return *model_; }

 private:
  std::shared_ptr<const QuantizedModel> model_;
  std::vector<std::int8_t> dense_rows_;                // layer 1, row-major
  std::vector<std::vector<std::int8_t>> columns_;      // spiking-input layers except the last, column-major
  std::vector<std::int16_t> output_columns_;           // last layer, column-major, widened
  EngineState state_;
};

struct SpikeStats {
  std::vector<double> layer_rate;                  // mean firing probability per spiking layer
  std::vector<std::vector<double>> neuron_rate;    // per neuron
  std::vector<std::vector<std::size_t>> histogram; // neurons per rate bin, per layer
  double mean_total_spikes = 0.0;                  // spiking neurons per inference
  std::size_t frames = 0;

  static constexpr std::size_t kBins = 20;  // 5 % wide
};

SpikeStats spike_stats(std::span<const InferenceTrace> traces);

}  // namespace snndec
