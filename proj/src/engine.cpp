#include "snndec/engine.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <sstream>

#include "snndec/errors.hpp"

namespace snndec {

std::vector<std::size_t> InferenceTrace::spike_counts() const {
  std::vector<std::size_t> counts;
  for (const auto& s : spikes) counts.push_back(s.count());
  return counts;
}

std::string InferenceTrace::to_json_line() const {
  std::ostringstream os;
  auto list = [&os](const auto& v) {
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
  };
  os << "{\"spikes\":";
  list(spike_counts());
  os << ",\"columns\":";
  list(columns_gathered);
  os << ",\"macs\":";
  list(macs);
  os << ",\"adds\":";
  list(adds);
  os << ",\"saturations\":" << saturation_events << '}';
  return os.str();
}

SparseEngine::SparseEngine(std::shared_ptr<const QuantizedModel> model) : model_(std::move(model)) {
  if (!model_) throw ConfigError("engine needs a model");
  model_->validate();
  const auto& layers = model_->layers;
  dense_rows_ = layers[0].weights;
  columns_.resize(layers.size());
  for (std::size_t l = 1; l < layers.size(); ++l) {
    const auto& q = layers[l];
    if (l + 1 == layers.size()) {
      output_columns_.resize(q.out * q.in);
      for (std::size_t j = 0; j < q.out; ++j) {
        for (std::size_t k = 0; k < q.in; ++k) output_columns_[k * q.out + j] = q.weights[j * q.in + k];
      }
    } else {
      auto& cols = columns_[l];
      cols.resize(q.out * q.in);
      for (std::size_t j = 0; j < q.out; ++j) {
        for (std::size_t k = 0; k < q.in; ++k) cols[k * q.out + j] = q.weights[j * q.in + k];
      }
    }
  }
  reset();
}

void SparseEngine::reset() {
  state_ = {};
  for (const auto& q : model_->layers) {
    state_.membranes.emplace_back(q.out, 0);
    state_.last_spikes.emplace_back(q.out);
    state_.spike_tally.push_back(0);
  }
}

FrameResult SparseEngine::infer_frame(std::span<const std::int8_t> frame) {
  const auto& model = *model_;
  const auto& layers = model.layers;
  const auto& spec = model.spec;
  if (frame.size() != layers[0].in) {
    throw ConfigError("frame has " + std::to_string(frame.size()) + " codes, model expects " +
                      std::to_string(layers[0].in));
  }

  FrameResult result;
  auto& trace = result.trace;
  std::vector<std::int64_t> acc;

  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& q = layers[l];
    acc.assign(q.out, 0);
    std::size_t gathered = 0;
    std::uint64_t adds = 0;
    if (l == 0) {
      for (std::size_t j = 0; j < q.out; ++j) {
        const std::int8_t* row = dense_rows_.data() + j * q.in;
        std::int64_t sum = 0;
        for (std::size_t k = 0; k < q.in; ++k) sum += std::int32_t{row[k]} * std::int32_t{frame[k]};
        assert(sum >= std::numeric_limits<std::int32_t>::min() && sum <= std::numeric_limits<std::int32_t>::max());
        acc[j] = sum;
      }
    } else {
      const auto& incoming = state_.last_spikes[l - 1];  // already updated for this frame
      const bool last = l + 1 == layers.size();
      for (std::size_t k = 0; k < q.in; ++k) {
        if (!incoming[k]) continue;
        ++gathered;
        if (last) {
          const std::int16_t* col = output_columns_.data() + k * q.out;
          for (std::size_t j = 0; j < q.out; ++j) acc[j] += col[j];
        } else {
          const std::int8_t* col = columns_[l].data() + k * q.out;
          for (std::size_t j = 0; j < q.out; ++j) acc[j] += col[j];
        }
        adds += q.out;
      }
    }

    auto& membrane = state_.membranes[l];
    auto& spikes = state_.last_spikes[l];
    for (std::size_t j = 0; j < q.out; ++j) {
      const std::int64_t current = acc[j] + q.bias[j];
      assert(current >= std::numeric_limits<std::int32_t>::min() &&
             current <= std::numeric_limits<std::int32_t>::max());
      const bool fired = q.spiking && spikes[j];
      const auto upd = fixed_membrane_update(membrane[j], fired, q.vth, q.decay[j], current, spec.decay_shift,
                                             spec.membrane_bits);
      membrane[j] = upd.membrane;
      if (upd.saturated) ++trace.saturation_events;
    }
    if (q.spiking) {
      for (std::size_t j = 0; j < q.out; ++j) spikes.set(j, membrane[j] >= q.vth);
      state_.spike_tally[l] += spikes.count();
      trace.spikes.push_back(spikes);
    }
    trace.columns_gathered.push_back(gathered);
    trace.adds.push_back(adds);
    trace.macs.push_back((l == 0 ? q.out * q.in : 0) + q.out);
  }
  ++state_.frames;
  result.output = state_.membranes.back();
  return result;
}

std::vector<double> SparseEngine::dequantize_output(std::span<const std::int32_t> output) const {
  const double scale = model_->layers.back().scale;
  std::vector<double> out(output.size());
  std::transform(output.begin(), output.end(), out.begin(), [scale](std::int32_t v) { return v / scale; });
  return out;
}

SpikeStats spike_stats(std::span<const InferenceTrace> traces) {
  if (traces.empty()) throw UsageError("spike_stats needs at least one trace");
  SpikeStats stats;
  stats.frames = traces.size();
  const auto n_layers = traces.front().spikes.size();
  stats.neuron_rate.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) stats.neuron_rate[l].assign(traces.front().spikes[l].size(), 0.0);

  double total = 0.0;
  for (const auto& t : traces) {
    if (t.spikes.size() != n_layers) throw UsageError("traces disagree on layer count");
    for (std::size_t l = 0; l < n_layers; ++l) {
      for (auto j : t.spikes[l].indices()) stats.neuron_rate[l][j] += 1.0;
      total += static_cast<double>(t.spikes[l].count());
    }
  }
  const double n = static_cast<double>(traces.size());
  stats.mean_total_spikes = total / n;
  for (auto& layer : stats.neuron_rate) {
    double sum = 0.0;
    std::vector<std::size_t> hist(SpikeStats::kBins, 0);
    for (auto& r : layer) {
      r /= n;
      sum += r;
      const auto bin = std::min<std::size_t>(static_cast<std::size_t>(r * SpikeStats::kBins), SpikeStats::kBins - 1);
      ++hist[bin];
    }
    stats.layer_rate.push_back(layer.empty() ? 0.0 : sum / static_cast<double>(layer.size()));
    stats.histogram.push_back(std::move(hist));
  }
  return stats;
}

}  // namespace snndec
