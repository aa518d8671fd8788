#include "snndec/deploy_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snndec/errors.hpp"

namespace snndec {

void MachineModel::validate() const {
  if (worker_cores == 0 || simd_macs_per_cycle == 0 || simd_adds_per_cycle == 0 || simd_adds16_per_cycle == 0) {
    throw ConfigError("machine: core and lane counts must be positive");
  }
  if (l1_bytes == 0 || l2_bytes == 0 || column_bytes == 0 || sparse_buffer_bytes == 0) {
    throw ConfigError("machine: memory sizes must be positive");
  }
  if (!(dma_bytes_per_cycle > 0.0) || !std::isfinite(dma_bytes_per_cycle)) {
    throw ConfigError("machine: dma_bytes_per_cycle must be positive");
  }
  if (dma_queue_cost_cycles == 0) throw ConfigError("machine: dma_queue_cost_cycles must be positive");
  if (sparse_buffer_bytes > l1_bytes) throw ConfigError("machine: sparse buffer larger than L1");
}

void AnnReference::validate() const {
  if (channels == 0 || history == 0 || outputs == 0) throw ConfigError("ann: dims must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("ann: hidden sizes must be positive");
  }
  if (feature_macs < 0 || feature_params < 0) throw ConfigError("ann: feature stage costs must be >= 0");
}

std::vector<std::pair<std::size_t, std::size_t>> AnnReference::fc_layers() const {
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::size_t in = channels * history;
  for (auto h : hidden) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, outputs);
  return dims;
}

double AnnReference::total_macs() const {
  double macs = feature_macs;
  for (auto [in, out] : fc_layers()) macs += static_cast<double>(in * out);
  return macs;
}

double AnnReference::total_params() const {
  double params = feature_params;
  for (auto [in, out] : fc_layers()) params += static_cast<double>(in * out + out);
  return params;
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::AnnDense: return "ann-dense";
    case Strategy::SnnBaseline: return "snn-baseline";
    case Strategy::SnnSparseCopy: return "snn-sparse";
  }
  return "?";
}

std::vector<Strategy> all_strategies() { return {Strategy::AnnDense, Strategy::SnnBaseline, Strategy::SnnSparseCopy}; }

Strategy parse_strategy(std::string_view name) {
  std::string valid;
  for (auto s : all_strategies()) {
    if (strategy_name(s) == name) return s;
    valid += (valid.empty() ? "" : ", ") + std::string(strategy_name(s));
  }
  throw UsageError("unknown strategy '" + std::string(name) + "' (valid: " + valid + ")");
}

SpikeProfile SpikeProfile::from_rates(const NetworkConfig& config, std::span<const double> rates) {
  const auto n = config.num_spiking_layers();
  if (rates.size() != n) {
    throw ConfigError("expected " + std::to_string(n) + " spike rates, got " + std::to_string(rates.size()));
  }
  SpikeProfile p;
  for (std::size_t l = 0; l < n; ++l) {
    if (!(rates[l] >= 0.0 && rates[l] <= 1.0)) throw ConfigError("spike rates must be in [0, 1]");
    p.counts.push_back(rates[l] * static_cast<double>(config.layer_sizes[l + 1]));
  }
  return p;
}

SpikeProfile SpikeProfile::from_traces(std::span<const InferenceTrace> traces) {
  if (traces.empty()) throw UsageError("spike profile needs at least one trace");
  SpikeProfile p;
  p.counts.assign(traces.front().spikes.size(), 0.0);
  for (const auto& t : traces) {
    if (t.spikes.size() != p.counts.size()) throw DataError("traces disagree in layer count");
    for (std::size_t l = 0; l < p.counts.size(); ++l) p.counts[l] += static_cast<double>(t.spikes[l].count());
  }
  for (auto& c : p.counts) c /= static_cast<double>(traces.size());
  return p;
}

SpikeSchedule SpikeSchedule::from_counts(const NetworkConfig& config, std::span<const std::size_t> counts) {
  const auto n = config.num_spiking_layers();
  if (counts.size() != n) {
    throw ConfigError("expected " + std::to_string(n) + " spike counts, got " + std::to_string(counts.size()));
  }
  SpikeSchedule s;
  for (std::size_t l = 0; l < n; ++l) {
    const auto size = config.layer_sizes[l + 1];
    const auto k = counts[l];
    if (k > size) throw ConfigError("layer " + std::to_string(l + 1) + " cannot emit " + std::to_string(k) + " spikes");
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < k; ++j) idx.push_back(j * size / k);
    s.indices.push_back(std::move(idx));
  }
  return s;
}

SpikeSchedule SpikeSchedule::from_profile(const NetworkConfig& config, const SpikeProfile& profile) {
  std::vector<std::size_t> counts;
  for (double c : profile.counts) counts.push_back(static_cast<std::size_t>(std::llround(c)));
  return from_counts(config, counts);
}

SpikeSchedule SpikeSchedule::from_trace(const InferenceTrace& trace) {
  SpikeSchedule s;
  for (const auto& v : trace.spikes) s.indices.push_back(v.indices());
  return s;
}

std::vector<std::size_t> SpikeSchedule::counts() const {
  std::vector<std::size_t> c;
  for (const auto& i : indices) c.push_back(i.size());
  return c;
}

void CostReport::recompute_total() {
  total = {};
  total.layer = "total";
  for (const auto& l : layers) {
    total.macs += l.macs;
    total.adds += l.adds;
    total.accesses += l.accesses;
    total.bytes += l.bytes;
    total.dma_transfers += l.dma_transfers;
    total.cycles += l.cycles;
  }
}

namespace {

std::size_t blocks_for(std::size_t bytes, const MachineModel& m) {
  const std::size_t slot = m.l1_bytes / 4;
  return std::max<std::size_t>(2, (bytes + slot - 1) / slot);
}

std::uint64_t ceil_div(double ops, double per_cycle) {
  return ops <= 0.0 ? 0 : static_cast<std::uint64_t>(std::ceil(ops / per_cycle));
}

void check_profile(const NetworkConfig& config, std::size_t n) {
  if (n != config.num_spiking_layers()) {
    throw ConfigError("spike profile covers " + std::to_string(n) + " layers, network has " +
                      std::to_string(config.num_spiking_layers()) + " spiking layers");
  }
}

CostReport count_with_blocks(const NetworkConfig& config, std::span<const double> counts, Strategy strategy,
                             const AnnReference& ann, const AccountingRule& rule, const MachineModel& machine) {
  config.validate();
  CostReport r;
  r.strategy = strategy;
  if (strategy == Strategy::AnnDense) {
    ann.validate();
    LayerCost feat;
    feat.layer = "feature";
    feat.macs = ann.feature_macs;
    feat.bytes = ann.feature_params;
    feat.dma_transfers = 1;
    feat.accesses = rule.accesses(feat.macs, 0);
    r.layers.push_back(feat);
    std::size_t i = 1;
    for (auto [in, out] : ann.fc_layers()) {
      LayerCost c;
      c.layer = std::to_string(i++);
      c.macs = static_cast<double>(in * out);
      c.bytes = static_cast<double>(in * out);
      c.dma_transfers = static_cast<double>(blocks_for(in * out, machine));
      c.accesses = rule.accesses(c.macs, 0);
      r.layers.push_back(c);
    }
    r.recompute_total();
    return r;
  }
  check_profile(config, counts.size());
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    const auto in = config.layer_sizes[l];
    const auto out = config.layer_sizes[l + 1];
    LayerCost c;
    c.layer = std::to_string(l + 1);
    c.macs = static_cast<double>(out);  // membrane update
    const bool dense = l == 0 || strategy == Strategy::SnnBaseline;
    if (l == 0) {
      c.macs += static_cast<double>(in * out);
    } else if (strategy == Strategy::SnnBaseline) {
      c.adds = static_cast<double>(in * out);
    } else {
      c.adds = counts[l - 1] * static_cast<double>(out);
    }
    if (dense) {
      c.bytes = static_cast<double>(in * out);
      c.dma_transfers = static_cast<double>(blocks_for(in * out, machine));
    } else {
      c.bytes = counts[l - 1] * static_cast<double>(out);
      c.dma_transfers = counts[l - 1];
    }
    c.accesses = rule.accesses(c.macs, c.adds);
    r.layers.push_back(c);
  }
  r.recompute_total();
  return r;
}

// Single DMA queue plus one cluster timeline.
class Timeline {
 public:
  Timeline(const MachineModel& m, CostReport& report) : m_(m), report_(report) {}

  std::uint64_t transfer(std::size_t layer, std::uint64_t ready, double bytes, const std::string& label) {
    const auto start = std::max(ready, dma_free_);
    const auto end = start + m_.dma_queue_cost_cycles + ceil_div(bytes, m_.dma_bytes_per_cycle);
    dma_free_ = end;
    report_.timeline.push_back({layer, "dma", label, start, end});
    return end;
  }

  std::uint64_t run(std::size_t layer, const std::string& resource, std::uint64_t start, std::uint64_t cycles,
                    const std::string& label) {
    const auto end = start + cycles;
    if (cycles > 0) report_.timeline.push_back({layer, resource, label, start, end});
    return end;
  }

  // Row-block pipeline with two L1 slots: block b may load once block b-2 is done.
  // Returns the end of the last block and accumulates cycles spent waiting on DMA.
  std::uint64_t double_buffer(std::size_t layer, const std::string& resource, std::uint64_t start, std::size_t rows,
                              std::size_t in, double ops_per_cycle, std::uint64_t& dma_wait) {
    const auto n = std::min(rows, blocks_for(rows * in, m_));
    std::vector<std::uint64_t> done(n, 0);
    std::uint64_t core = start;
    for (std::size_t b = 0; b < n; ++b) {
      const auto r0 = rows * b / n;
      const auto r1 = rows * (b + 1) / n;
      const auto ready = b >= 2 ? done[b - 2] : start;
      const auto loaded =
          transfer(layer, ready, static_cast<double>((r1 - r0) * in), "weights block " + std::to_string(b + 1));
      if (loaded > core) dma_wait += loaded - core;
      const auto begin = std::max(core, loaded);
      core = run(layer, resource, begin, ceil_div(static_cast<double>((r1 - r0) * in), ops_per_cycle),
                 "block " + std::to_string(b + 1));
      done[b] = core;
    }
    return core;
  }

 private:
  const MachineModel& m_;
  CostReport& report_;
  std::uint64_t dma_free_ = 0;
};

void check_fits(const MachineModel& m, const NetworkConfig& config) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    const auto bytes = config.layer_sizes[l] * config.layer_sizes[l + 1];
    total += bytes;
    const auto n = std::min(config.layer_sizes[l + 1], blocks_for(bytes, m));
    const auto block = (bytes + n - 1) / n;
    if (2 * block > m.l1_bytes) throw ConfigError("layer " + std::to_string(l + 1) + " blocks do not fit in L1");
    if (l > 0 && config.layer_sizes[l + 1] > m.column_bytes) {
      throw ConfigError("layer " + std::to_string(l + 1) + " column exceeds the column slot size");
    }
  }
  if (total > m.l2_bytes) throw ConfigError("model does not fit in L2");
}

}  // namespace

CostReport count_ops(const NetworkConfig& config, const SpikeProfile& profile, Strategy strategy,
                     const AnnReference& ann, const AccountingRule& rule) {
  return count_with_blocks(config, profile.counts, strategy, ann, rule, MachineModel::gap9());
}

CostReport simulate_inference(const MachineModel& machine, const NetworkConfig& config, const SpikeSchedule& schedule,
                              Strategy strategy, const AnnReference& ann, const AccountingRule& rule) {
  machine.validate();
  config.validate();
  std::vector<double> counts;
  for (auto c : schedule.counts()) counts.push_back(static_cast<double>(c));
  if (strategy != Strategy::AnnDense) check_profile(config, counts.size());
  CostReport report = count_with_blocks(config, counts, strategy, ann, rule, machine);
  Timeline tl(machine, report);
  const double cores = static_cast<double>(machine.worker_cores);
  const double mac_rate = cores * static_cast<double>(machine.simd_macs_per_cycle);
  const double add_rate = cores * static_cast<double>(machine.simd_adds_per_cycle);
  const double master_add_rate = static_cast<double>(machine.simd_adds16_per_cycle);

  std::uint64_t t = 0;
  if (strategy == Strategy::AnnDense) {
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
      auto& c = report.layers[l];
      const auto start = t + machine.layer_overhead_cycles;
      std::uint64_t wait = 0;
      std::uint64_t end;
      if (l == 0) {
        const auto loaded = tl.transfer(l, start, c.bytes, "weights");
        wait = loaded - start;
        end = tl.run(l, "cluster", loaded, ceil_div(c.macs, mac_rate), "temporal features");
      } else {
        const auto [in, out] = ann.fc_layers()[l - 1];
        end = tl.double_buffer(l, "cluster", start, out, in, mac_rate, wait);
      }
      c.cycles = static_cast<double>(end - t);
      c.bottleneck = 2 * wait > end - start ? "dma" : "compute";
      t = end;
    }
    report.recompute_total();
    return report;
  }

  check_fits(machine, config);
  const auto L = config.num_layers();
  std::uint64_t pending_columns_done = 0;  // transfers queued for the current layer
  for (std::size_t l = 0; l < L; ++l) {
    const auto in = config.layer_sizes[l];
    const auto out = config.layer_sizes[l + 1];
    const bool master = l + 1 == L;
    const std::string resource = master ? "master" : "cluster";
    const auto start = t + machine.layer_overhead_cycles;
    std::uint64_t wait = 0;
    std::uint64_t end;
    if (l == 0) {
      end = tl.double_buffer(l, resource, start, out, in, master ? 1.0 * machine.simd_macs_per_cycle : mac_rate, wait);
    } else if (strategy == Strategy::SnnBaseline) {
      end = tl.double_buffer(l, resource, start, out, in, master ? master_add_rate : add_rate, wait);
    } else {
      const auto begin = std::max(start, pending_columns_done);
      wait = begin - start;
      end = tl.run(l, resource, begin, ceil_div(counts[l - 1] * static_cast<double>(out), master ? master_add_rate : add_rate),
                   "accumulate columns");
    }

    // Membrane update and spike detection; in sparse copy every spike queues
    // its column of the next layer's weights.
    const double mem_rate = master ? static_cast<double>(machine.simd_macs_per_cycle) : mac_rate;
    const auto mem_cycles = ceil_div(static_cast<double>(out), mem_rate);
    const auto mem_start = end;
    std::uint64_t mem_end = mem_start + mem_cycles;
    pending_columns_done = 0;
    if (strategy == Strategy::SnnSparseCopy && config.is_spiking(l) && l + 1 < L) {
      const auto& idx = schedule.indices[l];
      const auto next_out = config.layer_sizes[l + 2];
      if (idx.size() * machine.column_bytes > machine.sparse_buffer_bytes) ++report.overflow_events;
      std::uint64_t queue = mem_start;
      for (auto j : idx) {
        const auto detect = mem_start + (static_cast<std::uint64_t>(j) + 1) * mem_cycles / out;
        queue = std::max(queue, detect) + machine.spike_issue_cycles;
        pending_columns_done = tl.transfer(l + 1, queue, static_cast<double>(next_out), "column " + std::to_string(j));
      }
      mem_end = std::max(mem_end, queue);
    }
    tl.run(l, resource, mem_start, mem_end - mem_start, "membrane update");
    end = mem_end;
    if (master) end = tl.run(l, resource, end, machine.master_tail_cycles, "output tail");

    auto& c = report.layers[l];
    c.cycles = static_cast<double>(end - t);
    c.bottleneck = 2 * wait > end - start ? "dma" : "compute";
    t = end;
  }
  report.recompute_total();
  return report;
}

CostRatios ratios(const CostReport& a, const CostReport& b) {
  auto div = [](double x, double y) { return x == 0.0 && y == 0.0 ? 1.0 : x / y; };
  return {div(a.total.macs, b.total.macs), div(a.total.adds, b.total.adds), div(a.total.accesses, b.total.accesses),
          div(a.total.bytes, b.total.bytes), div(a.total.cycles, b.total.cycles)};
}

StrategyComparison compare_strategies(const MachineModel& machine, const NetworkConfig& config,
                                      std::span<const SpikeSchedule> schedules, const AnnReference& ann,
                                      const AccountingRule& rule) {
  if (schedules.empty()) throw UsageError("compare_strategies needs at least one schedule");
  StrategyComparison cmp;
  for (auto s : all_strategies()) {
    CostReport avg;
    for (std::size_t i = 0; i < schedules.size(); ++i) {
      auto r = simulate_inference(machine, config, schedules[i], s, ann, rule);
      if (i == 0) {
        avg = std::move(r);
        continue;
      }
      for (std::size_t l = 0; l < avg.layers.size(); ++l) {
        auto& a = avg.layers[l];
        const auto& b = r.layers[l];
        a.macs += b.macs;
        a.adds += b.adds;
        a.accesses += b.accesses;
        a.bytes += b.bytes;
        a.dma_transfers += b.dma_transfers;
        a.cycles += b.cycles;
      }
      avg.overflow_events += r.overflow_events;
    }
    const auto n = static_cast<double>(schedules.size());
    for (auto& a : avg.layers) {
      a.macs /= n;
      a.adds /= n;
      a.accesses /= n;
      a.bytes /= n;
      a.dma_transfers /= n;
      a.cycles /= n;
    }
    if (schedules.size() > 1) avg.timeline.clear();
    avg.recompute_total();
    cmp.reports.push_back(std::move(avg));
  }
  cmp.sparse_vs_baseline = ratios(cmp.reports[2], cmp.reports[1]);
  cmp.sparse_vs_ann = ratios(cmp.reports[2], cmp.reports[0]);
  return cmp;
}

std::string cost_csv(std::span<const CostReport> reports) {
  std::ostringstream os;
  os.precision(10);
  os << "strategy,layer,macs,adds,accesses,bytes,dma_transfers,cycles\n";
  for (const auto& r : reports) {
    auto row = [&](const LayerCost& c) {
      os << strategy_name(r.strategy) << ',' << c.layer << ',' << c.macs << ',' << c.adds << ',' << c.accesses << ','
         << c.bytes << ',' << c.dma_transfers << ',' << c.cycles << '\n';
    };
    for (const auto& c : r.layers) row(c);
    row(r.total);
  }
  return os.str();
}

std::string timeline_csv(const CostReport& report) {
  std::ostringstream os;
  os << "strategy,layer,resource,label,start_cycle,end_cycle\n";
  for (const auto& e : report.timeline) {
    os << strategy_name(report.strategy) << ',' << e.layer + 1 << ',' << e.resource << ',' << e.label << ','
       << e.start << ',' << e.end << '\n';
  }
  return os.str();
}

std::vector<double> sweep_layer_cycles(const MachineModel& machine, const NetworkConfig& config, std::size_t layer,
                                       std::span<const std::size_t> spike_counts, Strategy strategy) {
  if (strategy == Strategy::AnnDense) throw UsageError("spike sweeps apply to SNN strategies only");
  if (layer < 2 || layer > config.num_layers()) {
    throw UsageError("sweep layer must be between 2 and " + std::to_string(config.num_layers()));
  }
  std::vector<double> cycles;
  for (auto k : spike_counts) {
    std::vector<std::size_t> counts(config.num_spiking_layers(), 0);
    counts[layer - 2] = k;
    const auto schedule = SpikeSchedule::from_counts(config, counts);
    cycles.push_back(simulate_inference(machine, config, schedule, strategy).layers[layer - 1].cycles);
  }
  return cycles;
}

}  // namespace snndec
