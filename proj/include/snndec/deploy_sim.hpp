#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snndec/core.hpp"
#include "snndec/engine.hpp"

namespace snndec {

/// Cost-model parameters of the target. Bandwidth, setup and overhead values
/// are calibration knobs, not measured silicon numbers.
struct MachineModel {
  std::size_t worker_cores = 8;
  std::size_t simd_macs_per_cycle = 4;       // 8-bit dot product lanes
  std::size_t simd_adds_per_cycle = 4;       // 8-bit adds
  std::size_t simd_adds16_per_cycle = 2;     // 16-bit adds (output layer)
  std::size_t l1_bytes = 128 * 1024;
  std::size_t l2_bytes = 1536 * 1024;
  double dma_bytes_per_cycle = 8.0;
  std::size_t dma_queue_cost_cycles = 30;    // setup per transfer
  std::size_t column_bytes = 256;            // destination slot stride for sparse copy
  std::size_t sparse_buffer_bytes = 64 * 1024;
  std::size_t spike_issue_cycles = 6;        // serialized semaphore cost per queued column
  std::size_t layer_overhead_cycles = 120;   // fork/barrier per layer
  std::size_t master_tail_cycles = 80;       // output layer on the master core

  void validate() const;
  static MachineModel gap9() { return {}; }
};

struct AccountingRule {
  double loads_per_mac = 3;
  double stores_per_mac = 1;
  double loads_per_add = 2;
  double stores_per_add = 1;

  double accesses(double macs, double adds) const {
    return (loads_per_mac + stores_per_mac) * macs + (loads_per_add + stores_per_add) * adds;
  }
};

/// Dense reference network: a temporal-feature input stage followed by fully
/// connected layers over `history` stacked frames.
struct AnnReference {
  std::size_t channels = 96;
  std::size_t history = 16;
  std::vector<std::size_t> hidden = {256, 256, 256};
  std::size_t outputs = 2;
  double feature_macs = 4224;   // calibrated so totals land on 529K MACs
  double feature_params = 64;

  void validate() const;
  /// Layer dims {in, out} of the fully connected part.
  std::vector<std::pair<std::size_t, std::size_t>> fc_layers() const;
  double total_macs() const;
  double total_params() const;
};

enum class Strategy { AnnDense, SnnBaseline, SnnSparseCopy };

std::string_view strategy_name(Strategy s);
/// Throws UsageError listing the valid names.
Strategy parse_strategy(std::string_view name);
std::vector<Strategy> all_strategies();

/// Mean spike counts per spiking layer (possibly fractional).
struct SpikeProfile {
  std::vector<double> counts;

  static SpikeProfile from_rates(const NetworkConfig& config, std::span<const double> rates);
  static SpikeProfile from_traces(std::span<const InferenceTrace> traces);
};

/// Exact spiking neuron indices per spiking layer for one inference.
struct SpikeSchedule {
  std::vector<std::vector<std::size_t>> indices;

  /// k spikes in a layer of n neurons go to neurons floor(j * n / k).
  static SpikeSchedule from_counts(const NetworkConfig& config, std::span<const std::size_t> counts);
  static SpikeSchedule from_profile(const NetworkConfig& config, const SpikeProfile& profile);
  static SpikeSchedule from_trace(const InferenceTrace& trace);
  std::vector<std::size_t> counts() const;
};

struct LayerCost {
  std::string layer;  // "1".."N" or "total"
  double macs = 0;
  double adds = 0;
  double accesses = 0;
  double bytes = 0;  // L2 -> L1
  double dma_transfers = 0;
  double cycles = 0;
  std::string bottleneck;  // "compute", "dma" or empty
};

struct TimelineEvent {
  std::size_t layer = 0;
  std::string resource;  // "dma", "cluster", "master"
  std::string label;
  std::uint64_t start = 0;
  std::uint64_t end = 0;
};

struct CostReport {
  Strategy strategy = Strategy::SnnSparseCopy;
  std::vector<LayerCost> layers;
  LayerCost total;
  std::size_t overflow_events = 0;
  std::vector<TimelineEvent> timeline;

  void recompute_total();
};

/// Operation and memory-access accounting, no timing.
CostReport count_ops(const NetworkConfig& config, const SpikeProfile& profile, Strategy strategy,
                     const AnnReference& ann = {}, const AccountingRule& rule = {});

/// Discrete-event cycle model of one inference.
CostReport simulate_inference(const MachineModel& machine, const NetworkConfig& config, const SpikeSchedule& schedule,
                              Strategy strategy, const AnnReference& ann = {}, const AccountingRule& rule = {});

struct CostRatios {
  double macs = 1;
  double adds = 1;
  double accesses = 1;
  double bytes = 1;
  double cycles = 1;
};

/// Totals of a over totals of b; 0/0 counts as 1.
CostRatios ratios(const CostReport& a, const CostReport& b);

struct StrategyComparison {
  std::vector<CostReport> reports;  // one per strategy, averaged over schedules
  CostRatios sparse_vs_baseline;
  CostRatios sparse_vs_ann;
};

StrategyComparison compare_strategies(const MachineModel& machine, const NetworkConfig& config,
                                      std::span<const SpikeSchedule> schedules, const AnnReference& ann = {},
                                      const AccountingRule& rule = {});

/// Header: strategy,layer,macs,adds,accesses,bytes,dma_transfers,cycles
std::string cost_csv(std::span<const CostReport> reports);
/// Header: strategy,layer,resource,label,start_cycle,end_cycle
std::string timeline_csv(const CostReport& report);

/// Modeled cycles of spiking-input layer `layer` (1-based, >= 2) as the
/// number of spikes arriving from the layer below is swept.
std::vector<double> sweep_layer_cycles(const MachineModel& machine, const NetworkConfig& config, std::size_t layer,
                                       std::span<const std::size_t> spike_counts, Strategy strategy);

}  // namespace snndec
