#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "snndec/core.hpp"
#include "snndec/dataio.hpp"
#include "snndec/normfuse.hpp"
#include "snndec/quantizer.hpp"

namespace snndec {

struct TrainConfig {
  NetworkConfig network = NetworkConfig::paper();
  std::size_t unroll_steps = 10;
  std::size_t burn_in_frames = 2;
  double learning_rate = 2e-3;
  double weight_decay = 1e-2;
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 20;
  std::size_t batch_size = 128;
  double dropout_p = 0.2;
  double noise_ratio = 0.9;
  std::size_t epochs_fp = 60;
  std::size_t epochs_qat = 0;
  double surrogate_halfwidth = 0.5;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t eval_every = 1;  // streaming train/val evaluation period in epochs
  QuantSpec quant = QuantSpec::paper();

  void validate() const;
  /// Step decay: learning_rate * lr_decay^floor(epoch / lr_decay_every).
  double lr_at(std::size_t epoch) const;
  std::size_t total_epochs() const { return epochs_fp + epochs_qat; }

  static TrainConfig paper_a();  // 50 ms bins
  static TrainConfig paper_b();  // 32 ms bins
};

/// Spike nonlinearity. Heaviside fires on u >= v_th and backpropagates the
/// box surrogate 1{|u - v_th| < halfwidth}. Sigmoid uses 1/(1+exp(-(u - v_th)/T))
/// in both passes, which makes the network smooth for gradient checking.
struct SpikeModel {
  enum class Kind { Heaviside, Sigmoid };
  Kind kind = Kind::Heaviside;
  double halfwidth = 0.5;
  double temperature = 1e-3;
};

double surrogate_grad(double membrane, double v_th, double halfwidth);

struct TrainableLayer {
  LayerParams params;
  TdBNParams bn;
};

/// Parameters being trained: affine layers, tdBN before every neuron layer,
/// and per-neuron decay factors.
struct TrainableNetwork {
  NetworkConfig config;
  std::vector<TrainableLayer> layers;

  /// Fan-in scaled uniform weights and biases, decays uniform in [0.55, 0.65].
  static TrainableNetwork initialize(const NetworkConfig& config, std::mt19937_64& rng);

  std::vector<LayerParams> fused_layers() const;
  Network fused_network() const;
  QuantizedModel quantize(const QuantSpec& spec) const;

  /// Views in a fixed order: per layer weights, bias, decay, gamma, beta.
  std::vector<std::span<double>> parameters();
  void clamp_decay();
};

struct LayerGrad {
  Matrix weights;
  Vector bias;
  Vector decay;
  Vector gamma;
  Vector beta;
};

struct GradientTape {
  std::vector<LayerGrad> layers;

  static GradientTape zeros_like(const TrainableNetwork& net);
  /// Same order as TrainableNetwork::parameters().
  std::vector<std::span<double>> spans();
  std::vector<std::span<const double>> spans() const;
};

/// A mini-batch of windows. Columns are ordered time-major: t * batch + b.
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  Activations inputs;   // channels x (steps * batch), standardized
  Activations targets;  // outputs x (steps * batch), standardized
};

enum class ForwardMode {
  Train,  // batch-statistics tdBN, dropout allowed
  Eval,   // running-statistics tdBN folded into the weights
  Qat,    // frozen tdBN folded, then simulated integer arithmetic
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::Train;
  double dropout_p = 0.0;
  SpikeModel spike;
  QuantSpec quant = QuantSpec::paper();  // used in Qat mode
};

struct LayerCache {
  Activations input;      // layer input after dropout, real units
  Activations mask;       // dropout multipliers; empty when dropout is off
  TdBNCache bn;           // Train mode
  LayerParams effective;  // Eval/Qat: fused (Eval) or dequantized (Qat) parameters
  double v_th_effective = 0.0;
  Activations membrane;   // real units
  Activations spikes;     // empty for the non-spiking layer
};

struct ForwardCache {
  ForwardMode mode = ForwardMode::Train;
  SpikeModel spike;
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<LayerCache> layers;
  Activations predictions;  // outputs x (steps * batch)

  bool empty() const { return layers.empty(); }
};

/// Runs the network unfolded over the window from zero state.
ForwardCache unfolded_forward(TrainableNetwork& net, const WindowBatch& batch, const ForwardOptions& options,
                              std::mt19937_64* rng = nullptr);

/// Mean squared error over frames t >= burn_in of every window and output.
/// Writes dLoss/dPredictions into `grad` when given.
double window_loss(const Activations& predictions, const Activations& targets, std::size_t batch,
                   std::size_t burn_in, Activations* grad = nullptr);

/// Backpropagation through time and layers.
GradientTape backward(const TrainableNetwork& net, const ForwardCache& cache, const Activations& dpredictions);

/// Adam with decoupled weight decay; decays are clamped to [0, 1] after each step.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const TrainableNetwork& net, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(TrainableNetwork& net, const GradientTape& grad, double lr, double weight_decay);

  GradientTape m;
  GradientTape v;
  std::uint64_t steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Training split plus everything needed to turn windows into batches.
struct TrainingData {
  FeatureStream train;  // raw features
  Standardizer features;
  Standardizer velocities;
  WindowSet windows;
  double noise_sigma = 0.0;

  static TrainingData prepare(const FeatureStream& train_split, const TrainConfig& config);
  /// Gathers windows, adds input noise to raw features, then standardizes.
  WindowBatch make_batch(std::span<const std::size_t> starts, std::mt19937_64* noise_rng) const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  bool qat = false;
  double train_loss = 0.0;
  std::size_t batches = 0;
};

/// One pass over shuffled windows. Throws NumericalError on a non-finite loss.
EpochMetrics train_epoch(const TrainingData& data, TrainableNetwork& net, AdamW& optimizer, const TrainConfig& config,
                         std::size_t epoch, bool qat, std::mt19937_64& rng);

/// Streams standardized frames through a float network from reset.
Matrix stream_predict(Network net, const Matrix& standardized_frames);

/// Streams through the integer engine; returns real-unit (standardized) outputs.
Matrix stream_predict(const QuantizedModel& model, const Matrix& standardized_frames);

/// Correlation and RMSE in original velocity units.
DecodeScore evaluate(const Network& net, const FeatureStream& split, const Standardizer& features,
                     const Standardizer& velocities);
DecodeScore evaluate(const QuantizedModel& model, const FeatureStream& split, const Standardizer& features,
                     const Standardizer& velocities);

struct HistoryRow {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  bool qat = false;
  double train_loss = 0.0;
  double train_r = 0.0;
  double val_r = 0.0;
  double val_rmse = 0.0;
};

struct TrainingRun {
  TrainableNetwork net;
  AdamW optimizer;
  TrainingData data;
  std::vector<HistoryRow> history;
  std::size_t epochs_done = 0;
  std::mt19937_64 rng;  // shuffling, dropout and input noise
};

/// Initializes parameters and batching state without training.
TrainingRun start_run(const TrainConfig& config, const FeatureStream& train_split);

/// Trains until `epochs_done == until_epoch`; epochs at or past `epochs_fp` use QAT.
void continue_run(TrainingRun& run, const TrainConfig& config, const FeatureStream& val_split, std::size_t until_epoch,
                  const std::function<void(const HistoryRow&)>& on_epoch = {});

/// Full schedule: `epochs_fp` float epochs followed by `epochs_qat` QAT epochs.
TrainingRun fit(const TrainConfig& config, const FeatureStream& train_split, const FeatureStream& val_split,
                const std::function<void(const HistoryRow&)>& on_epoch = {});

}  // namespace snndec
