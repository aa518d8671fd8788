#include "snndec/trainer.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "snndec/engine.hpp"
#include "snndec/errors.hpp"

namespace snndec {

void TrainConfig::validate() const {
  network.validate();
  quant.validate();
  if (network.output_is_spiking) throw ConfigError("training needs a non-spiking output layer");
  if (unroll_steps == 0) throw ConfigError("unroll_steps must be >= 1");
  if (burn_in_frames >= unroll_steps) throw ConfigError("burn_in_frames must be smaller than unroll_steps");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("learning rate and weight decay must be >= 0");
  if (!(lr_decay > 0.0) || lr_decay_every == 0) throw ConfigError("lr decay factor and period must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(noise_ratio >= 0.0)) throw ConfigError("noise_ratio must be >= 0");
  if (!(surrogate_halfwidth > 0.0)) throw ConfigError("surrogate_halfwidth must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
}

TrainConfig TrainConfig::paper_a() { return {}; }

TrainConfig TrainConfig::paper_b() { return {}; }

double surrogate_grad(double membrane, double v_th, double halfwidth) {
  return std::abs(membrane - v_th) < halfwidth ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Parameters

TrainableNetwork TrainableNetwork::initialize(const NetworkConfig& config, std::mt19937_64& rng) {
  config.validate();
  TrainableNetwork net{config, {}};
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> decay(0.55, 0.65);
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    const auto in = config.layer_sizes[l];
    const auto out = config.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    auto p = LayerParams::zeros(out, in);
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = bound * unit(rng);
    for (Eigen::Index j = 0; j < p.bias.size(); ++j) p.bias[j] = bound * unit(rng);
    for (Eigen::Index j = 0; j < p.decay.size(); ++j) p.decay[j] = decay(rng);
    net.layers.push_back({std::move(p), TdBNParams::identity(out, config.threshold(l))});
  }
  return net;
}

std::vector<LayerParams> TrainableNetwork::fused_layers() const {
  std::vector<LayerParams> fused;
  for (const auto& layer : layers) fused.push_back(fuse(layer.params, layer.bn));
  return fused;
}

Network TrainableNetwork::fused_network() const { return Network(config, fused_layers()); }

QuantizedModel TrainableNetwork::quantize(const QuantSpec& spec) const {
  const auto fused = fused_layers();
  return quantize_model(config, fused, spec);
}

namespace {

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

std::vector<std::span<double>> TrainableNetwork::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers) {
    out.push_back(view(layer.params.weights));
    out.push_back(view(layer.params.bias));
    out.push_back(view(layer.params.decay));
    out.push_back(view(layer.bn.gamma));
    out.push_back(view(layer.bn.beta));
  }
  return out;
}

void TrainableNetwork::clamp_decay() {
  for (auto& layer : layers) layer.params.clamp_decay();
}

GradientTape GradientTape::zeros_like(const TrainableNetwork& net) {
  GradientTape tape;
  for (const auto& layer : net.layers) {
    const auto out = layer.params.weights.rows();
    tape.layers.push_back({Matrix::Zero(out, layer.params.weights.cols()), Vector::Zero(out), Vector::Zero(out),
                           Vector::Zero(out), Vector::Zero(out)});
  }
  return tape;
}

std::vector<std::span<double>> GradientTape::spans() {
  std::vector<std::span<double>> out;
  for (auto& g : layers) {
    out.push_back(view(g.weights));
    out.push_back(view(g.bias));
    out.push_back(view(g.decay));
    out.push_back(view(g.gamma));
    out.push_back(view(g.beta));
  }
  return out;
}

std::vector<std::span<const double>> GradientTape::spans() const {
  auto spans_mut = const_cast<GradientTape*>(this)->spans();
  return {spans_mut.begin(), spans_mut.end()};
}

// ---------------------------------------------------------------------------
// Forward

namespace {

// Row j of the result accumulates W(j, k) * x(k) for k ascending from +0 and
// only then adds the bias, exactly like input_current().
Activations affine_ordered(const LayerParams& p, const Activations& x) {
  const auto out = p.weights.rows();
  const auto in = p.weights.cols();
  const auto n = x.cols();
  Activations y(out, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double* xc = x.col(c).data();
    for (Eigen::Index j = 0; j < out; ++j) {
      const double* row = p.weights.row(j).data();
      double acc = 0.0;
      for (Eigen::Index k = 0; k < in; ++k) acc += row[k] * xc[k];
      y(j, c) = acc + p.bias[j];
    }
  }
  return y;
}

Activations dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  // Two 32-bit uniforms per draw.
  const auto keep_below = static_cast<std::uint64_t>(std::llround((1.0 - p) * 4294967296.0));
  const double scale = 1.0 / (1.0 - p);
  Activations mask(rows, cols);
  double* m = mask.data();
  const Eigen::Index n = mask.size();
  for (Eigen::Index i = 0; i < n; i += 2) {
    const std::uint64_t bits = rng();
    m[i] = (bits & 0xffffffffu) < keep_below ? scale : 0.0;
    if (i + 1 < n) m[i + 1] = (bits >> 32) < keep_below ? scale : 0.0;
  }
  return mask;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct QuantLayer {
  Matrix weights;  // integer codes as doubles
  Vector bias;
  Vector decay;    // lambda codes
  double vth = 0.0;
  double scale = 1.0;
  double weight_scale = 1.0;
};

QuantLayer simulate_quantization(const LayerParams& fused, double v_th, bool spiking, bool first,
                                 const QuantSpec& spec) {
  QuantLayer q;
  q.weight_scale = layer_scale(fused.weights, spec.weight_bits, spec.scale_rule);
  q.scale = first ? q.weight_scale * spec.input_scale : q.weight_scale;
  q.weights = fused.weights.unaryExpr([&](double w) {
    return static_cast<double>(quantize_value(w, q.weight_scale, spec.weight_bits));
  });
  q.bias = fused.bias.unaryExpr([&](double b) { return static_cast<double>(quantize_value(b, q.scale, spec.bias_bits)); });
  q.decay = fused.decay.unaryExpr([&](double d) { return static_cast<double>(quantize_decay(d, spec)); });
  if (spiking) q.vth = static_cast<double>(quantize_value(v_th, q.scale, spec.vth_bits));
  return q;
}

}  // namespace

ForwardCache unfolded_forward(TrainableNetwork& net, const WindowBatch& batch, const ForwardOptions& options,
                              std::mt19937_64* rng) {
  const auto& config = net.config;
  if (static_cast<std::size_t>(batch.inputs.rows()) != config.input_size()) {
    throw ConfigError("batch has " + std::to_string(batch.inputs.rows()) + " input channels, network expects " +
                      std::to_string(config.input_size()));
  }
  const auto B = static_cast<Eigen::Index>(batch.batch);
  const auto T = static_cast<Eigen::Index>(batch.steps);
  if (batch.inputs.cols() != B * T) throw ConfigError("batch inputs must have steps * batch columns");
  const bool use_dropout = options.dropout_p > 0.0;
  if (use_dropout && rng == nullptr) throw UsageError("dropout needs a random generator");
  if (options.dropout_p < 0.0 || options.dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0, 1)");

  ForwardCache cache;
  cache.mode = options.mode;
  cache.spike = options.spike;
  cache.batch = batch.batch;
  cache.steps = batch.steps;

  const auto& spec = options.quant;
  const bool qat = options.mode == ForwardMode::Qat;
  const bool sigmoid_spikes = options.spike.kind == SpikeModel::Kind::Sigmoid;
  if (qat && sigmoid_spikes) throw UsageError("simulated quantization requires Heaviside spikes");

  // Layer input on the integer grid (Qat) or in real units.
  Activations grid_input;
  Activations real_input = batch.inputs;
  if (qat) {
    grid_input = batch.inputs.unaryExpr(
        [&](double x) { return static_cast<double>(quantize_value(x, spec.input_scale, spec.input_bits)); });
    real_input = grid_input / spec.input_scale;
  }

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    LayerCache lc;
    const bool spiking = config.is_spiking(l);
    const double v_th = config.threshold(l);
    const auto out = static_cast<Eigen::Index>(layer.params.out_dim());

    if (use_dropout) {
      lc.mask = dropout_mask(real_input.rows(), real_input.cols(), options.dropout_p, *rng);
      real_input.array() *= lc.mask.array();
      if (qat) grid_input.array() *= lc.mask.array();
    }

    Activations current;  // grid units in Qat mode, real units otherwise
    QuantLayer q;
    switch (options.mode) {
      case ForwardMode::Train: {
        Activations pre = layer.params.weights * real_input;
        pre.colwise() += layer.params.bias;
        current = tdbn_forward(pre, layer.bn, true, &lc.bn);
        break;
      }
      case ForwardMode::Eval: {
        lc.effective = fuse(layer.params, layer.bn);
        current = affine_ordered(lc.effective, real_input);
        break;
      }
      case ForwardMode::Qat: {
        const auto fused = fuse(layer.params, layer.bn);
        q = simulate_quantization(fused, v_th, spiking, l == 0, spec);
        current = q.weights * grid_input;
        current.colwise() += q.bias;
        lc.effective.weights = q.weights / q.weight_scale;
        lc.effective.bias = q.bias / q.scale;
        lc.effective.decay = q.decay * std::ldexp(1.0, -spec.decay_shift);
        break;
      }
    }
    lc.v_th_effective = qat ? q.vth / q.scale : v_th;

    Activations membrane(out, B * T);
    Activations spikes;
    if (spiking) spikes.resize(out, B * T);
    const Vector& decay = layer.params.decay;
    const double mem_limit = static_cast<double>(symmetric_max(spec.membrane_bits));
    const double shift_div = std::ldexp(1.0, spec.decay_shift);

    Activations zero = Activations::Zero(out, B);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto cur = current.middleCols(t * B, B).array();
      const Eigen::Ref<const Activations> u_prev = t > 0 ? membrane.middleCols((t - 1) * B, B) : zero.middleCols(0, B);
      const Eigen::Ref<const Activations> s_prev =
          (t > 0 && spiking) ? spikes.middleCols((t - 1) * B, B) : zero.middleCols(0, B);
      auto u = membrane.middleCols(t * B, B).array();
      if (qat) {
        const Activations reset = u_prev - s_prev * q.vth;
        u = ((reset.array().colwise() * q.decay.array()) / shift_div).floor() + cur;
        u = u.max(-mem_limit).min(mem_limit);
      } else {
        // decay * (u - s * v_th) + current, as in lif_membrane()
        const Activations reset = u_prev - s_prev * v_th;
        u = reset.array().colwise() * decay.array() + cur;
      }
      if (!spiking) continue;
      auto s_now = spikes.middleCols(t * B, B).array();
      if (qat) {
        s_now = (u >= q.vth).cast<double>();
      } else if (sigmoid_spikes) {
        const double temp = options.spike.temperature;
        s_now = u.unaryExpr([&](double x) { return sigmoid((x - v_th) / temp); });
      } else {
        s_now = (u - v_th >= 0.0).cast<double>();
      }
    }

    lc.input = std::move(real_input);
    if (qat) {
      lc.membrane = membrane / q.scale;
    } else {
      lc.membrane = std::move(membrane);
    }
    if (spiking) {
      real_input = spikes;
      if (qat) grid_input = spikes;
      lc.spikes = std::move(spikes);
    }
    cache.layers.push_back(std::move(lc));
  }
  cache.predictions = cache.layers.back().membrane;
  return cache;
}

double window_loss(const Activations& predictions, const Activations& targets, std::size_t batch, std::size_t burn_in,
                   Activations* grad) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw ConfigError("loss: predictions and targets differ in shape");
  }
  if (batch == 0 || predictions.cols() % static_cast<Eigen::Index>(batch) != 0) {
    throw ConfigError("loss: column count is not a multiple of the batch size");
  }
  const auto B = static_cast<Eigen::Index>(batch);
  const auto T = predictions.cols() / B;
  const auto first = static_cast<Eigen::Index>(burn_in) * B;
  if (grad != nullptr) grad->setZero(predictions.rows(), predictions.cols());
  if (first >= predictions.cols()) return 0.0;
  const double count = static_cast<double>(predictions.rows() * (T - static_cast<Eigen::Index>(burn_in)) * B);
  const auto n = predictions.cols() - first;
  const Activations diff = predictions.rightCols(n) - targets.rightCols(n);
  if (grad != nullptr) grad->rightCols(n) = (2.0 / count) * diff;
  return diff.squaredNorm() / count;
}

// ---------------------------------------------------------------------------
// Backward

GradientTape backward(const TrainableNetwork& net, const ForwardCache& cache, const Activations& dpredictions) {
  if (cache.empty()) throw UsageError("backward called without a forward cache");
  if (cache.layers.size() != net.layers.size()) throw UsageError("forward cache does not match the network");
  if (dpredictions.rows() != cache.predictions.rows() || dpredictions.cols() != cache.predictions.cols()) {
    throw ConfigError("prediction gradient has the wrong shape");
  }
  const auto& config = net.config;
  const auto B = static_cast<Eigen::Index>(cache.batch);
  const auto T = static_cast<Eigen::Index>(cache.steps);
  const bool sigmoid_spikes = cache.spike.kind == SpikeModel::Kind::Sigmoid;
  const bool quantized = cache.mode == ForwardMode::Qat;

  GradientTape tape = GradientTape::zeros_like(net);
  Activations d_out = dpredictions;  // gradient w.r.t. this layer's output (membrane or spikes)

  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    const auto& lc = cache.layers[li];
    auto& g = tape.layers[li];
    const bool spiking = config.is_spiking(li);
    const auto out = static_cast<Eigen::Index>(layer.params.out_dim());
    const double v_th = lc.v_th_effective;
    const Vector& decay = quantized ? lc.effective.decay : layer.params.decay;

    // Through time: gradient w.r.t. the layer current.
    Activations d_current(out, B * T);
    Activations g_next = Activations::Zero(out, B);
    for (Eigen::Index t = T; t-- > 0;) {
      const auto d = d_out.middleCols(t * B, B).array();
      const auto u = lc.membrane.middleCols(t * B, B).array();
      const Activations carried = (g_next.array().colwise() * decay.array()).matrix();
      Activations gu;
      if (spiking) {
        Activations ds;
        if (sigmoid_spikes) {
          const auto s = lc.spikes.middleCols(t * B, B).array();
          ds = (s * (1.0 - s) / cache.spike.temperature).matrix();
        } else {
          ds = ((u - v_th).abs() < cache.spike.halfwidth).cast<double>().matrix();
        }
        gu = ((d - carried.array() * v_th) * ds.array() + carried.array()).matrix();
      } else {
        gu = (d + carried.array()).matrix();
      }
      if (t > 0) {
        const auto u_prev = lc.membrane.middleCols((t - 1) * B, B).array();
        if (spiking) {
          const auto s_prev = lc.spikes.middleCols((t - 1) * B, B).array();
          g.decay += (gu.array() * (u_prev - s_prev * v_th)).matrix().rowwise().sum();
        } else {
          g.decay += (gu.array() * u_prev).matrix().rowwise().sum();
        }
      }
      d_current.middleCols(t * B, B) = gu;
      g_next = std::move(gu);
    }

    // Through the affine map and normalization.
    Activations d_input;
    if (cache.mode == ForwardMode::Train) {
      const Activations d_pre = tdbn_backward(d_current, lc.bn, layer.bn, g.gamma, g.beta);
      g.weights = d_pre * lc.input.transpose();
      g.bias = d_pre.rowwise().sum();
      if (li > 0) d_input = layer.params.weights.transpose() * d_pre;
    } else {
      // Frozen statistics: y = k (W x + B - mean) + beta with k = v_th * gamma / sqrt(var + eps).
      const Matrix d_wf = d_current * lc.input.transpose();
      const Vector d_bf = d_current.rowwise().sum();
      const auto& bn = layer.bn;
      const Vector inv_std = (bn.running_var.array() + bn.epsilon).rsqrt().matrix();
      const Vector k = bn.v_th * bn.gamma.cwiseProduct(inv_std);
      g.weights = k.asDiagonal() * d_wf;
      g.bias = k.cwiseProduct(d_bf);
      g.beta += d_bf;
      const Vector w_term = d_wf.cwiseProduct(layer.params.weights).rowwise().sum();
      const Vector b_term = d_bf.cwiseProduct(layer.params.bias - bn.running_mean);
      g.gamma += (bn.v_th * inv_std.array() * (w_term + b_term).array()).matrix();
      if (li > 0) d_input = lc.effective.weights.transpose() * d_current;
    }

    if (li > 0) {
      if (lc.mask.size() > 0) d_input.array() *= lc.mask.array();
      d_out = std::move(d_input);
    }
  }
  return tape;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamW::AdamW(const TrainableNetwork& net, double b1, double b2, double e)
    : m(GradientTape::zeros_like(net)), v(GradientTape::zeros_like(net)), beta1(b1), beta2(b2), eps(e) {}

void AdamW::step(TrainableNetwork& net, const GradientTape& grad, double lr, double weight_decay) {
  ++steps;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  auto params = net.parameters();
  const auto grads = grad.spans();
  auto ms = m.spans();
  auto vs = v.spans();
  if (params.size() != grads.size()) throw UsageError("gradient tape does not match the network");
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p];
    const auto& gr = grads[p];
    if (w.size() != gr.size()) throw UsageError("gradient tape does not match the network");
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] *= 1.0 - lr * weight_decay;
      ms[p][i] = beta1 * ms[p][i] + (1.0 - beta1) * gr[i];
      vs[p][i] = beta2 * vs[p][i] + (1.0 - beta2) * gr[i] * gr[i];
      const double m_hat = ms[p][i] / bc1;
      const double v_hat = vs[p][i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  net.clamp_decay();
}

// ---------------------------------------------------------------------------
// Data and epochs

TrainingData TrainingData::prepare(const FeatureStream& train_split, const TrainConfig& config) {
  train_split.validate();
  TrainingData data;
  data.train = train_split;
  data.features = Standardizer::fit(train_split.frames);
  data.velocities = Standardizer::fit(train_split.velocities);
  data.windows = snndec::windows(train_split, config.unroll_steps, config.unroll_steps - 1);
  if (data.windows.starts.empty()) throw DataError("training split is shorter than one window");
  data.noise_sigma = noise_std(data.features, config.noise_ratio);
  return data;
}

WindowBatch TrainingData::make_batch(std::span<const std::size_t> starts, std::mt19937_64* noise_rng) const {
  WindowBatch batch;
  batch.batch = starts.size();
  batch.steps = windows.length;
  const auto B = static_cast<Eigen::Index>(starts.size());
  const auto T = static_cast<Eigen::Index>(windows.length);
  const auto C = static_cast<Eigen::Index>(train.channels());
  const auto V = train.velocities.cols();

  Matrix raw(B * T, C);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto s = static_cast<Eigen::Index>(starts[static_cast<std::size_t>(b)]);
    raw.middleRows(b * T, T) = train.frames.middleRows(s, T);
  }
  if (noise_rng != nullptr) inject_noise(raw, noise_sigma, *noise_rng);
  const Matrix standardized = features.transform(raw);

  batch.inputs.resize(C, B * T);
  batch.targets.resize(V, B * T);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto s = static_cast<Eigen::Index>(starts[static_cast<std::size_t>(b)]);
    for (Eigen::Index t = 0; t < T; ++t) {
      batch.inputs.col(t * B + b) = standardized.row(b * T + t).transpose();
      for (Eigen::Index v = 0; v < V; ++v) {
        batch.targets(v, t * B + b) = (train.velocities(s + t, v) - velocities.mean[v]) / velocities.std[v];
      }
    }
  }
  return batch;
}

EpochMetrics train_epoch(const TrainingData& data, TrainableNetwork& net, AdamW& optimizer, const TrainConfig& config,
                         std::size_t epoch, bool qat, std::mt19937_64& rng) {
  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.qat = qat;
  metrics.learning_rate = config.lr_at(epoch);

  std::vector<std::size_t> order = data.windows.starts;
  std::shuffle(order.begin(), order.end(), rng);

  ForwardOptions options;
  options.mode = qat ? ForwardMode::Qat : ForwardMode::Train;
  options.dropout_p = config.dropout_p;
  options.spike.halfwidth = config.surrogate_halfwidth;
  options.quant = config.quant;

  double loss_sum = 0.0;
  for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
    const auto count = std::min(config.batch_size, order.size() - first);
    const std::span<const std::size_t> starts(order.data() + first, count);
    const auto batch = data.make_batch(starts, config.noise_ratio > 0.0 ? &rng : nullptr);
    const auto cache = unfolded_forward(net, batch, options, &rng);
    Activations dpred;
    const double loss = window_loss(cache.predictions, batch.targets, batch.batch, config.burn_in_frames, &dpred);
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(metrics.batches));
    }
    const auto grad = backward(net, cache, dpred);
    optimizer.step(net, grad, metrics.learning_rate, config.weight_decay);
    loss_sum += loss;
    ++metrics.batches;
  }
  metrics.train_loss = metrics.batches ? loss_sum / static_cast<double>(metrics.batches) : 0.0;
  return metrics;
}

Matrix stream_predict(Network net, const Matrix& standardized_frames) {
  net.reset_state();
  Matrix out(standardized_frames.rows(), static_cast<Eigen::Index>(net.config().output_size()));
  Vector frame(standardized_frames.cols());
  for (Eigen::Index t = 0; t < standardized_frames.rows(); ++t) {
    frame = standardized_frames.row(t).transpose();
    out.row(t) = net.forward_step({frame.data(), static_cast<std::size_t>(frame.size())}).transpose();
  }
  return out;
}

Matrix stream_predict(const QuantizedModel& model, const Matrix& standardized_frames) {
  SparseEngine engine(std::make_shared<const QuantizedModel>(model));
  Matrix out(standardized_frames.rows(), static_cast<Eigen::Index>(model.config.output_size()));
  Vector frame(standardized_frames.cols());
  for (Eigen::Index t = 0; t < standardized_frames.rows(); ++t) {
    frame = standardized_frames.row(t).transpose();
    const auto codes = quantize_input({frame.data(), static_cast<std::size_t>(frame.size())}, model.spec);
    const auto result = engine.infer_frame(codes);
    const auto real = engine.dequantize_output(result.output);
    for (std::size_t i = 0; i < real.size(); ++i) out(t, static_cast<Eigen::Index>(i)) = real[i];
  }
  return out;
}

DecodeScore evaluate(const Network& net, const FeatureStream& split, const Standardizer& features,
                     const Standardizer& velocities) {
  const Matrix pred = velocities.inverse(stream_predict(net, features.transform(split.frames)));
  return decode_score(pred, split.velocities);
}

DecodeScore evaluate(const QuantizedModel& model, const FeatureStream& split, const Standardizer& features,
                     const Standardizer& velocities) {
  const Matrix pred = velocities.inverse(stream_predict(model, features.transform(split.frames)));
  return decode_score(pred, split.velocities);
}

namespace {

// Batch temporaries are a few MB each; keep them on the heap instead of
// paying for fresh zeroed mappings on every allocation.
void keep_large_allocations() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

TrainingRun start_run(const TrainConfig& config, const FeatureStream& train_split) {
  config.validate();
  keep_large_allocations();
  if (train_split.channels() != config.network.input_size()) {
    throw DataError("dataset has " + std::to_string(train_split.channels()) + " channels, network expects " +
                    std::to_string(config.network.input_size()));
  }
  std::mt19937_64 rng(config.seed);
  auto net = TrainableNetwork::initialize(config.network, rng);
  TrainingRun run{std::move(net), {}, TrainingData::prepare(train_split, config), {}, 0, rng};
  run.optimizer = AdamW(run.net, config.adam_beta1, config.adam_beta2, config.adam_eps);
  return run;
}

void continue_run(TrainingRun& run, const TrainConfig& config, const FeatureStream& val_split, std::size_t until_epoch,
                  const std::function<void(const HistoryRow&)>& on_epoch) {
  const auto total = config.total_epochs();
  if (until_epoch > total) throw UsageError("cannot train past the configured schedule");
  while (run.epochs_done < until_epoch) {
    const auto epoch = run.epochs_done;
    const bool qat = epoch >= config.epochs_fp;
    const auto m = train_epoch(run.data, run.net, run.optimizer, config, epoch, qat, run.rng);
    HistoryRow row;
    row.epoch = epoch;
    row.learning_rate = m.learning_rate;
    row.qat = qat;
    row.train_loss = m.train_loss;
    if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == total) {
      const auto& d = run.data;
      DecodeScore tr, va;
      if (qat) {
        const auto model = run.net.quantize(config.quant);
        tr = evaluate(model, d.train, d.features, d.velocities);
        va = evaluate(model, val_split, d.features, d.velocities);
      } else {
        const auto net = run.net.fused_network();
        tr = evaluate(net, d.train, d.features, d.velocities);
        va = evaluate(net, val_split, d.features, d.velocities);
      }
      row.train_r = tr.mean_r;
      row.val_r = va.mean_r;
      row.val_rmse = va.mean_rmse;
    } else {
      row.train_r = row.val_r = row.val_rmse = std::nan("");
    }
    run.history.push_back(row);
    run.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(row);
  }
}

TrainingRun fit(const TrainConfig& config, const FeatureStream& train_split, const FeatureStream& val_split,
                const std::function<void(const HistoryRow&)>& on_epoch) {
  auto run = start_run(config, train_split);
  continue_run(run, config, val_split, config.total_epochs(), on_epoch);
  return run;
}

}  // namespace snndec
