#pragma once

#include <Eigen/Core>

#include "snndec/core.hpp"

namespace snndec {

/// Channel-major activations: one row per channel, one column per
/// (sample, time step) pair. Normalization statistics pool over all columns.
using Activations = Eigen::MatrixXd;

/// Threshold-dependent batch normalization: y = v_th * (x - mean) / sqrt(var + eps) * gamma + beta.
struct TdBNParams {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double epsilon = 1e-5;
  double v_th = 1.0;
  double momentum = 0.1;

  std::size_t size() const { return static_cast<std::size_t>(gamma.size()); }
  void validate() const;

  /// gamma = 1, beta = 0, running statistics of a unit Gaussian.
  static TdBNParams identity(std::size_t channels, double v_th);
};

/// Mini-batch statistics kept by a training-mode forward pass for the backward pass.
struct TdBNCache {
  Activations normalized;  // (x - mean) / sqrt(var + eps)
  Vector inv_std;
};

/// Normalizes `x`. In training mode uses the pooled batch statistics and
/// updates the running estimates with an exponential moving average; in
/// inference mode uses the running estimates.
Activations tdbn_forward(const Activations& x, TdBNParams& bn, bool training, TdBNCache* cache = nullptr);

/// Gradient of a training-mode tdbn_forward. Accumulates into dgamma/dbeta.
Activations tdbn_backward(const Activations& dy, const TdBNCache& cache, const TdBNParams& bn, Vector& dgamma,
                          Vector& dbeta);

/// Folds frozen normalization into the preceding affine layer so that
/// input_current(fuse(p, bn), x) == tdbn(W x + B) in inference mode.
LayerParams fuse(const LayerParams& params, const TdBNParams& bn);

}  // namespace snndec
