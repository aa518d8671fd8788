#include "snndec/normfuse.hpp"

#include <cmath>

#include "snndec/errors.hpp"

namespace snndec {

void TdBNParams::validate() const {
  const auto n = gamma.size();
  if (beta.size() != n || running_mean.size() != n || running_var.size() != n) {
    throw ConfigError("tdBN parameter vectors must share one length");
  }
  if (!(epsilon > 0.0)) throw ConfigError("tdBN epsilon must be positive");
  if ((running_var.array() < 0.0).any()) throw ConfigError("tdBN running variance must be non-negative");
}

TdBNParams TdBNParams::identity(std::size_t channels, double v_th) {
  const auto n = static_cast<Eigen::Index>(channels);
  TdBNParams bn;
  bn.gamma = Vector::Ones(n);
  bn.beta = Vector::Zero(n);
  bn.running_mean = Vector::Zero(n);
  bn.running_var = Vector::Ones(n);
  bn.v_th = v_th;
  return bn;
}

Activations tdbn_forward(const Activations& x, TdBNParams& bn, bool training, TdBNCache* cache) {
  if (static_cast<std::size_t>(x.rows()) != bn.size()) throw ConfigError("tdBN channel count mismatch");
  const auto samples = x.cols();
  if (samples == 0) throw ConfigError("tdBN received an empty batch");

  Vector mean;
  Vector var;
  if (training) {
    if (samples < 2) throw ConfigError("tdBN training needs at least two (batch, time) samples per channel");
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().mean();
    const double unbiased = static_cast<double>(samples) / static_cast<double>(samples - 1);
    bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mean;
    bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased * var;
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }

  const Vector inv_std = (var.array() + bn.epsilon).rsqrt().matrix();
  Activations normalized = (x.colwise() - mean);
  normalized.array().colwise() *= inv_std.array();

  const Vector scale = bn.v_th * bn.gamma;
  Activations y = normalized;
  y.array().colwise() *= scale.array();
  y.colwise() += bn.beta;

  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

Activations tdbn_backward(const Activations& dy, const TdBNCache& cache, const TdBNParams& bn, Vector& dgamma,
                          Vector& dbeta) {
  const auto& xhat = cache.normalized;
  const double n = static_cast<double>(dy.cols());
  dbeta += dy.rowwise().sum();
  dgamma += bn.v_th * (dy.cwiseProduct(xhat)).rowwise().sum();

  Activations dxhat = dy;
  dxhat.array().colwise() *= (bn.v_th * bn.gamma).array();
  const Vector sum_dxhat = dxhat.rowwise().sum();
  const Vector sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();

  Activations dx = n * dxhat;
  dx.colwise() -= sum_dxhat;
  dx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  dx.array().colwise() *= (cache.inv_std / n).array();
  return dx;
}

LayerParams fuse(const LayerParams& params, const TdBNParams& bn) {
  if (params.out_dim() != bn.size()) throw ConfigError("fuse: normalization width does not match layer");
  const Vector denom = bn.running_var.array() + bn.epsilon;
  if ((denom.array() <= 0.0).any()) throw ConfigError("fuse: Var + eps must be positive");
  const Vector k = (bn.v_th * bn.gamma.array() / denom.array().sqrt()).matrix();

  LayerParams fused;
  fused.weights = params.weights;
  for (Eigen::Index j = 0; j < fused.weights.rows(); ++j) fused.weights.row(j) *= k[j];
  fused.bias = (k.array() * (params.bias - bn.running_mean).array() + bn.beta.array()).matrix();
  fused.decay = params.decay;
  return fused;
}

}  // namespace snndec
