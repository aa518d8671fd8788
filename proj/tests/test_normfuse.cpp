#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "snndec/errors.hpp"
#include "snndec/normfuse.hpp"

using namespace snndec;

namespace {

Activations random_acts(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double mean = 0.0,
                        double sd = 1.0) {
  std::normal_distribution<double> n(mean, sd);
  Activations x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return x;
}

TdBNParams random_bn(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::normal_distribution<double> g(0, 1);
  auto bn = TdBNParams::identity(n, 0.4);
  for (std::size_t j = 0; j < n; ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    bn.gamma[i] = u(rng);
    bn.beta[i] = 0.3 * g(rng);
    bn.running_mean[i] = g(rng);
    bn.running_var[i] = u(rng);
  }
  return bn;
}

}  // namespace

TEST(TdBN, CenteredInputMapsToBeta) {
  auto bn = TdBNParams::identity(3, 0.4);
  bn.beta << 0.1, -0.2, 0.3;
  bn.running_mean << 1.0, 2.0, 3.0;
  Activations x(3, 4);
  for (Eigen::Index c = 0; c < 4; ++c) x.col(c) = bn.running_mean;
  const auto y = tdbn_forward(x, bn, false);
  for (Eigen::Index c = 0; c < 4; ++c) {
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(y(j, c), bn.beta[j]);
  }
}

TEST(TdBN, OneSigmaMapsToThreshold) {
  auto bn = TdBNParams::identity(1, 0.4);
  bn.epsilon = 1e-300;
  bn.running_var[0] = 2.25;
  Activations x(1, 1);
  x(0, 0) = 1.5;
  EXPECT_NEAR(tdbn_forward(x, bn, false)(0, 0), 0.4, 1e-12);
}

// Plain batch normalization computed with explicit loops over every (sample, step) column.
TEST(TdBN, UnitThresholdMatchesBruteForceBatchNorm) {
  std::mt19937_64 rng(11);
  const Eigen::Index channels = 5, batch = 7, steps = 10;
  const auto x = random_acts(channels, batch * steps, rng, 2.0, 3.0);
  auto bn = TdBNParams::identity(channels, 1.0);
  const auto y = tdbn_forward(x, bn, true);
  for (Eigen::Index j = 0; j < channels; ++j) {
    long double sum = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) sum += x(j, c);
    const long double mean = sum / x.cols();
    long double sq = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) sq += (x(j, c) - mean) * (x(j, c) - mean);
    const long double var = sq / x.cols();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double expected = static_cast<double>((x(j, c) - mean) / std::sqrt(var + 1e-5L));
      EXPECT_NEAR(y(j, c), expected, 1e-12);
    }
  }
}

TEST(TdBN, TrainingOutputHasThresholdScale) {
  std::mt19937_64 rng(12);
  const auto x = random_acts(4, 300, rng, -1.0, 5.0);
  auto bn = TdBNParams::identity(4, 0.4);
  const auto y = tdbn_forward(x, bn, true);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double m = y.row(j).mean();
    const double v = (y.row(j).array() - m).square().mean();
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 0.16, 1e-6);
  }
}

TEST(TdBN, RunningStatisticsUpdate) {
  std::mt19937_64 rng(13);
  const auto x = random_acts(2, 50, rng, 3.0, 2.0);
  auto bn = TdBNParams::identity(2, 0.4);
  tdbn_forward(x, bn, true);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double m = x.row(j).mean();
    const double v = (x.row(j).array() - m).square().sum() / 49.0;
    EXPECT_NEAR(bn.running_mean[j], 0.1 * m, 1e-12);
    EXPECT_NEAR(bn.running_var[j], 0.9 + 0.1 * v, 1e-12);
  }
  const auto before = bn.running_mean;
  tdbn_forward(x, bn, false);
  EXPECT_EQ(bn.running_mean, before);
}

TEST(TdBN, RejectsEmptyAndTinyBatches) {
  auto bn = TdBNParams::identity(2, 0.4);
  EXPECT_THROW(tdbn_forward(Activations(2, 0), bn, false), ConfigError);
  EXPECT_THROW(tdbn_forward(Activations::Ones(2, 1), bn, true), ConfigError);
  EXPECT_THROW(tdbn_forward(Activations::Ones(3, 4), bn, false), ConfigError);
}

TEST(TdBN, ValidateRejectsNegativeVariance) {
  auto bn = TdBNParams::identity(2, 0.4);
  bn.running_var[1] = -1.0;
  EXPECT_THROW(bn.validate(), ConfigError);
  bn = TdBNParams::identity(2, 0.4);
  bn.epsilon = 0.0;
  EXPECT_THROW(bn.validate(), ConfigError);
}

TEST(TdBN, BackwardMatchesFiniteDifference) {
  std::mt19937_64 rng(14);
  const auto x = random_acts(3, 12, rng);
  const auto w = random_acts(3, 12, rng);  // loss = sum(w .* y)
  auto bn = random_bn(3, rng);
  auto loss = [&](const Activations& in, TdBNParams p) { return tdbn_forward(in, p, true).cwiseProduct(w).sum(); };
  TdBNCache cache;
  auto bn_copy = bn;
  tdbn_forward(x, bn_copy, true, &cache);
  Vector dg = Vector::Zero(3), db = Vector::Zero(3);
  const auto dx = tdbn_backward(w, cache, bn, dg, db);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Activations xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    EXPECT_NEAR(dx.data()[i], (loss(xp, bn) - loss(xm, bn)) / (2 * h), 1e-6);
  }
  for (Eigen::Index j = 0; j < 3; ++j) {
    auto bp = bn, bm = bn;
    bp.gamma[j] += h;
    bm.gamma[j] -= h;
    EXPECT_NEAR(dg[j], (loss(x, bp) - loss(x, bm)) / (2 * h), 1e-6);
    bp = bn;
    bm = bn;
    bp.beta[j] += h;
    bm.beta[j] -= h;
    EXPECT_NEAR(db[j], (loss(x, bp) - loss(x, bm)) / (2 * h), 1e-6);
  }
}

TEST(Fuse, IdentityFusion) {
  std::mt19937_64 rng(15);
  auto p = LayerParams::zeros(3, 4);
  p.weights = random_acts(3, 4, rng);
  p.bias << 0.1, 0.2, 0.3;
  auto bn = TdBNParams::identity(3, 0.4);
  bn.epsilon = 1e-5;
  bn.running_var.setConstant(0.16 - 1e-5);
  const auto f = fuse(p, bn);
  EXPECT_TRUE(f.weights.isApprox(p.weights, 1e-14));
  EXPECT_TRUE(f.bias.isApprox(p.bias, 1e-14));
}

TEST(Fuse, ZeroGammaGivesConstantBeta) {
  std::mt19937_64 rng(16);
  auto p = LayerParams::zeros(3, 4);
  p.weights = random_acts(3, 4, rng);
  auto bn = random_bn(3, rng);
  bn.gamma.setZero();
  const auto f = fuse(p, bn);
  EXPECT_TRUE(f.weights.isZero(0.0));
  EXPECT_EQ(f.bias, bn.beta);
}

TEST(Fuse, RejectsNonPositiveVariance) {
  auto p = LayerParams::zeros(2, 2);
  auto bn = TdBNParams::identity(2, 0.4);
  bn.running_var[0] = -1.0;
  EXPECT_THROW(fuse(p, bn), ConfigError);
}

// Fused affine layer vs affine + inference-mode normalization, 100 random draws.
TEST(Fuse, EquivalenceOverRandomLayers) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 40);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto out = dim(rng), in = dim(rng);
    auto p = LayerParams::zeros(out, in);
    p.weights = random_acts(out, in, rng);
    p.bias = random_acts(out, 1, rng).col(0);
    auto bn = random_bn(out, rng);
    const auto x = random_acts(in, 8, rng);
    Activations pre = p.weights * x;
    pre.colwise() += p.bias;
    const auto unfused = tdbn_forward(pre, bn, false);
    const auto f = fuse(p, bn);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const Vector xc = x.col(c);
      const auto y = input_current(f, std::span<const double>(xc.data(), xc.size()));
      worst = std::max(worst, (y - unfused.col(c)).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LT(worst, 1e-10);
}
