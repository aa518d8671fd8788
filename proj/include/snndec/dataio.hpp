#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "snndec/core.hpp"

namespace snndec {

/// Binned features [T x channels] with the matching velocities [T x 2].
struct FeatureStream {
  Matrix frames;
  Matrix velocities;
  double bin_ms = 50.0;

  std::size_t length() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(frames.cols()); }
  void validate() const;
};

/// Per-column mean/std fitted on a training split.
struct Standardizer {
  Vector mean;
  Vector std;
  bool fitted_on_training = false;

  /// Throws DataError for zero-variance columns.
  static Standardizer fit(const Matrix& data);
  Matrix transform(const Matrix& data) const;
  Matrix inverse(const Matrix& data) const;
  Vector transform_row(std::span<const double> row) const;
  Vector inverse_row(std::span<const double> row) const;
};

/// Contiguous split: the first `train_fraction` of frames trains, the rest validates.
std::pair<FeatureStream, FeatureStream> split(const FeatureStream& stream, double train_fraction = 0.8);

/// Stride-1 sliding windows; each entry is a start frame.
struct WindowSet {
  std::vector<std::size_t> starts;
  std::size_t length = 10;
};
WindowSet windows(const FeatureStream& stream, std::size_t length = 10, std::size_t overlap = 9);

/// Gaussian noise with one std for all channels: ratio * mean of the per-channel stds.
double noise_std(const Standardizer& raw_stats, double ratio);

/// Adds zero-mean Gaussian noise of standard deviation `sigma` in place.
void inject_noise(Matrix& samples, double sigma, std::mt19937_64& rng);

/// Averages raw samples over non-overlapping bins; a partial trailing bin is dropped.
Matrix bin_mean(const Matrix& raw, std::size_t samples_per_bin);

double pearson(std::span<const double> pred, std::span<const double> target);
double rmse(std::span<const double> pred, std::span<const double> target);

/// Per-channel Pearson r and RMSE between two [T x D] matrices, plus their means.
struct DecodeScore {
  std::vector<double> r;
  std::vector<double> rmse;
  double mean_r = 0.0;
  double mean_rmse = 0.0;
};
DecodeScore decode_score(const Matrix& pred, const Matrix& target);

/// Binary container; see docs/formats.md.
void save_dataset(const FeatureStream& stream, const std::filesystem::path& path);
FeatureStream load_dataset(const std::filesystem::path& path);

/// CSV with `channels` feature columns followed by velocity columns. A
/// non-numeric first row is treated as a header.
/// Header row ch0..chN-1,vel0..velM-1, then one row per frame.
void save_csv(const FeatureStream& stream, const std::filesystem::path& path);
FeatureStream load_csv(const std::filesystem::path& path, std::size_t channels = 96, double bin_ms = 50.0);

/// Seeded synthetic decoding task: two smooth latent velocities mixed
/// linearly, with lags, into noisy positive channels.
struct SyntheticSpec {
  std::size_t frames = 20000;
  std::size_t channels = 96;
  std::size_t max_lag = 4;
  double noise = 4.0;       // per-channel noise std relative to the signal part
  double smoothness = 0.95; // AR(2) pole radius of the latent velocities
  double bin_ms = 50.0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  FeatureStream stream;
  Matrix latent;  // [T x 2], identical to stream.velocities
};
SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace snndec
