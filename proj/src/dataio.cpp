#include "snndec/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "bytes.hpp"
#include "snndec/errors.hpp"

namespace snndec {

namespace {
constexpr std::uint16_t kDatasetVersion = 1;
}

void FeatureStream::validate() const {
  if (frames.rows() != velocities.rows()) throw DataError("frames and velocities differ in length");
  if (!frames.allFinite() || !velocities.allFinite()) throw DataError("dataset contains non-finite values");
  if (!(bin_ms > 0.0)) throw DataError("bin width must be positive");
}

Standardizer Standardizer::fit(const Matrix& data) {
  if (data.rows() < 2) throw DataError("need at least two rows to fit a standardizer");
  Standardizer s;
  s.mean = data.colwise().mean().transpose();
  s.std = ((data.rowwise() - s.mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index c = 0; c < s.std.size(); ++c) {
    if (!(s.std[c] > 0.0)) throw DataError("column " + std::to_string(c) + " has zero variance");
  }
  s.fitted_on_training = true;
  return s;
}

Matrix Standardizer::transform(const Matrix& data) const {
  Matrix out = data.rowwise() - mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

Matrix Standardizer::inverse(const Matrix& data) const {
  Matrix out = data;
  out.array().rowwise() *= std.transpose().array();
  out.rowwise() += mean.transpose();
  return out;
}

Vector Standardizer::transform_row(std::span<const double> row) const {
  Vector out(static_cast<Eigen::Index>(row.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = (row[static_cast<std::size_t>(i)] - mean[i]) / std[i];
  return out;
}

Vector Standardizer::inverse_row(std::span<const double> row) const {
  Vector out(static_cast<Eigen::Index>(row.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = row[static_cast<std::size_t>(i)] * std[i] + mean[i];
  return out;
}

std::pair<FeatureStream, FeatureStream> split(const FeatureStream& stream, double train_fraction) {
  const auto t = stream.length();
  if (t < 10) throw DataError("stream too short to split (need at least 10 frames)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DataError("train fraction must be in (0, 1)");
  const auto n_train = static_cast<Eigen::Index>(std::llround(train_fraction * static_cast<double>(t)));
  const auto n_val = static_cast<Eigen::Index>(t) - n_train;
  FeatureStream train{stream.frames.topRows(n_train), stream.velocities.topRows(n_train), stream.bin_ms};
  FeatureStream val{stream.frames.bottomRows(n_val), stream.velocities.bottomRows(n_val), stream.bin_ms};
  return {std::move(train), std::move(val)};
}

WindowSet windows(const FeatureStream& stream, std::size_t length, std::size_t overlap) {
  if (length == 0 || overlap >= length) throw DataError("window overlap must be smaller than its length");
  WindowSet set;
  set.length = length;
  const auto stride = length - overlap;
  if (stream.length() < length) return set;
  for (std::size_t s = 0; s + length <= stream.length(); s += stride) set.starts.push_back(s);
  return set;
}

double noise_std(const Standardizer& raw_stats, double ratio) {
  return ratio * raw_stats.std.mean();
}

void inject_noise(Matrix& samples, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return;
  std::normal_distribution<double> gauss(0.0, sigma);
  for (Eigen::Index i = 0; i < samples.size(); ++i) samples.data()[i] += gauss(rng);
}

Matrix bin_mean(const Matrix& raw, std::size_t samples_per_bin) {
  if (samples_per_bin == 0) throw DataError("bin size must be positive");
  const auto bins = static_cast<Eigen::Index>(static_cast<std::size_t>(raw.rows()) / samples_per_bin);
  const auto w = static_cast<Eigen::Index>(samples_per_bin);
  Matrix out(bins, raw.cols());
  for (Eigen::Index b = 0; b < bins; ++b) out.row(b) = raw.middleRows(b * w, w).colwise().mean();
  return out;
}

double pearson(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DataError("pearson: length mismatch");
  if (pred.size() < 2) throw NumericalError("pearson: need at least two samples");
  const auto n = static_cast<double>(pred.size());
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += target[i];
  }
  mp /= n;
  mt /= n;
  double spp = 0.0, stt = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = pred[i] - mp;
    const double b = target[i] - mt;
    spp += a * a;
    stt += b * b;
    spt += a * b;
  }
  if (!(spp > 0.0) || !(stt > 0.0)) throw NumericalError("pearson: zero variance");
  return spt / std::sqrt(spp * stt);
}

double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DataError("rmse: length mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

DecodeScore decode_score(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DataError("score: shape mismatch");
  DecodeScore score;
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    const Vector p = pred.col(c);
    const Vector t = target.col(c);
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    const std::span<const double> ts(t.data(), static_cast<std::size_t>(t.size()));
    score.r.push_back(pearson(ps, ts));
    score.rmse.push_back(rmse(ps, ts));
  }
  for (std::size_t c = 0; c < score.r.size(); ++c) {
    score.mean_r += score.r[c] / static_cast<double>(score.r.size());
    score.mean_rmse += score.rmse[c] / static_cast<double>(score.rmse.size());
  }
  return score;
}

void save_dataset(const FeatureStream& stream, const std::filesystem::path& path) {
  stream.validate();
  detail::ByteWriter w;
  w.bytes("SBPD");
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(stream.channels()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(stream.velocities.cols()));
  w.put<float>(static_cast<float>(stream.bin_ms));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stream.length()));
  for (Eigen::Index t = 0; t < stream.frames.rows(); ++t) {
    for (Eigen::Index c = 0; c < stream.frames.cols(); ++c) w.put<float>(static_cast<float>(stream.frames(t, c)));
  }
  for (Eigen::Index t = 0; t < stream.velocities.rows(); ++t) {
    for (Eigen::Index c = 0; c < stream.velocities.cols(); ++c) {
      w.put<float>(static_cast<float>(stream.velocities(t, c)));
    }
  }
  detail::write_file(path, w.take());
}

FeatureStream load_dataset(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  r.expect("SBPD");
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion) throw DataError("unsupported dataset version " + std::to_string(version));
  const auto channels = r.get<std::uint16_t>();
  const auto vel_dims = r.get<std::uint16_t>();
  FeatureStream s;
  s.bin_ms = r.get<float>();
  const auto frames = r.get<std::uint32_t>();
  s.frames.resize(frames, channels);
  s.velocities.resize(frames, vel_dims);
  for (Eigen::Index t = 0; t < s.frames.rows(); ++t) {
    for (Eigen::Index c = 0; c < s.frames.cols(); ++c) s.frames(t, c) = r.get<float>();
  }
  for (Eigen::Index t = 0; t < s.velocities.rows(); ++t) {
    for (Eigen::Index c = 0; c < s.velocities.cols(); ++c) s.velocities(t, c) = r.get<float>();
  }
  if (!r.done()) throw DataError("trailing bytes in dataset file");
  s.validate();
  return s;
}

void save_csv(const FeatureStream& stream, const std::filesystem::path& path) {
  stream.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(9);
  for (std::size_t c = 0; c < stream.channels(); ++c) out << (c ? "," : "") << "ch" << c;
  for (Eigen::Index v = 0; v < stream.velocities.cols(); ++v) out << ",vel" << v;
  out << '\n';
  for (Eigen::Index t = 0; t < stream.frames.rows(); ++t) {
    for (Eigen::Index c = 0; c < stream.frames.cols(); ++c) out << (c ? "," : "") << stream.frames(t, c);
    for (Eigen::Index v = 0; v < stream.velocities.cols(); ++v) out << ',' << stream.velocities(t, v);
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

FeatureStream load_csv(const std::filesystem::path& path, std::size_t channels, double bin_ms) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header
      throw DataError("non-numeric value on line " + std::to_string(line_no));
    }
    if (row.size() <= channels) throw DataError("line " + std::to_string(line_no) + " has no velocity columns");
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("line " + std::to_string(line_no) + " has a different column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no data rows in " + path.string());
  const auto t = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(channels);
  const auto v = static_cast<Eigen::Index>(rows.front().size() - channels);
  FeatureStream s{Matrix(t, c), Matrix(t, v), bin_ms};
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < c; ++j) s.frames(i, j) = row[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < v; ++j) s.velocities(i, j) = row[static_cast<std::size_t>(c + j)];
  }
  s.validate();
  return s;
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.frames < 10 || spec.channels == 0) throw DataError("synthetic spec too small");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const auto t_total = static_cast<Eigen::Index>(spec.frames);
  const auto burn = static_cast<Eigen::Index>(200 + spec.max_lag);
  Matrix latent(t_total + burn, 2);
  for (Eigen::Index k = 0; k < 2; ++k) {
    // Damped oscillator driven by white noise: smooth, quasi-periodic movements.
    const double period = 16.0 + 24.0 * uni(rng);
    const double omega = 2.0 * std::numbers::pi / period;
    const double a1 = 2.0 * spec.smoothness * std::cos(omega);
    const double a2 = -spec.smoothness * spec.smoothness;
    double x1 = 0.0, x2 = 0.0;
    for (Eigen::Index t = 0; t < latent.rows(); ++t) {
      const double x = a1 * x1 + a2 * x2 + gauss(rng);
      latent(t, k) = x;
      x2 = x1;
      x1 = x;
    }
    const double mu = latent.col(k).mean();
    const double sd = std::sqrt((latent.col(k).array() - mu).square().mean());
    latent.col(k) = (latent.col(k).array() - mu) / sd;
  }

  const auto lags = static_cast<Eigen::Index>(spec.max_lag + 1);
  const auto ch = static_cast<Eigen::Index>(spec.channels);
  Matrix mix(ch, 2 * lags);
  for (Eigen::Index c = 0; c < ch; ++c) {
    for (Eigen::Index j = 0; j < mix.cols(); ++j) {
      const double lag = static_cast<double>(j % lags);
      mix(c, j) = gauss(rng) * std::exp(-0.5 * lag);
    }
  }

  Matrix frames(t_total, ch);
  for (Eigen::Index t = 0; t < t_total; ++t) {
    const Eigen::Index src = t + burn;
    for (Eigen::Index c = 0; c < ch; ++c) {
      double signal = 0.0;
      for (Eigen::Index k = 0; k < 2; ++k) {
        for (Eigen::Index lag = 0; lag < lags; ++lag) signal += mix(c, k * lags + lag) * latent(src - lag, k);
      }
      frames(t, c) = signal;
    }
  }
  for (Eigen::Index c = 0; c < ch; ++c) {
    const double sd = std::sqrt((frames.col(c).array() - frames.col(c).mean()).square().mean());
    const double offset = 5.0 + 5.0 * uni(rng);  // SBP is a positive power-like feature
    for (Eigen::Index t = 0; t < t_total; ++t) {
      frames(t, c) = offset + (frames(t, c) + spec.noise * sd * gauss(rng)) / std::max(sd, 1e-12);
    }
  }

  SyntheticData data;
  data.latent = latent.bottomRows(t_total);
  data.stream = {std::move(frames), data.latent, spec.bin_ms};
  return data;
}

}  // namespace snndec
