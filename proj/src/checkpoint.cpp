#include "snndec/checkpoint.hpp"

#include <sstream>

#include "bytes.hpp"
#include "snndec/errors.hpp"

namespace snndec {

using nlohmann::json;

namespace {

constexpr std::uint16_t kVersion = 1;

void put_block(detail::ByteWriter& w, const double* data, Eigen::Index n) {
  w.put_all<double>({data, static_cast<std::size_t>(n)});
}

template <typename Dense>
void get_block(detail::ByteReader& r, Dense& target) {
  const auto values = r.get_all<double>(static_cast<std::size_t>(target.size()));
  std::copy(values.begin(), values.end(), target.data());
}

}  // namespace

json standardizer_to_json(const Standardizer& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())},
          {"fitted_on_training", s.fitted_on_training}};
}

Standardizer standardizer_from_json(const json& j) {
  Standardizer s;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto std = j.at("std").get<std::vector<double>>();
  if (mean.size() != std.size()) throw DataError("checkpoint standardizer is inconsistent");
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const Vector>(std.data(), static_cast<Eigen::Index>(std.size()));
  s.fitted_on_training = j.at("fitted_on_training").get<bool>();
  return s;
}

Checkpoint make_checkpoint(const RunConfig& config, const TrainingRun& run) {
  std::ostringstream rng;
  rng << run.rng;
  return {config, run.net, run.optimizer, run.data.features, run.data.velocities, run.epochs_done, rng.str()};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json meta = {{"config", to_json(ckpt.config)},
               {"epochs_done", ckpt.epochs_done},
               {"rng_state", ckpt.rng_state},
               {"adam_steps", ckpt.optimizer.steps},
               {"features", standardizer_to_json(ckpt.features)},
               {"velocities", standardizer_to_json(ckpt.velocities)},
               {"layers", ckpt.net.layers.size()}};
  const auto text = meta.dump();

  detail::ByteWriter w;
  w.bytes("SNNC");
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& layer : ckpt.net.layers) {
    const auto& p = layer.params;
    const auto& bn = layer.bn;
    put_block(w, p.weights.data(), p.weights.size());
    put_block(w, p.bias.data(), p.bias.size());
    put_block(w, p.decay.data(), p.decay.size());
    put_block(w, bn.gamma.data(), bn.gamma.size());
    put_block(w, bn.beta.data(), bn.beta.size());
    put_block(w, bn.running_mean.data(), bn.running_mean.size());
    put_block(w, bn.running_var.data(), bn.running_var.size());
  }
  const bool has_moments = !ckpt.optimizer.m.layers.empty();
  w.put<std::uint8_t>(has_moments ? 1 : 0);
  if (has_moments) {
    for (const auto* tape : {&ckpt.optimizer.m, &ckpt.optimizer.v}) {
      for (const auto& s : tape->spans()) w.put_all<double>(s);
    }
  }
  const auto bytes = w.take();
  detail::write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  r.expect("SNNC");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = r.get<std::uint32_t>();
  Checkpoint ckpt;
  try {
    const auto meta = json::parse(r.get_string(meta_len));
    ckpt.config = run_config_from_json(meta.at("config"));
    ckpt.epochs_done = meta.at("epochs_done").get<std::size_t>();
    ckpt.rng_state = meta.at("rng_state").get<std::string>();
    ckpt.features = standardizer_from_json(meta.at("features"));
    ckpt.velocities = standardizer_from_json(meta.at("velocities"));
    ckpt.optimizer.steps = meta.at("adam_steps").get<std::uint64_t>();
    if (meta.at("layers").get<std::size_t>() != ckpt.config.train.network.num_layers()) {
      throw DataError("checkpoint layer count disagrees with its config");
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": bad checkpoint config: " + e.what());
  }

  const auto& net_cfg = ckpt.config.train.network;
  ckpt.net.config = net_cfg;
  for (std::size_t l = 0; l < net_cfg.num_layers(); ++l) {
    const auto in = net_cfg.layer_sizes[l];
    const auto out = net_cfg.layer_sizes[l + 1];
    TrainableLayer layer{LayerParams::zeros(out, in), TdBNParams::identity(out, net_cfg.threshold(l))};
    get_block(r, layer.params.weights);
    get_block(r, layer.params.bias);
    get_block(r, layer.params.decay);
    get_block(r, layer.bn.gamma);
    get_block(r, layer.bn.beta);
    get_block(r, layer.bn.running_mean);
    get_block(r, layer.bn.running_var);
    ckpt.net.layers.push_back(std::move(layer));
  }
  const auto steps = ckpt.optimizer.steps;
  const auto& train = ckpt.config.train;
  ckpt.optimizer = AdamW(ckpt.net, train.adam_beta1, train.adam_beta2, train.adam_eps);
  ckpt.optimizer.steps = steps;
  if (r.get<std::uint8_t>() != 0) {
    for (auto* tape : {&ckpt.optimizer.m, &ckpt.optimizer.v}) {
      for (auto s : tape->spans()) {
        const auto values = r.get_all<double>(s.size());
        std::copy(values.begin(), values.end(), s.begin());
      }
    }
  }
  if (!r.done()) throw DataError(path.string() + ": trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace snndec
