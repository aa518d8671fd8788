#include "snndec/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "snndec/errors.hpp"

namespace snndec {

using nlohmann::json;

namespace {

struct Field {
  const char* section;
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

std::size_t as_count(const json& v, const char* key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string(key) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double as_real(const json& v, const char* key) {
  if (!v.is_number()) throw ConfigError(std::string(key) + " must be a number");
  return v.get<double>();
}

int as_bits(const json& v, const char* key) { return static_cast<int>(as_count(v, key)); }

#define SNNDEC_COUNT(sec, name, member)                                               \
  Field {                                                                             \
    sec, name, [](const RunConfig& c) { return json(c.member); },                     \
        [](RunConfig& c, const json& v) { c.member = as_count(v, sec "." name); }     \
  }
#define SNNDEC_REAL(sec, name, member)                                                \
  Field {                                                                             \
    sec, name, [](const RunConfig& c) { return json(c.member); },                     \
        [](RunConfig& c, const json& v) { c.member = as_real(v, sec "." name); }      \
  }
#define SNNDEC_BITS(name, member)                                                     \
  Field {                                                                             \
    "quant", name, [](const RunConfig& c) { return json(c.train.quant.member); },     \
        [](RunConfig& c, const json& v) { c.train.quant.member = as_bits(v, "quant." name); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"", "preset", [](const RunConfig& c) { return json(c.preset); },
            [](RunConfig& c, const json& v) {
              if (!v.is_string()) throw ConfigError("preset must be a string");
              c.preset = v.get<std::string>();
            }},
      SNNDEC_REAL("data", "bin_ms", bin_ms),
      Field{"network", "layer_sizes", [](const RunConfig& c) { return json(c.train.network.layer_sizes); },
            [](RunConfig& c, const json& v) {
              if (!v.is_array()) throw ConfigError("network.layer_sizes must be an array");
              std::vector<std::size_t> sizes;
              for (const auto& e : v) sizes.push_back(as_count(e, "network.layer_sizes"));
              c.train.network.layer_sizes = sizes;
            }},
      Field{"network", "v_th", [](const RunConfig& c) { return json(c.train.network.v_th); },
            [](RunConfig& c, const json& v) {
              std::vector<double> th;
              if (v.is_array()) {
                for (const auto& e : v) th.push_back(as_real(e, "network.v_th"));
              } else {
                th.push_back(as_real(v, "network.v_th"));
              }
              c.train.network.v_th = th;
            }},
      Field{"network", "output_spiking", [](const RunConfig& c) { return json(c.train.network.output_is_spiking); },
            [](RunConfig& c, const json& v) {
              if (!v.is_boolean()) throw ConfigError("network.output_spiking must be true or false");
              c.train.network.output_is_spiking = v.get<bool>();
            }},
      SNNDEC_COUNT("train", "unroll_steps", train.unroll_steps),
      SNNDEC_COUNT("train", "burn_in_frames", train.burn_in_frames),
      SNNDEC_REAL("train", "learning_rate", train.learning_rate),
      SNNDEC_REAL("train", "weight_decay", train.weight_decay),
      SNNDEC_REAL("train", "lr_decay", train.lr_decay),
      SNNDEC_COUNT("train", "lr_decay_every", train.lr_decay_every),
      SNNDEC_COUNT("train", "batch_size", train.batch_size),
      SNNDEC_REAL("train", "dropout", train.dropout_p),
      SNNDEC_REAL("train", "noise_ratio", train.noise_ratio),
      SNNDEC_COUNT("train", "epochs", train.epochs_fp),
      SNNDEC_COUNT("train", "qat_epochs", train.epochs_qat),
      SNNDEC_REAL("train", "surrogate_halfwidth", train.surrogate_halfwidth),
      SNNDEC_COUNT("train", "seed", train.seed),
      SNNDEC_REAL("train", "train_fraction", train.train_fraction),
      SNNDEC_REAL("train", "adam_beta1", train.adam_beta1),
      SNNDEC_REAL("train", "adam_beta2", train.adam_beta2),
      SNNDEC_REAL("train", "adam_eps", train.adam_eps),
      SNNDEC_COUNT("train", "eval_every", train.eval_every),
      SNNDEC_BITS("weight_bits", weight_bits),
      SNNDEC_BITS("bias_bits", bias_bits),
      SNNDEC_BITS("vth_bits", vth_bits),
      SNNDEC_BITS("membrane_bits", membrane_bits),
      SNNDEC_BITS("decay_bits", decay_bits),
      SNNDEC_BITS("decay_shift", decay_shift),
      SNNDEC_BITS("input_bits", input_bits),
      SNNDEC_REAL("quant", "input_scale", train.quant.input_scale),
      Field{"quant", "scale_rule",
            [](const RunConfig& c) {
              return json(c.train.quant.scale_rule == ScaleRule::SignedMax ? "signed-max" : "power-of-two");
            },
            [](RunConfig& c, const json& v) {
              const auto s = v.is_string() ? v.get<std::string>() : "";
              if (s == "signed-max") {
                c.train.quant.scale_rule = ScaleRule::SignedMax;
              } else if (s == "power-of-two") {
                c.train.quant.scale_rule = ScaleRule::PowerOfTwo;
              } else {
                throw ConfigError("quant.scale_rule must be \"signed-max\" or \"power-of-two\"");
              }
            }},
      SNNDEC_COUNT("machine", "worker_cores", machine.worker_cores),
      SNNDEC_COUNT("machine", "simd_macs_per_cycle", machine.simd_macs_per_cycle),
      SNNDEC_COUNT("machine", "simd_adds_per_cycle", machine.simd_adds_per_cycle),
      SNNDEC_COUNT("machine", "simd_adds16_per_cycle", machine.simd_adds16_per_cycle),
      SNNDEC_COUNT("machine", "l1_bytes", machine.l1_bytes),
      SNNDEC_COUNT("machine", "l2_bytes", machine.l2_bytes),
      SNNDEC_REAL("machine", "dma_bytes_per_cycle", machine.dma_bytes_per_cycle),
      SNNDEC_COUNT("machine", "dma_queue_cost_cycles", machine.dma_queue_cost_cycles),
      SNNDEC_COUNT("machine", "column_bytes", machine.column_bytes),
      SNNDEC_COUNT("machine", "sparse_buffer_bytes", machine.sparse_buffer_bytes),
      SNNDEC_COUNT("machine", "spike_issue_cycles", machine.spike_issue_cycles),
      SNNDEC_COUNT("machine", "layer_overhead_cycles", machine.layer_overhead_cycles),
      SNNDEC_COUNT("machine", "master_tail_cycles", machine.master_tail_cycles),
      SNNDEC_COUNT("ann", "channels", ann.channels),
      SNNDEC_COUNT("ann", "history", ann.history),
      Field{"ann", "hidden", [](const RunConfig& c) { return json(c.ann.hidden); },
            [](RunConfig& c, const json& v) {
              if (!v.is_array()) throw ConfigError("ann.hidden must be an array");
              c.ann.hidden.clear();
              for (const auto& e : v) c.ann.hidden.push_back(as_count(e, "ann.hidden"));
            }},
      SNNDEC_COUNT("ann", "outputs", ann.outputs),
      SNNDEC_REAL("ann", "feature_macs", ann.feature_macs),
      SNNDEC_REAL("ann", "feature_params", ann.feature_params),
  };
  return table;
}

#undef SNNDEC_COUNT
#undef SNNDEC_REAL
#undef SNNDEC_BITS

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (section == f.section && key == f.key) return &f;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

json parse_scalar(const std::string& text, std::size_t line) {
  auto fail = [&] { return ConfigError("line " + std::to_string(line) + ": cannot parse value '" + text + "'"); };
  if (text.empty()) throw fail();
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw fail();
    return text.substr(1, text.size() - 2);
  }
  std::string digits;
  for (char ch : text) {
    if (ch != '_') digits += ch;
  }
  const bool integral = digits.find_first_of(".eE") == std::string::npos;
  std::size_t used = 0;
  try {
    if (integral) {
      const long long v = std::stoll(digits, &used);
      if (used == digits.size()) return v;
    } else {
      const double v = std::stod(digits, &used);
      if (used == digits.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw fail();
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

json parse_kv(std::string_view text) {
  json root = json::object();
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      if (!root.contains(section)) root[section] = json::object();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    json parsed;
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated array");
      parsed = json::array();
      std::istringstream items(value.substr(1, value.size() - 2));
      std::string item;
      while (std::getline(items, item, ',')) {
        const auto t = trim(item);
        if (!t.empty()) parsed.push_back(parse_scalar(t, line_no));
      }
    } else {
      parsed = parse_scalar(value, line_no);
    }
    json& target = section.empty() ? root : root[section];
    if (target.contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    target[key] = parsed;
  }
  return root;
}

void RunConfig::validate() const {
  if (!(bin_ms > 0.0)) throw ConfigError("data.bin_ms must be positive");
  train.validate();
  machine.validate();
  ann.validate();
}

std::vector<std::string> preset_names() { return {"paper_a", "paper_b"}; }

RunConfig preset(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  if (name == "paper_a") {
    c.bin_ms = 50.0;
    c.train = TrainConfig::paper_a();
  } else if (name == "paper_b") {
    c.bin_ms = 32.0;
    c.train = TrainConfig::paper_b();
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return c;
}

namespace {

RunConfig apply(const json& tree) {
  RunConfig config = preset(tree.contains("preset") && tree["preset"].is_string() ? tree["preset"].get<std::string>()
                                                                                  : "paper_a");
  for (const auto& [name, value] : tree.items()) {
    if (value.is_object()) {
      for (const auto& [key, v] : value.items()) {
        const auto* f = find_field(name, key);
        if (f == nullptr) throw ConfigError("unknown config key '" + name + "." + key + "'");
        f->set(config, v);
      }
    } else {
      const auto* f = find_field("", name);
      if (f == nullptr) throw ConfigError("unknown config key '" + name + "'");
      f->set(config, value);
    }
  }
  config.validate();
  return config;
}

}  // namespace

RunConfig parse_config(std::string_view text) { return apply(parse_kv(text)); }

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& f : fields()) {
    if (std::string_view(f.section).empty()) {
      j[f.key] = f.get(config);
    } else {
      j[f.section][f.key] = f.get(config);
    }
  }
  return j;
}

RunConfig run_config_from_json(const json& j) { return apply(j); }

}  // namespace snndec
