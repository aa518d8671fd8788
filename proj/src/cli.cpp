#include "snndec/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "snndec/checkpoint.hpp"
#include "snndec/config.hpp"
#include "snndec/dataio.hpp"
#include "snndec/deploy_sim.hpp"
#include "snndec/engine.hpp"
#include "snndec/errors.hpp"
#include "snndec/quantizer.hpp"
#include "snndec/trainer.hpp"

namespace snndec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("snndec", sink);
  log->set_pattern("[%l] %v");
  const char* level = std::getenv("SNNDEC_LOG_LEVEL");
  log->set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  return log;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

struct Manifest {
  std::string command;
  std::string started = utc_now();
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  std::uint64_t seed = 0;

  void write(const fs::path& path) const {
    json j = {{"command", command}, {"config", config},   {"seed", seed},
              {"inputs", inputs},   {"outputs", outputs}, {"version", SNNDEC_VERSION},
              {"started", started}, {"finished", utc_now()}};
    write_text(path, j.dump(2) + "\n");
  }
};

fs::path manifest_beside(const fs::path& file) {
  auto p = file;
  p.replace_extension(".manifest.json");
  return p;
}

fs::path norm_sidecar(const fs::path& model) {
  auto p = model;
  p.replace_extension(".norm.json");
  return p;
}

FeatureStream load_stream(const fs::path& path, double bin_ms) {
  if (path.extension() == ".csv") return load_csv(path, 96, bin_ms);
  return load_dataset(path);
}

RunConfig resolve_config(const std::string& config_path, const std::string& preset_name) {
  if (!config_path.empty()) return load_config(config_path);
  return preset(preset_name.empty() ? "paper_a" : preset_name);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("cannot parse '" + item + "' as a number");
    }
  }
  return values;
}

// "a:b" or "a:b:step", inclusive.
std::vector<std::size_t> parse_range(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      parts.push_back(static_cast<std::size_t>(std::stoul(item)));
    } catch (const std::exception&) {
      throw UsageError("bad range '" + text + "', expected start:end[:step]");
    }
  }
  if (parts.size() < 2 || parts.size() > 3 || parts[0] > parts[1] || (parts.size() == 3 && parts[2] == 0)) {
    throw UsageError("bad range '" + text + "', expected start:end[:step]");
  }
  const auto step = parts.size() == 3 ? parts[2] : 1;
  std::vector<std::size_t> out;
  for (auto v = parts[0]; v <= parts[1]; v += step) out.push_back(v);
  return out;
}

json score_json(const std::string& engine, const DecodeScore& s) {
  return {{"engine", engine}, {"r", s.r}, {"rmse", s.rmse}, {"mean_r", s.mean_r}, {"mean_rmse", s.mean_rmse}};
}

FeatureStream pick_split(const FeatureStream& all, double train_fraction, const std::string& which) {
  if (which == "all") return all;
  auto [train, val] = split(all, train_fraction);
  if (which == "train") return train;
  if (which == "val") return val;
  throw UsageError("split must be one of train, val, all");
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

struct Context {
  std::istream& in;
  std::ostream& out;
  std::shared_ptr<spdlog::logger> log;
};

struct SynthArgs {
  std::string out;
  SyntheticSpec spec;
  bool csv = false;
};

int cmd_synth(const SynthArgs& a, Context& ctx) {
  Manifest m{"synth"};
  m.seed = a.spec.seed;
  m.config = {{"frames", a.spec.frames}, {"channels", a.spec.channels}, {"noise", a.spec.noise},
              {"bin_ms", a.spec.bin_ms}, {"max_lag", a.spec.max_lag}, {"smoothness", a.spec.smoothness}};
  const auto data = make_synthetic(a.spec);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (a.csv || out.extension() == ".csv") {
    save_csv(data.stream, out);
  } else {
    save_dataset(data.stream, out);
  }
  m.outputs = {{"dataset", out.string()}};
  m.write(manifest_beside(out));
  ctx.log->info("wrote {} frames x {} channels to {}", data.stream.length(), data.stream.channels(), out.string());
  return kExitOk;
}

struct ConvertArgs {
  std::string csv;
  std::string out;
  std::size_t channels = 96;
  double bin_ms = 50.0;
  std::size_t samples_per_bin = 1;
};

int cmd_convert(const ConvertArgs& a, Context& ctx) {
  auto stream = load_csv(a.csv, a.channels, a.bin_ms);
  if (a.samples_per_bin > 1) {
    stream.frames = bin_mean(stream.frames, a.samples_per_bin);
    stream.velocities = bin_mean(stream.velocities, a.samples_per_bin);
  }
  save_dataset(stream, a.out);
  Manifest m{"convert"};
  m.inputs = {{"csv", a.csv}};
  m.outputs = {{"dataset", a.out}};
  m.config = {{"channels", a.channels}, {"bin_ms", a.bin_ms}, {"samples_per_bin", a.samples_per_bin}};
  m.write(manifest_beside(a.out));
  ctx.log->info("converted {} frames to {}", stream.length(), a.out);
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string preset;
  std::string data;
  std::string out;
  std::string resume;
  bool qat = false;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> qat_epochs;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, Context& ctx) {
  RunConfig cfg;
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    cfg = resume->config;
  } else {
    cfg = resolve_config(a.config, a.preset);
  }
  if (a.qat) {
    cfg.train.epochs_fp = 30;
    cfg.train.epochs_qat = 20;
  }
  if (a.epochs) cfg.train.epochs_fp = *a.epochs;
  if (a.qat_epochs) cfg.train.epochs_qat = *a.qat_epochs;
  if (a.seed) cfg.train.seed = *a.seed;
  cfg.validate();

  const auto stream = load_stream(a.data, cfg.bin_ms);
  if (stream.bin_ms != cfg.bin_ms) {
    ctx.log->warn("dataset bin width {} ms differs from config {} ms", stream.bin_ms, cfg.bin_ms);
  }
  auto [train, val] = split(stream, cfg.train.train_fraction);
  auto run = start_run(cfg.train, train);
  if (resume) {
    if (!(resume->config.train.network == cfg.train.network)) throw ConfigError("checkpoint network differs");
    run.net = resume->net;
    run.optimizer = resume->optimizer;
    run.epochs_done = resume->epochs_done;
    std::istringstream rng(resume->rng_state);
    rng >> run.rng;
    if (!rng) throw DataError("checkpoint has a corrupt generator state");
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const auto metrics_path = dir / "metrics.csv";
  std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + metrics_path.string());
  if (!resume) metrics << "epoch,learning_rate,phase,train_loss,train_r,val_r,val_rmse\n";
  ctx.log->info("training {} float + {} QAT epochs on {} frames ({} windows)", cfg.train.epochs_fp,
                cfg.train.epochs_qat, train.length(), run.data.windows.starts.size());
  continue_run(run, cfg.train, val, cfg.train.total_epochs(), [&](const HistoryRow& r) {
    metrics << r.epoch << ',' << fmt_num(r.learning_rate) << ',' << (r.qat ? "qat" : "float") << ','
            << fmt_num(r.train_loss) << ',' << fmt_num(r.train_r) << ',' << fmt_num(r.val_r) << ','
            << fmt_num(r.val_rmse) << '\n';
    metrics.flush();
    ctx.log->info("epoch {:3d} {:5s} loss {:.4f} train r {:.4f} val r {:.4f}", r.epoch, r.qat ? "qat" : "float",
                  r.train_loss, r.train_r, r.val_r);
  });
  const auto ckpt_path = dir / "checkpoint.snnc";
  save_checkpoint(make_checkpoint(cfg, run), ckpt_path);

  Manifest m{"train"};
  m.config = to_json(cfg);
  m.seed = cfg.train.seed;
  m.inputs = {{"data", a.data}};
  if (resume) m.inputs["resume"] = a.resume;
  m.outputs = {{"checkpoint", ckpt_path.string()}, {"metrics", metrics_path.string()}};
  m.write(dir / "manifest.json");
  if (!run.history.empty()) {
    const auto& last = run.history.back();
    ctx.out << "final val r " << fmt_num(last.val_r) << ", rmse " << fmt_num(last.val_rmse) << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string model;
  std::string norm;
  std::string data;
  std::string split = "val";
  std::string out;
  bool quantized = false;
};

int cmd_eval(const EvalArgs& a, Context& ctx) {
  if (a.checkpoint.empty() == a.model.empty()) throw UsageError("give exactly one of --checkpoint or --model");
  json report = {{"split", a.split}, {"results", json::array()}};
  Manifest m{"eval"};
  m.inputs = {{"data", a.data}};
  if (!a.checkpoint.empty()) {
    const auto ckpt = load_checkpoint(a.checkpoint);
    m.inputs["checkpoint"] = a.checkpoint;
    m.config = to_json(ckpt.config);
    m.seed = ckpt.config.train.seed;
    const auto stream = load_stream(a.data, ckpt.config.bin_ms);
    const auto part = pick_split(stream, ckpt.config.train.train_fraction, a.split);
    report["frames"] = part.length();
    const auto fscore = evaluate(ckpt.net.fused_network(), part, ckpt.features, ckpt.velocities);
    report["results"].push_back(score_json("float", fscore));
    if (a.quantized) {
      const auto model = ckpt.net.quantize(ckpt.config.train.quant);
      report["results"].push_back(score_json("fixed", evaluate(model, part, ckpt.features, ckpt.velocities)));
    }
  } else {
    const auto model = load_model(a.model);
    const fs::path norm_path = a.norm.empty() ? norm_sidecar(a.model) : fs::path(a.norm);
    const auto norm = read_json(norm_path);
    m.inputs["model"] = a.model;
    m.inputs["norm"] = norm_path.string();
    const auto stream = load_stream(a.data, norm.value("bin_ms", 50.0));
    const auto part = pick_split(stream, norm.value("train_fraction", 0.8), a.split);
    report["frames"] = part.length();
    const auto features = standardizer_from_json(norm.at("features"));
    const auto velocities = standardizer_from_json(norm.at("velocities"));
    report["results"].push_back(score_json("fixed", evaluate(model, part, features, velocities)));
  }
  const auto text = report.dump(2) + "\n";
  ctx.out << text;
  if (!a.out.empty()) {
    write_text(a.out, text);
    m.outputs = {{"report", a.out}};
    m.write(manifest_beside(a.out));
  }
  return kExitOk;
}

struct QuantizeArgs {
  std::string checkpoint;
  std::string out;
  std::optional<int> weight_bits;
  std::string scale_rule;
};

json footprint_json(const Footprint& f) {
  return {{"weights", f.weights}, {"decay", f.decay},           {"bias", f.bias},   {"vth", f.vth},
          {"membrane", f.membrane}, {"parameters", f.parameters()}, {"total", f.total()}};
}

int cmd_quantize(const QuantizeArgs& a, Context& ctx) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  auto spec = ckpt.config.train.quant;
  if (a.weight_bits) spec.weight_bits = *a.weight_bits;
  if (a.scale_rule == "power-of-two") {
    spec.scale_rule = ScaleRule::PowerOfTwo;
  } else if (a.scale_rule == "signed-max") {
    spec.scale_rule = ScaleRule::SignedMax;
  } else if (!a.scale_rule.empty()) {
    throw UsageError("--scale-rule must be signed-max or power-of-two");
  }
  spec.validate();
  const auto model = ckpt.net.quantize(spec);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_model(model, out);
  const json norm = {{"features", standardizer_to_json(ckpt.features)},
                     {"velocities", standardizer_to_json(ckpt.velocities)},
                     {"train_fraction", ckpt.config.train.train_fraction},
                     {"bin_ms", ckpt.config.bin_ms}};
  write_text(norm_sidecar(out), norm.dump(2) + "\n");
  const auto fp = footprint(model.config);
  const json report = {{"model", out.string()}, {"bytes", footprint_json(fp)}};
  auto report_path = out;
  report_path.replace_extension(".footprint.json");
  write_text(report_path, report.dump(2) + "\n");
  ctx.out << "footprint: weights " << fp.weights << " B, decay " << fp.decay << " B, bias " << fp.bias << " B, vth "
          << fp.vth << " B, membrane " << fp.membrane << " B, total " << fp.total() << " B\n";

  Manifest m{"quantize"};
  m.config = to_json(ckpt.config);
  m.seed = ckpt.config.train.seed;
  m.inputs = {{"checkpoint", a.checkpoint}};
  m.outputs = {{"model", out.string()}, {"norm", norm_sidecar(out).string()}, {"footprint", report_path.string()}};
  m.write(manifest_beside(out));
  return kExitOk;
}

struct SimulateArgs {
  std::string model;
  std::string config;
  std::string preset;
  std::string machine;
  std::string data;
  std::string norm;
  std::size_t frames = 200;
  std::string rates;
  std::string spikes;
  std::size_t layer = 2;
  std::string strategies;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, Context& ctx) {
  RunConfig cfg = resolve_config(a.config, a.preset);
  if (!a.machine.empty()) {
    const auto m = load_config(a.machine);
    cfg.machine = m.machine;
    cfg.ann = m.ann;
  }
  NetworkConfig net = cfg.train.network;
  std::shared_ptr<const QuantizedModel> model;
  if (!a.model.empty()) {
    model = std::make_shared<const QuantizedModel>(load_model(a.model));
    net = model->config;
  }
  std::vector<Strategy> strategies = all_strategies();
  if (!a.strategies.empty()) {
    strategies.clear();
    std::stringstream ss(a.strategies);
    std::string item;
    while (std::getline(ss, item, ',')) strategies.push_back(parse_strategy(item));
  }

  // Spike activity: recorded traces, explicit rates, or the default 19%, 19%, 9%.
  std::vector<SpikeSchedule> schedules;
  SpikeProfile profile;
  if (!a.data.empty()) {
    if (!model) throw UsageError("--data needs --model to produce spike traces");
    const fs::path norm_path = a.norm.empty() ? norm_sidecar(a.model) : fs::path(a.norm);
    const auto norm = read_json(norm_path);
    const auto features = standardizer_from_json(norm.at("features"));
    const auto stream = load_stream(a.data, cfg.bin_ms);
    SparseEngine engine(model);
    std::vector<InferenceTrace> traces;
    const auto n = std::min<std::size_t>(a.frames, stream.length());
    for (std::size_t t = 0; t < n; ++t) {
      const Vector row = stream.frames.row(static_cast<Eigen::Index>(t)).transpose();
      const Vector z = features.transform_row({row.data(), static_cast<std::size_t>(row.size())});
      const auto codes = quantize_input({z.data(), static_cast<std::size_t>(z.size())}, model->spec);
      traces.push_back(engine.infer_frame(codes).trace);
      schedules.push_back(SpikeSchedule::from_trace(traces.back()));
    }
    profile = SpikeProfile::from_traces(traces);
  } else {
    const auto rates = a.rates.empty() ? std::vector<double>{0.19, 0.19, 0.09} : parse_list(a.rates);
    profile = SpikeProfile::from_rates(net, rates);
    schedules.push_back(SpikeSchedule::from_profile(net, profile));
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  Manifest m{"simulate"};
  m.config = to_json(cfg);
  m.inputs = {{"model", a.model}, {"data", a.data}, {"machine", a.machine}};

  std::vector<CostReport> accounting;
  std::vector<CostReport> timed;
  const auto cmp = compare_strategies(cfg.machine, net, schedules, cfg.ann);
  for (auto s : strategies) {
    accounting.push_back(count_ops(net, profile, s, cfg.ann));
    for (const auto& r : cmp.reports) {
      if (r.strategy == s) timed.push_back(r);
    }
  }
  write_text(dir / "accounting.csv", cost_csv(accounting));
  write_text(dir / "costs.csv", cost_csv(timed));
  std::string timeline = "strategy,layer,resource,label,start_cycle,end_cycle\n";
  for (auto s : strategies) {
    const auto text = timeline_csv(simulate_inference(cfg.machine, net, schedules.front(), s, cfg.ann));
    timeline += text.substr(text.find('\n') + 1);
  }
  write_text(dir / "timeline.csv", timeline);
  m.outputs = {{"accounting", (dir / "accounting.csv").string()},
               {"costs", (dir / "costs.csv").string()},
               {"timeline", (dir / "timeline.csv").string()}};

  if (!a.spikes.empty()) {
    const auto counts = parse_range(a.spikes);
    std::ostringstream sweep;
    sweep << "strategy,layer,input_spikes,cycles\n";
    for (auto s : strategies) {
      if (s == Strategy::AnnDense) continue;
      const auto cycles = sweep_layer_cycles(cfg.machine, net, a.layer, counts, s);
      for (std::size_t i = 0; i < counts.size(); ++i) {
        sweep << strategy_name(s) << ',' << a.layer << ',' << counts[i] << ',' << cycles[i] << '\n';
      }
    }
    write_text(dir / "sweep.csv", sweep.str());
    m.outputs["sweep"] = (dir / "sweep.csv").string();
  }
  for (const auto& r : accounting) {
    ctx.out << strategy_name(r.strategy) << ": MAC " << fmt_num(r.total.macs) << ", ADD " << fmt_num(r.total.adds)
            << ", memory accesses " << fmt_num(r.total.accesses) << "\n";
  }
  for (const auto& r : timed) {
    ctx.out << strategy_name(r.strategy) << ": " << fmt_num(r.total.cycles) << " modeled cycles";
    if (r.overflow_events > 0) ctx.out << " (" << r.overflow_events << " sparse buffer overflows)";
    ctx.out << "\n";
  }
  m.write(dir / "manifest.json");
  return kExitOk;
}

struct InferArgs {
  std::string model;
  std::string norm;
  std::string trace;
};

int cmd_infer(const InferArgs& a, Context& ctx) {
  auto model = std::make_shared<const QuantizedModel>(load_model(a.model));
  const fs::path norm_path = a.norm.empty() ? norm_sidecar(a.model) : fs::path(a.norm);
  const auto norm = read_json(norm_path);
  const auto features = standardizer_from_json(norm.at("features"));
  const auto velocities = standardizer_from_json(norm.at("velocities"));
  const auto channels = model->config.input_size();
  if (static_cast<std::size_t>(features.mean.size()) != channels) {
    throw DataError("normalization sidecar does not match the model input size");
  }
  std::ofstream trace_file;
  if (!a.trace.empty()) {
    trace_file.open(a.trace);
    if (!trace_file) throw DataError("cannot write " + a.trace);
  }

  SparseEngine engine(model);
  std::string line;
  std::size_t line_no = 0;
  ctx.out << std::setprecision(6);
  while (std::getline(ctx.in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    for (auto& ch : line) {
      if (ch == ',' || ch == '\t') ch = ' ';
    }
    std::istringstream ss(line);
    std::vector<double> frame;
    std::string tok;
    while (ss >> tok) {
      try {
        frame.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": '" + tok + "' is not a number");
      }
    }
    if (frame.empty()) continue;
    if (frame.size() != channels) {
      throw DataError("line " + std::to_string(line_no) + " has " + std::to_string(frame.size()) +
                      " values, expected " + std::to_string(channels));
    }
    const auto z = features.transform_row(frame);
    const auto codes = quantize_input({z.data(), static_cast<std::size_t>(z.size())}, model->spec);
    const auto result = engine.infer_frame(codes);
    const auto real = engine.dequantize_output(result.output);
    const auto vel = velocities.inverse_row(real);
    for (Eigen::Index i = 0; i < vel.size(); ++i) ctx.out << (i ? " " : "") << vel[i];
    ctx.out << '\n';
    if (trace_file.is_open()) trace_file << result.trace.to_json_line() << '\n';
  }
  ctx.out.flush();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  Context ctx{in, out, make_logger(err)};
  CLI::App app{"Spiking neural network finger-velocity decoder toolkit", "snndec"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SNNDEC_VERSION);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  s_synth->add_option("--out", synth.out, "Output dataset (.bin container or .csv)")->required();
  s_synth->add_option("--frames", synth.spec.frames, "Number of frames")->capture_default_str();
  s_synth->add_option("--channels", synth.spec.channels, "Feature channels")->capture_default_str();
  s_synth->add_option("--noise", synth.spec.noise, "Per-channel noise relative to signal")->capture_default_str();
  s_synth->add_option("--bin-ms", synth.spec.bin_ms, "Bin width in ms")->capture_default_str();
  s_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
  s_synth->add_flag("--csv", synth.csv, "Write CSV instead of the binary container");

  ConvertArgs convert;
  auto* s_convert = app.add_subcommand("convert", "Convert a CSV recording to the dataset container");
  s_convert->add_option("--csv", convert.csv, "Input CSV: feature columns then velocity columns")->required();
  s_convert->add_option("--out", convert.out, "Output dataset")->required();
  s_convert->add_option("--channels", convert.channels, "Feature columns")->capture_default_str();
  s_convert->add_option("--bin-ms", convert.bin_ms, "Bin width of the output in ms")->capture_default_str();
  s_convert->add_option("--samples-per-bin", convert.samples_per_bin, "Average this many rows per bin")
      ->capture_default_str();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train a network");
  s_train->add_option("--config", train.config, "Config file");
  s_train->add_option("--preset", train.preset, "Preset name (paper_a, paper_b)");
  s_train->add_option("--data", train.data, "Dataset")->required();
  s_train->add_option("--out", train.out, "Output directory")->required();
  s_train->add_option("--resume", train.resume, "Resume from a checkpoint");
  s_train->add_flag("--qat", train.qat, "30 float epochs followed by 20 QAT epochs");
  s_train->add_option("--epochs", train.epochs, "Float epochs");
  s_train->add_option("--qat-epochs", train.qat_epochs, "QAT epochs");
  s_train->add_option("--seed", train.seed, "Seed");

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "Correlation and RMSE of a checkpoint or model");
  s_eval->add_option("--checkpoint", eval.checkpoint, "Training checkpoint (float network)");
  s_eval->add_option("--model", eval.model, "Quantized model file");
  s_eval->add_option("--norm", eval.norm, "Normalization sidecar (default: next to the model)");
  s_eval->add_option("--data", eval.data, "Dataset")->required();
  s_eval->add_option("--split", eval.split, "train, val or all")->capture_default_str();
  s_eval->add_option("--out", eval.out, "Write the JSON report here");
  s_eval->add_flag("--quantized", eval.quantized, "With --checkpoint, also score the fixed-point engine");

  QuantizeArgs quant;
  auto* s_quant = app.add_subcommand("quantize", "Fuse, quantize and export a checkpoint");
  s_quant->add_option("--checkpoint", quant.checkpoint, "Training checkpoint")->required();
  s_quant->add_option("--out", quant.out, "Model file")->required();
  s_quant->add_option("--weight-bits", quant.weight_bits, "Override weight bit width");
  s_quant->add_option("--scale-rule", quant.scale_rule, "signed-max or power-of-two");

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Operation counts and modeled cycles per strategy");
  s_sim->add_option("--model", sim.model, "Quantized model (network shape and trace source)");
  s_sim->add_option("--config", sim.config, "Config file");
  s_sim->add_option("--preset", sim.preset, "Preset name");
  s_sim->add_option("--machine", sim.machine, "Config file with [machine] and [ann] sections");
  s_sim->add_option("--data", sim.data, "Dataset to record spike traces from");
  s_sim->add_option("--norm", sim.norm, "Normalization sidecar");
  s_sim->add_option("--frames", sim.frames, "Frames to record with --data")->capture_default_str();
  s_sim->add_option("--rates", sim.rates, "Spike rate per spiking layer, comma separated");
  s_sim->add_option("--spikes", sim.spikes, "Sweep input spike counts start:end[:step]");
  s_sim->add_option("--layer", sim.layer, "Layer for --spikes")->capture_default_str();
  s_sim->add_option("--strategies", sim.strategies, "Comma separated: ann-dense, snn-baseline, snn-sparse");
  s_sim->add_option("--out", sim.out, "Output directory")->required();

  InferArgs infer;
  auto* s_infer = app.add_subcommand("infer", "Stream frames from stdin through the fixed-point engine");
  s_infer->add_option("--model", infer.model, "Quantized model")->required();
  s_infer->add_option("--norm", infer.norm, "Normalization sidecar");
  s_infer->add_option("--trace", infer.trace, "Write per-frame spike records (JSON lines) here");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_synth->parsed()) return cmd_synth(synth, ctx);
    if (s_convert->parsed()) return cmd_convert(convert, ctx);
    if (s_train->parsed()) return cmd_train(train, ctx);
    if (s_eval->parsed()) return cmd_eval(eval, ctx);
    if (s_quant->parsed()) return cmd_quantize(quant, ctx);
    if (s_sim->parsed()) return cmd_simulate(sim, ctx);
    if (s_infer->parsed()) return cmd_infer(infer, ctx);
  } catch (const UsageError& e) {
    ctx.log->error("{}", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    ctx.log->error("{}", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    ctx.log->error("{}", e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    ctx.log->error("{}", e.what());
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    ctx.log->error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    ctx.log->error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace snndec
