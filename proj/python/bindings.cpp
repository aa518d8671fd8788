#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "snndec/config.hpp"
#include "snndec/dataio.hpp"
#include "snndec/deploy_sim.hpp"
#include "snndec/engine.hpp"
#include "snndec/errors.hpp"
#include "snndec/quantizer.hpp"
#include "snndec/trainer.hpp"

namespace py = pybind11;
using namespace snndec;

namespace {

py::dict cost_dict(const LayerCost& c) {
  py::dict d;
  d["layer"] = c.layer;
  d["macs"] = c.macs;
  d["adds"] = c.adds;
  d["accesses"] = c.accesses;
  d["bytes"] = c.bytes;
  d["dma_transfers"] = c.dma_transfers;
  d["cycles"] = c.cycles;
  return d;
}

py::dict report_dict(const CostReport& r) {
  py::dict d;
  d["strategy"] = std::string(strategy_name(r.strategy));
  py::list layers;
  for (const auto& l : r.layers) layers.append(cost_dict(l));
  d["layers"] = layers;
  d["total"] = cost_dict(r.total);
  d["overflow_events"] = r.overflow_events;
  return d;
}

struct Trained {
  TrainConfig config;
  TrainingRun run;

  Matrix predict(const Matrix& raw_frames) const {
    const auto z = run.data.features.transform(raw_frames);
    return run.data.velocities.inverse(stream_predict(run.net.fused_network(), z));
  }
};

}  // namespace

PYBIND11_MODULE(_snndec, m) {
  m.doc() = "Spiking neural network decoder: training, fixed-point inference and deployment cost model";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init<>())
      .def_readwrite("layer_sizes", &NetworkConfig::layer_sizes)
      .def_readwrite("v_th", &NetworkConfig::v_th)
      .def_readwrite("output_is_spiking", &NetworkConfig::output_is_spiking)
      .def_static("paper", &NetworkConfig::paper)
      .def("validate", &NetworkConfig::validate);

  py::enum_<ScaleRule>(m, "ScaleRule").value("SignedMax", ScaleRule::SignedMax).value("PowerOfTwo", ScaleRule::PowerOfTwo);

  py::class_<QuantSpec>(m, "QuantSpec")
      .def(py::init<>())
      .def_readwrite("weight_bits", &QuantSpec::weight_bits)
      .def_readwrite("bias_bits", &QuantSpec::bias_bits)
      .def_readwrite("vth_bits", &QuantSpec::vth_bits)
      .def_readwrite("membrane_bits", &QuantSpec::membrane_bits)
      .def_readwrite("decay_bits", &QuantSpec::decay_bits)
      .def_readwrite("decay_shift", &QuantSpec::decay_shift)
      .def_readwrite("input_bits", &QuantSpec::input_bits)
      .def_readwrite("input_scale", &QuantSpec::input_scale)
      .def_readwrite("scale_rule", &QuantSpec::scale_rule)
      .def_static("paper", &QuantSpec::paper);

  py::class_<QuantizedModel, std::shared_ptr<QuantizedModel>>(m, "QuantizedModel")
      .def_readonly("config", &QuantizedModel::config)
      .def_readonly("spec", &QuantizedModel::spec)
      .def("weights", [](const QuantizedModel& q, std::size_t layer) {
        if (layer >= q.layers.size()) throw py::index_error("layer out of range");
        const auto& l = q.layers[layer];
        Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(l.out, l.in);
        for (std::size_t i = 0; i < l.weights.size(); ++i) w.data()[i] = l.weights[i];
        return w;
      })
      .def("save", [](const QuantizedModel& q, const std::filesystem::path& p) { save_model(q, p); })
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<QuantizedModel>(load_model(p)); });

  m.def("footprint", [](const NetworkConfig& config) {
    const auto f = footprint(config);
    py::dict d;
    d["weights"] = f.weights;
    d["decay"] = f.decay;
    d["bias"] = f.bias;
    d["vth"] = f.vth;
    d["membrane"] = f.membrane;
    d["parameters"] = f.parameters();
    d["total"] = f.total();
    return d;
  }, py::arg("config") = NetworkConfig::paper());

  py::class_<SparseEngine>(m, "SparseEngine")
      .def(py::init([](std::shared_ptr<QuantizedModel> model) { return SparseEngine(model); }))
      .def("reset", &SparseEngine::reset)
      .def("infer", [](SparseEngine& e, const std::vector<std::int8_t>& codes) {
        const auto r = e.infer_frame(codes);
        return py::make_tuple(r.output, r.trace.spike_counts());
      }, "One frame of input codes -> (output membranes, spike count per spiking layer)")
      .def("run", [](SparseEngine& e, const Matrix& standardized) {
        const auto& spec = e.model().spec;
        Matrix out(standardized.rows(), static_cast<Eigen::Index>(e.model().config.output_size()));
        for (Eigen::Index t = 0; t < standardized.rows(); ++t) {
          const Vector row = standardized.row(t).transpose();
          const auto codes = quantize_input({row.data(), static_cast<std::size_t>(row.size())}, spec);
          const auto real = e.dequantize_output(e.infer_frame(codes).output);
          for (std::size_t i = 0; i < real.size(); ++i) out(t, static_cast<Eigen::Index>(i)) = real[i];
        }
        return out;
      }, "Stream standardized frames [T x C]; returns standardized outputs [T x 2]");

  m.def("make_synthetic", [](std::size_t frames, double noise, std::uint64_t seed, double bin_ms) {
    SyntheticSpec s;
    s.frames = frames;
    s.noise = noise;
    s.seed = seed;
    s.bin_ms = bin_ms;
    auto d = make_synthetic(s);
    return py::make_tuple(d.stream.frames, d.stream.velocities);
  }, py::arg("frames") = 20000, py::arg("noise") = 4.0, py::arg("seed") = 1, py::arg("bin_ms") = 50.0);

  m.def("pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); });
  m.def("rmse", [](const std::vector<double>& a, const std::vector<double>& b) { return rmse(a, b); });

  m.def("count_ops", [](const std::vector<double>& rates, const std::string& strategy, const NetworkConfig& config) {
    return report_dict(count_ops(config, SpikeProfile::from_rates(config, rates), parse_strategy(strategy)));
  }, py::arg("rates") = std::vector<double>{0.19, 0.19, 0.09}, py::arg("strategy") = "snn-sparse",
        py::arg("config") = NetworkConfig::paper());

  m.def("simulate", [](const std::vector<std::size_t>& spikes, const std::string& strategy, const NetworkConfig& config) {
    const auto schedule = SpikeSchedule::from_counts(config, spikes);
    return report_dict(simulate_inference(MachineModel::gap9(), config, schedule, parse_strategy(strategy)));
  }, py::arg("spike_counts"), py::arg("strategy") = "snn-sparse", py::arg("config") = NetworkConfig::paper());

  py::class_<Trained>(m, "TrainedDecoder")
      .def_property_readonly("history", [](const Trained& t) {
        py::list rows;
        for (const auto& h : t.run.history) {
          py::dict d;
          d["epoch"] = h.epoch;
          d["learning_rate"] = h.learning_rate;
          d["qat"] = h.qat;
          d["train_loss"] = h.train_loss;
          d["train_r"] = h.train_r;
          d["val_r"] = h.val_r;
          d["val_rmse"] = h.val_rmse;
          rows.append(d);
        }
        return rows;
      })
      .def("predict", &Trained::predict, "Raw frames [T x C] -> velocities [T x 2] from the float network")
      .def("quantize", [](const Trained& t) { return std::make_shared<QuantizedModel>(t.run.net.quantize(t.config.quant)); })
      .def("standardize", [](const Trained& t, const Matrix& raw) { return t.run.data.features.transform(raw); })
      .def("destandardize", [](const Trained& t, const Matrix& z) { return t.run.data.velocities.inverse(z); });

  m.def("train", [](const Matrix& frames, const Matrix& velocities, std::size_t epochs, std::size_t qat_epochs,
                    std::uint64_t seed, double dropout, double noise_ratio, std::size_t batch_size, double bin_ms) {
    TrainConfig cfg;
    cfg.network.layer_sizes.front() = static_cast<std::size_t>(frames.cols());
    cfg.network.layer_sizes.back() = static_cast<std::size_t>(velocities.cols());
    cfg.epochs_fp = epochs;
    cfg.epochs_qat = qat_epochs;
    cfg.seed = seed;
    cfg.dropout_p = dropout;
    cfg.noise_ratio = noise_ratio;
    cfg.batch_size = batch_size;
    FeatureStream stream{frames, velocities, bin_ms};
    stream.validate();
    auto [train, val] = split(stream, cfg.train_fraction);
    py::gil_scoped_release release;
    return Trained{cfg, fit(cfg, train, val)};
  }, py::arg("frames"), py::arg("velocities"), py::arg("epochs") = 60, py::arg("qat_epochs") = 0, py::arg("seed") = 0,
        py::arg("dropout") = 0.2, py::arg("noise_ratio") = 0.9, py::arg("batch_size") = 128, py::arg("bin_ms") = 50.0);

  m.attr("__version__") = SNNDEC_VERSION;
}
