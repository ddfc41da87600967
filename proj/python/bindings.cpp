#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfnet/checkpoint.hpp"
#include "mfnet/gradcheck.hpp"
#include "mfnet/model.hpp"
#include "mfnet/objectives.hpp"
#include "mfnet/pipeline.hpp"

namespace py = pybind11;
using namespace mfnet;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Waveform waveform_from_array(const DoubleArray& arr, int sample_rate) {
  if (arr.ndim() != 1) throw std::invalid_argument("expected a 1-D sample array");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(arr.data(), arr.data() + arr.shape(0));
  return w;
}

py::array_t<double> make_1d(const std::vector<double>& v) {
  const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(v.size())};
  return py::array_t<double>(shape, v.data());
}

py::array_t<float> make_2d(int64_t rows, int64_t cols, const std::vector<float>& v) {
  const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(rows),
                                       static_cast<py::ssize_t>(cols)};
  return py::array_t<float>(shape, v.data());
}

py::array_t<double> array_from_waveform(const Waveform& w) { return make_1d(w.samples); }

Spectrogram spectrogram_from_array(const FloatArray& arr, int sample_rate) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D [frames, bins] array");
  Spectrogram s;
  s.frames = arr.shape(0);
  s.bins = arr.shape(1);
  s.spec = FrameSpec::sqrt_hann();
  s.sample_rate = sample_rate;
  s.data.assign(arr.data(), arr.data() + arr.size());
  return s;
}

py::array_t<float> array_from_spectrogram(const Spectrogram& s) {
  return make_2d(s.frames, s.bins, s.data);
}

Tensor tensor_from_array_2d(const FloatArray& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D [frames, bins] array");
  std::vector<float> v(arr.data(), arr.data() + arr.size());
  return Tensor::from_values({1, 1, arr.shape(0), arr.shape(1)}, std::move(v));
}

py::array_t<float> array_from_tensor_2d(const Tensor& x) {
  return make_2d(x.dim(2), x.dim(3), x.values());
}

// Thin ownership wrapper so the Python class stays copyable-free and simple.
struct PyModel {
  Model<float> model;

  PyModel(const ModelConfig& cfg, uint64_t seed) : model(cfg, seed) {}
  explicit PyModel(Model<float>&& m) : model(std::move(m)) {}
};

py::dict gradcheck_result_dict(const GradCheckResult& r) {
  py::dict d;
  d["op"] = r.op;
  d["max_rel_err"] = r.max_rel_err;
  d["seeds"] = r.seeds;
  d["pass"] = r.pass;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mfnet, m) {
  m.doc() = "Speech enhancement on real-valued short-time DCT spectra";
  m.attr("__version__") = kVersion;

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("base_channels", &ModelConfig::base_channels)
      .def_readwrite("encoder_depths", &ModelConfig::encoder_depths)
      .def_readwrite("bottleneck_depth", &ModelConfig::bottleneck_depth)
      .def_readwrite("decoder_depths", &ModelConfig::decoder_depths)
      .def_property(
          "head", [](const ModelConfig& c) { return head_mode_name(c.head); },
          [](ModelConfig& c, const std::string& name) { c.head = head_mode_from_name(name); })
      .def("validate", &ModelConfig::validate)
      .def("__eq__",
           [](const ModelConfig& a, const ModelConfig& b) { return a == b; })
      .def("__repr__", [](const ModelConfig& c) {
        return "ModelConfig(base_channels=" + std::to_string(c.base_channels) +
               ", head='" + head_mode_name(c.head) + "')";
      });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr_max", &TrainConfig::lr_max)
      .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
      .def_readwrite("total_epochs", &TrainConfig::total_epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("eps", &TrainConfig::eps)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("segment_seconds", &TrainConfig::segment_seconds)
      .def_readwrite("checkpoint_every_epochs", &TrainConfig::checkpoint_every_epochs)
      .def("validate", &TrainConfig::validate);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const ModelConfig&, uint64_t>(), py::arg("config") = ModelConfig{},
           py::arg("seed") = 0)
      .def_property_readonly("config", [](const PyModel& self) { return self.model.config(); })
      .def("channel_trace", [](const PyModel& self) { return self.model.channel_trace(); })
      .def("param_count",
           [](PyModel& self) {
             int64_t total = 0;
             for (const auto& p : self.model.parameters()) total += p.tensor->numel();
             return total;
           })
      .def(
          "forward",
          [](PyModel& self, const FloatArray& spectrum) {
            Tensor x = tensor_from_array_2d(spectrum);
            Tensor y;
            {
              py::gil_scoped_release release;
              NoGradGuard guard;
              y = self.model.forward(x);
            }
            return array_from_tensor_2d(y);
          },
          py::arg("spectrum"), "Run the network on one [frames, bins] spectrogram")
      .def(
          "enhance",
          [](PyModel& self, const DoubleArray& samples, int sample_rate) {
            const Waveform noisy = waveform_from_array(samples, sample_rate);
            Waveform out;
            {
              py::gil_scoped_release release;
              out = enhance(noisy, self.model);
            }
            return array_from_waveform(out);
          },
          py::arg("samples"), py::arg("sample_rate") = 16000,
          "Denoise a 16 kHz waveform and return the enhanced samples")
      .def("save", [](PyModel& self, const std::string& path) { save_checkpoint(self.model, path); },
           py::arg("path"));

  m.def(
      "load_checkpoint",
      [](const std::string& path) { return PyModel(load_checkpoint(path)); }, py::arg("path"));

  m.def(
      "dct2",
      [](const DoubleArray& frame) {
        if (frame.ndim() != 1) throw std::invalid_argument("expected a 1-D frame");
        const std::vector<double> x(frame.data(), frame.data() + frame.shape(0));
        return make_1d(dct2(x));
      },
      py::arg("frame"), "Orthonormal DCT-II of one frame");

  m.def(
      "idct2",
      [](const DoubleArray& coeffs) {
        if (coeffs.ndim() != 1) throw std::invalid_argument("expected a 1-D coefficient vector");
        const std::vector<double> x(coeffs.data(), coeffs.data() + coeffs.shape(0));
        return make_1d(idct2(x));
      },
      py::arg("coeffs"), "Orthonormal DCT-III, the inverse of dct2");

  m.def(
      "stdct_frame_count",
      [](int64_t samples) { return stdct_frame_count(samples, FrameSpec::sqrt_hann()); },
      py::arg("samples"));

  m.def(
      "stdct",
      [](const DoubleArray& samples, int sample_rate) {
        const Waveform w = waveform_from_array(samples, sample_rate);
        return array_from_spectrogram(stdct(w));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000,
      "Short-time DCT as a [frames, 320] float array");

  m.def(
      "istdct",
      [](const FloatArray& spectrum, int64_t out_len, int sample_rate) {
        const Spectrogram s = spectrogram_from_array(spectrum, sample_rate);
        return array_from_waveform(istdct(s, out_len));
      },
      py::arg("spectrum"), py::arg("out_len"), py::arg("sample_rate") = 16000,
      "Inverse short-time DCT back to out_len samples");

  m.def(
      "mix_at_snr",
      [](const DoubleArray& clean, const DoubleArray& noise, double snr_db, uint64_t seed,
         int sample_rate) {
        const Waveform c = waveform_from_array(clean, sample_rate);
        const Waveform n = waveform_from_array(noise, sample_rate);
        auto [aligned, noisy] = mix_at_snr(c, n, snr_db, seed);
        return py::make_tuple(array_from_waveform(aligned), array_from_waveform(noisy));
      },
      py::arg("clean"), py::arg("noise"), py::arg("snr_db"), py::arg("seed") = 0,
      py::arg("sample_rate") = 16000,
      "Mix noise into clean at an exact SNR; returns (clean_aligned, noisy)");

  m.def(
      "snr_db",
      [](const DoubleArray& reference, const DoubleArray& estimate) {
        return snr_db(waveform_from_array(reference, 16000), waveform_from_array(estimate, 16000));
      },
      py::arg("reference"), py::arg("estimate"));

  m.def(
      "si_sdr_db",
      [](const DoubleArray& reference, const DoubleArray& estimate) {
        return si_sdr_db(waveform_from_array(reference, 16000),
                         waveform_from_array(estimate, 16000));
      },
      py::arg("reference"), py::arg("estimate"));

  m.def(
      "loss_abs",
      [](const FloatArray& target, const FloatArray& pred) {
        return loss_abs(spectrogram_from_array(target, 16000),
                        spectrogram_from_array(pred, 16000));
      },
      py::arg("target"), py::arg("pred"));

  m.def(
      "loss_polar",
      [](const FloatArray& target, const FloatArray& pred) {
        return loss_polar(spectrogram_from_array(target, 16000),
                          spectrogram_from_array(pred, 16000));
      },
      py::arg("target"), py::arg("pred"));

  m.def(
      "loss_mfnet",
      [](const FloatArray& target, const FloatArray& pred, double gamma) {
        return loss_mfnet(spectrogram_from_array(target, 16000),
                          spectrogram_from_array(pred, 16000), gamma);
      },
      py::arg("target"), py::arg("pred"), py::arg("gamma") = 0.5);

  m.def("lr_schedule", &lr_schedule, py::arg("step"), py::arg("steps_per_epoch"), py::arg("config"));

  m.def(
      "count_params_and_macs",
      [](const ModelConfig& cfg, double frames_per_second, int64_t bins) {
        const ModelCosts costs = count_params_and_macs(cfg, frames_per_second, bins);
        return py::make_tuple(costs.params, costs.macs_per_second);
      },
      py::arg("config"), py::arg("frames_per_second") = 100.0, py::arg("bins") = 320,
      "Returns (params, macs_per_second) for a model configuration");

  m.def(
      "train_on_pairs",
      [](PyModel& model, const std::vector<std::pair<DoubleArray, DoubleArray>>& pairs,
         const TrainConfig& cfg) {
        std::vector<TrainPair> prepared;
        prepared.reserve(pairs.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
          prepared.push_back(TrainPair{waveform_from_array(pairs[i].first, 16000),
                                       waveform_from_array(pairs[i].second, 16000),
                                       "pair" + std::to_string(i)});
        }
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train_on_pairs(prepared, cfg, model.model);
        }
        std::vector<double> losses, lrs;
        losses.reserve(result.curve.size());
        lrs.reserve(result.curve.size());
        for (const auto& p : result.curve) {
          losses.push_back(p.loss);
          lrs.push_back(p.lr);
        }
        py::dict out;
        out["steps"] = result.steps;
        out["losses"] = losses;
        out["lrs"] = lrs;
        out["epoch_mean_loss"] = result.epoch_mean_loss;
        return out;
      },
      py::arg("model"), py::arg("pairs"), py::arg("config"),
      "Train on (clean, noisy) sample-array pairs; returns the loss curve");

  m.def("gradcheck_op_names", &gradcheck_op_names);

  m.def(
      "run_gradcheck",
      [](const std::string& op) { return gradcheck_result_dict(run_gradcheck_op(op)); },
      py::arg("op"));

  m.def("run_gradcheck_all", []() {
    py::list rows;
    std::vector<GradCheckResult> results;
    {
      py::gil_scoped_release release;
      results = run_gradcheck_all();
    }
    for (const auto& r : results) rows.append(gradcheck_result_dict(r));
    return rows;
  });
}
