#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sinet/bench.hpp"
#include "sinet/datagen.hpp"
#include "sinet/metrics.hpp"
#include "sinet/trainer.hpp"
#include "sinet/weights_io.hpp"

namespace py = pybind11;
using namespace sinet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;

TensorF tensor_from(const FloatArray& arr) {
  const auto info = arr.request();
  if (info.ndim != 4) throw py::value_error("expected a 4-D (n, c, h, w) float array");
  Shape s{info.shape[0], info.shape[1], info.shape[2], info.shape[3]};
  const float* p = static_cast<const float*>(info.ptr);
  return TensorF::from_data(s, std::vector<float>(p, p + s.numel()));
}

py::array_t<float> array_from(const TensorF& t) {
  const Shape& s = t.shape();
  py::array_t<float> out({s.n, s.c, s.h, s.w});
  std::copy(t.data().begin(), t.data().end(), static_cast<float*>(out.request().ptr));
  return out;
}

BinaryMask mask_from(const MaskArray& arr) {
  const auto info = arr.request();
  if (info.ndim != 2) throw py::value_error("expected a 2-D (h, w) uint8 mask");
  const uint8_t* p = static_cast<const uint8_t*>(info.ptr);
  return BinaryMask::from_values(info.shape[0], info.shape[1],
                                 std::vector<uint8_t>(p, p + info.shape[0] * info.shape[1]));
}

py::array_t<uint8_t> array_from(const BinaryMask& m) {
  py::array_t<uint8_t> out({m.h, m.w});
  std::copy(m.v.begin(), m.v.end(), static_cast<uint8_t*>(out.request().ptr));
  return out;
}

LabelMap labels_from(const IntArray& arr) {
  const auto info = arr.request();
  if (info.ndim != 2) throw py::value_error("expected a 2-D (h, w) int32 label map");
  const int32_t* p = static_cast<const int32_t*>(info.ptr);
  return LabelMap{info.shape[0], info.shape[1],
                  std::vector<int>(p, p + info.shape[0] * info.shape[1])};
}

py::dict summary_dict(const ModelSummary& s) {
  py::list rows;
  for (const auto& r : s.rows) {
    rows.append(py::dict(py::arg("layer") = r.name, py::arg("params") = r.params,
                         py::arg("macs") = r.macs));
  }
  return py::dict(py::arg("rows") = rows, py::arg("params") = s.total_params,
                  py::arg("macs") = s.total_macs,
                  py::arg("flops_mac") = s.flops(FlopConvention::MAC),
                  py::arg("flops_2mac") = s.flops(FlopConvention::TwoMAC));
}

struct PyModel {
  Model model;

  py::array_t<float> forward(const FloatArray& image) {
    NoGradGuard ng;
    return array_from(model.forward(tensor_from(image), false));
  }
  py::dict count_params() { return summary_dict(model.count_params()); }
  py::dict count_flops(long h, long w) { return summary_dict(model.count_flops(h, w)); }
  void save(const std::string& path) { save_weights(model, path); }
  int num_class() const { return model.num_class(); }
  std::string decoder() const { return decoder_kind_name(model.decoder_kind()); }
  long stride() const { return model.encoder_stride(); }
};

}  // namespace

PYBIND11_MODULE(_sinet, m) {
  m.doc() = "CPU implementation of the SINet segmentation architecture";

  py::register_exception<Error>(m, "SinetError", PyExc_RuntimeError);

  m.def(
      "conv2d",
      [](const FloatArray& x, const FloatArray& w, std::optional<FloatArray> bias,
         int stride, int padding, int dilation, int groups) {
        TensorF xt = tensor_from(x);
        TensorF wt = tensor_from(w);
        ConvSpec spec{.in_channels = static_cast<int>(xt.shape().c),
                      .out_channels = static_cast<int>(wt.shape().n),
                      .kh = static_cast<int>(wt.shape().h),
                      .kw = static_cast<int>(wt.shape().w),
                      .sh = stride,
                      .sw = stride,
                      .ph = padding,
                      .pw = padding,
                      .dh = dilation,
                      .dw = dilation,
                      .groups = groups,
                      .has_bias = bias.has_value()};
        std::optional<TensorF> bt;
        if (bias) {
          const auto info = bias->request();
          std::vector<float> bv(static_cast<const float*>(info.ptr),
                                static_cast<const float*>(info.ptr) + info.size);
          bt = TensorF::from_data({1, static_cast<long>(info.size), 1, 1}, std::move(bv));
        }
        NoGradGuard ng;
        return array_from(conv2d(xt, wt, bt, spec));
      },
      py::arg("input"), py::arg("weight"), py::arg("bias") = py::none(),
      py::arg("stride") = 1, py::arg("padding") = 0, py::arg("dilation") = 1,
      py::arg("groups") = 1);

  m.def("avg_pool2d", [](const FloatArray& x, int kernel) {
    NoGradGuard ng;
    return array_from(avg_pool2d(tensor_from(x), kernel));
  }, py::arg("input"), py::arg("kernel"));

  m.def("bilinear_upsample", [](const FloatArray& x, long out_h, long out_w) {
    NoGradGuard ng;
    return array_from(bilinear_upsample(tensor_from(x), out_h, out_w));
  }, py::arg("input"), py::arg("out_h"), py::arg("out_w"));

  m.def("channel_shuffle", [](const FloatArray& x, int groups) {
    NoGradGuard ng;
    return array_from(channel_shuffle(tensor_from(x), groups));
  }, py::arg("input"), py::arg("groups"));

  m.def("softmax_channels", [](const FloatArray& x) {
    NoGradGuard ng;
    return array_from(softmax_channels(tensor_from(x)));
  }, py::arg("input"));

  m.def("global_avg_pool", [](const FloatArray& x) {
    NoGradGuard ng;
    return array_from(global_avg_pool(tensor_from(x)));
  }, py::arg("input"));

  m.def("morph_dilate", [](const MaskArray& mask, int size) {
    return array_from(morph_dilate(mask_from(mask), size));
  }, py::arg("mask"), py::arg("size"));

  m.def("morph_erode", [](const MaskArray& mask, int size) {
    return array_from(morph_erode(mask_from(mask), size));
  }, py::arg("mask"), py::arg("size"));

  m.def("boundary_band", [](const MaskArray& mask, int size) {
    return array_from(boundary_band(mask_from(mask), size));
  }, py::arg("mask"), py::arg("size") = 15);

  m.def(
      "boundary_weighted_ce",
      [](const FloatArray& logits, const std::vector<MaskArray>& masks, double lambda,
         int size) {
        TensorF lt = tensor_from(logits);
        std::vector<BinaryMask> ms;
        for (const auto& m : masks) ms.push_back(mask_from(m));
        LossConfig cfg;
        cfg.lambda = lambda;
        cfg.structuring_size = size;
        NoGradGuard ng;
        return static_cast<double>(boundary_weighted_ce(lt, ms, cfg).data()[0]);
      },
      py::arg("logits"), py::arg("masks"), py::arg("lambda_") = 0.5, py::arg("size") = 15);

  m.def("miou", [](const IntArray& pred, const IntArray& gt, int num_class) {
    return miou(labels_from(pred), labels_from(gt), num_class);
  }, py::arg("pred"), py::arg("gt"), py::arg("num_class") = 2);

  m.def("boundary_f1", [](const IntArray& pred, const IntArray& gt, int size) {
    return boundary_f1(labels_from(pred), labels_from(gt), size);
  }, py::arg("pred"), py::arg("gt"), py::arg("size") = 15);

  m.def(
      "expand_face_box",
      [](std::tuple<long, long, long, long> box, std::tuple<long, long> image_wh,
         double scale_w, double scale_h, double down_shift) {
        CropSpec spec{scale_w, scale_h, down_shift};
        auto [x, y, w, h] = box;
        auto [iw, ih] = image_wh;
        CropRect r = expand_face_box({x, y, w, h}, iw, ih, spec);
        return std::make_tuple(r.x, r.y, r.w, r.h);
      },
      py::arg("box"), py::arg("image_wh"), py::arg("scale_w") = 2.5,
      py::arg("scale_h") = 2.5, py::arg("down_shift") = 0.3);

  m.def(
      "make_toy_dataset",
      [](int count, long image_size, uint64_t seed) {
        ToyDatasetConfig cfg;
        cfg.count = count;
        cfg.image_size = image_size;
        cfg.seed = seed;
        py::list out;
        for (const auto& s : make_toy_dataset(cfg)) {
          out.append(py::make_tuple(array_from(s.image), array_from(s.mask)));
        }
        return out;
      },
      py::arg("count") = 8, py::arg("image_size") = 64, py::arg("seed") = 7);

  m.def(
      "bench_dilated",
      [](std::vector<int> channels, std::vector<long> sizes, std::vector<int> dilations,
         int iterations, double pause_seconds) {
        BenchReport r = bench_dilated(channels, sizes, dilations, iterations, pause_seconds);
        py::list out;
        for (const auto& e : r.entries) {
          out.append(py::dict(
              py::arg("channels") = e.cfg.channels, py::arg("size") = e.cfg.size,
              py::arg("dilation") = e.cfg.dilation, py::arg("iterations") = e.iterations,
              py::arg("min_ms") = e.min_ms, py::arg("mean_ms") = e.mean_ms,
              py::arg("max_ms") = e.max_ms, py::arg("total_ms") = e.total_ms));
        }
        return out;
      },
      py::arg("channels"), py::arg("sizes"), py::arg("dilations"),
      py::arg("iterations") = 100, py::arg("pause_seconds") = 0.0);

  py::class_<PyModel>(m, "Model")
      .def("forward", &PyModel::forward, py::arg("image"))
      .def("count_params", &PyModel::count_params)
      .def("count_flops", &PyModel::count_flops, py::arg("input_h"), py::arg("input_w"))
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("num_class", &PyModel::num_class)
      .def_property_readonly("decoder", &PyModel::decoder)
      .def_property_readonly("encoder_stride", &PyModel::stride);

  m.def(
      "build",
      [](const std::string& preset, int classes, const std::string& decoder,
         uint64_t seed) {
        const int n = classes > 0 ? classes : preset_default_classes(preset);
        PyModel pm{build_sinet(preset, n, decoder_kind_from_name(decoder), seed)};
        return pm;
      },
      py::arg("preset") = "portrait", py::arg("classes") = 0, py::arg("decoder") = "IB",
      py::arg("seed") = 42);

  m.def(
      "build_from_table",
      [](const std::string& path, int classes, const std::string& decoder, uint64_t seed) {
        ArchTable t = load_arch_table(path);
        PyModel pm{build_sinet(t, classes, decoder_kind_from_name(decoder), seed)};
        return pm;
      },
      py::arg("table_path"), py::arg("classes") = 2, py::arg("decoder") = "IB",
      py::arg("seed") = 42);

  m.def("load_weights", [](const std::string& path) {
    PyModel pm{load_weights(path)};
    return pm;
  }, py::arg("path"));

  m.def(
      "summarize",
      [](const std::string& preset, long input_h, long input_w, int classes) {
        const int n = classes > 0 ? classes : preset_default_classes(preset);
        Model model = build_sinet(preset, n, DecoderKind::IB);
        const long h = input_h > 0 ? input_h : model.reference_h();
        const long w = input_w > 0 ? input_w : model.reference_w();
        return summary_dict(model.count_flops(h, w));
      },
      py::arg("preset") = "portrait", py::arg("input_h") = 0, py::arg("input_w") = 0,
      py::arg("classes") = 0);
}
