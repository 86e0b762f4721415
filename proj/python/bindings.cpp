#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dsf/cli.hpp"
#include "dsf/detector.hpp"
#include "dsf/evaluation.hpp"
#include "dsf/frame_fusion.hpp"
#include "dsf/instance_fusion.hpp"
#include "dsf/sampling.hpp"
#include "dsf/synth_video.hpp"
#include "dsf/tensor.hpp"

namespace py = pybind11;
using dsf::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const Array& arr) {
  dsf::Shape shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(static_cast<int>(arr.shape(i)));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor::from_data(std::move(shape), std::move(data));
}

py::array array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (int d : t.shape()) shape.push_back(d);
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

dsf::BoxF box_from_seq(const std::vector<double>& b) {
  if (b.size() != 4) throw std::invalid_argument("box must have 4 coordinates");
  return dsf::BoxF{b[0], b[1], b[2], b[3]};
}

}  // namespace

PYBIND11_MODULE(_dsfnet, m) {
  m.doc() = "dual semantic fusion video object detection core";

  m.def(
      "matmul",
      [](const Array& a, const Array& b) {
        return array_from_tensor(dsf::matmul(tensor_from_array(a), tensor_from_array(b)));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "softmax_rows",
      [](const Array& x) { return array_from_tensor(dsf::softmax_rows(tensor_from_array(x))); },
      py::arg("x"));

  m.def(
      "conv2d",
      [](const Array& x, const Array& k, int stride) {
        return array_from_tensor(dsf::conv2d(tensor_from_array(x), tensor_from_array(k), stride));
      },
      py::arg("x"), py::arg("kernel"), py::arg("stride") = 1,
      "3x3 cross-correlation with padding 1 on a [c_in, H, W] input");

  m.def(
      "geometric_embed",
      [](double wk, double hk, double wl, double hl, int d_g) {
        return array_from_tensor(dsf::geometric_embed(wk, hk, wl, hl, d_g));
      },
      py::arg("wk"), py::arg("hk"), py::arg("wl"), py::arg("hl"), py::arg("d_g") = 66);

  m.def(
      "iou",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return dsf::iou(box_from_seq(a), box_from_seq(b));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "average_precision",
      [](const std::vector<std::pair<double, std::vector<double>>>& dets,
         const std::vector<std::vector<double>>& gts, double iou_thresh) {
        std::vector<dsf::DetRecord> dr;
        for (size_t i = 0; i < dets.size(); ++i) {
          dr.push_back(dsf::DetRecord{"img", 0, 0, dets[i].first, box_from_seq(dets[i].second)});
        }
        std::vector<dsf::GtEntry> gr;
        for (const auto& g : gts) gr.push_back(dsf::GtEntry{"img", 0, 0, box_from_seq(g), false});
        return dsf::average_precision(std::move(dr), gr, iou_thresh);
      },
      py::arg("detections"), py::arg("ground_truth"), py::arg("iou_thresh") = 0.5,
      "single-image AP; detections are (score, [x1,y1,x2,y2]) pairs");

  m.def(
      "sample_support",
      [](const std::string& strategy, int n, int sequence_length, int frame, uint64_t seed) {
        return dsf::sample_support(dsf::SamplingStrategy::parse(strategy, n, seed), sequence_length,
                                   frame, 0);
      },
      py::arg("strategy"), py::arg("n"), py::arg("sequence_length"), py::arg("frame"),
      py::arg("seed") = 0);

  m.def(
      "frame_fusion_forward",
      [](const Array& features, uint64_t seed, int embed_width) {
        Tensor f = tensor_from_array(features);
        if (f.rank() != 4) throw std::invalid_argument("features must be [n, d, h, w]");
        dsf::ParamStore store;
        dsf::Rng rng(seed);
        auto params =
            dsf::make_frame_fusion_params(store, "frame_fusion", f.dim(2) * f.dim(3), embed_width, rng);
        dsf::FrameFeatureBatch batch{f, 0};
        dsf::ChannelBank bank = dsf::split_channels(batch);
        dsf::FrameSimilarity sim = dsf::frame_similarity(dsf::channel_affinity(bank, params));
        dsf::FrameFeatureBatch out = dsf::fuse_frames(bank, sim, params);
        return py::make_tuple(array_from_tensor(out.features), array_from_tensor(sim.s));
      },
      py::arg("features"), py::arg("seed") = 0, py::arg("embed_width") = 64,
      "seeded frame-level fusion; returns (enhanced features, similarity matrix)");

  m.def(
      "instance_fusion_forward",
      [](const Array& q, const Array& boxes, uint64_t seed, int embed_width, int d_g) {
        Tensor qt = tensor_from_array(q);
        if (qt.rank() != 2) throw std::invalid_argument("q must be [m, d_roi]");
        if (boxes.ndim() != 2 || boxes.shape(1) != 4) throw std::invalid_argument("boxes must be [m, 4]");
        dsf::ProposalSet props;
        for (py::ssize_t i = 0; i < boxes.shape(0); ++i) {
          const double* row = boxes.data() + i * 4;
          props.boxes.push_back(dsf::Proposal{dsf::BoxF{row[0], row[1], row[2], row[3]}, 0, 1.0});
        }
        dsf::ParamStore store;
        dsf::Rng rng(seed);
        auto params = dsf::make_instance_fusion_params(store, "inst", qt.dim(1), embed_width, d_g, rng);
        dsf::InstanceSimilarity sim;
        dsf::RoIFeatureSet out = dsf::instance_fusion_block(dsf::RoIFeatureSet{qt}, props, params, &sim);
        return py::make_tuple(array_from_tensor(out.q), array_from_tensor(sim.s),
                              array_from_tensor(sim.z), array_from_tensor(sim.r));
      },
      py::arg("q"), py::arg("boxes"), py::arg("seed") = 0, py::arg("embed_width") = 64,
      py::arg("d_g") = 66,
      "seeded single-block instance fusion; returns (fused q, s, z, r)");

  m.def(
      "generate_dataset",
      [](const std::string& out_dir, uint64_t seed, int train_sequences, int val_sequences, int frames,
         int size, const std::string& degrade) {
        dsf::GenSpec spec;
        spec.frames = frames;
        spec.height = spec.width = size;
        spec.degrade =
            degrade == "none" ? dsf::DegradationSpec::none() : dsf::DegradationSpec::standard();
        dsf::Dataset ds = dsf::generate_dataset(seed, train_sequences, val_sequences, spec);
        dsf::save_dataset(ds, out_dir);
        return static_cast<int>(ds.sequences.size());
      },
      py::arg("out_dir"), py::arg("seed") = 7, py::arg("train_sequences") = 2,
      py::arg("val_sequences") = 1, py::arg("frames") = 8, py::arg("size") = 64,
      py::arg("degrade") = "standard");

  py::class_<dsf::Detector>(m, "Detector")
      .def(py::init([](const std::string& config_json) {
             return new dsf::Detector(dsf::DetectorConfig::from_json(nlohmann::json::parse(config_json)));
           }),
           py::arg("config_json"))
      .def_static(
          "load", [](const std::string& checkpoint) { return dsf::cli::load_detector(checkpoint); },
          py::arg("checkpoint"), "load from a train output directory")
      .def("config_json", [](const dsf::Detector& d) { return d.config().to_json().dump(); })
      .def("parameter_names",
           [](const dsf::Detector& d) {
             std::vector<std::string> names;
             for (const auto& p : d.params().all()) names.push_back(p.name);
             return names;
           })
      .def(
          "detect",
          [](const dsf::Detector& det, const Array& frames, int test_index) {
            if (frames.ndim() != 4 || frames.shape(1) != 3) {
              throw std::invalid_argument("frames must be [n, 3, H, W] in [0, 1]");
            }
            dsf::NoGradGuard ng;
            int n = static_cast<int>(frames.shape(0));
            int h = static_cast<int>(frames.shape(2)), w = static_cast<int>(frames.shape(3));
            std::vector<dsf::ImageU8> images(n);
            std::vector<const dsf::ImageU8*> ptrs;
            for (int i = 0; i < n; ++i) {
              std::vector<double> data(frames.data() + static_cast<size_t>(i) * 3 * h * w,
                                       frames.data() + static_cast<size_t>(i + 1) * 3 * h * w);
              images[i] = dsf::tensor_to_image(Tensor::from_data({3, h, w}, std::move(data)));
              ptrs.push_back(&images[i]);
            }
            auto result = det.detect(ptrs, test_index);
            py::list out;
            for (const dsf::Detection& d : result.detections) {
              py::dict item;
              item["box"] = py::make_tuple(d.box.x1, d.box.y1, d.box.x2, d.box.y2);
              item["class_id"] = d.class_id;
              item["class_name"] = dsf::class_names().at(static_cast<size_t>(d.class_id));
              item["score"] = d.confidence;
              out.append(item);
            }
            return out;
          },
          py::arg("frames"), py::arg("test_index") = 0);

  m.attr("CLASS_NAMES") = dsf::class_names();
}
