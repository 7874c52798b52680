// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "emoalign/cli.hpp"
#include "emoalign/clustering.hpp"
#include "emoalign/data_io.hpp"
#include "emoalign/inference.hpp"
#include "emoalign/objectives.hpp"
#include "emoalign/projector.hpp"

namespace py = pybind11;
using namespace emoalign;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

EmbeddingMatrix to_matrix(const Array& a, std::vector<std::string> names) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  if (names.empty())
    for (std::size_t i = 0; i < rows; ++i) names.push_back("p" + std::to_string(i));
  return EmbeddingMatrix(rows, cols, std::vector<double>(a.data(), a.data() + a.size()), std::move(names));
}

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  return Tensor::matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                        std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  Array out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict cluster_dict(const ClusterModel& m) {
  py::dict d;
  d["centers"] = to_array(m.centers, m.num_clusters(), m.dim);
  d["assignment"] = m.assignment;
  d["member_counts"] = m.member_counts;
  d["labels"] = m.labels;
  d["bandwidth"] = m.bandwidth;
  return d;
}

std::vector<Var> as_vars(Tape& t, const Array& rows) {
  const Tensor m = to_tensor(rows);
  std::vector<Var> out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.data().subspan(r * m.cols(), m.cols());
    out.push_back(t.constant(Tensor::vector({row.begin(), row.end()})));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_emoalign, m) {
  m.doc() = "Emotion-label taxonomy alignment and zero-shot prediction";

  auto base = py::register_exception<Error>(m, "EmoalignError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def(
      "read_embedding_matrix",
      [](const std::filesystem::path& path) {
        const EmbeddingMatrix e = read_embedding_matrix(path);
        return py::make_tuple(to_array(e.data, e.rows, e.cols), e.names);
      },
      py::arg("path"), "Reads an EMBMAT01 file and its sidecar names; returns (array, names).");
  m.def(
      "write_embedding_matrix",
      [](const std::filesystem::path& path, const Array& values, std::vector<std::string> names) {
        write_embedding_matrix(to_matrix(values, std::move(names)), path);
      },
      py::arg("path"), py::arg("values"), py::arg("names"), "Writes an EMBMAT01 file and its sidecar names.");

  m.def(
      "estimate_bandwidth",
      [](const Array& points, double quantile) { return estimate_bandwidth(to_matrix(points, {}), quantile); },
      py::arg("points"), py::arg("quantile") = kDefaultBandwidthQuantile);
  m.def(
      "mean_shift",
      [](const Array& points, double bandwidth, std::vector<std::string> names) {
        return cluster_dict(mean_shift(to_matrix(points, std::move(names)), bandwidth));
      },
      py::arg("points"), py::arg("bandwidth"), py::arg("names") = std::vector<std::string>{});

  m.def(
      "triplet_align_loss",
      [](const Array& anchors, const Array& positives, const Array& negatives, double margin) {
        Tape t(false);
        const auto a = as_vars(t, anchors), p = as_vars(t, positives), n = as_vars(t, negatives);
        return t.scalar(triplet_align_loss(t, a, p, n, margin));
      },
      py::arg("anchors"), py::arg("positives"), py::arg("negatives"), py::arg("margin") = 0.2);
  m.def(
      "reg_loss",
      [](const Array& outputs, const std::vector<ClusterSet>& clusters, const std::string& mode) {
        Tape t(false);
        const auto o = as_vars(t, outputs);
        return t.scalar(reg_loss(t, o, clusters, reg_mode_from_string(mode)));
      },
      py::arg("outputs"), py::arg("clusters"), py::arg("mode") = "negative");

  m.def(
      "rank_labels",
      [](const std::vector<double>& output, const Array& labels, std::size_t k) {
        const Prediction p = rank_labels(output, to_matrix(labels, {}), k);
        return py::make_tuple(p.labels, p.distances);
      },
      py::arg("output"), py::arg("labels"), py::arg("k"), "Returns (indices, cosine distances) of the k nearest labels.");
  m.def("macro_f1", &macro_f1, py::arg("predicted"), py::arg("truth"), py::arg("n_labels"));

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("config_json",
                             [](const Checkpoint& c) { return projector_config_to_json(c.params.config).dump(); })
      .def_property_readonly("metadata_json", [](const Checkpoint& c) { return c.metadata.dump(); })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.params.parameter_count(); })
      .def(
          "project", [](const Checkpoint& c, const Array& features) { return project(c.params, to_tensor(features)); },
          py::arg("features"), "Projects one T x d_in feature matrix to the label-embedding space.")
      .def(
          "save",
          [](const Checkpoint& c, const std::filesystem::path& path) { save_checkpoint(c.params, c.metadata, path); },
          py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def(
      "init_checkpoint",
      [](const std::string& config_json, std::uint64_t seed) {
        Checkpoint c;
        c.params = init_projector(projector_config_from_json(nlohmann::json::parse(config_json)), seed);
        c.metadata = nlohmann::ordered_json::object();
        return c;
      },
      py::arg("config_json"), py::arg("seed") = 0, "Freshly initialized projector wrapped as a checkpoint.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
