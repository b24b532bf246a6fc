// Python bindings: shape generation, ordering, the missing-parts filter,
// geometry helpers, and inference/evaluation from saved checkpoints.
// Poses cross the boundary as rows (qw, qx, qy, qz, tx, ty, tz).

#include "partasm/dataset.hpp"
#include "partasm/error.hpp"
#include "partasm/geometry.hpp"
#include "partasm/metrics.hpp"
#include "partasm/model.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

namespace py = pybind11;
using namespace partasm;

namespace {

using PoseRows = Eigen::Matrix<double, Eigen::Dynamic, 7, Eigen::RowMajor>;

PoseRows to_rows(std::span<const geo::Pose> poses) {
  PoseRows out(static_cast<Eigen::Index>(poses.size()), 7);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto a = poses[i].to_array();
    for (int k = 0; k < 7; ++k) out(static_cast<Eigen::Index>(i), k) = a[static_cast<std::size_t>(k)];
  }
  return out;
}

std::vector<geo::Pose> from_rows(const PoseRows& rows) {
  std::vector<geo::Pose> out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    std::array<double, 7> a;
    for (int k = 0; k < 7; ++k) a[static_cast<std::size_t>(k)] = rows(i, k);
    out.push_back(geo::Pose::from_array(a));
  }
  return out;
}

py::dict metrics_dict(const metrics::SampleMetrics& m) {
  py::dict d;
  d["scd"] = m.scd;
  d["pa"] = m.pa;
  d["ca"] = m.ca ? py::cast(*m.ca) : py::none();
  d["part_ok"] = m.part_ok;
  return d;
}

// Checkpoint plus the config needed to run it.
struct Model {
  model::Checkpoint checkpoint;

  std::vector<double> draw_noise(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> z(checkpoint.config.noise_dim);
    for (double& v : z) v = g(rng);
    return z;
  }
};

}  // namespace

PYBIND11_MODULE(partasm, m) {
  m.doc() = "Progressive part assembly: synthetic shapes, ordering, metrics and inference";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(e.kind()) + ": " + e.what()).c_str());
    }
  });

  py::class_<geo::ContactPair>(m, "ContactPair")
      .def_readonly("i", &geo::ContactPair::i)
      .def_readonly("j", &geo::ContactPair::j)
      .def_property_readonly("c_ij", [](const geo::ContactPair& c) { return geo::Vec3(c.c_ij); })
      .def_property_readonly("c_ji", [](const geo::ContactPair& c) { return geo::Vec3(c.c_ji); });

  py::class_<ShapeRecord>(m, "Shape")
      .def_readonly("id", &ShapeRecord::id)
      .def_readonly("category", &ShapeRecord::category)
      .def_readonly("contacts", &ShapeRecord::contacts)
      .def("__len__", [](const ShapeRecord& s) { return s.parts.size(); })
      .def_property_readonly("labels", &ShapeRecord::labels)
      .def_property_readonly("groups", &ShapeRecord::groups)
      .def_property_readonly("points", &ShapeRecord::clouds, "Canonical per-part point clouds")
      .def_property_readonly("gt_poses", [](const ShapeRecord& s) { return to_rows(s.gt_poses()); })
      .def("assembled", [](const ShapeRecord& s) {
        std::vector<geo::PointCloud> out;
        for (const auto& p : s.parts) out.push_back(geo::apply_pose(p.gt_pose, p.points));
        return out;
      })
      .def("to_text", [](const ShapeRecord& s) { return data::shape_to_text(s); });

  m.def(
      "generate_shape",
      [](const std::string& category, std::uint64_t seed, std::size_t point_budget) {
        data::GenParams params;
        params.point_budget = point_budget;
        return data::generate_shape(data::parse_category(category), seed, params);
      },
      py::arg("category"), py::arg("seed"), py::arg("point_budget") = 1000);
  m.def("load_shape", [](const std::string& path) { return data::load_shape(path); }, py::arg("path"));
  m.def("shape_from_text", [](const std::string& text) { return data::shape_from_text(text); }, py::arg("text"));

  m.def(
      "order_parts",
      [](const ShapeRecord& shape, const std::string& kind, std::uint64_t seed) {
        return data::order_parts(shape, {data::parse_order(kind), seed}).perm;
      },
      py::arg("shape"), py::arg("order"), py::arg("seed") = 0);
  m.def(
      "apply_order", [](const ShapeRecord& shape, const std::vector<std::size_t>& perm) {
        return data::apply_order(shape, perm);
      },
      py::arg("shape"), py::arg("perm"));
  m.def(
      "missing_parts_filter",
      [](const ShapeRecord& shape, double fraction) {
        auto r = metrics::missing_parts_filter(shape, fraction);
        return py::make_tuple(std::move(r.shape), r.removed_groups, r.removed_parts);
      },
      py::arg("shape"), py::arg("delete_fraction"), "Returns (kept shape, removed group ids, removed part indices)");

  m.def(
      "chamfer_distance", [](const geo::PointCloud& x, const geo::PointCloud& y) { return geo::chamfer_distance(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "pca_canonicalize",
      [](const geo::PointCloud& cloud) {
        auto c = geo::pca_canonicalize(cloud);
        const auto frame = c.frame.to_array();
        return py::make_tuple(c.canonical, std::vector<double>(frame.begin(), frame.end()));
      },
      py::arg("cloud"), "Returns (canonical cloud, frame pose mapping canonical back to input)");
  m.def(
      "evaluate_prediction",
      [](const ShapeRecord& shape, const PoseRows& pred, double tau_p, double tau_c, bool match) {
        metrics::EvalConfig config;
        config.tau_p = tau_p;
        config.tau_c = tau_c;
        config.match_equivalent_parts = match;
        return metrics_dict(metrics::evaluate_prediction(shape, from_rows(pred), config));
      },
      py::arg("shape"), py::arg("pred"), py::arg("tau_p") = 0.01, py::arg("tau_c") = 0.01,
      py::arg("match_equivalent_parts") = true);

  py::class_<Model>(m, "Model")
      .def_property_readonly("noise_dim", [](const Model& self) { return self.checkpoint.config.noise_dim; })
      .def_property_readonly("seed", [](const Model& self) { return self.checkpoint.seed; })
      .def_property_readonly("metadata_json", [](const Model& self) { return self.checkpoint.metadata_json; })
      .def(
          "predict",
          [](const Model& self, const ShapeRecord& shape, std::uint64_t noise_seed) {
            const auto parts = shape.clouds();
            const auto z = self.draw_noise(noise_seed);
            return to_rows(model::predict(parts, z, self.checkpoint.params, self.checkpoint.config));
          },
          py::arg("shape"), py::arg("noise_seed") = 0, "Poses for the shape's parts in stored order")
      .def(
          "best_of_k",
          [](const Model& self, const ShapeRecord& shape, std::size_t samples, std::uint64_t noise_seed) {
            metrics::EvalConfig config;
            config.samples = samples;
            const auto r = metrics::best_of_k_eval(shape, self.checkpoint.params, self.checkpoint.config, config,
                                                   noise_seed);
            py::dict d = metrics_dict(r.best);
            d["best_index"] = r.best_index;
            py::list all;
            for (const auto& s : r.samples) all.append(metrics_dict(s));
            d["samples"] = all;
            return d;
          },
          py::arg("shape"), py::arg("samples") = 10, py::arg("noise_seed") = 0);
  m.def(
      "load_checkpoint", [](const std::string& path) { return Model{model::load_checkpoint(path)}; },
      py::arg("path"));
}
