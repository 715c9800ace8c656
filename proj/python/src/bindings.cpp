#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <limits>
#include <optional>

#include <nlohmann/json.hpp>

#include "scenekit/camera.hpp"
#include "scenekit/error.hpp"
#include "scenekit/image.hpp"
#include "scenekit/instance.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/metrics.hpp"
#include "scenekit/pipeline.hpp"
#include "scenekit/scene.hpp"
#include "scenekit/synth.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace scenekit;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an (N, 3) array");
  const auto r = a.unchecked<2>();
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) w(i, k) = pts[i][k];
  return out;
}

DepthMap to_depth(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected an (H, W) depth array");
  DepthMap d(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), d.values.begin());
  return d;
}

py::array_t<double> from_depth(const DepthMap& d) {
  py::array_t<double> out({d.height, d.width});
  std::copy(d.values.begin(), d.values.end(), out.mutable_data());
  return out;
}

Image to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an (H, W, 3) image");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.rgb.begin());
  return img;
}

py::array_t<float> from_image(const Image& img) {
  py::array_t<float> out({img.height, img.width, 3});
  std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
  return out;
}

EntityMask to_mask(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected an (H, W) mask");
  EntityMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[i] = a.data()[i] ? 1 : 0;
  return m;
}

py::array_t<bool> from_mask(const EntityMask& m) {
  py::array_t<bool> out({m.height, m.width});
  for (std::size_t i = 0; i < m.bits.size(); ++i) out.mutable_data()[i] = m.bits[i] != 0;
  return out;
}

py::tuple mesh_arrays(const TriangleMesh& mesh) {
  py::array_t<std::int64_t> faces({static_cast<py::ssize_t>(mesh.faces.size()), py::ssize_t{3}});
  auto w = faces.mutable_unchecked<2>();
  for (std::size_t i = 0; i < mesh.faces.size(); ++i)
    for (int k = 0; k < 3; ++k) w(i, k) = mesh.faces[i][k];
  return py::make_tuple(from_points(mesh.vertices), faces);
}

TriangleMesh to_mesh(const Array& vertices, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& faces) {
  TriangleMesh m;
  m.vertices = to_points(vertices);
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw py::value_error("expected an (F, 3) face array");
  const auto r = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < faces.shape(0); ++i) {
    m.faces.push_back({static_cast<std::int32_t>(r(i, 0)), static_cast<std::int32_t>(r(i, 1)),
                       static_cast<std::int32_t>(r(i, 2))});
  }
  m.validate();
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compositional single-view scene reconstruction";

  static PyObject* error_type = PyErr_NewException("scenekit._core.Error", PyExc_RuntimeError, nullptr);
  m.attr("Error") = py::handle(error_type).inc_ref();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             CameraIntrinsics c{fx, fy, cx, cy, width, height};
             c.validate();
             return c;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_readonly("fx", &CameraIntrinsics::fx)
      .def_readonly("fy", &CameraIntrinsics::fy)
      .def_readonly("cx", &CameraIntrinsics::cx)
      .def_readonly("cy", &CameraIntrinsics::cy)
      .def_readonly("width", &CameraIntrinsics::width)
      .def_readonly("height", &CameraIntrinsics::height)
      .def("__repr__", [](const CameraIntrinsics& c) {
        return "CameraIntrinsics(fx=" + std::to_string(c.fx) + ", fy=" + std::to_string(c.fy) +
               ", cx=" + std::to_string(c.cx) + ", cy=" + std::to_string(c.cy) +
               ", width=" + std::to_string(c.width) + ", height=" + std::to_string(c.height) + ")";
      });

  m.def("fov_to_intrinsics", &fov_to_intrinsics, py::arg("fov_deg"), py::arg("width"), py::arg("height"));

  m.def(
      "unproject",
      [](const Array& depth, const CameraIntrinsics& intr) {
        const PointCloud pc = unproject(to_depth(depth), intr);
        py::array_t<std::int64_t> idx(std::vector<py::ssize_t>{static_cast<py::ssize_t>(pc.size())});
        std::copy(pc.pixel_indices.begin(), pc.pixel_indices.end(), idx.mutable_data());
        return py::make_tuple(from_points(pc.points), idx);
      },
      py::arg("depth"), py::arg("intrinsics"),
      "Points (N, 3) of the valid pixels and their row-major pixel indices.");

  m.def(
      "project",
      [](const Array& points, const CameraIntrinsics& intr) {
        const std::vector<Vec3> pts = to_points(points);
        const std::vector<Projection> pr = project(std::span<const Vec3>(pts), intr);
        py::array_t<double> out({static_cast<py::ssize_t>(pr.size()), py::ssize_t{3}});
        auto w = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < pr.size(); ++i) {
          const double nan = std::numeric_limits<double>::quiet_NaN();
          w(i, 0) = pr[i].behind ? nan : pr[i].u;
          w(i, 1) = pr[i].behind ? nan : pr[i].v;
          w(i, 2) = pr[i].depth;
        }
        return out;
      },
      py::arg("points"), py::arg("intrinsics"), "Columns u, v, depth; u and v are NaN behind the camera.");

  m.def(
      "fit_scale_shift",
      [](const Array& affine, const Array& anchor) {
        const ScaleShift f = fit_scale_shift(to_depth(affine), to_depth(anchor));
        return py::make_tuple(f.scale, f.shift);
      },
      py::arg("affine_depth"), py::arg("anchor_depth"));

  m.def(
      "load_manifest",
      [](const fs::path& path) {
        const SceneManifest sm = load_manifest(path);
        return manifest_to_json(sm, sm.manifest_path.parent_path()).dump();
      },
      py::arg("path"), "Validated manifest as a JSON string.");

  m.def(
      "read_mesh", [](const fs::path& path) { return mesh_arrays(read_mesh(path)); }, py::arg("path"));
  m.def(
      "write_mesh",
      [](const fs::path& path, const Array& v, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& f) {
        write_mesh(path, to_mesh(v, f));
      },
      py::arg("path"), py::arg("vertices"), py::arg("faces"));

  m.def(
      "marching_cubes",
      [](const Array& volume, std::array<double, 3> lo, std::array<double, 3> hi, double iso) {
        if (volume.ndim() != 3) throw py::value_error("expected a (nz, ny, nx) volume");
        ScalarGrid g;
        g.dims = {static_cast<int>(volume.shape(2)), static_cast<int>(volume.shape(1)),
                  static_cast<int>(volume.shape(0))};
        g.bounds.min = Vec3(lo[0], lo[1], lo[2]);
        g.bounds.max = Vec3(hi[0], hi[1], hi[2]);
        g.values.assign(volume.data(), volume.data() + volume.size());
        return mesh_arrays(marching_cubes(g, iso));
      },
      py::arg("volume"), py::arg("lo"), py::arg("hi"), py::arg("iso") = 0.0,
      "Volume indexed [k, j, i] over the box [lo, hi]; returns (vertices, faces).");

  m.def(
      "chamfer", [](const Array& a, const Array& b) { return chamfer(PointCloud{to_points(a)}, PointCloud{to_points(b)}); },
      py::arg("a"), py::arg("b"));
  m.def(
      "f_score",
      [](const Array& a, const Array& b, double tau) {
        const FScore f = f_score_detail(PointCloud{to_points(a)}, PointCloud{to_points(b)}, tau);
        return py::make_tuple(f.f_score, f.precision, f.recall);
      },
      py::arg("a"), py::arg("b"), py::arg("tau"), "(f_score, precision, recall) in percent.");

  m.def(
      "evaluate",
      [](const fs::path& recon, const fs::path& gt, const std::string& preset, std::optional<double> tau,
         std::optional<std::size_t> points, std::optional<bool> foreground_only, std::uint64_t seed) {
        EvalProtocol p;
        if (preset != "custom") {
          const auto found = EvalProtocol::preset(preset);
          if (!found) throw py::value_error("unknown preset " + preset);
          p = *found;
        }
        if (tau) p.tau = *tau;
        if (points) p.n_points = *points;
        if (foreground_only) p.foreground_only = *foreground_only;
        p.seed = seed;
        py::gil_scoped_release release;
        return evaluate_scene(read_mesh(recon), read_mesh(gt), p).to_json().dump();
      },
      py::arg("recon"), py::arg("gt"), py::arg("preset") = "front", py::arg("tau") = py::none(),
      py::arg("points") = py::none(), py::arg("foreground_only") = py::none(), py::arg("seed") = 0,
      "Evaluation report as a JSON string.");

  m.def(
      "synth",
      [](std::uint64_t seed, const fs::path& out, std::optional<int> things, int crop_res, bool oracles) {
        SceneSpec spec;
        if (things) spec.min_things = spec.max_things = *things;
        BundleOptions opt;
        opt.crop_res = crop_res;
        opt.write_oracles = oracles;
        py::gil_scoped_release release;
        return write_bundle(generate_scene(seed, spec), out, opt);
      },
      py::arg("seed"), py::arg("out"), py::arg("things") = py::none(),
      py::arg("crop_res") = kDefaultCropResolution, py::arg("oracles") = true,
      "Writes a synthetic scene bundle and returns the manifest path.");

  m.def(
      "reconstruct",
      [](const fs::path& manifest_path, const std::string& config_json, const fs::path& out) {
        PipelineConfig config;
        config.merge_json(json::parse(config_json));
        config.validate();
        py::gil_scoped_release release;
        const SceneManifest manifest = load_manifest(manifest_path);
        const SceneResult result = reconstruct_scene(manifest, config);
        write_scene_outputs(result, config, manifest, out);
        return result.report_json(config, manifest).dump();
      },
      py::arg("manifest"), py::arg("config_json") = "{}", py::arg("out"),
      "Runs the pipeline, writes scene.obj and friends to `out`, returns the report JSON.");

  m.def(
      "compose_amodal_pair",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& target,
         const py::array_t<bool, py::array::c_style | py::array::forcecast>& target_mask,
         const py::array_t<bool, py::array::c_style | py::array::forcecast>& silhouette,
         const std::string& prompt, std::uint64_t seed, double lo, double hi, int max_tries) {
        const AmodalPair p = compose_amodal_pair(to_image(target), to_mask(target_mask), to_mask(silhouette),
                                                 prompt, seed, {lo, hi}, max_tries);
        py::dict d;
        d["conditioning"] = from_image(p.conditioning);
        d["target"] = from_image(p.target);
        d["target_mask"] = from_mask(p.target_mask);
        d["occluder"] = from_mask(p.occluder);
        d["occluded_fraction"] = p.occluded_fraction;
        d["prompt"] = p.prompt;
        d["seed"] = p.seed;
        return d;
      },
      py::arg("target"), py::arg("target_mask"), py::arg("silhouette"), py::arg("prompt") = "",
      py::arg("seed") = 0, py::arg("lo") = 0.1, py::arg("hi") = 0.5, py::arg("max_tries") = 100);

  m.def("read_pfm", [](const fs::path& p) { return from_depth(read_pfm(p)); }, py::arg("path"));
  m.def("read_png", [](const fs::path& p) { return from_image(read_png(p)); }, py::arg("path"));
  m.def("read_mask", [](const fs::path& p) { return from_mask(read_mask_png(p)); }, py::arg("path"));

  m.attr("NEUTRAL") = kNeutral;
  m.attr("DEFAULT_CROP_RESOLUTION") = kDefaultCropResolution;
}
