#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "scenekit/error.hpp"
#include "scenekit/instance.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/scene.hpp"
#include "scenekit/synth.hpp"
#include "support.hpp"

using namespace scenekit;

namespace {

Primitive sphere(int id, const Vec3& c, double r) {
  Primitive p;
  p.id = id;
  p.kind = PrimitiveKind::kSphere;
  p.center = c;
  p.size = Vec3::Constant(r);
  p.albedo = Vec3(0.9, 0.2, 0.1);
  return p;
}

Primitive box(int id, const Vec3& c, const Vec3& size, const Mat3& rot = Mat3::Identity()) {
  Primitive p;
  p.id = id;
  p.kind = PrimitiveKind::kBox;
  p.center = c;
  p.size = size;
  p.rotation = rot;
  p.albedo = Vec3(0.1, 0.7, 0.9);
  return p;
}

PrimitiveScene single(const Primitive& p, int w = 101, int h = 101) {
  PrimitiveScene s;
  s.intr = fov_to_intrinsics(60.0, w, h);
  s.primitives.push_back(p);
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Analytic distance from a world point to the primitive surface.
double surface_distance(const Primitive& p, const Vec3& x) {
  const Vec3 l = p.rotation.transpose() * (x - p.center);
  switch (p.kind) {
    case PrimitiveKind::kSphere: return std::abs(l.norm() - p.size.x());
    case PrimitiveKind::kBox: {
      const Vec3 q = l.cwiseAbs() - 0.5 * p.size;
      return q.maxCoeff() > 0.0 ? q.cwiseMax(0.0).norm() : -q.maxCoeff();
    }
    case PrimitiveKind::kPlane: return std::abs(l.y());
  }
  return 0.0;
}

TriangleMesh grid_quad(double size, int n) {
  Primitive plane;
  plane.kind = PrimitiveKind::kPlane;
  plane.size = Vec3(size, 0.0, size);
  plane.rotation = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitX()).toRotationMatrix();
  return mesh_of_primitive(plane, n);
}

}  // namespace

TEST_CASE("generate_scene is deterministic") {
  const PrimitiveScene a = generate_scene(0);
  const PrimitiveScene b = generate_scene(0);
  REQUIRE(a.primitives.size() == b.primitives.size());
  for (std::size_t i = 0; i < a.primitives.size(); ++i) {
    CHECK(a.primitives[i].center == b.primitives[i].center);
    CHECK(a.primitives[i].size == b.primitives[i].size);
    CHECK(a.primitives[i].rotation == b.primitives[i].rotation);
    CHECK(a.primitives[i].albedo == b.primitives[i].albedo);
  }
  const RenderResult ra = raycast_render(a), rb = raycast_render(b);
  CHECK(ra.rgb.rgb == rb.rgb.rgb);
  CHECK(ra.ids == rb.ids);
}

TEST_CASE("generate_scene counts, invariants and failures") {
  SceneSpec spec;
  spec.min_things = spec.max_things = 3;
  const PrimitiveScene s = generate_scene(0, spec);
  CHECK(s.primitives.size() == 4);
  int stuff = 0;
  std::set<int> ids;
  for (const Primitive& p : s.primitives) {
    stuff += p.category == Category::kStuff;
    ids.insert(p.id);
    const Projection q = project(p.center, s.intr, s.pose);
    if (p.category == Category::kThing) {
      CHECK(q.u >= 0.05 * s.intr.width);
      CHECK(q.u <= 0.95 * s.intr.width);
      CHECK(q.v >= 0.05 * s.intr.height);
      CHECK(q.v <= 0.95 * s.intr.height);
    }
  }
  CHECK(stuff == 1);
  CHECK(ids.size() == s.primitives.size());

  spec.min_things = spec.max_things = 0;
  const PrimitiveScene empty = generate_scene(1, spec);
  REQUIRE(empty.primitives.size() == 1);
  CHECK(empty.primitives[0].kind == PrimitiveKind::kPlane);

  spec.min_things = spec.max_things = 40;
  spec.region = 0.1;
  try {
    generate_scene(2, spec);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kGeneration);
  }

  SceneSpec bad;
  bad.sphere_radius_min = 0.0;
  CHECK_THROWS_AS(generate_scene(0, bad), Error);
  bad = SceneSpec{};
  bad.max_things = 1;
  bad.min_things = 2;
  CHECK_THROWS_AS(generate_scene(0, bad), Error);
}

TEST_CASE("raycast_render analytic cases") {
  SUBCASE("sphere on the optical axis") {
    const double d = 2.0, r = 0.4;
    const PrimitiveScene s = single(sphere(1, Vec3(0, 0, d), r));
    const RenderResult out = raycast_render(s);
    CHECK(std::abs(out.depth.at(50, 50) - (d - r)) < 1e-9);
    CHECK(!out.depth.valid(0, 0));
    CHECK(out.ids[0] == 0);
    CHECK(out.ids[50 * 101 + 50] == 1);
    for (int c = 0; c < 3; ++c) CHECK(out.rgb.pixel(0, 0)[c] == kNeutral);
  }
  SUBCASE("fronto-parallel box face has constant depth") {
    const PrimitiveScene s = single(box(1, Vec3(0.05, -0.02, 3.0), Vec3(1.0, 0.8, 0.5)));
    const RenderResult out = raycast_render(s);
    std::size_t n = 0;
    for (std::size_t i = 0; i < out.depth.size(); ++i) {
      if (!out.depth.valid(i)) continue;
      ++n;
      CHECK(std::abs(out.depth.values[i] - 2.75) < 1e-9);
    }
    CHECK(n > 100);
  }
  SUBCASE("camera inside a box sees the far wall") {
    const PrimitiveScene s = single(box(1, Vec3::Zero(), Vec3::Constant(2.0)));
    const RenderResult out = raycast_render(s);
    CHECK(std::abs(out.depth.at(50, 50) - 1.0) < 1e-9);
  }
  SUBCASE("degenerate sizes are rejected") {
    CHECK_THROWS_AS(raycast_render(single(sphere(1, Vec3(0, 0, 2), 0.0))), Error);
  }
}

TEST_CASE("rendered depth lies on the analytic surfaces") {
  for (std::uint64_t seed : {0u, 7u, 19u}) {
    const PrimitiveScene s = generate_scene(seed);
    const RenderResult r = raycast_render(s);
    const PointCloud pts = unproject(r.depth, s.intr);
    const int w = s.intr.width, h = s.intr.height;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto pix = pts.pixel_indices[i];
      const int u = static_cast<int>(pix % w), v = static_cast<int>(pix / w);
      if (u == 0 || v == 0 || u == w - 1 || v == h - 1) continue;
      const int id = r.ids[pix];
      // Silhouette-edge pixels are excluded.
      if (r.ids[pix - 1] != id || r.ids[pix + 1] != id || r.ids[pix - w] != id || r.ids[pix + w] != id) continue;
      const Primitive* p = s.find(id);
      REQUIRE(p);
      const Vec3 world = s.pose.inverse().apply(pts.points[i]);
      REQUIRE(surface_distance(*p, world) <= 1e-6);
      ++checked;
    }
    CHECK(checked > 10000);
  }
}

TEST_CASE("entity masks from the id map tile the foreground") {
  const PrimitiveScene s = generate_scene(4);
  const RenderResult r = raycast_render(s);
  std::vector<int> cover(r.ids.size(), 0);
  for (const Primitive& p : s.primitives) {
    const EntityMask m = r.mask_of(p.id);
    for (std::size_t i = 0; i < m.size(); ++i) cover[i] += m.bits[i];
  }
  for (std::size_t i = 0; i < cover.size(); ++i) {
    REQUIRE(cover[i] == (r.depth.valid(i) ? 1 : 0));
  }
}

TEST_CASE("mesh_of_primitive") {
  SUBCASE("sphere") {
    const TriangleMesh m = mesh_of_primitive(sphere(1, Vec3::Zero(), 1.0), 64);
    double worst = 0.0;
    for (const Vec3& v : m.vertices) worst = std::max(worst, std::abs(v.norm() - 1.0));
    CHECK(worst < 1e-9);
    CHECK(std::abs(surface_area(m) - 4.0 * M_PI) / (4.0 * M_PI) < 0.005);
    CHECK(euler_characteristic(m) == 2);
    CHECK(count_non_manifold_edges(m) == 0);
  }
  SUBCASE("box area and orientation") {
    const TriangleMesh m = mesh_of_primitive(box(1, Vec3(1, 2, 3), Vec3(1, 2, 3)), 8);
    CHECK(surface_area(m) == 22.0);
    CHECK(euler_characteristic(m) == 2);
    double volume = 0.0;
    for (const Face& f : m.faces) {
      volume += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]])) / 6.0;
    }
    CHECK(volume == doctest::Approx(6.0));
  }
  SUBCASE("plane grid") {
    Primitive p;
    p.kind = PrimitiveKind::kPlane;
    p.size = Vec3(2.0, 0.0, 3.0);
    const TriangleMesh m = mesh_of_primitive(p, 10);
    CHECK(m.faces.size() == 200);
    CHECK(surface_area(m) == doctest::Approx(6.0));
  }
  SUBCASE("degenerate input") {
    CHECK_THROWS_AS(mesh_of_primitive(sphere(1, Vec3::Zero(), 0.0), 64), Error);
    CHECK_THROWS_AS(mesh_of_primitive(box(1, Vec3::Zero(), Vec3(1, 0, 1)), 8), Error);
    CHECK_THROWS_AS(mesh_of_primitive(sphere(1, Vec3::Zero(), 1.0), 6), Error);
  }
}

TEST_CASE("perturb_reconstruction") {
  const TriangleMesh quad = grid_quad(1.2, 24);

  SUBCASE("identity ranges return the input") {
    const Perturbation p = perturb_reconstruction(quad, 3, PerturbRanges::identity());
    CHECK(p.mesh.vertices == quad.vertices);
    CHECK(p.mesh.faces == quad.faces);
    CHECK(p.applied.scale == 1.0);
  }

  SUBCASE("applied transform describes the output") {
    const Perturbation p = perturb_reconstruction(quad, 8);
    CHECK(p.applied.scale >= 0.2);
    CHECK(p.applied.scale <= 5.0);
    CHECK(std::abs(p.applied.rotation.determinant() - 1.0) < 1e-12);
    for (std::size_t i = 0; i < quad.vertices.size(); ++i) {
      CHECK((p.applied.apply(quad.vertices[i]) - p.mesh.vertices[i]).norm() < 1e-12);
    }
  }

  // The crop of a fronto-parallel square whose normalized geometry is `quad`.
  const auto intr = fov_to_intrinsics(kVirtualCameraFovDeg, 256, 256);
  DepthMap depth(256, 256);
  EntityMask mask(256, 256);
  for (int v = 0; v < 256; ++v) {
    for (int u = 0; u < 256; ++u) {
      const Vec3 x = pixel_ray(intr, u + 0.5, v + 0.5) * 1.5;
      if (std::abs(x.x()) <= 0.5 && std::abs(x.y()) <= 0.5) {
        depth.at(u, v) = 1.5;
        mask.set(u, v);
      }
    }
  }
  const NormalizedCrop crop = reproject_instance(mask, depth, Image(256, 256, 0.2f), intr, 256);
  const Vec3 c = crop.camera.center();

  // Undo rotation and translation, keeping the scale about the camera center.
  const auto renormalize = [&](const Perturbation& p) {
    TriangleMesh out = p.mesh;
    for (Vec3& v : out.vertices) {
      v = p.applied.rotation.transpose() * (v - p.applied.translation) + (1.0 - p.applied.scale) * c;
    }
    return out;
  };

  SUBCASE("noise-free similarity is recovered exactly") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Perturbation p = perturb_reconstruction(quad, seed);
      const ScaleEstimate est = align_scale_ransac(renormalize(p), crop, seed);
      CHECK(std::abs(est.scale - 1.0 / p.applied.scale) <= 1e-6 / p.applied.scale);
    }
  }

  SUBCASE("1% jitter stays within 1% of the scale") {
    PerturbRanges ranges;
    ranges.noise = 0.01;
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
      const Perturbation p = perturb_reconstruction(quad, seed, ranges);
      const ScaleEstimate est = align_scale_ransac(renormalize(p), crop, seed);
      CHECK(std::abs(est.scale * p.applied.scale - 1.0) < 0.01);
    }
  }

  SUBCASE("invalid ranges") {
    PerturbRanges r;
    r.scale_min = 0.0;
    CHECK_THROWS_AS(perturb_reconstruction(quad, 0, r), Error);
    CHECK_THROWS_AS(perturb_reconstruction(TriangleMesh{}, 0), Error);
  }
}

TEST_CASE("oracle completion and reconstruction") {
  const PrimitiveScene s = generate_scene(2);
  const RenderResult r = raycast_render(s);
  for (const Primitive& p : s.primitives) {
    if (p.category != Category::kThing) continue;
    const EntityMask mask = r.mask_of(p.id);
    const NormalizedCrop crop = reproject_instance(mask, r.depth, r.rgb, s.intr, 256);
    NormalizedCrop completed = crop;
    completed.rgb = oracle_completion(s, p.id, crop);
    completed.mask = non_neutral_mask(completed.rgb);
    for (std::size_t i = 0; i < crop.mask.size(); ++i) REQUIRE((!crop.mask.bits[i] || completed.mask.bits[i]));

    const TriangleMesh gt = to_camera(mesh_of_primitive(p, 32), s.pose);
    OracleOptions opt;
    opt.noise = 0.0;
    opt.mask_dilation = -1;
    const OracleReconstruction recon = oracle_reconstruction(gt, completed, 9, opt);
    CHECK(recon.scale >= 0.2);
    CHECK(recon.scale <= 5.0);
    const TriangleMesh placed = place_instance(recon.mesh, 1.0 / recon.scale, crop.camera);
    REQUIRE(placed.vertices.size() == gt.vertices.size());
    for (std::size_t i = 0; i < gt.vertices.size(); ++i) {
      CHECK((placed.vertices[i] - gt.vertices[i]).norm() < 1e-9);
    }
  }
}

TEST_CASE("compose_amodal_pair") {
  const PrimitiveScene s = single(sphere(1, Vec3(0, 0, 2), 0.5), 96, 96);
  const RenderResult r = raycast_render(s);
  const Image target = r.rgb;
  const EntityMask tmask = r.mask_of(1);
  const PrimitiveScene o = single(box(1, Vec3(0.1, 0, 2), Vec3(0.6, 0.3, 0.3)), 64, 64);
  const EntityMask silhouette = raycast_render(o).mask_of(1);

  SUBCASE("empty silhouette with a zero range keeps the target") {
    const AmodalPair pair = compose_amodal_pair(target, tmask, EntityMask(64, 64), "ball", 0, {0.0, 0.0});
    CHECK(pair.conditioning.rgb == pair.target.rgb);
    CHECK(pair.conditioning.rgb == target.rgb);
    CHECK(pair.occluded_fraction == 0.0);
    CHECK_THROWS_AS(compose_amodal_pair(target, tmask, EntityMask(64, 64), "ball", 0), Error);
  }

  SUBCASE("requested occlusion is met and the pixel set invariant holds") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const AmodalPair pair = compose_amodal_pair(target, tmask, silhouette, "ball", seed, {0.25, 0.35});
      CHECK(pair.occluded_fraction >= 0.25);
      CHECK(pair.occluded_fraction <= 0.35);
      std::size_t hidden = 0;
      for (int v = 0; v < 96; ++v) {
        for (int u = 0; u < 96; ++u) {
          const float* c = pair.conditioning.pixel(u, v);
          const float* t = pair.target.pixel(u, v);
          const bool neutral = c[0] == kNeutral && c[1] == kNeutral && c[2] == kNeutral;
          const bool same = c[0] == t[0] && c[1] == t[1] && c[2] == t[2];
          REQUIRE((neutral || same));
          if (!tmask.at(u, v)) {
            REQUIRE(neutral);
          } else if (pair.occluder.at(u, v)) {
            REQUIRE(neutral);
            ++hidden;
          }
        }
      }
      CHECK(static_cast<double>(hidden) / tmask.count() == pair.occluded_fraction);
    }
  }

  SUBCASE("same seed, same pair") {
    const AmodalPair a = compose_amodal_pair(target, tmask, silhouette, "ball", 5);
    const AmodalPair b = compose_amodal_pair(target, tmask, silhouette, "ball", 5);
    CHECK(a.conditioning.rgb == b.conditioning.rgb);
    CHECK(a.occluder.bits == b.occluder.bits);
  }

  SUBCASE("unreachable range") {
    EntityMask tiny(96, 96);
    for (int u = 0; u < 10; ++u) tiny.set(40 + u, 40);
    try {
      compose_amodal_pair(target, tiny, silhouette, "x", 0, {0.3333, 0.3334});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kComposition);
    }
    CHECK_THROWS_AS(compose_amodal_pair(target, EntityMask(96, 96), silhouette, "x", 0), Error);
  }
}

TEST_CASE("write_bundle") {
  const PrimitiveScene s = generate_scene(6);
  testing::ScratchDir a("bundle-a"), b("bundle-b");
  BundleOptions opt;
  opt.crop_res = 128;
  const auto manifest_path = write_bundle(s, a.path(), opt);
  write_bundle(s, b.path(), opt);

  const SceneManifest m = load_manifest(manifest_path);
  CHECK(m.instances.size() == s.primitives.size());
  CHECK(m.depth_kind == DepthKind::kMetric);
  const EntityPartition part = partition_entities(m);
  CHECK(part.things.size() + 1 == s.primitives.size());
  for (const InstanceRecord& rec : part.things) {
    CHECK(rec.completion_path.has_value());
    CHECK(rec.recon_mesh_path.has_value());
  }

  const TriangleMesh gt = read_obj(a / "gt/scene.obj");
  bool has_background = false;
  for (const MeshGroup& g : gt.groups) has_background |= g.name == "background";
  CHECK(has_background);

  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    REQUIRE(slurp(entry.path()) == slurp(b.path() / rel));
  }
}
