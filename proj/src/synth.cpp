#include "scenekit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "scenekit/error.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/parallel.hpp"
#include "scenekit/random.hpp"

namespace scenekit {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(PrimitiveKind kind) noexcept {
  switch (kind) {
    case PrimitiveKind::kSphere: return "sphere";
    case PrimitiveKind::kBox: return "box";
    case PrimitiveKind::kPlane: return "plane";
  }
  return "unknown";
}

std::string instance_id(const Primitive& prim) {
  return prim.category == Category::kStuff ? "ground" : "thing_" + std::to_string(prim.id);
}

namespace {

constexpr double kRayEpsilon = 1e-9;

void require_size(const Primitive& p) {
  const bool ok = [&] {
    if (!p.size.allFinite()) return false;
    switch (p.kind) {
      case PrimitiveKind::kSphere: return p.size.x() > 0.0;
      case PrimitiveKind::kBox: return (p.size.array() > 0.0).all();
      case PrimitiveKind::kPlane: return p.size.x() > 0.0 && p.size.z() > 0.0;
    }
    return false;
  }();
  if (!ok) {
    throw Error(ErrorCode::kDomain,
                std::string("degenerate ") + to_string(p.kind) + " size for primitive " +
                    std::to_string(p.id));
  }
}

}  // namespace

double Primitive::intersect(const Vec3& origin, const Vec3& dir, Vec3* normal) const {
  const Vec3 o = rotation.transpose() * (origin - center);
  const Vec3 d = rotation.transpose() * dir;
  double t = -1.0;
  Vec3 n_local = Vec3::Zero();
  switch (kind) {
    case PrimitiveKind::kSphere: {
      const double r = size.x();
      const double a = d.squaredNorm();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc = b * b - a * c;
      if (disc < 0.0) return -1.0;
      const double root = std::sqrt(disc);
      const double t0 = (-b - root) / a;
      const double t1 = (-b + root) / a;
      t = t0 > kRayEpsilon ? t0 : t1 > kRayEpsilon ? t1 : -1.0;
      if (t < 0.0) return -1.0;
      n_local = (o + t * d) / r;
      break;
    }
    case PrimitiveKind::kBox: {
      const Vec3 half = 0.5 * size;
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int near_axis = 0, far_axis = 0;
      for (int k = 0; k < 3; ++k) {
        if (std::abs(d[k]) < 1e-300) {
          if (std::abs(o[k]) > half[k]) return -1.0;
          continue;
        }
        double a = (-half[k] - o[k]) / d[k];
        double b = (half[k] - o[k]) / d[k];
        if (a > b) std::swap(a, b);
        if (a > t_near) { t_near = a; near_axis = k; }
        if (b < t_far) { t_far = b; far_axis = k; }
      }
      if (t_near > t_far || t_far <= kRayEpsilon) return -1.0;
      const int axis = t_near > kRayEpsilon ? near_axis : far_axis;
      t = t_near > kRayEpsilon ? t_near : t_far;
      n_local[axis] = (o[axis] + t * d[axis]) > 0.0 ? 1.0 : -1.0;
      break;
    }
    case PrimitiveKind::kPlane: {
      if (std::abs(d.y()) < 1e-300) return -1.0;
      t = -o.y() / d.y();
      if (t <= kRayEpsilon) return -1.0;
      const Vec3 p = o + t * d;
      if (std::abs(p.x()) > 0.5 * size.x() || std::abs(p.z()) > 0.5 * size.z()) return -1.0;
      n_local = Vec3(0.0, -1.0, 0.0);
      break;
    }
  }
  if (normal) {
    Vec3 n = rotation * n_local;
    if (n.dot(dir) > 0.0) n = -n;
    *normal = n.normalized();
  }
  return t;
}

std::vector<Vec3> Primitive::bounding_corners() const {
  Vec3 half;
  switch (kind) {
    case PrimitiveKind::kSphere: half = Vec3::Constant(size.x()); break;
    case PrimitiveKind::kBox: half = 0.5 * size; break;
    case PrimitiveKind::kPlane: half = Vec3(0.5 * size.x(), 0.0, 0.5 * size.z()); break;
  }
  // A sphere's box does not rotate with it.
  const Mat3 r = kind == PrimitiveKind::kSphere ? Mat3::Identity() : rotation;
  std::vector<Vec3> corners;
  for (int i = 0; i < 8; ++i) {
    const Vec3 s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    corners.push_back(center + r * s.cwiseProduct(half));
  }
  return corners;
}

const Primitive* PrimitiveScene::find(int id) const {
  for (const Primitive& p : primitives) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

void SceneSpec::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::kDomain, what); };
  if (min_things < 0 || max_things < min_things) fail("need 0 <= min_things <= max_things");
  if (!(region > 0.0)) fail("region must be positive");
  if (!(sphere_radius_min > 0.0) || sphere_radius_max < sphere_radius_min) fail("bad sphere radius range");
  if (!(box_edge_min > 0.0) || box_edge_max < box_edge_min) fail("bad box edge range");
  if (!(ground_size > 0.0)) fail("ground size must be positive");
  if (gap < 0.0) fail("gap must be non-negative");
  if (width < 8 || height < 8) fail("image must be at least 8x8");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) fail("fov must be in (0, 180)");
  if (!(margin >= 0.0 && margin < 0.5)) fail("margin must be in [0, 0.5)");
  if (!(min_visible_fraction >= 0.0 && min_visible_fraction <= 1.0)) {
    fail("min_visible_fraction must be in [0, 1]");
  }
  if (max_attempts < 1) fail("max_attempts must be positive");
  if ((eye - target).norm() < 1e-9) fail("eye and target coincide");
}

namespace {

Vec3 random_albedo(Rng& rng) {
  // Saturated colours: one channel low, one high, so shading never lands on neutral.
  Vec3 c;
  const std::size_t low = rng.index(3);
  const std::size_t high = (low + 1 + rng.index(2)) % 3;
  for (int k = 0; k < 3; ++k) c[k] = rng.uniform(0.3, 0.9);
  c[static_cast<Eigen::Index>(low)] = rng.uniform(0.02, 0.2);
  c[static_cast<Eigen::Index>(high)] = rng.uniform(0.75, 0.95);
  return c;
}

Mat3 yaw(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

double footprint_radius(const Primitive& p) {
  if (p.kind == PrimitiveKind::kSphere) return p.size.x();
  return 0.5 * std::hypot(p.size.x(), p.size.z());
}

bool inside_margin(const Primitive& p, const PrimitiveScene& scene, double margin) {
  const double mu = margin * scene.intr.width, mv = margin * scene.intr.height;
  for (const Vec3& c : p.bounding_corners()) {
    const Projection q = project(c, scene.intr, scene.pose);
    if (q.behind) return false;
    if (q.u < mu || q.u > scene.intr.width - mu || q.v < mv || q.v > scene.intr.height - mv) {
      return false;
    }
  }
  return true;
}

}  // namespace

PrimitiveScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  Rng rng(seed);
  PrimitiveScene base;
  base.seed = seed;
  base.intr = fov_to_intrinsics(spec.fov_deg, spec.width, spec.height);
  base.pose = look_at(spec.eye, spec.target);

  Primitive ground;
  ground.id = 1;
  ground.label = "floor";
  ground.kind = PrimitiveKind::kPlane;
  ground.category = Category::kStuff;
  ground.size = Vec3(spec.ground_size, 0.0, spec.ground_size);
  ground.albedo = Vec3(rng.uniform(0.55, 0.7), rng.uniform(0.5, 0.6), rng.uniform(0.35, 0.45));
  base.primitives.push_back(ground);

  const int count = spec.min_things +
                    static_cast<int>(rng.index(static_cast<std::size_t>(spec.max_things - spec.min_things + 1)));
  int attempts = 0;
  while (attempts < spec.max_attempts) {
    PrimitiveScene scene = base;
    bool placed_all = true;
    for (int k = 0; k < count && placed_all; ++k) {
      placed_all = false;
      while (attempts < spec.max_attempts) {
        ++attempts;
        Primitive p;
        p.id = k + 2;
        p.category = Category::kThing;
        p.albedo = random_albedo(rng);
        if (rng.uniform() < 0.5) {
          p.kind = PrimitiveKind::kSphere;
          p.label = "sphere";
          const double r = rng.uniform(spec.sphere_radius_min, spec.sphere_radius_max);
          p.size = Vec3(r, r, r);
          p.center = Vec3(0.0, -r, 0.0);
        } else {
          p.kind = PrimitiveKind::kBox;
          p.label = "box";
          for (int a = 0; a < 3; ++a) p.size[a] = rng.uniform(spec.box_edge_min, spec.box_edge_max);
          p.rotation = yaw(rng.uniform(0.0, M_PI));
          p.center = Vec3(0.0, -0.5 * p.size.y(), 0.0);
        }
        p.center.x() = rng.uniform(-spec.region, spec.region);
        p.center.z() = rng.uniform(-spec.region, spec.region);

        bool clear = true;
        for (const Primitive& q : scene.primitives) {
          if (q.category == Category::kStuff) continue;
          const double dx = p.center.x() - q.center.x(), dz = p.center.z() - q.center.z();
          if (std::hypot(dx, dz) < footprint_radius(p) + footprint_radius(q) + spec.gap) {
            clear = false;
            break;
          }
        }
        if (!clear || !inside_margin(p, scene, spec.margin)) continue;
        scene.primitives.push_back(p);
        placed_all = true;
        break;
      }
    }
    if (!placed_all) break;

    // Every thing must stay recognisable after mutual occlusion.
    const RenderResult all = raycast_render(scene);
    bool visible = true;
    for (const Primitive& p : scene.primitives) {
      if (p.category == Category::kStuff) continue;
      const std::size_t seen = all.mask_of(p.id).count();
      const std::size_t full = raycast_render(scene, p.id).mask_of(p.id).count();
      if (seen < 32 || static_cast<double>(seen) < spec.min_visible_fraction * static_cast<double>(full)) {
        visible = false;
        break;
      }
    }
    if (visible) return scene;
    ++attempts;
  }
  throw Error(ErrorCode::kGeneration, "could not place " + std::to_string(count) +
                                          " objects within " + std::to_string(spec.max_attempts) +
                                          " attempts (seed " + std::to_string(seed) + ")");
}

EntityMask RenderResult::mask_of(int id) const {
  EntityMask mask(depth.width, depth.height);
  for (std::size_t i = 0; i < ids.size(); ++i) mask.bits[i] = ids[i] == id ? 1 : 0;
  return mask;
}

RenderResult raycast_render(const PrimitiveScene& scene, int only) {
  scene.intr.validate();
  for (const Primitive& p : scene.primitives) require_size(p);
  const int w = scene.intr.width, h = scene.intr.height;
  RenderResult out;
  out.depth = DepthMap(w, h);
  out.ids.assign(static_cast<std::size_t>(w) * h, 0);
  out.rgb = Image(w, h, kNeutral);
  const Vec3 origin = scene.pose.center();
  const Mat3 to_world = scene.pose.rotation.transpose();
  const Vec3 light = Vec3(0.4, -1.0, -0.6).normalized();  // towards the light

  parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      // The camera-frame ray has z = 1, so t is the camera depth.
      const Vec3 dir = to_world * pixel_ray(scene.intr, u + 0.5, v + 0.5);
      double best = std::numeric_limits<double>::infinity();
      const Primitive* hit = nullptr;
      Vec3 normal = Vec3::Zero();
      for (const Primitive& p : scene.primitives) {
        if (only != 0 && p.id != only) continue;
        Vec3 n;
        const double t = p.intersect(origin, dir, &n);
        if (t > 0.0 && t < best) {
          best = t;
          hit = &p;
          normal = n;
        }
      }
      if (!hit) continue;
      out.depth.at(u, v) = best;
      out.ids[static_cast<std::size_t>(v) * w + u] = hit->id;
      const double shade = 0.3 + 0.7 * std::max(0.0, normal.dot(light));
      float* px = out.rgb.pixel(u, v);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(std::clamp(hit->albedo[c] * shade, 0.0, 1.0));
    }
  });
  return out;
}

namespace {

// Flips faces whose normal points towards `inside`.
void orient_outward(TriangleMesh& mesh, const Vec3& inside) {
  for (Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    const Vec3 n = (b - a).cross(c - a);
    if (n.dot((a + b + c) / 3.0 - inside) < 0.0) std::swap(f[1], f[2]);
  }
}

}  // namespace

TriangleMesh mesh_of_primitive(const Primitive& prim, int tessellation) {
  require_size(prim);
  const int min_tess = prim.kind == PrimitiveKind::kSphere ? 8 : 1;
  if (tessellation < min_tess) {
    throw Error(ErrorCode::kDomain, std::string("tessellation of a ") + to_string(prim.kind) +
                                        " must be at least " + std::to_string(min_tess));
  }
  TriangleMesh mesh;
  const auto idx = [](std::size_t i) { return static_cast<std::int32_t>(i); };
  switch (prim.kind) {
    case PrimitiveKind::kSphere: {
      const int segments = tessellation;
      const int rings = std::max(2, tessellation / 2);
      const double r = prim.size.x();
      mesh.vertices.emplace_back(0.0, -r, 0.0);
      for (int i = 1; i < rings; ++i) {
        const double theta = M_PI * i / rings;
        for (int j = 0; j < segments; ++j) {
          const double phi = 2.0 * M_PI * j / segments;
          mesh.vertices.emplace_back(r * std::sin(theta) * std::cos(phi), -r * std::cos(theta),
                                     r * std::sin(theta) * std::sin(phi));
        }
      }
      mesh.vertices.emplace_back(0.0, r, 0.0);
      const auto ring = [&](int i, int j) { return idx(1 + static_cast<std::size_t>(i - 1) * segments + (j % segments)); };
      const std::int32_t south = idx(mesh.vertices.size() - 1);
      for (int j = 0; j < segments; ++j) {
        mesh.faces.push_back({0, ring(1, j), ring(1, j + 1)});
        mesh.faces.push_back({south, ring(rings - 1, j + 1), ring(rings - 1, j)});
      }
      for (int i = 1; i + 1 < rings; ++i) {
        for (int j = 0; j < segments; ++j) {
          mesh.faces.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
          mesh.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
        }
      }
      orient_outward(mesh, Vec3::Zero());
      break;
    }
    case PrimitiveKind::kBox: {
      const Vec3 half = 0.5 * prim.size;
      for (int i = 0; i < 8; ++i) {
        mesh.vertices.emplace_back((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(),
                                   (i & 4) ? half.z() : -half.z());
      }
      // Two triangles per side; side k fixes the bit `axis` to `sign`.
      for (int axis = 0; axis < 3; ++axis) {
        const int a = 1 << ((axis + 1) % 3), b = 1 << ((axis + 2) % 3);
        for (int sign = 0; sign < 2; ++sign) {
          const int base = sign ? (1 << axis) : 0;
          mesh.faces.push_back({idx(base), idx(base + a), idx(base + a + b)});
          mesh.faces.push_back({idx(base), idx(base + a + b), idx(base + b)});
        }
      }
      orient_outward(mesh, Vec3::Zero());
      break;
    }
    case PrimitiveKind::kPlane: {
      const int n = tessellation;
      const double sx = prim.size.x(), sz = prim.size.z();
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
          mesh.vertices.emplace_back(sx * (static_cast<double>(j) / n - 0.5), 0.0,
                                     sz * (static_cast<double>(i) / n - 0.5));
        }
      }
      const auto at = [&](int i, int j) { return idx(static_cast<std::size_t>(i) * (n + 1) + j); };
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          mesh.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
          mesh.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
      }
      // Normals face -y, towards the sky of the y-down world.
      orient_outward(mesh, Vec3(0.0, 1.0, 0.0));
      break;
    }
  }
  for (Vec3& v : mesh.vertices) v = prim.rotation * v + prim.center;
  return mesh;
}

TriangleMesh to_camera(const TriangleMesh& mesh, const RigidPose& pose) {
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) v = pose.apply(v);
  return out;
}

PerturbRanges PerturbRanges::identity() {
  PerturbRanges r;
  r.scale_min = r.scale_max = 1.0;
  r.rotate = false;
  r.max_translation = 0.0;
  r.noise = 0.0;
  return r;
}

namespace {

// Uniform random rotation from three uniforms (Shoemake).
Mat3 random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const Eigen::Quaterniond q(b * std::cos(2.0 * M_PI * u3), a * std::sin(2.0 * M_PI * u2),
                             a * std::cos(2.0 * M_PI * u2), b * std::sin(2.0 * M_PI * u3));
  return q.normalized().toRotationMatrix();
}

double diagonal_of(const TriangleMesh& mesh) {
  const Aabb box = bounds_of(mesh.vertices);
  return box.valid() ? box.extent().norm() : 0.0;
}

}  // namespace

Perturbation perturb_reconstruction(const TriangleMesh& mesh, std::uint64_t seed,
                                    const PerturbRanges& ranges) {
  if (mesh.vertices.empty()) throw Error(ErrorCode::kDomain, "cannot perturb an empty mesh");
  if (!(ranges.scale_min > 0.0) || !(ranges.scale_max >= ranges.scale_min)) {
    throw Error(ErrorCode::kDomain, "scale range must satisfy 0 < min <= max");
  }
  if (!(ranges.max_translation >= 0.0) || !(ranges.noise >= 0.0)) {
    throw Error(ErrorCode::kDomain, "translation and noise must be non-negative");
  }
  Rng rng(seed);
  const double diag = diagonal_of(mesh);
  const double s = rng.log_uniform(ranges.scale_min, ranges.scale_max);
  const Mat3 rot = ranges.rotate ? random_rotation(rng) : Mat3::Identity();
  Vec3 t;
  for (int k = 0; k < 3; ++k) t[k] = ranges.max_translation * diag * rng.uniform(-1.0, 1.0);

  Perturbation out;
  out.mesh = mesh;
  if (ranges.noise > 0.0) {
    const double sigma = ranges.noise * diag;
    for (Vec3& v : out.mesh.vertices) {
      for (int k = 0; k < 3; ++k) v[k] += sigma * rng.normal();
    }
  }
  out.applied.scale = s;
  out.applied.rotation = rot;
  out.applied.translation = ranges.pivot - s * (rot * ranges.pivot) + t;
  if (s == 1.0 && rot.isIdentity(0.0) && out.applied.translation.isZero(0.0)) return out;
  for (Vec3& v : out.mesh.vertices) v = out.applied.apply(v);
  return out;
}

namespace {

EntityMask dilate(const EntityMask& mask, int radius) {
  if (radius <= 0) return mask;
  EntityMask out(mask.width, mask.height);
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v)) continue;
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          const int x = u + du, y = v + dv;
          if (x >= 0 && y >= 0 && x < mask.width && y < mask.height) out.set(x, y);
        }
      }
    }
  }
  return out;
}

}  // namespace

OracleReconstruction oracle_reconstruction(const TriangleMesh& view_mesh,
                                           const NormalizedCrop& crop, std::uint64_t seed,
                                           const OracleOptions& options) {
  if (view_mesh.empty()) throw Error(ErrorCode::kReconstruction, "empty ground-truth mesh");
  crop.validate();
  Rng rng(seed);
  TriangleMesh jittered = view_mesh;
  jittered.vertex_colors.clear();
  jittered.groups.clear();
  if (options.noise > 0.0) {
    const double sigma = options.noise * diagonal_of(view_mesh);
    for (Vec3& v : jittered.vertices) {
      for (int k = 0; k < 3; ++k) v[k] += sigma * rng.normal();
    }
  }

  TriangleMesh normalized = jittered;
  for (Vec3& v : normalized.vertices) {
    const Projection q = crop.locate(v);
    if (q.behind) throw Error(ErrorCode::kReconstruction, "object point behind the crop camera");
    v = crop.normalized_point(q.u, q.v, q.depth);
  }

  if (options.mask_dilation >= 0) {
    const EntityMask keep = dilate(crop.mask, options.mask_dilation);
    std::vector<Face> faces;
    for (const Face& f : jittered.faces) {
      const Vec3 c = (jittered.vertices[f[0]] + jittered.vertices[f[1]] + jittered.vertices[f[2]]) / 3.0;
      const Projection q = crop.locate(c);
      if (q.behind) continue;
      const int u = static_cast<int>(std::floor(q.u)), v = static_cast<int>(std::floor(q.v));
      if (u < 0 || v < 0 || u >= crop.resolution || v >= crop.resolution) continue;
      if (keep.at(u, v)) faces.push_back(f);
    }
    normalized.faces = std::move(faces);
    normalized = compact(normalized);
    if (normalized.empty()) {
      throw Error(ErrorCode::kReconstruction, "no surface of the object falls inside the crop mask");
    }
  }

  PerturbRanges ranges = PerturbRanges::identity();
  ranges.scale_min = options.scale_min;
  ranges.scale_max = options.scale_max;
  ranges.pivot = crop.camera.center();
  Perturbation scaled = perturb_reconstruction(normalized, derive_seed(seed, 1), ranges);
  return {std::move(scaled.mesh), scaled.applied.scale};
}

Image oracle_completion(const PrimitiveScene& scene, int id, const NormalizedCrop& layout) {
  if (!scene.find(id)) throw Error(ErrorCode::kDomain, "no primitive with id " + std::to_string(id));
  const RenderResult alone = raycast_render(scene, id);
  return resample_into(layout, alone.mask_of(id), alone.depth, alone.rgb, scene.intr).rgb;
}

TriangleMesh ground_truth_mesh(const PrimitiveScene& scene, int tessellation) {
  std::vector<NamedMesh> parts;
  NamedMesh background{"background", {}};
  for (const Primitive& p : scene.primitives) {
    TriangleMesh m = to_camera(mesh_of_primitive(p, tessellation), scene.pose);
    if (p.category == Category::kThing) {
      parts.push_back({instance_id(p), std::move(m)});
      continue;
    }
    const auto offset = static_cast<std::int32_t>(background.mesh.vertices.size());
    background.mesh.vertices.insert(background.mesh.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (Face f : m.faces) {
      for (auto& i : f) i += offset;
      background.mesh.faces.push_back(f);
    }
  }
  if (!background.mesh.empty()) parts.push_back(std::move(background));
  return merge_scene(parts);
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace

fs::path write_bundle(const PrimitiveScene& scene, const fs::path& dir, const BundleOptions& options) {
  for (const char* sub : {"masks", "gt", "oracle"}) fs::create_directories(dir / sub);
  const RenderResult render = raycast_render(scene);
  const Image image = quantize_8bit(render.rgb);
  const DepthMap depth = quantize_float32(render.depth);
  write_png(dir / "image.png", image);
  write_pfm(dir / "depth.pfm", depth);

  json manifest;
  manifest["schema_version"] = kManifestSchemaVersion;
  manifest["image"] = "image.png";
  manifest["depth"] = "depth.pfm";
  manifest["depth_kind"] = "metric";
  manifest["units"] = "m";
  manifest["camera"] = {{"fx", scene.intr.fx}, {"fy", scene.intr.fy}, {"cx", scene.intr.cx},
                        {"cy", scene.intr.cy}, {"width", scene.intr.width},
                        {"height", scene.intr.height}};
  manifest["instances"] = json::array();

  json prims = json::array();
  for (const Primitive& p : scene.primitives) {
    const std::string id = instance_id(p);
    json pj = {{"id", id},          {"primitive", p.id},        {"label", p.label},
               {"kind", to_string(p.kind)}, {"category", to_string(p.category)},
               {"center", vec_json(p.center)}, {"size", vec_json(p.size)},
               {"rotation", mat_json(p.rotation)}, {"albedo", vec_json(p.albedo)}};
    const EntityMask mask = render.mask_of(p.id);
    if (mask.count() == 0) {
      prims.push_back(pj);
      continue;
    }
    const std::string mask_rel = "masks/" + id + ".png";
    write_mask_png(dir / mask_rel, mask);
    json inst = {{"id", id}, {"label", p.label}, {"category", to_string(p.category)},
                 {"mask", mask_rel}};

    if (p.category == Category::kThing) {
      const TriangleMesh gt = to_camera(mesh_of_primitive(p, options.tessellation), scene.pose);
      write_obj(dir / ("gt/" + id + ".obj"), gt);
      if (options.write_oracles) {
        const NormalizedCrop crop =
            make_crop(options.crop_mode, mask, depth, image, scene.intr, options.crop_res);
        NormalizedCrop completed = crop;
        completed.rgb = quantize_8bit(oracle_completion(scene, p.id, crop));
        completed.mask = non_neutral_mask(completed.rgb);
        const std::string comp_rel = "oracle/" + id + "_completion.png";
        write_png(dir / comp_rel, completed.rgb);
        const OracleReconstruction recon = oracle_reconstruction(
            gt, completed, derive_seed(scene.seed, static_cast<std::uint64_t>(p.id)), options.oracle);
        const std::string recon_rel = "oracle/" + id + "_recon.obj";
        write_obj(dir / recon_rel, recon.mesh);
        inst["completion"] = comp_rel;
        inst["reconstruction"] = recon_rel;
        pj["oracle_scale"] = recon.scale;
      }
    }
    manifest["instances"].push_back(inst);
    prims.push_back(pj);
  }
  write_obj(dir / "gt/scene.obj", ground_truth_mesh(scene, options.tessellation));

  json scene_doc = {{"seed", scene.seed},
                    {"crop_mode", to_string(options.crop_mode)},
                    {"crop_res", options.crop_res},
                    {"pose", {{"rotation", mat_json(scene.pose.rotation)},
                              {"translation", vec_json(scene.pose.translation)}}},
                    {"primitives", prims}};
  write_json(dir / "scene.json", scene_doc);
  const fs::path manifest_path = dir / "manifest.json";
  write_json(manifest_path, manifest);
  return manifest_path;
}

// ---------------------------------------------------------------------------
// Amodal training pairs

namespace {

struct Placement {
  double anchor_u = 0.0, anchor_v = 0.0;  // image position of the silhouette box center
  double scale = 1.0;
};

bool occludes(const EntityMask& sil, const PixelBox& box, const Placement& pl, int u, int v) {
  const double cu = 0.5 * (box.u0 + box.u1 + 1), cv = 0.5 * (box.v0 + box.v1 + 1);
  const double su = cu + (u + 0.5 - pl.anchor_u) / pl.scale;
  const double sv = cv + (v + 0.5 - pl.anchor_v) / pl.scale;
  const int x = static_cast<int>(std::floor(su)), y = static_cast<int>(std::floor(sv));
  return x >= 0 && y >= 0 && x < sil.width && y < sil.height && sil.at(x, y);
}

double occluded_fraction(const std::vector<std::pair<int, int>>& pixels, const EntityMask& sil,
                         const PixelBox& box, const Placement& pl) {
  std::size_t hidden = 0;
  for (const auto& [u, v] : pixels) hidden += occludes(sil, box, pl, u, v) ? 1 : 0;
  return static_cast<double>(hidden) / static_cast<double>(pixels.size());
}

}  // namespace

AmodalPair compose_amodal_pair(const Image& target, const EntityMask& target_mask,
                               const EntityMask& silhouette, const std::string& prompt,
                               std::uint64_t seed, OcclusionRange range, int max_tries) {
  if (target.width != target_mask.width || target.height != target_mask.height) {
    throw Error(ErrorCode::kDimension, "target image and mask differ in resolution");
  }
  if (!(range.lo >= 0.0 && range.hi <= 1.0 && range.lo <= range.hi)) {
    throw Error(ErrorCode::kDomain, "occlusion range must satisfy 0 <= lo <= hi <= 1");
  }
  std::vector<std::pair<int, int>> pixels;
  for (int v = 0; v < target_mask.height; ++v) {
    for (int u = 0; u < target_mask.width; ++u) {
      if (target_mask.at(u, v)) pixels.emplace_back(u, v);
    }
  }
  if (pixels.empty()) throw Error(ErrorCode::kComposition, "target mask is empty");

  AmodalPair pair;
  pair.prompt = prompt;
  pair.seed = seed;
  pair.target_mask = target_mask;
  pair.occluder = EntityMask(target.width, target.height);

  const PixelBox sil_box = bounding_box(silhouette);
  if (sil_box.empty()) {
    if (range.lo > 0.0) {
      throw Error(ErrorCode::kComposition, "empty silhouette cannot reach the requested occlusion");
    }
  } else {
    const PixelBox tgt_box = bounding_box(target_mask);
    Rng rng(seed);
    const double max_scale = 4.0 * std::max(tgt_box.width(), tgt_box.height()) /
                             std::min(sil_box.width(), sil_box.height());
    bool found = false;
    Placement pl;
    for (int attempt = 0; attempt < max_tries && !found; ++attempt) {
      const auto& [au, av] = pixels[rng.index(pixels.size())];
      pl.anchor_u = au + 0.5;
      pl.anchor_v = av + 0.5;
      const double goal = rng.uniform(range.lo, range.hi);
      double lo = 0.0, hi = max_scale;
      for (int it = 0; it < 40; ++it) {
        pl.scale = 0.5 * (lo + hi);
        if (occluded_fraction(pixels, silhouette, sil_box, pl) < goal) {
          lo = pl.scale;
        } else {
          hi = pl.scale;
        }
      }
      pl.scale = hi;
      const double f = occluded_fraction(pixels, silhouette, sil_box, pl);
      if (f >= range.lo && f <= range.hi) {
        found = true;
        pair.occluded_fraction = f;
      }
    }
    if (!found) {
      throw Error(ErrorCode::kComposition, "no placement reached the occlusion range [" +
                                               std::to_string(range.lo) + ", " +
                                               std::to_string(range.hi) + "] in " +
                                               std::to_string(max_tries) + " tries");
    }
    for (int v = 0; v < target.height; ++v) {
      for (int u = 0; u < target.width; ++u) {
        if (occludes(silhouette, sil_box, pl, u, v)) pair.occluder.set(u, v);
      }
    }
  }

  pair.conditioning = Image(target.width, target.height, kNeutral);
  pair.target = Image(target.width, target.height, kNeutral);
  for (int v = 0; v < target.height; ++v) {
    for (int u = 0; u < target.width; ++u) {
      if (!target_mask.at(u, v)) continue;
      std::copy_n(target.pixel(u, v), 3, pair.target.pixel(u, v));
      if (!pair.occluder.at(u, v)) std::copy_n(target.pixel(u, v), 3, pair.conditioning.pixel(u, v));
    }
  }
  return pair;
}

}  // namespace scenekit
