#include "scenekit/render.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "scenekit/parallel.hpp"

namespace scenekit {

double intersect_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                          const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return -1.0;
  const double inv = 1.0 / det;
  const Vec3 s = o - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  return e2.dot(q) * inv;
}

DepthMap render_depth(const TriangleMesh& mesh, const CameraIntrinsics& intr,
                      const RigidPose& pose) {
  DepthMap depth(intr.width, intr.height);
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = pose.apply(mesh.vertices[i]);

  // Bin faces by image row span so rows can be rendered independently.
  struct Span {
    int u0, u1, v0, v1;
  };
  std::vector<Span> spans(mesh.faces.size());
  std::vector<std::vector<std::int32_t>> rows(static_cast<std::size_t>(intr.height));
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    bool straddles = false;
    int behind = 0;
    for (auto idx : face) {
      const Vec3& p = cam[idx];
      if (p.z() <= 1e-12) {
        ++behind;
        straddles = true;
        continue;
      }
      const double u = intr.fx * p.x() / p.z() + intr.cx;
      const double v = intr.fy * p.y() / p.z() + intr.cy;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    if (behind == 3) continue;
    Span s{0, intr.width - 1, 0, intr.height - 1};
    if (!straddles) {
      s.u0 = std::max(0, static_cast<int>(std::floor(umin - 0.5)));
      s.u1 = std::min(intr.width - 1, static_cast<int>(std::ceil(umax - 0.5)));
      s.v0 = std::max(0, static_cast<int>(std::floor(vmin - 0.5)));
      s.v1 = std::min(intr.height - 1, static_cast<int>(std::ceil(vmax - 0.5)));
    }
    if (s.u0 > s.u1 || s.v0 > s.v1) continue;
    spans[f] = s;
    for (int v = s.v0; v <= s.v1; ++v) rows[static_cast<std::size_t>(v)].push_back(static_cast<std::int32_t>(f));
  }

  const Vec3 origin = Vec3::Zero();
  parallel_for(0, static_cast<std::size_t>(intr.height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (std::int32_t f : rows[row]) {
      const Face& face = mesh.faces[static_cast<std::size_t>(f)];
      const Span& s = spans[static_cast<std::size_t>(f)];
      for (int u = s.u0; u <= s.u1; ++u) {
        const Vec3 dir = pixel_ray(intr, u + 0.5, v + 0.5);
        const double t = intersect_triangle(origin, dir, cam[face[0]], cam[face[1]], cam[face[2]]);
        if (!(t > 0.0)) continue;
        double& d = depth.at(u, v);
        if (!(d <= t)) d = t;  // NaN (no hit yet) or farther
      }
    }
  });
  return depth;
}

}  // namespace scenekit
