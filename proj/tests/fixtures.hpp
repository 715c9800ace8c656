#pragma once

#include <cmath>

#include "scenekit/camera.hpp"
#include "scenekit/image.hpp"

namespace testing {

// Depth of analytic planar backgrounds seen by a pinhole camera, plus a mask
// of the pixels that supervise the fit.
struct BackgroundFixture {
  scenekit::CameraIntrinsics intr;
  scenekit::DepthMap depth;
  scenekit::EntityMask mask;
  scenekit::Image image;
  // Signed distance-like residual of a point to the analytic surface.
  double (*surface_distance)(const scenekit::Vec3&) = nullptr;
  double near = 0.0, far = 0.0;
};

inline double plane_distance(const scenekit::Vec3& p) { return std::abs(p.z() - 2.0); }

// Two walls meeting along a vertical line: x + z = 2.6 (x > 0) and z - x = 2.6 ... folded
// as z = 2.6 - |x|.
inline double corner_distance(const scenekit::Vec3& p) {
  const double s = std::sqrt(0.5);
  return std::min(std::abs((p.z() + p.x() - 2.6) * s), std::abs((p.z() - p.x() - 2.6) * s));
}

inline BackgroundFixture make_fixture(bool corner, bool hole, int w = 128, int h = 96) {
  BackgroundFixture f;
  f.intr = scenekit::fov_to_intrinsics(60.0, w, h);
  f.depth = scenekit::DepthMap(w, h);
  f.mask = scenekit::EntityMask(w, h);
  f.image = scenekit::Image(w, h, 0.0f);
  f.surface_distance = corner ? corner_distance : plane_distance;
  double dmin = 1e300, dmax = 0.0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const scenekit::Vec3 r = scenekit::pixel_ray(f.intr, u + 0.5, v + 0.5);
      double d;
      if (corner) {
        // Ray t*r hits z = 2.6 - |x| at t = 2.6 / (1 + |r.x|).
        d = 2.6 / (1.0 + std::abs(r.x()));
      } else {
        d = 2.0;
      }
      f.depth.at(u, v) = d;
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
      const bool in_hole = hole && u >= w * 0.4 && u < w * 0.6;
      f.mask.set(u, v, !in_hole);
      float* px = f.image.pixel(u, v);
      px[0] = corner && r.x() > 0 ? 0.8f : 0.3f;
      px[1] = 0.5f;
      px[2] = 0.2f;
    }
  }
  f.near = 0.9 * dmin;
  f.far = 1.1 * dmax;
  return f;
}

}  // namespace testing
