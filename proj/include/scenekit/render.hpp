#pragma once

#include "scenekit/camera.hpp"
#include "scenekit/geometry.hpp"
#include "scenekit/image.hpp"

namespace scenekit {

// Ray-casts every pixel center against the mesh and keeps the nearest hit.
// Depth is camera-space z; pixels without a hit are invalid.
DepthMap render_depth(const TriangleMesh& mesh, const CameraIntrinsics& intr,
                      const RigidPose& pose = RigidPose::identity());

// Nearest positive ray parameter t of o + t*d against triangle (a, b, c), or a
// negative value when there is no hit.
double intersect_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                          const Vec3& c);

}  // namespace scenekit
