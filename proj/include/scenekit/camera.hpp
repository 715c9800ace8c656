#pragma once

#include <span>
#include <vector>

#include "scenekit/geometry.hpp"
#include "scenekit/image.hpp"

namespace scenekit {

// Pinhole intrinsics. Pixel (u, v) covers [u, u+1) x [v, v+1); its center is
// at (u + 0.5, v + 0.5).
struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  void validate() const;  // throws kDomain
};

// World-to-camera rigid motion: p_cam = rotation * p + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidPose inverse() const;
  // Camera center in world coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }
  bool is_valid(double tol = 1e-9) const;
};

// p -> scale * rotation * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SimilarityTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  SimilarityTransform inverse() const;
  // (this * other)(p) == this->apply(other.apply(p))
  SimilarityTransform operator*(const SimilarityTransform& other) const;
};

inline constexpr double kVirtualCameraFovDeg = 49.1;
inline constexpr double kVirtualCameraDistance = 1.5;
inline constexpr int kDefaultCropResolution = 512;

CameraIntrinsics fov_to_intrinsics(double fov_deg, int width, int height);

// One point per valid (and, when given, masked) pixel, unprojected through the
// pixel center. Colors are attached when `image` is given.
PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& intr,
                     const EntityMask* mask = nullptr, const Image* image = nullptr);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-space z
  bool behind = false; // z <= 0; u, v are meaningless then
};

Projection project(const Vec3& point, const CameraIntrinsics& intr,
                   const RigidPose& pose = RigidPose::identity());
std::vector<Projection> project(std::span<const Vec3> points, const CameraIntrinsics& intr,
                                const RigidPose& pose = RigidPose::identity());

// Direction (camera frame) of the ray through continuous pixel (u, v), with z = 1.
Vec3 pixel_ray(const CameraIntrinsics& intr, double u, double v);

// Camera placed to look at `target` from `eye`. The camera's y axis (image
// rows) follows the reference axis +Y, or +Z when the view direction is
// parallel to +Y.
RigidPose look_at(const Vec3& eye, const Vec3& target);

// Normalized per-instance camera: `normalization` maps view space into a frame
// where the instance fits the unit cube centered at the origin; `pose` views
// that origin from distance 1.5 with intrinsics `intr` (fov 49.1 deg).
struct VirtualCamera {
  SimilarityTransform normalization;
  RigidPose pose;
  CameraIntrinsics intr;

  // Camera center in normalized space.
  Vec3 center() const { return pose.center(); }
};

// The camera sits on the line from the instance center towards the view-space
// origin (the source camera), so the crop sees the instance from the same side.
VirtualCamera fit_virtual_camera(std::span<const Vec3> points,
                                 int crop_res = kDefaultCropResolution);

// Maps a mesh reconstructed in normalized space to view space. `scale` is
// applied about the virtual camera center, i.e. along the crop's rays.
TriangleMesh object_to_view(const TriangleMesh& mesh, const VirtualCamera& camera,
                            double scale);

// The inverse of object_to_view with scale 1.
TriangleMesh view_to_object(const TriangleMesh& mesh, const VirtualCamera& camera);

}  // namespace scenekit
