#include "scenekit/camera.hpp"

#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "scenekit/error.hpp"

namespace scenekit {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw Error(ErrorCode::kDomain, "focal lengths must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw Error(ErrorCode::kDomain, "principal point must be finite");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kDomain, "image resolution must be at least 1x1");
  }
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

bool RigidPose::is_valid(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol &&
         translation.allFinite();
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.scale * (inv.rotation * translation));
  return inv;
}

SimilarityTransform SimilarityTransform::operator*(const SimilarityTransform& other) const {
  SimilarityTransform out;
  out.scale = scale * other.scale;
  out.rotation = rotation * other.rotation;
  out.translation = scale * (rotation * other.translation) + translation;
  return out;
}

CameraIntrinsics fov_to_intrinsics(double fov_deg, int width, int height) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    throw Error(ErrorCode::kDomain,
                "field of view must lie in (0, 180) degrees, got " + std::to_string(fov_deg));
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kDomain, "image resolution must be at least 1x1");
  }
  const double half_fov = 0.5 * fov_deg * M_PI / 180.0;
  const double f = 0.5 * std::max(width, height) / std::tan(half_fov);
  return CameraIntrinsics{f, f, 0.5 * width, 0.5 * height, width, height};
}

PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& intr,
                     const EntityMask* mask, const Image* image) {
  if (depth.width != intr.width || depth.height != intr.height) {
    throw Error(ErrorCode::kDimension, "depth map is " + std::to_string(depth.width) + "x" +
                                           std::to_string(depth.height) +
                                           " but intrinsics expect " +
                                           std::to_string(intr.width) + "x" +
                                           std::to_string(intr.height));
  }
  if (mask && (mask->width != depth.width || mask->height != depth.height)) {
    throw Error(ErrorCode::kDimension, "mask resolution does not match depth map");
  }
  if (image && (image->width != depth.width || image->height != depth.height)) {
    throw Error(ErrorCode::kDimension, "image resolution does not match depth map");
  }
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (mask && !mask->at(u, v)) continue;
      if (!depth.valid(u, v)) continue;
      const double d = depth.at(u, v);
      cloud.points.emplace_back((u + 0.5 - intr.cx) * d / intr.fx,
                                (v + 0.5 - intr.cy) * d / intr.fy, d);
      cloud.pixel_indices.push_back(static_cast<std::int64_t>(v) * depth.width + u);
      if (image) {
        const float* p = image->pixel(u, v);
        cloud.colors.emplace_back(p[0], p[1], p[2]);
      }
    }
  }
  return cloud;
}

Projection project(const Vec3& point, const CameraIntrinsics& intr, const RigidPose& pose) {
  const Vec3 p = pose.apply(point);
  Projection out;
  out.depth = p.z();
  if (p.z() <= 0.0) {
    out.behind = true;
    return out;
  }
  out.u = intr.fx * p.x() / p.z() + intr.cx;
  out.v = intr.fy * p.y() / p.z() + intr.cy;
  return out;
}

std::vector<Projection> project(std::span<const Vec3> points, const CameraIntrinsics& intr,
                                const RigidPose& pose) {
  std::vector<Projection> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(project(p, intr, pose));
  return out;
}

Vec3 pixel_ray(const CameraIntrinsics& intr, double u, double v) {
  return Vec3((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
}

RigidPose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 reference = Vec3::UnitY();
  if (reference.cross(forward).norm() < 1e-6) reference = Vec3::UnitZ();
  const Vec3 x_axis = reference.cross(forward).normalized();
  const Vec3 y_axis = forward.cross(x_axis);
  RigidPose pose;
  pose.rotation.row(0) = x_axis.transpose();
  pose.rotation.row(1) = y_axis.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -(pose.rotation * eye);
  return pose;
}

VirtualCamera fit_virtual_camera(std::span<const Vec3> points, int crop_res) {
  if (points.size() < 4) {
    throw Error(ErrorCode::kDegenerateInstance,
                "instance has " + std::to_string(points.size()) + " points, need at least 4");
  }
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0) || !std::isfinite(longest)) {
    throw Error(ErrorCode::kDegenerateInstance, "instance bounding box has zero extent");
  }
  VirtualCamera cam;
  cam.normalization.scale = 1.0 / longest;
  cam.normalization.translation = -cam.normalization.scale * box.center();

  // The source camera (view-space origin) as seen from the normalized frame.
  Vec3 towards_source = cam.normalization.translation;
  if (towards_source.norm() < 1e-12) towards_source = -Vec3::UnitZ();
  const Vec3 eye = kVirtualCameraDistance * towards_source.normalized();
  cam.pose = look_at(eye, Vec3::Zero());
  cam.intr = fov_to_intrinsics(kVirtualCameraFovDeg, crop_res, crop_res);
  return cam;
}

TriangleMesh object_to_view(const TriangleMesh& mesh, const VirtualCamera& camera,
                            double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kDomain, "scale must be positive, got " + std::to_string(scale));
  }
  const Vec3 eye = camera.center();
  const SimilarityTransform to_view = camera.normalization.inverse();
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) v = to_view.apply(eye + scale * (v - eye));
  return out;
}

TriangleMesh view_to_object(const TriangleMesh& mesh, const VirtualCamera& camera) {
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) v = camera.normalization.apply(v);
  return out;
}

}  // namespace scenekit
