#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scenekit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Points in scene units with optional per-point colors and the linear index
// of the pixel each point was unprojected from.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;
  std::vector<std::int64_t> pixel_indices;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }
};

using Face = std::array<std::int32_t, 3>;

// A named contiguous run of vertices and faces inside a merged mesh.
struct MeshGroup {
  std::string name;
  std::size_t vertex_begin = 0;
  std::size_t vertex_end = 0;
  std::size_t face_begin = 0;
  std::size_t face_end = 0;
  bool colored = false;  // whether the source mesh carried vertex colors
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> vertex_colors;  // empty, or one RGB in [0,1] per vertex
  std::vector<MeshGroup> groups;    // empty unless produced by merge_scene

  bool empty() const { return faces.empty(); }
  bool has_colors() const { return !vertex_colors.empty(); }

  // Throws Error(kDegenerateMesh) when an index is out of range, a face repeats
  // an index, a coordinate is non-finite, or the color count is inconsistent.
  void validate() const;
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double surface_area(const TriangleMesh& mesh);

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool valid() const { return (max.array() >= min.array()).all(); }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
};

Aabb bounds_of(const std::vector<Vec3>& points);

}  // namespace scenekit
