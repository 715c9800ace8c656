#include "scenekit/geometry.hpp"

#include <cmath>
#include <limits>

#include "scenekit/error.hpp"

namespace scenekit {

void TriangleMesh::validate() const {
  const auto n = static_cast<std::int64_t>(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite()) {
      throw Error(ErrorCode::kDegenerateMesh,
                  "vertex " + std::to_string(i) + " is not finite");
    }
  }
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (auto idx : face) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorCode::kDegenerateMesh,
                    "face " + std::to_string(f) + " references vertex " +
                        std::to_string(idx) + " of " + std::to_string(n));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw Error(ErrorCode::kDegenerateMesh,
                  "face " + std::to_string(f) + " repeats a vertex index");
    }
  }
  if (!vertex_colors.empty() && vertex_colors.size() != vertices.size()) {
    throw Error(ErrorCode::kDegenerateMesh,
                "vertex color count does not match vertex count");
  }
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double surface_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const Face& f : mesh.faces) {
    area += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]],
                          mesh.vertices[f[2]]);
  }
  return area;
}

Aabb bounds_of(const std::vector<Vec3>& points) {
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  return box;
}

}  // namespace scenekit
