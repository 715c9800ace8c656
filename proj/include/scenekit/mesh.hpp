#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scenekit/camera.hpp"
#include "scenekit/geometry.hpp"

namespace scenekit {

// Samples on the nodes of a regular lattice spanning `bounds` inclusively.
// Index (i, j, k) lives at values[(k * ny + j) * nx + i].
struct ScalarGrid {
  std::array<int, 3> dims{2, 2, 2};
  Aabb bounds;
  std::vector<double> values;
  // Empty, or one flag per sample: 0 where the sample lies outside the region
  // the field was evaluated on (see sample_frustum_grid).
  std::vector<std::uint8_t> inside;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  Vec3 position(int i, int j, int k) const;
  Vec3 spacing() const;
  void validate() const;
};

// Evaluates a scalar field on a batch of points.
using FieldFn = std::function<void(std::span<const Vec3> points, std::span<double> out)>;

// Samples `field` on the axis-aligned bounding box of the camera frustum
// between the `near` and `far` depth planes (camera frame). Samples outside the
// frustum are set to +far and flagged in `inside`.
ScalarGrid sample_frustum_grid(const FieldFn& field, const CameraIntrinsics& intr, double near,
                               double far, std::array<int, 3> resolution);

struct MarchingCubesResult {
  TriangleMesh mesh;
  // For every vertex, the two grid samples whose edge it interpolates.
  std::vector<std::array<std::int64_t, 2>> vertex_edges;
};

// Classic table-driven marching cubes. Vertices are shared between adjacent
// cells; face normals (right-hand rule) point towards values below `iso`.
MarchingCubesResult marching_cubes_detailed(const ScalarGrid& grid, double iso = 0.0);
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso = 0.0);

// Removes faces touching an edge with an endpoint flagged outside in
// `grid.inside`, then drops unreferenced vertices.
TriangleMesh drop_outside_faces(const MarchingCubesResult& result, const ScalarGrid& grid);

// Removes vertices that no face references, preserving order.
TriangleMesh compact(const TriangleMesh& mesh);

// Area-weighted surface samples. Optionally returns the source face per point.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                          std::vector<std::int32_t>* face_ids = nullptr);

struct NamedMesh {
  std::string name;
  TriangleMesh mesh;
};

TriangleMesh merge_scene(const std::vector<NamedMesh>& parts);
std::vector<NamedMesh> split_by_group(const TriangleMesh& merged);

// Euler characteristic V - E + F over referenced vertices and unique edges.
long euler_characteristic(const TriangleMesh& mesh);
// Number of undirected edges used by a face count other than 2.
std::size_t count_non_manifold_edges(const TriangleMesh& mesh);

// OBJ (ASCII): "v x y z [r g b]" with 9 significant digits, "g name" per group,
// 1-based "f" records. PLY: binary little-endian, float32 positions, uchar colors.
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_ply(const std::filesystem::path& path);
// Dispatches on the extension (.obj / .ply).
TriangleMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);

}  // namespace scenekit
