#include "scenekit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "marching_cubes_tables.hpp"
#include "scenekit/error.hpp"
#include "scenekit/parallel.hpp"
#include "scenekit/random.hpp"

namespace scenekit {

Vec3 ScalarGrid::position(int i, int j, int k) const {
  const Vec3 t(static_cast<double>(i) / (dims[0] - 1), static_cast<double>(j) / (dims[1] - 1),
               static_cast<double>(k) / (dims[2] - 1));
  return bounds.min + t.cwiseProduct(bounds.extent());
}

Vec3 ScalarGrid::spacing() const {
  return bounds.extent().cwiseQuotient(
      Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1));
}

void ScalarGrid::validate() const {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) {
    throw Error(ErrorCode::kDomain, "grid needs at least 2 samples per axis");
  }
  if (!bounds.valid() || (bounds.extent().array() <= 0.0).any()) {
    throw Error(ErrorCode::kDomain, "grid bounds are degenerate");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (values.size() != n) throw Error(ErrorCode::kDimension, "grid value count mismatch");
  if (!inside.empty() && inside.size() != n) {
    throw Error(ErrorCode::kDimension, "grid inside-flag count mismatch");
  }
}

ScalarGrid sample_frustum_grid(const FieldFn& field, const CameraIntrinsics& intr, double near,
                               double far, std::array<int, 3> resolution) {
  intr.validate();
  if (!(near > 0.0) || !(far > near) || !std::isfinite(far)) {
    throw Error(ErrorCode::kDomain, "frustum range requires 0 < near < far");
  }
  if (resolution[0] < 2 || resolution[1] < 2 || resolution[2] < 2) {
    throw Error(ErrorCode::kDomain, "grid resolution must be at least 2 per axis");
  }
  ScalarGrid grid;
  grid.dims = resolution;
  for (double z : {near, far}) {
    for (double u : {0.0, static_cast<double>(intr.width)}) {
      for (double v : {0.0, static_cast<double>(intr.height)}) {
        grid.bounds.extend(z * pixel_ray(intr, u, v));
      }
    }
  }
  const std::size_t n = static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2];
  grid.values.assign(n, far);
  grid.inside.assign(n, 0);

  // One z-slab per task; each slab evaluates its in-frustum samples as a batch.
  const auto slab = [&](std::size_t k) {
    std::vector<Vec3> pts;
    std::vector<std::size_t> ids;
    for (int j = 0; j < resolution[1]; ++j) {
      for (int i = 0; i < resolution[0]; ++i) {
        const Vec3 p = grid.position(i, j, static_cast<int>(k));
        if (p.z() < near || p.z() > far) continue;
        const double u = intr.fx * p.x() / p.z() + intr.cx;
        const double v = intr.fy * p.y() / p.z() + intr.cy;
        if (u < 0.0 || u > intr.width || v < 0.0 || v > intr.height) continue;
        pts.push_back(p);
        ids.push_back(grid.index(i, j, static_cast<int>(k)));
      }
    }
    std::vector<double> out(pts.size());
    if (!pts.empty()) field(pts, out);
    for (std::size_t q = 0; q < ids.size(); ++q) {
      grid.values[ids[q]] = out[q];
      grid.inside[ids[q]] = 1;
    }
  };
  parallel_for(0, static_cast<std::size_t>(resolution[2]), slab);
  return grid;
}

MarchingCubesResult marching_cubes_detailed(const ScalarGrid& grid, double iso) {
  grid.validate();
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  MarchingCubesResult result;
  TriangleMesh& mesh = result.mesh;
  // Edge key: 3 * (lower sample index) + axis.
  std::unordered_map<std::int64_t, std::int32_t> edge_vertex;

  const auto vertex_on_edge = [&](int i, int j, int k, int corner_a, int corner_b) {
    int ia[3], ib[3];
    for (int d = 0; d < 3; ++d) {
      ia[d] = (d == 0 ? i : d == 1 ? j : k) + mc::kCorner[corner_a][d];
      ib[d] = (d == 0 ? i : d == 1 ? j : k) + mc::kCorner[corner_b][d];
    }
    // Orient the edge from its lower to its upper endpoint so both adjacent
    // cells interpolate identically.
    if (ia[0] + ia[1] + ia[2] > ib[0] + ib[1] + ib[2]) std::swap(ia, ib);
    const int axis = ib[0] != ia[0] ? 0 : ib[1] != ia[1] ? 1 : 2;
    const auto sa = static_cast<std::int64_t>(grid.index(ia[0], ia[1], ia[2]));
    const auto sb = static_cast<std::int64_t>(grid.index(ib[0], ib[1], ib[2]));
    const std::int64_t key = 3 * sa + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double va = grid.values[sa], vb = grid.values[sb];
    double t = (iso - va) / (vb - va);
    if (!std::isfinite(t)) t = 0.5;
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 pa = grid.position(ia[0], ia[1], ia[2]);
    const Vec3 pb = grid.position(ib[0], ib[1], ib[2]);
    const auto id = static_cast<std::int32_t>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    result.vertex_edges.push_back({sa, sb});
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = grid.values[grid.index(i + mc::kCorner[c][0], j + mc::kCorner[c][1],
                                                  k + mc::kCorner[c][2])];
          if (v < iso) cube |= 1 << c;
        }
        if (mc::kEdgeTable[cube] == 0) continue;
        std::int32_t ids[12];
        for (int e = 0; e < 12; ++e) {
          if (mc::kEdgeTable[cube] & (1 << e)) {
            ids[e] = vertex_on_edge(i, j, k, mc::kEdgeCorners[e][0], mc::kEdgeCorners[e][1]);
          }
        }
        for (int t = 0; mc::kTriTable[cube][t] != -1; t += 3) {
          const std::int32_t a = ids[mc::kTriTable[cube][t]];
          const std::int32_t b = ids[mc::kTriTable[cube][t + 1]];
          const std::int32_t c = ids[mc::kTriTable[cube][t + 2]];
          mesh.faces.push_back({a, b, c});
        }
      }
    }
  }
  return result;
}

TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  return marching_cubes_detailed(grid, iso).mesh;
}

TriangleMesh compact(const TriangleMesh& mesh) {
  std::vector<std::int32_t> remap(mesh.vertices.size(), -1);
  for (const Face& f : mesh.faces) {
    for (auto v : f) remap[v] = 0;
  }
  TriangleMesh out;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (remap[v] < 0) continue;
    remap[v] = static_cast<std::int32_t>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[v]);
    if (mesh.has_colors()) out.vertex_colors.push_back(mesh.vertex_colors[v]);
  }
  out.faces.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  return out;
}

TriangleMesh drop_outside_faces(const MarchingCubesResult& result, const ScalarGrid& grid) {
  if (grid.inside.empty()) return result.mesh;
  const auto vertex_ok = [&](std::int32_t v) {
    const auto& e = result.vertex_edges[v];
    return grid.inside[e[0]] && grid.inside[e[1]];
  };
  TriangleMesh kept;
  kept.vertices = result.mesh.vertices;
  for (const Face& f : result.mesh.faces) {
    if (vertex_ok(f[0]) && vertex_ok(f[1]) && vertex_ok(f[2])) kept.faces.push_back(f);
  }
  return compact(kept);
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                          std::vector<std::int32_t>* face_ids) {
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    total += triangle_area(mesh.vertices[face[0]], mesh.vertices[face[1]],
                           mesh.vertices[face[2]]);
    cumulative[f] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorCode::kDegenerateMesh, "mesh has zero total surface area");
  }
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  if (mesh.has_colors()) cloud.colors.reserve(n);
  if (face_ids) {
    face_ids->clear();
    face_ids->reserve(n);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<std::size_t>(it - cumulative.begin());
    const Face& face = mesh.faces[f];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    cloud.points.push_back(wa * mesh.vertices[face[0]] + wb * mesh.vertices[face[1]] +
                           wc * mesh.vertices[face[2]]);
    if (mesh.has_colors()) {
      cloud.colors.push_back(wa * mesh.vertex_colors[face[0]] +
                             wb * mesh.vertex_colors[face[1]] +
                             wc * mesh.vertex_colors[face[2]]);
    }
    if (face_ids) face_ids->push_back(static_cast<std::int32_t>(f));
  }
  return cloud;
}

TriangleMesh merge_scene(const std::vector<NamedMesh>& parts) {
  TriangleMesh out;
  const bool any_colors = std::any_of(parts.begin(), parts.end(),
                                      [](const NamedMesh& p) { return p.mesh.has_colors(); });
  for (const NamedMesh& part : parts) {
    MeshGroup g;
    g.name = part.name;
    g.vertex_begin = out.vertices.size();
    g.face_begin = out.faces.size();
    const auto offset = static_cast<std::int32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), part.mesh.vertices.begin(), part.mesh.vertices.end());
    if (any_colors) {
      if (part.mesh.has_colors()) {
        out.vertex_colors.insert(out.vertex_colors.end(), part.mesh.vertex_colors.begin(),
                                 part.mesh.vertex_colors.end());
      } else {
        out.vertex_colors.insert(out.vertex_colors.end(), part.mesh.vertices.size(),
                                 Vec3::Constant(kNeutral));
      }
    }
    for (const Face& f : part.mesh.faces) {
      out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    }
    g.vertex_end = out.vertices.size();
    g.face_end = out.faces.size();
    g.colored = part.mesh.has_colors();
    out.groups.push_back(g);
  }
  return out;
}

std::vector<NamedMesh> split_by_group(const TriangleMesh& merged) {
  std::vector<NamedMesh> parts;
  for (const MeshGroup& g : merged.groups) {
    NamedMesh part;
    part.name = g.name;
    const auto offset = static_cast<std::int32_t>(g.vertex_begin);
    part.mesh.vertices.assign(merged.vertices.begin() + g.vertex_begin,
                              merged.vertices.begin() + g.vertex_end);
    if (merged.has_colors() && g.colored) {
      part.mesh.vertex_colors.assign(merged.vertex_colors.begin() + g.vertex_begin,
                                     merged.vertex_colors.begin() + g.vertex_end);
    }
    for (std::size_t f = g.face_begin; f < g.face_end; ++f) {
      const Face& face = merged.faces[f];
      part.mesh.faces.push_back({face[0] - offset, face[1] - offset, face[2] - offset});
    }
    parts.push_back(std::move(part));
  }
  return parts;
}

namespace {

std::map<std::pair<std::int32_t, std::int32_t>, int> edge_use_counts(const TriangleMesh& mesh) {
  std::map<std::pair<std::int32_t, std::int32_t>, int> counts;
  for (const Face& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      std::int32_t a = f[e], b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  }
  return counts;
}

}  // namespace

long euler_characteristic(const TriangleMesh& mesh) {
  std::vector<bool> used(mesh.vertices.size(), false);
  for (const Face& f : mesh.faces) {
    for (auto v : f) used[v] = true;
  }
  const long v = std::count(used.begin(), used.end(), true);
  const long e = static_cast<long>(edge_use_counts(mesh).size());
  return v - e + static_cast<long>(mesh.faces.size());
}

std::size_t count_non_manifold_edges(const TriangleMesh& mesh) {
  std::size_t bad = 0;
  for (const auto& [edge, count] : edge_use_counts(mesh)) {
    if (count != 2) ++bad;
  }
  return bad;
}

}  // namespace scenekit
