#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <Eigen/Dense>

#include "scenekit/error.hpp"
#include "scenekit/mesh.hpp"
#include "support.hpp"

using namespace scenekit;

namespace {

double max_radius_error(const TriangleMesh& m, double r) {
  double e = 0.0;
  for (const auto& v : m.vertices) e = std::max(e, std::abs(v.norm() - r));
  return e;
}

TriangleMesh unit_square() {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_CASE("marching cubes sphere: accuracy, topology, winding") {
  const auto g64 = testing::sphere_grid(64);
  const TriangleMesh m = marching_cubes(g64);
  REQUIRE(!m.empty());
  const double voxel = 2.0 / 63.0;
  CHECK(max_radius_error(m, 0.5) <= 1.5 * voxel);
  CHECK(euler_characteristic(m) == 2);
  CHECK(count_non_manifold_edges(m) == 0);

  // Normals point towards the negative side of the field, i.e. inwards.
  std::size_t inward = 0;
  for (const auto& f : m.faces) {
    const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
    const Vec3 c = (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) / 3.0;
    if (n.dot(c) < 0.0) ++inward;
  }
  CHECK(inward == m.faces.size());

  // No duplicated vertices along shared edges.
  std::set<std::tuple<double, double, double>> unique;
  for (const auto& v : m.vertices) unique.insert({v.x(), v.y(), v.z()});
  CHECK(unique.size() == m.vertices.size());
}

TEST_CASE("marching cubes sphere error is first order") {
  const double e64 = max_radius_error(marching_cubes(testing::sphere_grid(64)), 0.5);
  const double e128 = max_radius_error(marching_cubes(testing::sphere_grid(128)), 0.5);
  CHECK(e128 <= 0.6 * e64);
}

TEST_CASE("marching cubes trivial and planar fields") {
  auto positive = testing::grid_over(-1, 1, 8);
  testing::fill(positive, [](const Vec3&) { return 1.0; });
  CHECK(marching_cubes(positive).empty());

  auto plane = testing::grid_over(-1, 1, 16);
  testing::fill(plane, [](const Vec3& p) { return p.z() - 0.123; });
  const TriangleMesh m = marching_cubes(plane);
  REQUIRE(!m.empty());
  for (const auto& v : m.vertices) CHECK(std::abs(v.z() - 0.123) <= 1e-6 * 2.0);
  CHECK(surface_area(m) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("frustum grid sampling") {
  const auto intr = fov_to_intrinsics(60.0, 32, 24);
  const FieldFn one = [](std::span<const Vec3> pts, std::span<double> out) {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = 1.0;
  };
  const ScalarGrid g = sample_frustum_grid(one, intr, 1.0, 3.0, {9, 9, 9});
  std::size_t inside = 0;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    if (g.inside[i]) {
      ++inside;
      CHECK(g.values[i] == 1.0);
    } else {
      CHECK(g.values[i] == 3.0);
    }
  }
  CHECK(inside > 0);
  // Corner of the bounding box on the near plane lies outside the frustum.
  CHECK(g.inside[g.index(0, 0, 0)] == 0);
  CHECK(g.values[g.index(0, 0, 0)] == 3.0);

  const FieldFn plane = [](std::span<const Vec3> pts, std::span<double> out) {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].x() - 0.25;
  };
  const ScalarGrid gp = sample_frustum_grid(plane, intr, 1.0, 3.0, {9, 9, 9});
  for (int k = 0; k < 9; ++k)
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 9; ++i) {
        const auto idx = gp.index(i, j, k);
        if (gp.inside[idx]) CHECK(std::abs(gp.values[idx] - (gp.position(i, j, k).x() - 0.25)) < 1e-12);
      }

  CHECK_THROWS_AS(sample_frustum_grid(one, intr, 2.0, 1.0, {4, 4, 4}), Error);
  CHECK_THROWS_AS(sample_frustum_grid(one, intr, 1.0, 2.0, {1, 4, 4}), Error);
}

TEST_CASE("drop_outside_faces removes frustum walls") {
  const auto intr = fov_to_intrinsics(60.0, 32, 32);
  const FieldFn wall = [](std::span<const Vec3> pts, std::span<double> out) {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = 2.0 - pts[i].z();
  };
  const ScalarGrid g = sample_frustum_grid(wall, intr, 1.0, 3.0, {24, 24, 24});
  const auto mc = marching_cubes_detailed(g);
  const TriangleMesh clipped = drop_outside_faces(mc, g);
  REQUIRE(!clipped.empty());
  for (const auto& v : clipped.vertices) CHECK(std::abs(v.z() - 2.0) < 1e-9);
  CHECK(clipped.faces.size() < mc.mesh.faces.size());
}

TEST_CASE("sample_surface statistics") {
  std::vector<std::int32_t> ids;
  const std::size_t n = 100000;
  const PointCloud pc = sample_surface(unit_square(), n, 1, &ids);
  REQUIRE(pc.size() == n);
  std::size_t first = 0;
  for (auto id : ids) first += id == 0;
  const double sigma = std::sqrt(n * 0.25);
  CHECK(std::abs(static_cast<double>(first) - n / 2.0) <= 3.0 * sigma);

  Vec3 mean = Vec3::Zero();
  for (const auto& p : pc.points) mean += p;
  mean /= static_cast<double>(n);
  const double sd = std::sqrt(1.0 / 12.0 / n);
  CHECK(std::abs(mean.x() - 0.5) <= 3.0 * sd);
  CHECK(std::abs(mean.y() - 0.5) <= 3.0 * sd);

  const PointCloud again = sample_surface(unit_square(), 100, 1);
  const PointCloud same = sample_surface(unit_square(), 100, 1);
  CHECK(again.points == same.points);
}

TEST_CASE("sample_surface stays on a single triangle") {
  TriangleMesh tri;
  tri.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 1}};
  tri.faces = {{0, 1, 2}};
  const Vec3 a = tri.vertices[0], e1 = tri.vertices[1] - a, e2 = tri.vertices[2] - a;
  for (const auto& p : sample_surface(tri, 2000, 4).points) {
    // Solve p = a + s e1 + t e2.
    Eigen::Matrix<double, 3, 2> basis;
    basis << e1, e2;
    const Eigen::Vector2d st = basis.colPivHouseholderQr().solve(p - a);
    CHECK(st.x() >= -1e-12);
    CHECK(st.y() >= -1e-12);
    CHECK(st.sum() <= 1.0 + 1e-12);
    CHECK((basis * st + a - p).norm() < 1e-12);
  }
  TriangleMesh flat;
  flat.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  flat.faces = {{0, 1, 2}};
  CHECK_THROWS_AS(sample_surface(flat, 10, 0), Error);
}

TEST_CASE("merge and split") {
  TriangleMesh a = unit_square();
  TriangleMesh b = unit_square();
  for (auto& v : b.vertices) v += Vec3(0.1, 0.2, 0.3);
  b.vertex_colors.assign(4, Vec3(0.2, 0.4, 0.6));
  const TriangleMesh m = merge_scene({{"a", a}, {"b", b}});
  CHECK(m.vertices.size() == 8);
  CHECK(m.faces.size() == 4);
  CHECK(m.faces[2] == Face{4, 5, 6});
  CHECK(m.vertices[5] == b.vertices[1]);
  const auto parts = split_by_group(m);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].name == "a");
  CHECK(parts[0].mesh.vertices == a.vertices);
  CHECK(parts[0].mesh.faces == a.faces);
  CHECK(!parts[0].mesh.has_colors());
  CHECK(parts[1].mesh.vertices == b.vertices);
  CHECK(parts[1].mesh.vertex_colors == b.vertex_colors);
  CHECK(merge_scene({}).vertices.empty());
}

TEST_CASE("mesh validation") {
  TriangleMesh m = unit_square();
  CHECK_NOTHROW(m.validate());
  m.faces.push_back({0, 0, 1});
  CHECK_THROWS_AS(m.validate(), Error);
  m = unit_square();
  m.faces.push_back({0, 1, 9});
  CHECK_THROWS_AS(m.validate(), Error);
  m = unit_square();
  m.vertices[0].x() = std::nan("");
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("OBJ and PLY round trips") {
  testing::ScratchDir dir("meshio");
  auto sphere = marching_cubes(testing::sphere_grid(12));
  sphere.vertex_colors.resize(sphere.vertices.size());
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) {
    sphere.vertex_colors[i] = Vec3(i % 256, (i * 7) % 256, (i * 13) % 256) / 255.0;
  }
  const TriangleMesh scene = merge_scene({{"ball", sphere}, {"floor", unit_square()}});

  write_obj(dir / "s.obj", scene);
  const TriangleMesh obj = read_obj(dir / "s.obj");
  REQUIRE(obj.vertices.size() == scene.vertices.size());
  CHECK(obj.faces == scene.faces);
  for (std::size_t i = 0; i < obj.vertices.size(); ++i) {
    CHECK((obj.vertices[i] - scene.vertices[i]).norm() <= 1e-8 * (1.0 + scene.vertices[i].norm()));
  }
  REQUIRE(obj.groups.size() == 2);
  CHECK(obj.groups[1].name == "floor");

  write_ply(dir / "s.ply", scene);
  const TriangleMesh ply = read_ply(dir / "s.ply");
  REQUIRE(ply.vertices.size() == scene.vertices.size());
  CHECK(ply.faces == scene.faces);
  for (std::size_t i = 0; i < ply.vertices.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(ply.vertices[i][c] == static_cast<double>(static_cast<float>(scene.vertices[i][c])));
    }
  }
  CHECK(ply.groups.size() == 2);
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i) {
    CHECK((ply.vertex_colors[i] - scene.vertex_colors[i]).norm() < 1e-12);
  }

  std::ofstream(dir / "quad.obj") << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\nf -4 -3 -2\n";
  const TriangleMesh quad = read_obj(dir / "quad.obj");
  CHECK(quad.faces.size() == 3);
  CHECK_THROWS_AS(read_mesh(dir / "missing.obj"), Error);
}
