#include <doctest.h>

#include <cmath>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "scenekit/error.hpp"
#include "scenekit/metrics.hpp"
#include "support.hpp"

using namespace scenekit;

namespace {

PointCloud cloud(std::vector<Vec3> pts) {
  PointCloud pc;
  pc.points = std::move(pts);
  return pc;
}

TriangleMesh uv_sphere(double r, int n) {
  TriangleMesh m;
  for (int i = 0; i <= n; ++i) {
    const double th = M_PI * i / n;
    for (int j = 0; j < 2 * n; ++j) {
      const double ph = M_PI * j / n;
      m.vertices.emplace_back(r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph),
                              r * std::cos(th));
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2 * n; ++j) {
      const int a = i * 2 * n + j, b = i * 2 * n + (j + 1) % (2 * n);
      const int c = a + 2 * n, d = b + 2 * n;
      if (i > 0) m.faces.push_back({a, c, b});
      if (i + 1 < n) m.faces.push_back({b, c, d});
    }
  return m;
}

}  // namespace

TEST_CASE("kd-tree nearest neighbor equals brute force") {
  const auto pts = testing::random_points(10000, 21);
  const auto queries = testing::random_points(1000, 22, -1.2, 1.2);
  const NnIndex index(pts);
  for (const auto& q : queries) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) best = std::min(best, (p - q).squaredNorm());
    CHECK(index.nearest(q).squared_distance == best);
  }
  // Duplicates and degenerate spreads.
  const NnIndex same(std::vector<Vec3>(50, Vec3(1, 1, 1)));
  CHECK(same.nearest_distance(Vec3(1, 1, 2)) == 1.0);
}

TEST_CASE("chamfer basics") {
  const auto a = cloud(testing::random_points(30, 1));
  CHECK(chamfer(a, a) == 0.0);
  CHECK(chamfer(cloud({{0, 0, 0}}), cloud({{1, 0, 0}})) == 1.0);
  CHECK_THROWS_AS(chamfer(a, cloud({})), Error);
}

TEST_CASE("metrics equal brute-force oracles on random sets") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = testing::random_points(50, 100 + s);
    const auto b = testing::random_points(50, 200 + s);
    CHECK(std::abs(chamfer(cloud(a), cloud(b)) - testing::brute_chamfer(a, b)) <= 1e-12);
    CHECK(std::abs(f_score(cloud(a), cloud(b), 0.3) - testing::brute_f_score(a, b, 0.3)) <= 1e-9);
    CHECK(chamfer(cloud(a), cloud(b)) == chamfer(cloud(b), cloud(a)));
  }
}

TEST_CASE("chamfer is invariant to a rigid motion of both sets") {
  const auto a = testing::random_points(80, 5);
  const auto b = testing::random_points(60, 6);
  const Mat3 R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  std::vector<Vec3> ra, rb;
  for (const auto& p : a) ra.push_back(R * p + Vec3(3, -1, 2));
  for (const auto& p : b) rb.push_back(R * p + Vec3(3, -1, 2));
  CHECK(std::abs(chamfer(cloud(a), cloud(b)) - chamfer(cloud(ra), cloud(rb))) <= 1e-9);
}

TEST_CASE("f_score basics and monotonicity") {
  const auto a = cloud(testing::random_points(40, 9));
  CHECK(f_score(a, a, 1e-9) == 100.0);
  std::vector<Vec3> far;
  for (const auto& p : a.points) far.push_back(p + Vec3(10, 0, 0));
  CHECK(f_score(a, cloud(far), 1.0) == 0.0);
  const auto b = cloud(testing::random_points(40, 10));
  double prev = 0.0;
  for (double tau = 0.01; tau < 2.0; tau *= 1.3) {
    const double f = f_score(a, b, tau);
    CHECK(f >= prev);
    prev = f;
  }
  CHECK_THROWS_AS(f_score(a, b, 0.0), Error);
  CHECK_THROWS_AS(f_score(cloud({}), b, 0.1), Error);
}

TEST_CASE("evaluation protocol presets") {
  const auto front = EvalProtocol::front3d();
  CHECK(front.n_points == 1000000);
  CHECK(front.tau == 0.1);
  CHECK(front.gt_scale == 1.0);
  const auto hope = EvalProtocol::hope();
  CHECK(hope.n_points == 500000);
  CHECK(hope.tau == 1.0);
  CHECK(hope.gt_scale == 0.1);
  CHECK(EvalProtocol::preset("front").has_value());
  CHECK(!EvalProtocol::preset("nope").has_value());
}

TEST_CASE("evaluate_scene self and offset spheres") {
  const TriangleMesh gt = uv_sphere(1.0, 48);
  EvalProtocol p;
  p.n_points = 20000;
  p.tau = 0.1;
  const EvalReport self = evaluate_scene(gt, gt, p);
  CHECK(self.f.f_score >= 99.9);
  // Mean sampling gap for n points on area A is about sqrt(A / n).
  CHECK(self.chamfer <= 2.0 * std::sqrt(4.0 * M_PI / p.n_points));

  const TriangleMesh bigger = uv_sphere(1.05, 48);
  const EvalReport off = evaluate_scene(bigger, gt, p);
  CHECK(off.f.f_score >= 99.0);
  CHECK(off.chamfer == doctest::Approx(0.05).epsilon(0.1));

  const auto j = self.to_json();
  CHECK(j["protocol"].contains("chamfer_convention"));
  CHECK(j["protocol"]["seed"] == 0);
  CHECK(!self.to_csv().empty());
}

TEST_CASE("evaluate_scene applies GT scale and foreground filter") {
  const TriangleMesh small = uv_sphere(0.1, 24);
  const TriangleMesh big = uv_sphere(1.0, 24);
  EvalProtocol p;
  p.n_points = 5000;
  p.tau = 0.02;
  p.gt_scale = 0.1;
  CHECK(evaluate_scene(small, big, p).f.f_score >= 99.0);

  TriangleMesh bg = uv_sphere(1.0, 12);
  for (auto& v : bg.vertices) v += Vec3(10, 0, 0);
  const TriangleMesh scene = merge_scene({{"thing", small}, {"background", bg}});
  p.gt_scale = 1.0;
  p.foreground_only = true;
  CHECK(evaluate_scene(scene, small, p).f.f_score >= 99.0);
  p.foreground_only = false;
  CHECK(evaluate_scene(scene, small, p).f.f_score < 90.0);
}
