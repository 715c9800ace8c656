#include "scenekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "scenekit/error.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/parallel.hpp"

namespace scenekit {

NnIndex::NnIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error(ErrorCode::kDomain, "cannot index an empty point set");
  axis_.assign(points_.size(), 0);
  build(0, points_.size());
}

void NnIndex::build(std::size_t lo, std::size_t hi) {
  if (hi - lo <= 1) return;
  Aabb box;
  for (std::size_t i = lo; i < hi; ++i) box.extend(points_[i]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(points_.begin() + static_cast<std::ptrdiff_t>(lo),
                   points_.begin() + static_cast<std::ptrdiff_t>(mid),
                   points_.begin() + static_cast<std::ptrdiff_t>(hi),
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  axis_[mid] = static_cast<std::uint8_t>(axis);
  build(lo, mid);
  build(mid + 1, hi);
}

void NnIndex::search(std::size_t lo, std::size_t hi, const Vec3& q, Hit& best) const {
  if (lo >= hi) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  const Vec3& p = points_[mid];
  const double d2 = (q - p).squaredNorm();
  if (d2 < best.squared_distance) best = {mid, d2};
  if (hi - lo == 1) return;
  const int axis = axis_[mid];
  const double diff = q[axis] - p[axis];
  const bool left_first = diff < 0.0;
  if (left_first) {
    search(lo, mid, q, best);
    if (diff * diff < best.squared_distance) search(mid + 1, hi, q, best);
  } else {
    search(mid + 1, hi, q, best);
    if (diff * diff < best.squared_distance) search(lo, mid, q, best);
  }
}

NnIndex::Hit NnIndex::nearest(const Vec3& query) const {
  Hit best{0, std::numeric_limits<double>::infinity()};
  search(0, points_.size(), query, best);
  return best;
}

double NnIndex::nearest_distance(const Vec3& query) const {
  return std::sqrt(nearest(query).squared_distance);
}

std::vector<double> nearest_distances(const std::vector<Vec3>& queries, const NnIndex& index) {
  std::vector<double> out(queries.size());
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (queries.size() + kBlock - 1) / kBlock;
  parallel_for(0, blocks, [&](std::size_t b) {
    const std::size_t end = std::min(queries.size(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) out[i] = index.nearest_distance(queries[i]);
  });
  return out;
}

namespace {

void require_non_empty(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kDomain, "point sets must be non-empty");
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double percent_within(const std::vector<double>& d, double tau) {
  const auto n = std::count_if(d.begin(), d.end(), [tau](double x) { return x <= tau; });
  return 100.0 * static_cast<double>(n) / static_cast<double>(d.size());
}

FScore combine(double precision, double recall) {
  FScore f{precision, recall, 0.0};
  if (precision + recall > 0.0) f.f_score = 2.0 * precision * recall / (precision + recall);
  return f;
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_non_empty(a, b);
  const NnIndex ia(a.points), ib(b.points);
  return 0.5 * (mean(nearest_distances(a.points, ib)) + mean(nearest_distances(b.points, ia)));
}

FScore f_score_detail(const PointCloud& a, const PointCloud& b, double tau) {
  require_non_empty(a, b);
  if (!(tau > 0.0)) throw Error(ErrorCode::kDomain, "F-Score threshold must be positive");
  const NnIndex ia(a.points), ib(b.points);
  return combine(percent_within(nearest_distances(a.points, ib), tau),
                 percent_within(nearest_distances(b.points, ia), tau));
}

double f_score(const PointCloud& a, const PointCloud& b, double tau) {
  return f_score_detail(a, b, tau).f_score;
}

EvalProtocol EvalProtocol::front3d() {
  EvalProtocol p;
  p.name = "front";
  p.n_points = 1000000;
  p.tau = 0.1;
  return p;
}

EvalProtocol EvalProtocol::hope() {
  EvalProtocol p;
  p.name = "hope";
  p.n_points = 500000;
  p.tau = 1.0;
  p.gt_scale = 0.1;
  p.foreground_only = true;
  return p;
}

std::optional<EvalProtocol> EvalProtocol::preset(const std::string& name) {
  if (name == "front" || name == "3d-front" || name == "front3d") return front3d();
  if (name == "hope") return hope();
  return std::nullopt;
}

namespace {

TriangleMesh without_background(const TriangleMesh& mesh) {
  if (mesh.groups.empty()) return mesh;
  std::vector<NamedMesh> parts = split_by_group(mesh);
  std::erase_if(parts, [](const NamedMesh& p) { return p.name == "background"; });
  return merge_scene(parts);
}

// Component rows for one side, attributing each sample to its face's group.
void add_component_rows(const std::string& side, const TriangleMesh& mesh,
                        const std::vector<std::int32_t>& face_ids,
                        const std::vector<double>& dist, double tau,
                        std::vector<ComponentRow>& rows) {
  for (const MeshGroup& g : mesh.groups) {
    ComponentRow row;
    row.side = side;
    row.name = g.name;
    std::size_t within = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < face_ids.size(); ++i) {
      const auto f = static_cast<std::size_t>(face_ids[i]);
      if (f < g.face_begin || f >= g.face_end) continue;
      ++row.points;
      sum += dist[i];
      if (dist[i] <= tau) ++within;
    }
    if (row.points > 0) {
      row.mean_distance = sum / static_cast<double>(row.points);
      row.within_tau = 100.0 * static_cast<double>(within) / static_cast<double>(row.points);
    }
    rows.push_back(row);
  }
}

}  // namespace

EvalReport evaluate_scene(const TriangleMesh& recon_in, const TriangleMesh& gt_in,
                          const EvalProtocol& protocol) {
  const TriangleMesh recon = protocol.foreground_only ? without_background(recon_in) : recon_in;
  TriangleMesh gt = protocol.foreground_only ? without_background(gt_in) : gt_in;
  for (Vec3& v : gt.vertices) v *= protocol.gt_scale;

  std::vector<std::int32_t> recon_faces, gt_faces;
  const PointCloud rs = sample_surface(recon, protocol.n_points, protocol.seed, &recon_faces);
  const PointCloud gs = sample_surface(gt, protocol.n_points, protocol.seed + 1, &gt_faces);
  const NnIndex ri(rs.points), gi(gs.points);
  const std::vector<double> to_gt = nearest_distances(rs.points, gi);
  const std::vector<double> to_recon = nearest_distances(gs.points, ri);

  EvalReport report;
  report.protocol = protocol;
  report.chamfer = 0.5 * (mean(to_gt) + mean(to_recon));
  report.f = combine(percent_within(to_gt, protocol.tau), percent_within(to_recon, protocol.tau));
  add_component_rows("recon", recon, recon_faces, to_gt, protocol.tau, report.components);
  add_component_rows("gt", gt, gt_faces, to_recon, protocol.tau, report.components);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const ComponentRow& r : components) {
    rows.push_back({{"side", r.side},
                    {"name", r.name},
                    {"points", r.points},
                    {"mean_distance", r.mean_distance},
                    {"within_tau_percent", r.within_tau}});
  }
  return {{"protocol",
           {{"name", protocol.name},
            {"n_points", protocol.n_points},
            {"tau", protocol.tau},
            {"gt_scale", protocol.gt_scale},
            {"foreground_only", protocol.foreground_only},
            {"seed", protocol.seed},
            {"chamfer_convention", "0.5*(mean_a min_b |a-b|_2 + mean_b min_a |b-a|_2)"}}},
          {"metrics",
           {{"chamfer", chamfer},
            {"f_score", f.f_score},
            {"precision", f.precision},
            {"recall", f.recall}}},
          {"components", rows}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(9);
  out << "side,component,points,mean_distance,within_tau_percent\n";
  out << "scene,all," << protocol.n_points << ',' << chamfer << ',' << f.f_score << '\n';
  for (const ComponentRow& r : components) {
    out << r.side << ',' << r.name << ',' << r.points << ',' << r.mean_distance << ','
        << r.within_tau << '\n';
  }
  return out.str();
}

}  // namespace scenekit
