#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenekit/geometry.hpp"

namespace scenekit {

// Median-split kd-tree answering exact nearest-neighbor queries.
class NnIndex {
 public:
  explicit NnIndex(std::vector<Vec3> points);

  struct Hit {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  Hit nearest(const Vec3& query) const;
  double nearest_distance(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  void build(std::size_t lo, std::size_t hi);
  void search(std::size_t lo, std::size_t hi, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint8_t> axis_;  // split axis of the node stored at each slot
};

// Distance from every point of `queries` to its nearest neighbor in `index`.
std::vector<double> nearest_distances(const std::vector<Vec3>& queries, const NnIndex& index);

// 0.5 * (mean_a min_b |a-b| + mean_b min_a |b-a|), in scene units.
double chamfer(const PointCloud& a, const PointCloud& b);

struct FScore {
  double precision = 0.0;  // % of A within tau of B
  double recall = 0.0;     // % of B within tau of A
  double f_score = 0.0;    // harmonic mean, 0 when both are 0
};

FScore f_score_detail(const PointCloud& a, const PointCloud& b, double tau);
double f_score(const PointCloud& a, const PointCloud& b, double tau);

struct EvalProtocol {
  std::string name = "custom";
  std::size_t n_points = 100000;
  double tau = 0.1;
  double gt_scale = 1.0;          // applied to ground-truth vertices before sampling
  bool foreground_only = false;   // drop the "background" group from both meshes
  std::uint64_t seed = 0;

  static EvalProtocol front3d();  // n = 1,000,000, tau = 0.1
  static EvalProtocol hope();     // n = 500,000, tau = 1.0, GT scaled by 0.1
  static std::optional<EvalProtocol> preset(const std::string& name);
};

struct ComponentRow {
  std::string side;  // "recon" or "gt"
  std::string name;
  std::size_t points = 0;
  double mean_distance = 0.0;     // to the other full scene
  double within_tau = 0.0;        // % of this component's points within tau
};

struct EvalReport {
  EvalProtocol protocol;
  double chamfer = 0.0;
  FScore f;
  std::vector<ComponentRow> components;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

EvalReport evaluate_scene(const TriangleMesh& recon, const TriangleMesh& gt,
                          const EvalProtocol& protocol);

}  // namespace scenekit
