#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scenekit/camera.hpp"
#include "scenekit/image.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/mlp.hpp"

namespace scenekit {

struct RaySamplingParams {
  int rays_per_batch = 64;
  int samples_per_ray = 16;
  double band = 0.1;  // relative half-width of the depth band around the surface
};

// Training samples along camera rays through background pixels. The sdf
// target is the signed depth difference d - t along the ray (positive in front
// of the surface). Surface samples (t = d) also carry the pixel color.
struct RaySampleBatch {
  std::vector<Vec3> positions;
  std::vector<double> sdf_targets;
  std::vector<std::int32_t> ray_ids;
  std::vector<std::size_t> surface_indices;  // into positions
  std::vector<Vec3> color_targets;           // one per surface index
};

// Draws batches from the valid pixels of a background mask.
class RaySampler {
 public:
  // Throws Error(kNoBackground) when no masked pixel has a valid depth.
  RaySampler(const EntityMask& stuff, const DepthMap& depth, const Image* image,
             const CameraIntrinsics& intr);

  RaySampleBatch sample(Rng& rng, const RaySamplingParams& params) const;

  // Point on the ray of valid pixel `p` at depth t.
  Vec3 point(std::size_t p, double t) const;
  std::size_t pixel_count() const { return pixels_.size(); }
  double pixel_depth(std::size_t p) const { return depths_[p]; }
  double min_depth() const { return min_depth_; }
  double max_depth() const { return max_depth_; }
  // Bounding box of all points reachable within the sampling band.
  Aabb band_bounds(double band) const;

 private:
  CameraIntrinsics intr_;
  std::vector<std::int64_t> pixels_;
  std::vector<double> depths_;
  std::vector<Vec3> colors_;
  double min_depth_ = 0.0, max_depth_ = 0.0;
};

RaySampleBatch sample_ray_supervision(const EntityMask& stuff, const DepthMap& depth,
                                      const Image* image, const CameraIntrinsics& intr,
                                      const RaySamplingParams& params, std::uint64_t seed);

struct BackgroundParams {
  RaySamplingParams sampling;
  AdamParams adam;
  int iterations = 3000;
  // The learning rate decays exponentially from adam.learning_rate to
  // adam.learning_rate * final_lr_ratio over the run.
  double final_lr_ratio = 0.05;
  double color_weight = 1.0;
  // Half-width of the cube the supervised region is mapped to before the first
  // layer. Wider ranges let the Softplus network form sharper creases.
  double input_range = 16.0;
  std::uint64_t seed = 0;
};

struct BackgroundFit {
  MlpField sdf;    // f: R^3 -> R
  MlpField color;  // c: R^3 -> [0,1]^3
  std::vector<double> sdf_loss;    // per iteration (L1)
  std::vector<double> color_loss;  // per iteration (L2)
};

// Trains f and c from scratch. Throws Error(kDivergence) naming the iteration
// when a loss becomes non-finite.
BackgroundFit fit_background(const RaySampler& sampler, const BackgroundParams& params);

// Evaluates a field on points in fixed-size chunks.
FieldFn field_function(const MlpField& field, int output_row = 0);

// Frustum grid of f between near and far, marching cubes at 0, faces touching
// out-of-frustum samples removed, vertices colored by c.
TriangleMesh extract_background(const BackgroundFit& fit, const CameraIntrinsics& intr,
                                double near, double far, std::array<int, 3> resolution);

}  // namespace scenekit
