#include "scenekit/background.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scenekit/error.hpp"

namespace scenekit {

RaySampler::RaySampler(const EntityMask& stuff, const DepthMap& depth, const Image* image,
                       const CameraIntrinsics& intr)
    : intr_(intr) {
  if (stuff.width != depth.width || stuff.height != depth.height) {
    throw Error(ErrorCode::kDimension, "background mask and depth differ in resolution");
  }
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (!stuff.at(u, v) || !depth.valid(u, v)) continue;
      pixels_.push_back(static_cast<std::int64_t>(v) * depth.width + u);
      depths_.push_back(depth.at(u, v));
      if (image) {
        const float* p = image->pixel(u, v);
        colors_.emplace_back(p[0], p[1], p[2]);
      } else {
        colors_.push_back(Vec3::Constant(kNeutral));
      }
    }
  }
  if (pixels_.empty()) {
    throw Error(ErrorCode::kNoBackground, "no background pixel with a valid depth");
  }
  min_depth_ = *std::min_element(depths_.begin(), depths_.end());
  max_depth_ = *std::max_element(depths_.begin(), depths_.end());
}

Vec3 RaySampler::point(std::size_t p, double t) const {
  const auto u = static_cast<double>(pixels_[p] % intr_.width);
  const auto v = static_cast<double>(pixels_[p] / intr_.width);
  return t * pixel_ray(intr_, u + 0.5, v + 0.5);
}

Aabb RaySampler::band_bounds(double band) const {
  Aabb box;
  for (std::size_t p = 0; p < pixels_.size(); ++p) {
    box.extend(point(p, depths_[p] * (1.0 - band)));
    box.extend(point(p, depths_[p] * (1.0 + band)));
  }
  return box;
}

RaySampleBatch RaySampler::sample(Rng& rng, const RaySamplingParams& params) const {
  RaySampleBatch batch;
  const std::size_t per_ray = static_cast<std::size_t>(params.samples_per_ray) + 1;
  const std::size_t total = static_cast<std::size_t>(params.rays_per_batch) * per_ray;
  batch.positions.reserve(total);
  batch.sdf_targets.reserve(total);
  batch.ray_ids.reserve(total);
  for (int r = 0; r < params.rays_per_batch; ++r) {
    const std::size_t p = rng.index(pixels_.size());
    const double d = depths_[p];
    for (int s = 0; s < params.samples_per_ray; ++s) {
      const double t = d * rng.uniform(1.0 - params.band, 1.0 + params.band);
      batch.positions.push_back(point(p, t));
      batch.sdf_targets.push_back(d - t);
      batch.ray_ids.push_back(r);
    }
    batch.surface_indices.push_back(batch.positions.size());
    batch.positions.push_back(point(p, d));
    batch.sdf_targets.push_back(0.0);
    batch.ray_ids.push_back(r);
    batch.color_targets.push_back(colors_[p]);
  }
  return batch;
}

RaySampleBatch sample_ray_supervision(const EntityMask& stuff, const DepthMap& depth,
                                      const Image* image, const CameraIntrinsics& intr,
                                      const RaySamplingParams& params, std::uint64_t seed) {
  RaySampler sampler(stuff, depth, image, intr);
  Rng rng(seed);
  return sampler.sample(rng, params);
}

BackgroundFit fit_background(const RaySampler& sampler, const BackgroundParams& params) {
  if (params.iterations < 0) throw Error(ErrorCode::kDomain, "iterations must be >= 0");
  if (!(params.input_range > 0.0)) throw Error(ErrorCode::kDomain, "input range must be positive");
  if (!(params.final_lr_ratio > 0.0)) {
    throw Error(ErrorCode::kDomain, "final learning-rate ratio must be positive");
  }
  Rng rng(params.seed);
  BackgroundFit fit;
  fit.sdf = MlpField::create(1, OutputActivation::kIdentity, rng);
  fit.color = MlpField::create(3, OutputActivation::kSigmoid, rng);

  // Map the supervised region to [-input_range, input_range]^3.
  const Aabb box = sampler.band_bounds(params.sampling.band);
  const double longest = std::max(box.extent().maxCoeff(), 1e-12);
  for (MlpField* f : {&fit.sdf, &fit.color}) {
    f->input_center = box.center();
    f->input_scale = 2.0 * params.input_range / longest;
  }

  Adam sdf_opt(fit.sdf, params.adam);
  Adam color_opt(fit.color, params.adam);
  ForwardCache sdf_cache, color_cache;
  fit.sdf_loss.reserve(static_cast<std::size_t>(params.iterations));
  fit.color_loss.reserve(static_cast<std::size_t>(params.iterations));

  const double decay =
      params.iterations > 1 ? std::log(params.final_lr_ratio) / (params.iterations - 1) : 0.0;
  for (int it = 0; it < params.iterations; ++it) {
    const double lr = params.adam.learning_rate * std::exp(decay * it);
    sdf_opt.set_learning_rate(lr);
    color_opt.set_learning_rate(lr);
    const RaySampleBatch batch = sampler.sample(rng, params.sampling);
    const auto n = static_cast<Eigen::Index>(batch.positions.size());
    const Eigen::MatrixXd x = to_matrix(batch.positions);
    const Eigen::MatrixXd pred = mlp_forward(fit.sdf, x, sdf_cache);

    double sdf_loss = 0.0;
    Eigen::MatrixXd sdf_grad(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = pred(0, i) - batch.sdf_targets[static_cast<std::size_t>(i)];
      sdf_loss += std::abs(r);
      sdf_grad(0, i) = (r > 0.0 ? 1.0 : r < 0.0 ? -1.0 : 0.0) / static_cast<double>(n);
    }
    sdf_loss /= static_cast<double>(n);

    std::vector<Vec3> surface;
    surface.reserve(batch.surface_indices.size());
    for (std::size_t idx : batch.surface_indices) surface.push_back(batch.positions[idx]);
    const auto m = static_cast<Eigen::Index>(surface.size());
    const Eigen::MatrixXd rgb = mlp_forward(fit.color, to_matrix(surface), color_cache);
    Eigen::MatrixXd color_grad(3, m);
    double color_loss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int c = 0; c < 3; ++c) {
        const double r = rgb(c, i) - batch.color_targets[static_cast<std::size_t>(i)][c];
        color_loss += r * r;
        color_grad(c, i) = 2.0 * params.color_weight * r / static_cast<double>(3 * m);
      }
    }
    color_loss /= static_cast<double>(3 * m);

    if (!std::isfinite(sdf_loss) || !std::isfinite(color_loss)) {
      throw Error(ErrorCode::kDivergence,
                  "background loss became non-finite at iteration " + std::to_string(it));
    }
    fit.sdf_loss.push_back(sdf_loss);
    fit.color_loss.push_back(color_loss);

    sdf_opt.step(fit.sdf, mlp_backward(fit.sdf, sdf_cache, sdf_grad));
    color_opt.step(fit.color, mlp_backward(fit.color, color_cache, color_grad));
  }
  return fit;
}

FieldFn field_function(const MlpField& field, int output_row) {
  return [&field, output_row](std::span<const Vec3> points, std::span<double> out) {
    constexpr std::size_t kChunk = 8192;
    for (std::size_t lo = 0; lo < points.size(); lo += kChunk) {
      const std::size_t hi = std::min(points.size(), lo + kChunk);
      Eigen::MatrixXd x(3, static_cast<Eigen::Index>(hi - lo));
      for (std::size_t i = lo; i < hi; ++i) x.col(static_cast<Eigen::Index>(i - lo)) = points[i];
      const Eigen::MatrixXd y = mlp_forward(field, x);
      for (std::size_t i = lo; i < hi; ++i) out[i] = y(output_row, static_cast<Eigen::Index>(i - lo));
    }
  };
}

TriangleMesh extract_background(const BackgroundFit& fit, const CameraIntrinsics& intr,
                                double near, double far, std::array<int, 3> resolution) {
  const ScalarGrid grid = sample_frustum_grid(field_function(fit.sdf), intr, near, far, resolution);
  TriangleMesh mesh = drop_outside_faces(marching_cubes_detailed(grid, 0.0), grid);
  if (mesh.vertices.empty()) return mesh;
  const Eigen::MatrixXd rgb = mlp_forward(fit.color, to_matrix(mesh.vertices));
  mesh.vertex_colors.resize(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    mesh.vertex_colors[v] = rgb.col(static_cast<Eigen::Index>(v));
  }
  return mesh;
}

}  // namespace scenekit
