#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "scenekit/camera.hpp"
#include "scenekit/geometry.hpp"
#include "scenekit/image.hpp"

namespace scenekit {

enum class CropMode {
  kReproject,  // splat unprojected instance points into the virtual camera
  kRaw,        // resample the image bounding box, viewed by a naive centered camera
};

const char* to_string(CropMode mode) noexcept;

// How view-space geometry lands in a raw crop. Unused for kReproject crops.
struct RawEmbedding {
  CameraIntrinsics source;   // the scene camera
  double offset_u = 0.0;     // crop pixel = (image pixel - offset) * zoom
  double offset_v = 0.0;
  double zoom = 1.0;
  double depth_scale = 1.0;  // crop depth = depth_scale * view z + depth_offset
  double depth_offset = 0.0;
};

struct NormalizedCrop {
  int resolution = 0;
  Image rgb;
  EntityMask mask;
  DepthMap depth;  // virtual-camera z in normalized units
  VirtualCamera camera;
  CropMode mode = CropMode::kReproject;
  RawEmbedding raw;

  // Continuous crop pixel and crop depth of a view-space point.
  Projection locate(const Vec3& view_point) const;
  // Normalized-space point seen through continuous crop pixel (u, v) at depth z.
  Vec3 normalized_point(double u, double v, double z) const;
  void validate() const;  // throws kDimension
};

// Unprojects the masked pixels, fits the virtual camera and splats the points
// into a crop_res x crop_res image with a z-buffer (nearest wins). Footprints
// widen to 3x3 where the crop magnifies the source by more than 1.5x.
NormalizedCrop reproject_instance(const EntityMask& mask, const DepthMap& depth,
                                  const Image& image, const CameraIntrinsics& intr,
                                  int crop_res = kDefaultCropResolution);

// Nearest-neighbor resample of the square box around the mask, with the
// virtual camera looking straight down -Z at the normalized origin.
NormalizedCrop raw_crop_instance(const EntityMask& mask, const DepthMap& depth,
                                 const Image& image, const CameraIntrinsics& intr,
                                 int crop_res = kDefaultCropResolution);

NormalizedCrop make_crop(CropMode mode, const EntityMask& mask, const DepthMap& depth,
                         const Image& image, const CameraIntrinsics& intr,
                         int crop_res = kDefaultCropResolution);

// Renders other source pixels through the embedding of an existing crop.
// Returns rgb, mask and depth on the same grid; camera and embedding are kept.
NormalizedCrop resample_into(const NormalizedCrop& layout, const EntityMask& mask,
                             const DepthMap& depth, const Image& image,
                             const CameraIntrinsics& intr);

struct CompletionHook {
  enum class Mode { kIdentity, kOracleFile, kExternalCommand, kCustom };
  Mode mode = Mode::kIdentity;
  std::filesystem::path file;  // kOracleFile: PNG of the complete view
  std::string command;         // kExternalCommand: invoked as `command <dir>`
  std::string output_name = "completed.png";
  std::function<Image(const NormalizedCrop&, const std::string& label)> custom;
};

// The completed crop keeps the input depth and camera; its mask is every pixel
// that differs from neutral by more than 2/255.
NormalizedCrop complete_crop(const NormalizedCrop& crop, const std::string& label,
                             const CompletionHook& hook);

struct ReconstructionHook {
  enum class Mode { kOracleMesh, kExternalCommand, kCustom };
  Mode mode = Mode::kOracleMesh;
  std::filesystem::path file;  // kOracleMesh: OBJ or PLY in normalized space
  std::string command;
  std::string output_name = "mesh.obj";
  std::function<TriangleMesh(const NormalizedCrop&, const std::string& label)> custom;
};

TriangleMesh reconstruct_object(const NormalizedCrop& crop, const std::string& label,
                                const ReconstructionHook& hook);

struct RansacParams {
  int iterations = 256;
  double tolerance = 0.05;
  std::size_t min_pairs = 20;
};

struct ScaleEstimate {
  double scale = 1.0;
  double inlier_fraction = 0.0;
  std::size_t pairs = 0;
  std::size_t inliers = 0;
  bool fallback = false;
};

// Distances from the virtual camera center along each shared pixel ray.
struct RayPairs {
  std::vector<double> crop;
  std::vector<double> recon;
};

RayPairs correspondences(const TriangleMesh& recon, const NormalizedCrop& crop);

// One-pair RANSAC over the ratio of crop to reconstruction distances, refined
// by least squares over the winning inlier set.
ScaleEstimate ransac_scale(const RayPairs& pairs, std::uint64_t seed,
                           const RansacParams& params = {});

// When fewer than min_pairs correspondences exist the result has fallback set
// and scale = fallback_scale(recon).
ScaleEstimate align_scale_ransac(const TriangleMesh& recon, const NormalizedCrop& crop,
                                 std::uint64_t seed, const RansacParams& params = {});

// Ratio of the unit normalized extent to the reconstruction's longest side.
double fallback_scale(const TriangleMesh& recon);

TriangleMesh place_instance(const TriangleMesh& recon, double scale,
                            const VirtualCamera& camera);

}  // namespace scenekit
