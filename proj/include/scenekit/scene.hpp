#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenekit/camera.hpp"
#include "scenekit/image.hpp"

namespace scenekit {

enum class Category { kThing, kStuff };
enum class DepthKind { kMetric, kAffine };

const char* to_string(Category c);
const char* to_string(DepthKind k);

struct InstanceRecord {
  std::string id;
  std::string label;
  Category category = Category::kThing;
  EntityMask mask;
  std::filesystem::path mask_path;
  // Image and depth restricted to the mask's bounding box.
  PixelBox box;
  std::optional<Image> crop_rgb;
  std::optional<DepthMap> crop_depth;
  // Optional inputs for the file-based hooks, resolved to absolute paths.
  std::optional<std::filesystem::path> completion_path;
  std::optional<std::filesystem::path> recon_mesh_path;
};

// A fully loaded and validated scene description. Paths in the JSON are
// relative to the manifest file.
struct SceneManifest {
  std::filesystem::path manifest_path;
  std::filesystem::path image_path;
  std::filesystem::path depth_path;
  std::optional<std::filesystem::path> metric_anchor_path;
  DepthKind depth_kind = DepthKind::kMetric;
  std::string units = "m";
  CameraIntrinsics camera;
  std::optional<RigidPose> pose;
  std::vector<InstanceRecord> instances;

  Image image;
  DepthMap depth;
  std::optional<DepthMap> metric_anchor;
};

inline constexpr int kManifestSchemaVersion = 1;

// Throws Error(kIngest) with a message that starts with the offending field
// path (e.g. "instances[2].mask: ..."), or Error(kIo) when the manifest itself
// cannot be read.
SceneManifest load_manifest(const std::filesystem::path& path);

// Returns the JSON form with paths made relative to `base_dir`.
nlohmann::json manifest_to_json(const SceneManifest& manifest,
                                const std::filesystem::path& base_dir);

struct ScaleShift {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t pixel_count = 0;
  bool non_positive_scale = false;  // warning: scale <= 0
};

// Least-squares (s, t) minimizing sum (s * a_p + t - m_p)^2 over pixels valid
// in both maps.
ScaleShift fit_scale_shift(const DepthMap& affine_depth, const DepthMap& anchor_depth);

DepthMap apply_scale_shift(const DepthMap& depth, const ScaleShift& fit);

struct EntityPartition {
  std::vector<InstanceRecord> things;
  EntityMask stuff_union;
};

EntityPartition partition_entities(const SceneManifest& manifest);

}  // namespace scenekit
