#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenekit/background.hpp"
#include "scenekit/instance.hpp"
#include "scenekit/scene.hpp"

namespace scenekit {

inline constexpr int kReportSchemaVersion = 1;

struct PipelineConfig {
  std::uint64_t seed = 0;
  int crop_res = kDefaultCropResolution;
  CropMode crop_mode = CropMode::kReproject;
  RansacParams ransac;

  // "manifest" reads the per-instance completion / reconstruction files named
  // in the manifest; "identity" (completion only) passes the crop through;
  // "command" runs an external program.
  std::string completion = "manifest";
  std::string completion_command;
  std::string completion_output = "completed.png";
  std::string reconstruction = "manifest";
  std::string reconstruction_command;
  std::string reconstruction_output = "mesh.obj";

  bool background = true;
  BackgroundParams background_params;
  int grid_resolution = 256;
  // Background extraction spans depths [(1 - m) min, (1 + m) max] of the stuff pixels.
  double depth_margin = 0.1;

  unsigned jobs = 0;  // 0: one worker per core

  // In-process hooks; when set they take precedence over the string modes.
  std::function<CompletionHook(const InstanceRecord&)> completion_factory;
  std::function<ReconstructionHook(const InstanceRecord&)> reconstruction_factory;

  void validate() const;  // throws kDomain
  nlohmann::json to_json() const;
  // Overrides the fields present in `doc`; unknown keys are an error.
  void merge_json(const nlohmann::json& doc);
};

enum class InstanceStatus { kPlaced, kFallback, kSkipped };

const char* to_string(InstanceStatus s) noexcept;

struct InstanceOutcome {
  std::string id;
  std::string label;
  InstanceStatus status = InstanceStatus::kSkipped;
  std::string error;    // error code name when skipped
  std::string message;  // diagnostics when skipped
  std::uint64_t seed = 0;
  ScaleEstimate estimate;
  TriangleMesh mesh;  // view space
  double seconds = 0.0;
};

struct BackgroundOutcome {
  std::string status = "disabled";  // disabled | absent | fitted | failed
  std::string message;
  std::uint64_t seed = 0;
  double near = 0.0, far = 0.0;
  double final_sdf_loss = 0.0, final_color_loss = 0.0;
  std::optional<BackgroundFit> fit;
  TriangleMesh mesh;
  double seconds = 0.0;
};

struct SceneResult {
  std::vector<InstanceOutcome> instances;  // sorted by id
  BackgroundOutcome background;
  std::optional<ScaleShift> depth_alignment;
  TriangleMesh scene;  // merged, one group per placed instance plus "background"
  double seconds = 0.0;

  // 0 when everything succeeded, 1 when some instance was skipped or the
  // background fit failed.
  int exit_code() const;
  nlohmann::json index_json() const;
  nlohmann::json report_json(const PipelineConfig& config, const SceneManifest& manifest) const;
};

// Metric depth of the manifest: affine depths are aligned to the anchor first.
DepthMap metric_depth(const SceneManifest& manifest, std::optional<ScaleShift>* alignment = nullptr);

// Crop, complete, reconstruct, align and place one thing.
InstanceOutcome reconstruct_instance(const InstanceRecord& record, const DepthMap& depth,
                                     const Image& image, const CameraIntrinsics& intr,
                                     const PipelineConfig& config);

SceneResult reconstruct_scene(const SceneManifest& manifest, const PipelineConfig& config);

// Writes scene.obj, scene_index.json, background.field (when fitted) and report.json.
void write_scene_outputs(const SceneResult& result, const PipelineConfig& config,
                         const SceneManifest& manifest, const std::filesystem::path& out_dir);

}  // namespace scenekit
