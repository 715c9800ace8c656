#pragma once

#include <chrono>
#include <map>
#include <string>

#include "scenekit/image.hpp"
#include "scenekit/metrics.hpp"
#include "scenekit/pipeline.hpp"
#include "scenekit/random.hpp"
#include "scenekit/synth.hpp"
#include "support.hpp"

namespace testing {

// Ground-truth-backed reconstruction of one synthetic scene.
struct OracleVariant {
  bool completion = true;   // false: identity completion
  scenekit::CropMode crop_mode = scenekit::CropMode::kReproject;
  bool from_bundle = false;  // read the oracle outputs from a written bundle
  int crop_res = scenekit::kDefaultCropResolution;
  std::size_t eval_points = 20000;
};

struct OracleRun {
  double f_score = 0.0;
  double chamfer = 0.0;
  double tau = 0.0;
  std::size_t placed = 0, fallback = 0, skipped = 0;
  double seconds = 0.0;
};

inline scenekit::SceneSpec e2e_spec() {
  scenekit::SceneSpec spec;
  spec.min_things = 3;
  spec.max_things = 6;
  return spec;
}

inline double foreground_diagonal(const scenekit::TriangleMesh& gt) {
  scenekit::Aabb box;
  for (const auto& part : scenekit::split_by_group(gt)) {
    if (part.name == "background") continue;
    for (const auto& v : part.mesh.vertices) box.extend(v);
  }
  return (box.max - box.min).norm();
}

inline OracleRun run_oracle_scene(std::uint64_t seed, const OracleVariant& variant = {}) {
  using namespace scenekit;
  const auto t0 = std::chrono::steady_clock::now();
  const PrimitiveScene scene = generate_scene(seed, e2e_spec());

  PipelineConfig config;
  config.seed = seed;
  config.crop_res = variant.crop_res;
  config.crop_mode = variant.crop_mode;
  config.background = false;
  config.jobs = 1;

  SceneManifest manifest;
  ScratchDir dir("e2e");
  BundleOptions bundle;
  bundle.crop_res = variant.crop_res;
  bundle.crop_mode = variant.crop_mode;
  bundle.write_oracles = variant.from_bundle;
  manifest = load_manifest(write_bundle(scene, dir.path(), bundle));

  std::map<std::string, const Primitive*> prims;
  for (const Primitive& p : scene.primitives) prims[instance_id(p)] = &p;

  if (!variant.from_bundle) {
    config.completion_factory = [&](const InstanceRecord& rec) {
      CompletionHook hook;
      if (!variant.completion) return hook;
      const int id = prims.at(rec.id)->id;
      hook.mode = CompletionHook::Mode::kCustom;
      hook.custom = [&scene, id](const NormalizedCrop& crop, const std::string&) {
        return quantize_8bit(oracle_completion(scene, id, crop));
      };
      return hook;
    };
    config.reconstruction_factory = [&](const InstanceRecord& rec) {
      const Primitive& p = *prims.at(rec.id);
      ReconstructionHook hook;
      hook.mode = ReconstructionHook::Mode::kCustom;
      const TriangleMesh gt = to_camera(mesh_of_primitive(p), scene.pose);
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(p.id));
      hook.custom = [gt, s](const NormalizedCrop& crop, const std::string&) {
        return oracle_reconstruction(gt, crop, s).mesh;
      };
      return hook;
    };
  }

  const SceneResult result = reconstruct_scene(manifest, config);
  const TriangleMesh gt = ground_truth_mesh(scene);

  OracleRun run;
  for (const InstanceOutcome& o : result.instances) {
    if (o.status == InstanceStatus::kPlaced) ++run.placed;
    if (o.status == InstanceStatus::kFallback) ++run.fallback;
    if (o.status == InstanceStatus::kSkipped) ++run.skipped;
  }
  EvalProtocol protocol;
  protocol.n_points = variant.eval_points;
  protocol.tau = 0.02 * foreground_diagonal(gt);
  protocol.foreground_only = true;
  protocol.seed = seed;
  run.tau = protocol.tau;
  if (!result.scene.empty()) {
    const EvalReport report = evaluate_scene(result.scene, gt, protocol);
    run.f_score = report.f.f_score;
    run.chamfer = report.chamfer;
  } else {
    run.chamfer = std::numeric_limits<double>::infinity();
  }
  run.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace testing
