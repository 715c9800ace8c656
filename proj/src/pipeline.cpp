#include "scenekit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "scenekit/error.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/random.hpp"

namespace scenekit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kDomain, "config." + field + ": " + what);
}

void check_keys(const json& doc, const std::string& where, std::initializer_list<const char*> keys) {
  if (!doc.is_object()) config_error(where.empty() ? "root" : where, "expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      config_error(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

template <typename T>
void read(const json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(where.empty() ? key : where + "." + key, e.what());
  }
}

}  // namespace

const char* to_string(InstanceStatus s) noexcept {
  switch (s) {
    case InstanceStatus::kPlaced: return "placed";
    case InstanceStatus::kFallback: return "fallback";
    case InstanceStatus::kSkipped: return "skipped";
  }
  return "unknown";
}

void PipelineConfig::validate() const {
  if (crop_res < 16 || crop_res > 4096) config_error("crop_res", "must be in [16, 4096]");
  if (ransac.iterations < 1) config_error("ransac.iterations", "must be >= 1");
  if (!(ransac.tolerance > 0.0)) config_error("ransac.tolerance", "must be positive");
  if (completion != "manifest" && completion != "identity" && completion != "command") {
    config_error("completion.mode", "expected manifest, identity or command");
  }
  if (reconstruction != "manifest" && reconstruction != "command") {
    config_error("reconstruction.mode", "expected manifest or command");
  }
  if (completion == "command" && completion_command.empty()) config_error("completion.command", "required");
  if (reconstruction == "command" && reconstruction_command.empty()) {
    config_error("reconstruction.command", "required");
  }
  if (background_params.iterations < 0) config_error("background.iterations", "must be >= 0");
  if (!(background_params.adam.learning_rate > 0.0)) config_error("background.learning_rate", "must be positive");
  if (!(background_params.final_lr_ratio > 0.0)) config_error("background.final_lr_ratio", "must be positive");
  if (background_params.sampling.rays_per_batch < 1) config_error("background.rays_per_batch", "must be >= 1");
  if (background_params.sampling.samples_per_ray < 1) config_error("background.samples_per_ray", "must be >= 1");
  if (!(background_params.sampling.band > 0.0 && background_params.sampling.band < 1.0)) {
    config_error("background.band", "must be in (0, 1)");
  }
  if (!(background_params.input_range > 0.0)) config_error("background.input_range", "must be positive");
  if (grid_resolution < 2 || grid_resolution > 1024) config_error("background.grid_resolution", "must be in [2, 1024]");
  if (!(depth_margin >= 0.0 && depth_margin < 1.0)) config_error("background.depth_margin", "must be in [0, 1)");
}

json PipelineConfig::to_json() const {
  const BackgroundParams& b = background_params;
  return {{"seed", seed},
          {"crop_res", crop_res},
          {"crop_mode", to_string(crop_mode)},
          {"ransac", {{"iterations", ransac.iterations}, {"tolerance", ransac.tolerance}, {"min_pairs", ransac.min_pairs}}},
          {"completion", {{"mode", completion}, {"command", completion_command}, {"output", completion_output}}},
          {"reconstruction",
           {{"mode", reconstruction}, {"command", reconstruction_command}, {"output", reconstruction_output}}},
          {"background",
           {{"enabled", background},
            {"iterations", b.iterations},
            {"learning_rate", b.adam.learning_rate},
            {"final_lr_ratio", b.final_lr_ratio},
            {"rays_per_batch", b.sampling.rays_per_batch},
            {"samples_per_ray", b.sampling.samples_per_ray},
            {"band", b.sampling.band},
            {"input_range", b.input_range},
            {"color_weight", b.color_weight},
            {"grid_resolution", grid_resolution},
            {"depth_margin", depth_margin}}},
          {"jobs", jobs}};
}

void PipelineConfig::merge_json(const json& doc) {
  check_keys(doc, "", {"seed", "crop_res", "crop_mode", "ransac", "completion", "reconstruction", "background", "jobs"});
  read(doc, "seed", seed, "");
  read(doc, "crop_res", crop_res, "");
  read(doc, "jobs", jobs, "");
  if (doc.contains("crop_mode")) {
    std::string mode;
    read(doc, "crop_mode", mode, "");
    if (mode == "reproject") {
      crop_mode = CropMode::kReproject;
    } else if (mode == "raw") {
      crop_mode = CropMode::kRaw;
    } else {
      config_error("crop_mode", "expected reproject or raw");
    }
  }
  if (doc.contains("ransac")) {
    const json& r = doc["ransac"];
    check_keys(r, "ransac", {"iterations", "tolerance", "min_pairs"});
    read(r, "iterations", ransac.iterations, "ransac");
    read(r, "tolerance", ransac.tolerance, "ransac");
    read(r, "min_pairs", ransac.min_pairs, "ransac");
  }
  if (doc.contains("completion")) {
    const json& c = doc["completion"];
    check_keys(c, "completion", {"mode", "command", "output"});
    read(c, "mode", completion, "completion");
    read(c, "command", completion_command, "completion");
    read(c, "output", completion_output, "completion");
  }
  if (doc.contains("reconstruction")) {
    const json& c = doc["reconstruction"];
    check_keys(c, "reconstruction", {"mode", "command", "output"});
    read(c, "mode", reconstruction, "reconstruction");
    read(c, "command", reconstruction_command, "reconstruction");
    read(c, "output", reconstruction_output, "reconstruction");
  }
  if (doc.contains("background")) {
    const json& b = doc["background"];
    check_keys(b, "background", {"enabled", "iterations", "learning_rate", "final_lr_ratio", "rays_per_batch",
                                 "samples_per_ray", "band", "input_range", "color_weight", "grid_resolution",
                                 "depth_margin"});
    read(b, "enabled", background, "background");
    read(b, "iterations", background_params.iterations, "background");
    read(b, "learning_rate", background_params.adam.learning_rate, "background");
    read(b, "final_lr_ratio", background_params.final_lr_ratio, "background");
    read(b, "rays_per_batch", background_params.sampling.rays_per_batch, "background");
    read(b, "samples_per_ray", background_params.sampling.samples_per_ray, "background");
    read(b, "band", background_params.sampling.band, "background");
    read(b, "input_range", background_params.input_range, "background");
    read(b, "color_weight", background_params.color_weight, "background");
    read(b, "grid_resolution", grid_resolution, "background");
    read(b, "depth_margin", depth_margin, "background");
  }
}

DepthMap metric_depth(const SceneManifest& manifest, std::optional<ScaleShift>* alignment) {
  if (manifest.depth_kind == DepthKind::kMetric) return manifest.depth;
  if (!manifest.metric_anchor) throw Error(ErrorCode::kIngest, "affine depth without a metric anchor");
  const ScaleShift fit = fit_scale_shift(manifest.depth, *manifest.metric_anchor);
  if (alignment) *alignment = fit;
  return apply_scale_shift(manifest.depth, fit);
}

namespace {

CompletionHook completion_hook(const InstanceRecord& rec, const PipelineConfig& config) {
  if (config.completion_factory) return config.completion_factory(rec);
  CompletionHook hook;
  hook.output_name = config.completion_output;
  if (config.completion == "identity") return hook;
  if (config.completion == "command") {
    hook.mode = CompletionHook::Mode::kExternalCommand;
    hook.command = config.completion_command;
    return hook;
  }
  if (!rec.completion_path) {
    throw Error(ErrorCode::kCompletion, "manifest names no completion for instance \"" + rec.id + "\"");
  }
  hook.mode = CompletionHook::Mode::kOracleFile;
  hook.file = *rec.completion_path;
  return hook;
}

ReconstructionHook reconstruction_hook(const InstanceRecord& rec, const PipelineConfig& config) {
  if (config.reconstruction_factory) return config.reconstruction_factory(rec);
  ReconstructionHook hook;
  hook.output_name = config.reconstruction_output;
  if (config.reconstruction == "command") {
    hook.mode = ReconstructionHook::Mode::kExternalCommand;
    hook.command = config.reconstruction_command;
    return hook;
  }
  if (!rec.recon_mesh_path) {
    throw Error(ErrorCode::kReconstruction, "manifest names no reconstruction for instance \"" + rec.id + "\"");
  }
  hook.mode = ReconstructionHook::Mode::kOracleMesh;
  hook.file = *rec.recon_mesh_path;
  return hook;
}

template <typename Fn>
void run_workers(std::size_t count, unsigned jobs, Fn&& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(count, jobs == 0 ? hw : jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

InstanceOutcome reconstruct_instance(const InstanceRecord& record, const DepthMap& depth,
                                     const Image& image, const CameraIntrinsics& intr,
                                     const PipelineConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  InstanceOutcome out;
  out.id = record.id;
  out.label = record.label;
  out.seed = derive_seed(config.seed, fnv1a(record.id));
  try {
    const NormalizedCrop crop = make_crop(config.crop_mode, record.mask, depth, image, intr, config.crop_res);
    const NormalizedCrop completed = complete_crop(crop, record.label, completion_hook(record, config));
    const TriangleMesh recon = reconstruct_object(completed, record.label, reconstruction_hook(record, config));
    out.estimate = align_scale_ransac(recon, completed, out.seed, config.ransac);
    out.mesh = place_instance(recon, out.estimate.scale, crop.camera);
    out.status = out.estimate.fallback ? InstanceStatus::kFallback : InstanceStatus::kPlaced;
  } catch (const Error& e) {
    out.status = InstanceStatus::kSkipped;
    out.error = to_string(e.code());
    out.message = e.what();
    out.mesh = TriangleMesh{};
  }
  out.seconds = seconds_since(t0);
  return out;
}

SceneResult reconstruct_scene(const SceneManifest& manifest, const PipelineConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SceneResult result;
  const DepthMap depth = metric_depth(manifest, &result.depth_alignment);
  const EntityPartition part = partition_entities(manifest);

  std::vector<InstanceRecord> things = part.things;
  std::sort(things.begin(), things.end(),
            [](const InstanceRecord& a, const InstanceRecord& b) { return a.id < b.id; });
  result.instances.resize(things.size());
  run_workers(things.size(), config.jobs, [&](std::size_t i) {
    result.instances[i] = reconstruct_instance(things[i], depth, manifest.image, manifest.camera, config);
  });

  BackgroundOutcome& bg = result.background;
  bg.seed = derive_seed(config.seed, fnv1a("background"));
  if (config.background) {
    const auto tb = std::chrono::steady_clock::now();
    try {
      const RaySampler sampler(part.stuff_union, depth, &manifest.image, manifest.camera);
      BackgroundParams params = config.background_params;
      params.seed = bg.seed;
      BackgroundFit fit = fit_background(sampler, params);
      bg.near = (1.0 - config.depth_margin) * sampler.min_depth();
      bg.far = (1.0 + config.depth_margin) * sampler.max_depth();
      const int n = config.grid_resolution;
      bg.mesh = extract_background(fit, manifest.camera, bg.near, bg.far, {n, n, n});
      if (!fit.sdf_loss.empty()) {
        bg.final_sdf_loss = fit.sdf_loss.back();
        bg.final_color_loss = fit.color_loss.back();
      }
      bg.fit = std::move(fit);
      bg.status = "fitted";
    } catch (const Error& e) {
      bg.status = e.code() == ErrorCode::kNoBackground ? "absent" : "failed";
      bg.message = e.what();
    }
    bg.seconds = seconds_since(tb);
  }

  std::vector<NamedMesh> parts;
  for (const InstanceOutcome& o : result.instances) {
    if (o.status != InstanceStatus::kSkipped) parts.push_back({o.id, o.mesh});
  }
  if (bg.status == "fitted" && !bg.mesh.empty()) parts.push_back({"background", bg.mesh});
  result.scene = merge_scene(parts);
  result.seconds = seconds_since(t0);
  return result;
}

int SceneResult::exit_code() const {
  const bool skipped = std::any_of(instances.begin(), instances.end(),
                                   [](const InstanceOutcome& o) { return o.status == InstanceStatus::kSkipped; });
  return skipped || background.status == "failed" ? 1 : 0;
}

json SceneResult::index_json() const {
  json components = json::array();
  for (const MeshGroup& g : scene.groups) {
    json c = {{"name", g.name},
              {"vertices", {g.vertex_begin, g.vertex_end}},
              {"faces", {g.face_begin, g.face_end}},
              {"colored", g.colored}};
    if (g.name == "background") {
      c["category"] = "stuff";
      c["source"] = "background_field";
    } else {
      c["category"] = "thing";
      c["source"] = "instance";
      for (const InstanceOutcome& o : instances) {
        if (o.id != g.name) continue;
        c["label"] = o.label;
        c["scale"] = o.estimate.scale;
        c["status"] = to_string(o.status);
      }
    }
    components.push_back(c);
  }
  return {{"schema_version", kReportSchemaVersion}, {"mesh", "scene.obj"}, {"components", components}};
}

json SceneResult::report_json(const PipelineConfig& config, const SceneManifest& manifest) const {
  json inst = json::array();
  std::size_t placed = 0, fallback = 0, skipped = 0;
  for (const InstanceOutcome& o : instances) {
    json j = {{"id", o.id},
              {"label", o.label},
              {"status", to_string(o.status)},
              {"seed", o.seed},
              {"seconds", o.seconds}};
    if (o.status == InstanceStatus::kSkipped) {
      ++skipped;
      j["error"] = o.error;
      j["message"] = o.message;
    } else {
      (o.status == InstanceStatus::kFallback ? fallback : placed)++;
      j["scale"] = o.estimate.scale;
      j["inlier_fraction"] = o.estimate.inlier_fraction;
      j["pairs"] = o.estimate.pairs;
      j["inliers"] = o.estimate.inliers;
      j["fallback"] = o.estimate.fallback;
      j["vertices"] = o.mesh.vertices.size();
      j["faces"] = o.mesh.faces.size();
    }
    inst.push_back(j);
  }
  json bg = {{"status", background.status}, {"seed", background.seed}, {"seconds", background.seconds}};
  if (!background.message.empty()) bg["message"] = background.message;
  if (background.status == "fitted") {
    bg["near"] = background.near;
    bg["far"] = background.far;
    bg["final_sdf_loss"] = background.final_sdf_loss;
    bg["final_color_loss"] = background.final_color_loss;
    bg["vertices"] = background.mesh.vertices.size();
    bg["faces"] = background.mesh.faces.size();
  }
  json report = {{"schema_version", kReportSchemaVersion},
                 {"command", "reconstruct"},
                 {"manifest", manifest.manifest_path.string()},
                 {"config", config.to_json()},
                 {"instances", inst},
                 {"background", bg},
                 {"summary", {{"placed", placed}, {"fallback", fallback}, {"skipped", skipped}}},
                 {"exit_code", exit_code()},
                 {"seconds", seconds}};
  if (depth_alignment) {
    report["depth_alignment"] = {{"scale", depth_alignment->scale},
                                 {"shift", depth_alignment->shift},
                                 {"pixels", depth_alignment->pixel_count},
                                 {"non_positive_scale", depth_alignment->non_positive_scale}};
  }
  return report;
}

void write_scene_outputs(const SceneResult& result, const PipelineConfig& config,
                         const SceneManifest& manifest, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_obj(out_dir / "scene.obj", result.scene);
  const auto dump = [](const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
  };
  dump(out_dir / "scene_index.json", result.index_json());
  if (result.background.fit) {
    write_fields(out_dir / "background.field", {result.background.fit->sdf, result.background.fit->color});
  }
  dump(out_dir / "report.json", result.report_json(config, manifest));
}

}  // namespace scenekit
