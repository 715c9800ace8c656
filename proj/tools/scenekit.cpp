#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scenekit/error.hpp"
#include "scenekit/metrics.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/parallel.hpp"
#include "scenekit/pipeline.hpp"
#include "scenekit/random.hpp"
#include "scenekit/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scenekit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitInvalid = 2;

// Bad flags or config values; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// Values read from one section of the config file; unknown keys are rejected.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw UsageError("config " + name_ + ": expected an object");
    doc_ = doc;
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config " + name_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    T value{};
    used_.insert(key);
    if (!doc_.contains(key)) return;
    get(key, value);
    out = value;
  }

  const json& raw(const char* key) {
    used_.insert(key);
    static const json null;
    return doc_.contains(key) ? doc_.at(key) : null;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!used_.count(key)) throw UsageError("config " + name_ + "." + key + ": unknown key");
    }
  }

 private:
  std::string name_;
  json doc_ = json::object();
  std::set<std::string> used_;
};

// The optional --config file plus the seed precedence shared by every command:
// --seed, then the file's "seed", then SCENEKIT_SEED, then 0.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  json doc = json::object();
  fs::path base;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "JSON config file; flags take precedence");
    seed_opt = cmd.add_option("--seed", seed, "Random seed");
  }

  void load(std::initializer_list<const char*> sections) {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot open config " + config_path);
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw UsageError("config: invalid JSON: " + std::string(e.what()));
      }
      if (!doc.is_object()) throw UsageError("config: expected a JSON object");
      base = fs::absolute(config_path).parent_path();
    }
    for (const auto& [key, value] : doc.items()) {
      if (key == "seed") continue;
      if (std::none_of(sections.begin(), sections.end(), [&](const char* s) { return key == s; })) {
        throw UsageError("config." + key + ": unknown key for this command");
      }
    }
    if (seed_opt->count() > 0) return;
    if (doc.contains("seed")) {
      if (!doc["seed"].is_number_unsigned()) throw UsageError("config.seed: expected a non-negative integer");
      seed = doc["seed"].get<std::uint64_t>();
      return;
    }
    if (const char* env = std::getenv("SCENEKIT_SEED")) {
      try {
        std::size_t used = 0;
        seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("SCENEKIT_SEED is not an integer: ") + env);
      }
    }
  }

  json section(const char* name) const { return doc.contains(name) ? doc.at(name) : json(); }

  // Config-file paths are relative to the file.
  std::string path(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
    return (base / p).string();
  }
};

CropMode parse_crop_mode(const std::string& s) {
  if (s == "reproject") return CropMode::kReproject;
  if (s == "raw") return CropMode::kRaw;
  throw UsageError("crop mode must be reproject or raw, got \"" + s + "\"");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  std::string out;
  std::optional<int> things, min_things, max_things, width, height, crop_res;
  std::string crop_mode;
  bool no_oracles = false;
};

int run_synth(SynthArgs& a) {
  a.common.load({"synth"});
  SceneSpec spec;
  BundleOptions bundle;
  std::string out, crop_mode;
  bool oracles = true;
  Section s(a.common.section("synth"), "synth");
  s.get("out", out);
  s.get("min_things", spec.min_things);
  s.get("max_things", spec.max_things);
  if (!s.raw("things").is_null()) {
    int n = 0;
    s.get("things", n);
    spec.min_things = spec.max_things = n;
  }
  s.get("region", spec.region);
  s.get("sphere_radius_min", spec.sphere_radius_min);
  s.get("sphere_radius_max", spec.sphere_radius_max);
  s.get("box_edge_min", spec.box_edge_min);
  s.get("box_edge_max", spec.box_edge_max);
  s.get("ground_size", spec.ground_size);
  s.get("gap", spec.gap);
  s.get("width", spec.width);
  s.get("height", spec.height);
  s.get("fov_deg", spec.fov_deg);
  s.get("margin", spec.margin);
  s.get("min_visible_fraction", spec.min_visible_fraction);
  s.get("max_attempts", spec.max_attempts);
  s.get("crop_res", bundle.crop_res);
  s.get("crop_mode", crop_mode);
  s.get("tessellation", bundle.tessellation);
  s.get("oracles", oracles);
  s.get("oracle_noise", bundle.oracle.noise);
  s.get("oracle_scale_min", bundle.oracle.scale_min);
  s.get("oracle_scale_max", bundle.oracle.scale_max);
  s.get("oracle_mask_dilation", bundle.oracle.mask_dilation);
  s.finish();
  out = a.common.path(out);

  if (!a.out.empty()) out = a.out;
  if (a.things) spec.min_things = spec.max_things = *a.things;
  if (a.min_things) spec.min_things = *a.min_things;
  if (a.max_things) spec.max_things = *a.max_things;
  if (a.width) spec.width = *a.width;
  if (a.height) spec.height = *a.height;
  if (a.crop_res) bundle.crop_res = *a.crop_res;
  if (!a.crop_mode.empty()) crop_mode = a.crop_mode;
  if (a.no_oracles) oracles = false;
  if (!crop_mode.empty()) bundle.crop_mode = parse_crop_mode(crop_mode);
  bundle.write_oracles = oracles;
  if (out.empty()) throw UsageError("--out is required");
  if (bundle.crop_res < 16) throw UsageError("crop_res must be at least 16");

  const PrimitiveScene scene = generate_scene(a.common.seed, spec);
  const fs::path manifest = write_bundle(scene, out, bundle);
  std::cerr << "synth: " << scene.primitives.size() << " entities (" << scene.primitives.size() - 1
            << " things) -> " << manifest.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  Common common;
  std::string manifest, out;
  std::optional<int> jobs, crop_res, background_iterations, grid_resolution;
  std::string crop_mode, completion, completion_command, reconstruction, reconstruction_command;
  bool no_background = false;
};

int run_reconstruct(ReconstructArgs& a) {
  a.common.load({"manifest", "out", "pipeline"});
  std::string manifest_path, out;
  Section top(a.common.doc, "");
  top.get("manifest", manifest_path);
  top.get("out", out);
  manifest_path = a.common.path(manifest_path);
  out = a.common.path(out);
  PipelineConfig config;
  try {
    if (a.common.doc.contains("pipeline")) {
      json p = a.common.doc["pipeline"];
      if (p.contains("seed")) throw UsageError("config.pipeline.seed: use the top-level seed");
      config.merge_json(p);
    }
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  config.seed = a.common.seed;
  if (!a.manifest.empty()) manifest_path = a.manifest;
  if (!a.out.empty()) out = a.out;
  if (a.jobs) {
    if (*a.jobs < 0) throw UsageError("--jobs must be non-negative");
    config.jobs = static_cast<unsigned>(*a.jobs);
  }
  if (a.crop_res) config.crop_res = *a.crop_res;
  if (!a.crop_mode.empty()) config.crop_mode = parse_crop_mode(a.crop_mode);
  if (!a.completion.empty()) config.completion = a.completion;
  if (!a.completion_command.empty()) {
    config.completion_command = a.completion_command;
    if (a.completion.empty()) config.completion = "command";
  }
  if (!a.reconstruction.empty()) config.reconstruction = a.reconstruction;
  if (!a.reconstruction_command.empty()) {
    config.reconstruction_command = a.reconstruction_command;
    if (a.reconstruction.empty()) config.reconstruction = "command";
  }
  if (a.no_background) config.background = false;
  if (a.background_iterations) config.background_params.iterations = *a.background_iterations;
  if (a.grid_resolution) config.grid_resolution = *a.grid_resolution;
  if (manifest_path.empty()) throw UsageError("--manifest is required");
  if (out.empty()) throw UsageError("--out is required");
  try {
    config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const std::string started = timestamp();
  const SceneManifest manifest = load_manifest(manifest_path);
  const SceneResult result = reconstruct_scene(manifest, config);
  write_scene_outputs(result, config, manifest, out);

  json report = result.report_json(config, manifest);
  report["started_at"] = started;
  write_json(fs::path(out) / "report.json", report);

  for (const InstanceOutcome& o : result.instances) {
    std::cerr << "  " << o.id << ": " << to_string(o.status);
    if (o.status == InstanceStatus::kSkipped) {
      std::cerr << " [" << o.error << "] " << o.message;
    } else {
      std::cerr << " scale=" << o.estimate.scale << " inliers=" << o.estimate.inlier_fraction;
    }
    std::cerr << "\n";
  }
  std::cerr << "  background: " << result.background.status;
  if (!result.background.message.empty()) std::cerr << " (" << result.background.message << ")";
  std::cerr << "\nreconstruct: " << out << "/scene.obj\n";
  return result.exit_code();
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  Common common;
  std::string recon, gt, preset, out, csv;
  std::optional<double> tau;
  std::optional<long> points;
  bool foreground_only = false;
};

int run_evaluate(EvaluateArgs& a) {
  a.common.load({"evaluate"});
  std::string preset = "front", recon, gt, out, csv;
  std::optional<double> tau, gt_scale;
  std::optional<long> points;
  std::optional<bool> foreground;
  Section s(a.common.section("evaluate"), "evaluate");
  s.get("preset", preset);
  s.get("recon", recon);
  s.get("gt", gt);
  s.get("out", out);
  s.get("csv", csv);
  s.get("tau", tau);
  s.get("points", points);
  s.get("gt_scale", gt_scale);
  if (!s.raw("foreground_only").is_null()) foreground = s.raw("foreground_only").get<bool>();
  s.finish();
  recon = a.common.path(recon);
  gt = a.common.path(gt);
  out = a.common.path(out);
  csv = a.common.path(csv);

  if (!a.preset.empty()) preset = a.preset;
  if (!a.recon.empty()) recon = a.recon;
  if (!a.gt.empty()) gt = a.gt;
  if (!a.out.empty()) out = a.out;
  if (!a.csv.empty()) csv = a.csv;
  if (a.tau) tau = *a.tau;
  if (a.points) points = *a.points;
  if (a.foreground_only) foreground = true;
  if (recon.empty() || gt.empty()) throw UsageError("--recon and --gt are required");

  EvalProtocol protocol;
  if (preset != "custom") {
    const auto p = EvalProtocol::preset(preset);
    if (!p) throw UsageError("unknown preset \"" + preset + "\" (front, hope or custom)");
    protocol = *p;
  }
  if (tau) protocol.tau = *tau;
  if (points) {
    if (*points < 1) throw UsageError("points must be positive");
    protocol.n_points = static_cast<std::size_t>(*points);
  }
  if (gt_scale) protocol.gt_scale = *gt_scale;
  if (foreground) protocol.foreground_only = *foreground;
  protocol.seed = a.common.seed;
  if (!(protocol.tau > 0.0)) throw UsageError("tau must be positive");
  if (!(protocol.gt_scale > 0.0)) throw UsageError("gt_scale must be positive");

  const auto t0 = std::chrono::steady_clock::now();
  const EvalReport report = evaluate_scene(read_mesh(recon), read_mesh(gt), protocol);
  json doc = report.to_json();
  doc = {{"schema_version", kReportSchemaVersion},
         {"command", "evaluate"},
         {"recon", recon},
         {"gt", gt},
         {"protocol", doc["protocol"]},
         {"metrics", doc["metrics"]},
         {"components", doc["components"]},
         {"started_at", timestamp()},
         {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  if (!out.empty()) write_json(out, doc);
  if (!csv.empty()) write_text(csv, report.to_csv());
  std::cout << std::setprecision(6) << "chamfer " << report.chamfer << "\nf_score " << report.f.f_score
            << "\nprecision " << report.f.precision << "\nrecall " << report.f.recall << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// amodal

struct AmodalSource {
  std::string id;
  std::string prompt;
  Image image;
  EntityMask mask;
};

// Things of generated scenes, each rendered on its own.
std::vector<AmodalSource> synthetic_sources(const std::string& prefix, std::uint64_t seed, int count) {
  const SceneSpec spec;
  std::vector<AmodalSource> out;
  for (std::uint64_t k = 0; static_cast<int>(out.size()) < count; ++k) {
    const PrimitiveScene scene = generate_scene(derive_seed(seed, k), spec);
    for (const Primitive& p : scene.primitives) {
      if (p.category != Category::kThing || static_cast<int>(out.size()) >= count) continue;
      const RenderResult r = raycast_render(scene, p.id);
      out.push_back({prefix + std::to_string(k) + "_" + instance_id(p), p.label,
                     quantize_8bit(r.rgb), r.mask_of(p.id)});
    }
  }
  return out;
}

// <stem>.png with <stem>_mask.png next to it; occluders need only the mask.
std::vector<AmodalSource> directory_sources(const fs::path& dir, bool need_image) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> masks;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 9 && name.ends_with("_mask.png")) masks.push_back(e.path());
  }
  std::sort(masks.begin(), masks.end());
  std::vector<AmodalSource> out;
  for (const fs::path& m : masks) {
    std::string stem = m.filename().string();
    stem.resize(stem.size() - 9);
    AmodalSource src{stem, stem, {}, read_mask_png(m)};
    if (need_image) src.image = read_png(dir / (stem + ".png"));
    out.push_back(std::move(src));
  }
  if (out.empty()) throw UsageError("no *_mask.png files in " + dir.string());
  return out;
}

struct AmodalArgs {
  Common common;
  std::string out, target_dir, occluder_dir;
  std::optional<int> targets, occluders, max_tries;
  std::optional<double> lo, hi;
  bool audit = false;
};

int run_amodal(AmodalArgs& a) {
  a.common.load({"amodal"});
  std::string out, target_dir, occluder_dir;
  int targets = 10, occluders = 5, max_tries = 100;
  OcclusionRange range;
  bool audit = false;
  Section s(a.common.section("amodal"), "amodal");
  s.get("out", out);
  s.get("targets", targets);
  s.get("occluders", occluders);
  s.get("target_dir", target_dir);
  s.get("occluder_dir", occluder_dir);
  s.get("occlusion_min", range.lo);
  s.get("occlusion_max", range.hi);
  s.get("max_tries", max_tries);
  s.get("audit", audit);
  s.finish();
  out = a.common.path(out);
  target_dir = a.common.path(target_dir);
  occluder_dir = a.common.path(occluder_dir);

  if (!a.out.empty()) out = a.out;
  if (!a.target_dir.empty()) target_dir = a.target_dir;
  if (!a.occluder_dir.empty()) occluder_dir = a.occluder_dir;
  if (a.targets) targets = *a.targets;
  if (a.occluders) occluders = *a.occluders;
  if (a.lo) range.lo = *a.lo;
  if (a.hi) range.hi = *a.hi;
  if (a.max_tries) max_tries = *a.max_tries;
  if (targets < 1 || occluders < 1) throw UsageError("targets and occluders must be positive");
  if (a.audit) audit = true;
  if (out.empty()) throw UsageError("--out is required");
  if (!(range.lo >= 0.0 && range.lo <= range.hi && range.hi <= 1.0)) {
    throw UsageError("occlusion range must satisfy 0 <= min <= max <= 1");
  }
  if (max_tries < 1) throw UsageError("max_tries must be positive");

  const std::uint64_t seed = a.common.seed;
  const std::vector<AmodalSource> tgt =
      target_dir.empty() ? synthetic_sources("target", derive_seed(seed, 0x7a), targets)
                         : directory_sources(target_dir, true);
  const std::vector<AmodalSource> occ =
      occluder_dir.empty() ? synthetic_sources("occluder", derive_seed(seed, 0x0c), occluders)
                           : directory_sources(occluder_dir, false);

  fs::create_directories(fs::path(out) / "pairs");
  std::ostringstream index;
  json failures = json::array();
  json audit_failures = json::array();
  std::size_t written = 0;
  const Image neutral_px(1, 1, kNeutral);
  const float neutral = quantize_8bit(neutral_px).rgb[0];
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    for (std::size_t o = 0; o < occ.size(); ++o) {
      const std::size_t k = t * occ.size() + o;
      const std::uint64_t pair_seed = derive_seed(seed, k);
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu", k);
      AmodalPair pair;
      try {
        pair = compose_amodal_pair(tgt[t].image, tgt[t].mask, occ[o].mask, tgt[t].prompt, pair_seed,
                                   range, max_tries);
      } catch (const Error& e) {
        failures.push_back({{"pair", name}, {"target", tgt[t].id}, {"occluder", occ[o].id},
                            {"error", to_string(e.code())}, {"message", e.what()}});
        std::cerr << "amodal: pair " << name << " (" << tgt[t].id << " x " << occ[o].id
                  << ") failed: " << e.what() << "\n";
        continue;
      }
      const std::string base = std::string("pairs/") + name;
      write_png(fs::path(out) / (base + "_conditioning.png"), pair.conditioning);
      write_png(fs::path(out) / (base + "_target.png"), pair.target);
      write_mask_png(fs::path(out) / (base + "_mask.png"), pair.target_mask);
      ++written;
      const json line = {{"pair", name},
                         {"conditioning", base + "_conditioning.png"},
                         {"target", base + "_target.png"},
                         {"mask", base + "_mask.png"},
                         {"target_id", tgt[t].id},
                         {"occluder_id", occ[o].id},
                         {"prompt", pair.prompt},
                         {"seed", pair.seed},
                         {"occluded_fraction", pair.occluded_fraction}};
      index << line.dump() << "\n";

      if (!audit) continue;
      // Re-read the emitted files: every conditioning pixel is the target pixel
      // or neutral on all channels.
      const Image cond = read_png(fs::path(out) / (base + "_conditioning.png"));
      const Image full = read_png(fs::path(out) / (base + "_target.png"));
      std::size_t bad = 0;
      for (std::size_t p = 0; p < cond.rgb.size(); p += 3) {
        const bool same = std::equal(&cond.rgb[p], &cond.rgb[p] + 3, &full.rgb[p]);
        const bool neut = cond.rgb[p] == neutral && cond.rgb[p + 1] == neutral && cond.rgb[p + 2] == neutral;
        bad += !(same || neut);
      }
      const bool in_range = pair.occluded_fraction >= range.lo && pair.occluded_fraction <= range.hi;
      if (bad || !in_range) {
        audit_failures.push_back({{"pair", name}, {"bad_pixels", bad}, {"occluded_fraction", pair.occluded_fraction}});
      }
    }
  }
  write_text(fs::path(out) / "index.jsonl", index.str());

  json report = {{"schema_version", kReportSchemaVersion},
                 {"command", "amodal"},
                 {"seed", seed},
                 {"occlusion_range", {range.lo, range.hi}},
                 {"targets", tgt.size()},
                 {"occluders", occ.size()},
                 {"pairs", written},
                 {"failures", failures},
                 {"started_at", timestamp()}};
  if (audit) report["audit"] = {{"checked", written}, {"failures", audit_failures}};
  write_json(fs::path(out) / "report.json", report);
  std::cerr << "amodal: " << written << " pairs, " << failures.size() << " failures";
  if (audit) std::cerr << ", audit " << (audit_failures.empty() ? "passed" : "FAILED");
  std::cerr << "\n";
  return failures.empty() && audit_failures.empty() ? kExitOk : kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional single-view scene reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "scenekit 0.1.0");

  SynthArgs synth;
  auto* cs = app.add_subcommand("synth", "Generate a synthetic scene bundle");
  synth.common.add_to(*cs);
  cs->add_option("--out,-o", synth.out, "Output directory");
  cs->add_option("--things", synth.things, "Exact number of things");
  cs->add_option("--min-things", synth.min_things);
  cs->add_option("--max-things", synth.max_things);
  cs->add_option("--width", synth.width);
  cs->add_option("--height", synth.height);
  cs->add_option("--crop-res", synth.crop_res, "Resolution of the oracle completions");
  cs->add_option("--crop-mode", synth.crop_mode, "reproject or raw");
  cs->add_flag("--no-oracles", synth.no_oracles, "Skip oracle completions and reconstructions");

  ReconstructArgs rec;
  auto* cr = app.add_subcommand("reconstruct", "Reconstruct a scene from a manifest");
  rec.common.add_to(*cr);
  cr->add_option("--manifest,-m", rec.manifest, "Scene manifest JSON");
  cr->add_option("--out,-o", rec.out, "Output directory");
  cr->add_option("--jobs,-j", rec.jobs, "Instance workers (0: one per core)");
  cr->add_option("--crop-res", rec.crop_res);
  cr->add_option("--crop-mode", rec.crop_mode, "reproject or raw");
  cr->add_option("--completion", rec.completion, "manifest, identity or command");
  cr->add_option("--completion-command", rec.completion_command);
  cr->add_option("--reconstruction", rec.reconstruction, "manifest or command");
  cr->add_option("--reconstruction-command", rec.reconstruction_command);
  cr->add_flag("--no-background", rec.no_background);
  cr->add_option("--background-iterations", rec.background_iterations);
  cr->add_option("--grid", rec.grid_resolution, "Background grid resolution");

  EvaluateArgs ev;
  auto* ce = app.add_subcommand("evaluate", "Compare a reconstruction with ground truth");
  ev.common.add_to(*ce);
  ce->add_option("--recon", ev.recon, "Reconstructed mesh (OBJ or PLY)");
  ce->add_option("--gt", ev.gt, "Ground-truth mesh (OBJ or PLY)");
  ce->add_option("--preset", ev.preset, "front, hope or custom");
  ce->add_option("--tau", ev.tau);
  ce->add_option("--points", ev.points);
  ce->add_flag("--foreground-only", ev.foreground_only);
  ce->add_option("--out,-o", ev.out, "Report JSON");
  ce->add_option("--csv", ev.csv, "Per-component CSV");

  AmodalArgs am;
  auto* ca = app.add_subcommand("amodal", "Compose amodal completion training pairs");
  am.common.add_to(*ca);
  ca->add_option("--out,-o", am.out, "Output directory");
  ca->add_option("--targets", am.targets, "Number of synthetic targets");
  ca->add_option("--occluders", am.occluders, "Number of synthetic occluders");
  ca->add_option("--target-dir", am.target_dir, "Directory of <name>.png + <name>_mask.png");
  ca->add_option("--occluder-dir", am.occluder_dir, "Directory of <name>_mask.png silhouettes");
  ca->add_option("--min-occlusion", am.lo);
  ca->add_option("--max-occlusion", am.hi);
  ca->add_option("--max-tries", am.max_tries);
  ca->add_flag("--audit", am.audit, "Verify the emitted pairs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*cs) return run_synth(synth);
    if (*cr) return run_reconstruct(rec);
    if (*ce) return run_evaluate(ev);
    if (*ca) return run_amodal(am);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
