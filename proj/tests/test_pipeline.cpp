#include <fstream>
#include <sstream>

#include <doctest.h>

#include "e2e.hpp"
#include "scenekit/error.hpp"
#include "scenekit/pipeline.hpp"
#include "scenekit/synth.hpp"
#include "support.hpp"

using namespace scenekit;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string domain_error(PipelineConfig& c, const json& doc) {
  try {
    c.merge_json(doc);
    c.validate();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDomain);
    return e.what();
  }
  return {};
}

PipelineConfig fast_config() {
  PipelineConfig c;
  c.crop_res = 128;
  c.background = false;
  c.jobs = 1;
  return c;
}

}  // namespace

TEST_CASE("pipeline config merge and validation") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  c.merge_json({{"seed", 9},
                {"crop_mode", "raw"},
                {"ransac", {{"tolerance", 0.02}}},
                {"background", {{"enabled", false}, {"grid_resolution", 64}}}});
  CHECK(c.seed == 9);
  CHECK(c.crop_mode == CropMode::kRaw);
  CHECK(c.ransac.tolerance == 0.02);
  CHECK(c.ransac.iterations == RansacParams{}.iterations);
  CHECK_FALSE(c.background);
  CHECK(c.grid_resolution == 64);

  PipelineConfig d;
  d.merge_json(c.to_json());
  CHECK(d.to_json() == c.to_json());

  PipelineConfig e;
  CHECK(domain_error(e, {{"ransac", {{"tol", 1}}}}).rfind("config.ransac.tol: unknown key", 0) == 0);
  CHECK(domain_error(e, {{"bogus", 1}}).rfind("config.bogus", 0) == 0);
  CHECK(domain_error(e, {{"crop_res", "big"}}).rfind("config.crop_res", 0) == 0);
  PipelineConfig f;
  CHECK(domain_error(f, {{"crop_mode", "fisheye"}}).rfind("config.crop_mode", 0) == 0);
  PipelineConfig g;
  CHECK(domain_error(g, {{"completion", {{"mode", "command"}}}}).rfind("config.completion.command", 0) == 0);
  PipelineConfig h;
  CHECK(domain_error(h, {{"crop_res", 4}}).rfind("config.crop_res", 0) == 0);
}

TEST_CASE("metric_depth aligns affine depth to the anchor") {
  SceneManifest m;
  m.depth = DepthMap(4, 2);
  m.metric_anchor = DepthMap(4, 2);
  for (std::size_t i = 0; i < m.depth.size(); ++i) {
    m.metric_anchor->values[i] = 1.0 + 0.25 * i;
    m.depth.values[i] = (m.metric_anchor->values[i] - 0.5) / 4.0;
  }
  CHECK(metric_depth(m).values == m.depth.values);
  m.depth_kind = DepthKind::kAffine;
  std::optional<ScaleShift> fit;
  const DepthMap d = metric_depth(m, &fit);
  REQUIRE(fit.has_value());
  CHECK(fit->scale == doctest::Approx(4.0).epsilon(1e-12));
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d.values[i] - m.metric_anchor->values[i]) < 1e-12);
  m.metric_anchor.reset();
  CHECK_THROWS_AS(metric_depth(m), Error);
}

TEST_CASE("oracle bundle reconstructs the scene") {
  testing::OracleVariant v;
  v.from_bundle = true;
  const testing::OracleRun run = testing::run_oracle_scene(3, v);
  CHECK(run.skipped == 0);
  CHECK(run.fallback == 0);
  CHECK(run.placed >= 3);
  CHECK(run.f_score >= 95.0);
  CHECK(run.chamfer <= 0.02);
}

TEST_CASE("pipeline outputs, skipped instances and determinism") {
  const PrimitiveScene scene = generate_scene(4);
  testing::ScratchDir dir("pipeline");
  BundleOptions bundle;
  bundle.crop_res = 128;
  const auto manifest_path = write_bundle(scene, dir.path(), bundle);

  // Hand two floor pixels to a new, degenerate thing.
  json doc = json::parse(slurp(manifest_path));
  EntityMask floor = read_mask_png(dir / "masks/ground.png");
  EntityMask speck(floor.width, floor.height);
  int taken = 0;
  for (int u = 0; u < floor.width && taken < 2; ++u) {
    const int v = floor.height - 1;
    if (!floor.at(u, v)) continue;
    floor.set(u, v, false);
    speck.set(u, v);
    ++taken;
  }
  REQUIRE(taken == 2);
  write_mask_png(dir / "masks/ground.png", floor);
  write_mask_png(dir / "masks/speck.png", speck);
  doc["instances"].push_back({{"id", "speck"}, {"label", "crumb"}, {"category", "thing"}, {"mask", "masks/speck.png"}});
  std::ofstream(manifest_path) << doc.dump(2);

  const SceneManifest manifest = load_manifest(manifest_path);
  PipelineConfig config = fast_config();
  const SceneResult result = reconstruct_scene(manifest, config);
  CHECK(result.exit_code() == 1);
  CHECK(result.background.status == "disabled");

  std::vector<std::string> ids;
  for (const InstanceOutcome& o : result.instances) ids.push_back(o.id);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  const auto speck_it = std::find(ids.begin(), ids.end(), "speck");
  REQUIRE(speck_it != ids.end());
  const InstanceOutcome& s = result.instances[speck_it - ids.begin()];
  CHECK(s.status == InstanceStatus::kSkipped);
  CHECK(s.error == "degenerate_instance");
  CHECK_FALSE(s.message.empty());
  std::size_t placed = 0;
  for (const InstanceOutcome& o : result.instances) placed += o.status == InstanceStatus::kPlaced;
  CHECK(placed + 1 == result.instances.size());
  CHECK(result.scene.groups.size() == placed);

  const auto out_a = dir / "out_a";
  write_scene_outputs(result, config, manifest, out_a);
  const json report = json::parse(slurp(out_a / "report.json"));
  CHECK(report["schema_version"] == kReportSchemaVersion);
  CHECK(report["exit_code"] == 1);
  CHECK(report["summary"]["skipped"] == 1);
  CHECK(report["config"] == config.to_json());
  for (const json& inst : report["instances"]) {
    if (inst["status"] == "placed") {
      CHECK(inst["scale"].get<double>() > 0.0);
      CHECK(inst["inlier_fraction"].get<double>() > 0.5);
    }
  }
  const json index = json::parse(slurp(out_a / "scene_index.json"));
  CHECK(index["components"].size() == placed);
  const TriangleMesh back = read_obj(out_a / "scene.obj");
  CHECK(back.faces.size() == result.scene.faces.size());

  config.jobs = 3;
  const SceneResult again = reconstruct_scene(manifest, config);
  config.jobs = 1;
  const auto out_b = dir / "out_b";
  write_scene_outputs(again, config, manifest, out_b);
  CHECK(slurp(out_a / "scene.obj") == slurp(out_b / "scene.obj"));
  CHECK(slurp(out_a / "scene_index.json") == slurp(out_b / "scene_index.json"));
}

TEST_CASE("hook resolution failures skip the instance") {
  const PrimitiveScene scene = generate_scene(2);
  testing::ScratchDir dir("hooks");
  BundleOptions bundle;
  bundle.crop_res = 64;
  bundle.write_oracles = false;
  const SceneManifest manifest = load_manifest(write_bundle(scene, dir.path(), bundle));

  PipelineConfig config = fast_config();
  config.crop_res = 64;
  SceneResult r = reconstruct_scene(manifest, config);
  REQUIRE_FALSE(r.instances.empty());
  for (const InstanceOutcome& o : r.instances) {
    CHECK(o.status == InstanceStatus::kSkipped);
    CHECK(o.error == "completion");
  }
  CHECK(r.exit_code() == 1);
  CHECK(r.scene.empty());

  config.completion = "identity";
  config.reconstruction = "command";
  config.reconstruction_command = "false";
  r = reconstruct_scene(manifest, config);
  for (const InstanceOutcome& o : r.instances) CHECK(o.error == "reconstruction");
}

TEST_CASE("background is fitted and merged") {
  const PrimitiveScene scene = generate_scene(1);
  testing::ScratchDir dir("bg");
  BundleOptions bundle;
  bundle.crop_res = 128;
  const SceneManifest manifest = load_manifest(write_bundle(scene, dir.path(), bundle));
  PipelineConfig config = fast_config();
  config.background = true;
  config.background_params.iterations = 150;
  config.grid_resolution = 24;
  const SceneResult r = reconstruct_scene(manifest, config);
  REQUIRE(r.background.status == "fitted");
  CHECK(r.background.near < r.background.far);
  CHECK(std::isfinite(r.background.final_sdf_loss));
  CHECK_FALSE(r.scene.groups.empty());
  CHECK(r.scene.groups.back().name == "background");
  CHECK(r.exit_code() == 0);

  write_scene_outputs(r, config, manifest, dir / "out");
  const auto fields = read_fields(dir / "out/background.field");
  CHECK(fields.size() == 2);
  const json index = json::parse(slurp(dir / "out/scene_index.json"));
  CHECK(index["components"].back()["source"] == "background_field");

  // Without stuff pixels the background is reported absent, not failed.
  SceneManifest things_only = manifest;
  for (InstanceRecord& rec : things_only.instances) rec.category = Category::kThing;
  things_only.instances.erase(
      std::remove_if(things_only.instances.begin(), things_only.instances.end(),
                     [](const InstanceRecord& rec) { return rec.id == "ground"; }),
      things_only.instances.end());
  const SceneResult none = reconstruct_scene(things_only, config);
  CHECK(none.background.status == "absent");
  CHECK(none.exit_code() == 0);
}
