#include "scenekit/scene.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <utility>

#include "scenekit/error.hpp"

namespace scenekit {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Category c) { return c == Category::kThing ? "thing" : "stuff"; }
const char* to_string(DepthKind k) { return k == DepthKind::kMetric ? "metric" : "affine"; }

namespace {

[[noreturn]] void ingest_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kIngest, field + ": " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& prefix) {
  const std::string field = prefix.empty() ? key : prefix + "." + key;
  if (!obj.is_object() || !obj.contains(key)) ingest_error(field, "missing required field");
  return obj.at(key);
}

std::string require_string(const json& obj, const std::string& key, const std::string& prefix) {
  const json& v = require(obj, key, prefix);
  if (!v.is_string()) ingest_error(prefix.empty() ? key : prefix + "." + key, "expected a string");
  return v.get<std::string>();
}

double require_number(const json& obj, const std::string& key, const std::string& prefix) {
  const json& v = require(obj, key, prefix);
  if (!v.is_number()) ingest_error(prefix + "." + key, "expected a number");
  return v.get<double>();
}

fs::path resolve_existing(const fs::path& base, const std::string& rel, const std::string& field) {
  const fs::path p = base / rel;
  if (!fs::exists(p)) ingest_error(field, "file not found: " + p.string());
  return p;
}

template <typename Fn>
auto parse_file(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    ingest_error(field, e.what());
  }
}

Mat3 parse_matrix(const json& rows, const std::string& field) {
  if (!rows.is_array() || rows.size() != 3) ingest_error(field, "expected a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 3) ingest_error(field, "expected a 3x3 array");
    for (int c = 0; c < 3; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

Vec3 parse_vec3(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 3) ingest_error(field, "expected 3 numbers");
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

}  // namespace

SceneManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIngest, std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) ingest_error("manifest", "expected a JSON object");

  SceneManifest m;
  m.manifest_path = fs::absolute(path);
  const fs::path base = m.manifest_path.parent_path();

  if (doc.contains("schema_version") &&
      doc["schema_version"].get<int>() != kManifestSchemaVersion) {
    ingest_error("schema_version", "unsupported version " + doc["schema_version"].dump());
  }

  try {
    const json& cam = require(doc, "camera", "");
    m.camera.fx = require_number(cam, "fx", "camera");
    m.camera.fy = require_number(cam, "fy", "camera");
    m.camera.cx = require_number(cam, "cx", "camera");
    m.camera.cy = require_number(cam, "cy", "camera");
    m.camera.width = static_cast<int>(require_number(cam, "width", "camera"));
    m.camera.height = static_cast<int>(require_number(cam, "height", "camera"));
    try {
      m.camera.validate();
    } catch (const Error& e) {
      ingest_error("camera", e.what());
    }
    if (cam.contains("pose")) {
      RigidPose pose;
      pose.rotation = parse_matrix(require(cam["pose"], "rotation", "camera.pose"),
                                   "camera.pose.rotation");
      pose.translation = parse_vec3(require(cam["pose"], "translation", "camera.pose"),
                                    "camera.pose.translation");
      if (!pose.is_valid(1e-6)) ingest_error("camera.pose.rotation", "not a proper rotation");
      m.pose = pose;
    }

    if (doc.contains("units")) m.units = doc["units"].get<std::string>();

    const std::string kind = doc.value("depth_kind", std::string("metric"));
    if (kind == "metric") {
      m.depth_kind = DepthKind::kMetric;
    } else if (kind == "affine") {
      m.depth_kind = DepthKind::kAffine;
    } else {
      ingest_error("depth_kind", "expected \"metric\" or \"affine\", got \"" + kind + "\"");
    }

    m.image_path = resolve_existing(base, require_string(doc, "image", ""), "image");
    m.depth_path = resolve_existing(base, require_string(doc, "depth", ""), "depth");
    m.image = parse_file("image", [&] { return read_png(m.image_path); });
    m.depth = parse_file("depth", [&] { return read_pfm(m.depth_path); });
    const auto check_res = [&](int w, int h, const std::string& field) {
      if (w != m.camera.width || h != m.camera.height) {
        ingest_error(field, "resolution " + std::to_string(w) + "x" + std::to_string(h) +
                                " does not match camera " + std::to_string(m.camera.width) +
                                "x" + std::to_string(m.camera.height));
      }
    };
    check_res(m.image.width, m.image.height, "image");
    check_res(m.depth.width, m.depth.height, "depth");

    if (doc.contains("metric_anchor") && !doc["metric_anchor"].is_null()) {
      m.metric_anchor_path =
          resolve_existing(base, doc["metric_anchor"].get<std::string>(), "metric_anchor");
      m.metric_anchor = parse_file("metric_anchor", [&] { return read_pfm(*m.metric_anchor_path); });
      check_res(m.metric_anchor->width, m.metric_anchor->height, "metric_anchor");
    }
    if (m.depth_kind == DepthKind::kAffine && !m.metric_anchor) {
      ingest_error("metric_anchor", "required when depth_kind is \"affine\"");
    }

    const json& instances = require(doc, "instances", "");
    if (!instances.is_array()) ingest_error("instances", "expected an array");
    std::map<std::string, std::size_t> seen_ids;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const std::string prefix = "instances[" + std::to_string(i) + "]";
      const json& j = instances[i];
      InstanceRecord rec;
      rec.id = j.contains("id") ? j["id"].get<std::string>() : "instance_" + std::to_string(i);
      if (seen_ids.count(rec.id)) ingest_error(prefix + ".id", "duplicate id \"" + rec.id + "\"");
      seen_ids[rec.id] = i;
      rec.label = j.value("label", std::string());
      const std::string cat = require_string(j, "category", prefix);
      if (cat == "thing") {
        rec.category = Category::kThing;
      } else if (cat == "stuff") {
        rec.category = Category::kStuff;
      } else {
        ingest_error(prefix + ".category", "expected \"thing\" or \"stuff\", got \"" + cat + "\"");
      }
      const fs::path mask_path =
          resolve_existing(base, require_string(j, "mask", prefix), prefix + ".mask");
      rec.mask = parse_file(prefix + ".mask", [&] { return read_mask_png(mask_path); });
      rec.mask_path = mask_path;
      if (rec.mask.width != m.camera.width || rec.mask.height != m.camera.height) {
        ingest_error(prefix + ".mask", "instance \"" + rec.id + "\" mask resolution " +
                                           std::to_string(rec.mask.width) + "x" +
                                           std::to_string(rec.mask.height) +
                                           " does not match camera " +
                                           std::to_string(m.camera.width) + "x" +
                                           std::to_string(m.camera.height));
      }
      rec.box = bounding_box(rec.mask);
      if (!rec.box.empty()) {
        rec.crop_rgb = crop_image(m.image, rec.box);
        rec.crop_depth = crop_depth(m.depth, rec.box);
      }
      if (j.contains("completion") && !j["completion"].is_null()) {
        rec.completion_path = resolve_existing(base, j["completion"].get<std::string>(),
                                               prefix + ".completion");
      }
      if (j.contains("reconstruction") && !j["reconstruction"].is_null()) {
        rec.recon_mesh_path = resolve_existing(base, j["reconstruction"].get<std::string>(),
                                               prefix + ".reconstruction");
      }
      m.instances.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIngest, std::string("manifest: ") + e.what());
  }

  // Entity masks partition the image: any shared pixel is an ingest error.
  std::vector<int> owner(static_cast<std::size_t>(m.camera.width) * m.camera.height, -1);
  for (std::size_t i = 0; i < m.instances.size(); ++i) {
    std::map<int, std::size_t> overlaps;
    const auto& bits = m.instances[i].mask.bits;
    for (std::size_t p = 0; p < bits.size(); ++p) {
      if (!bits[p]) continue;
      if (owner[p] >= 0) {
        ++overlaps[owner[p]];
      } else {
        owner[p] = static_cast<int>(i);
      }
    }
    if (!overlaps.empty()) {
      const auto& [other, count] = *overlaps.begin();
      ingest_error("instances[" + std::to_string(i) + "].mask",
                   "instance \"" + m.instances[i].id + "\" overlaps instance \"" +
                       m.instances[other].id + "\" on " + std::to_string(count) + " pixels");
    }
  }
  return m;
}

json manifest_to_json(const SceneManifest& m, const fs::path& base_dir) {
  const auto rel = [&](const fs::path& p) {
    return fs::relative(p, base_dir).generic_string();
  };
  json doc;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["image"] = rel(m.image_path);
  doc["depth"] = rel(m.depth_path);
  doc["depth_kind"] = to_string(m.depth_kind);
  if (m.metric_anchor_path) doc["metric_anchor"] = rel(*m.metric_anchor_path);
  doc["units"] = m.units;
  json cam = {{"fx", m.camera.fx}, {"fy", m.camera.fy}, {"cx", m.camera.cx},
              {"cy", m.camera.cy}, {"width", m.camera.width}, {"height", m.camera.height}};
  if (m.pose) {
    json rows = json::array();
    for (int r = 0; r < 3; ++r) {
      rows.push_back({m.pose->rotation(r, 0), m.pose->rotation(r, 1), m.pose->rotation(r, 2)});
    }
    cam["pose"] = {{"rotation", rows},
                   {"translation",
                    {m.pose->translation.x(), m.pose->translation.y(), m.pose->translation.z()}}};
  }
  doc["camera"] = cam;
  json instances = json::array();
  for (const InstanceRecord& r : m.instances) {
    json j = {{"id", r.id}, {"label", r.label}, {"category", to_string(r.category)}};
    j["mask"] = rel(r.mask_path);
    if (r.completion_path) j["completion"] = rel(*r.completion_path);
    if (r.recon_mesh_path) j["reconstruction"] = rel(*r.recon_mesh_path);
    instances.push_back(j);
  }
  doc["instances"] = instances;
  return doc;
}

ScaleShift fit_scale_shift(const DepthMap& affine_depth, const DepthMap& anchor_depth) {
  if (affine_depth.width != anchor_depth.width || affine_depth.height != anchor_depth.height) {
    throw Error(ErrorCode::kDimension, "affine and anchor depth maps differ in resolution");
  }
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < affine_depth.size(); ++i) {
    // The affine map may legitimately hold values <= 0; only finiteness is required.
    if (std::isfinite(affine_depth.values[i]) && anchor_depth.valid(i)) {
      pairs.emplace_back(affine_depth.values[i], anchor_depth.values[i]);
    }
  }
  if (pairs.size() < 2) {
    throw Error(ErrorCode::kRankDeficient,
                "need at least 2 jointly valid pixels, have " + std::to_string(pairs.size()));
  }
  const double n = static_cast<double>(pairs.size());
  double mean_a = 0.0, mean_m = 0.0;
  for (const auto& [a, m] : pairs) {
    mean_a += a;
    mean_m += m;
  }
  mean_a /= n;
  mean_m /= n;
  double saa = 0.0, sam = 0.0;
  for (const auto& [a, m] : pairs) {
    saa += (a - mean_a) * (a - mean_a);
    sam += (a - mean_a) * (m - mean_m);
  }
  if (!(saa > 0.0)) {
    throw Error(ErrorCode::kRankDeficient, "all affine depth values are equal");
  }
  ScaleShift fit;
  fit.scale = sam / saa;
  fit.shift = mean_m - fit.scale * mean_a;
  fit.pixel_count = pairs.size();
  fit.non_positive_scale = fit.scale <= 0.0;
  return fit;
}

DepthMap apply_scale_shift(const DepthMap& depth, const ScaleShift& fit) {
  DepthMap out = depth;
  for (double& d : out.values) {
    if (std::isfinite(d)) d = fit.scale * d + fit.shift;
  }
  return out;
}

EntityPartition partition_entities(const SceneManifest& manifest) {
  EntityPartition part;
  part.stuff_union = EntityMask(manifest.camera.width, manifest.camera.height);
  for (const InstanceRecord& rec : manifest.instances) {
    if (rec.category == Category::kThing) {
      part.things.push_back(rec);
      continue;
    }
    for (std::size_t p = 0; p < rec.mask.bits.size(); ++p) {
      if (rec.mask.bits[p]) part.stuff_union.bits[p] = 1;
    }
  }
  return part;
}

}  // namespace scenekit
