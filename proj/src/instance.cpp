#include "scenekit/instance.hpp"

#include <stdlib.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scenekit/error.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/random.hpp"
#include "scenekit/render.hpp"

namespace scenekit {

const char* to_string(CropMode mode) noexcept {
  switch (mode) {
    case CropMode::kReproject: return "reproject";
    case CropMode::kRaw: return "raw";
  }
  return "unknown";
}

Projection NormalizedCrop::locate(const Vec3& view_point) const {
  if (mode == CropMode::kReproject) {
    return project(camera.normalization.apply(view_point), camera.intr, camera.pose);
  }
  Projection p = project(view_point, raw.source);
  if (p.behind) return p;
  p.u = (p.u - raw.offset_u) * raw.zoom;
  p.v = (p.v - raw.offset_v) * raw.zoom;
  p.depth = raw.depth_scale * view_point.z() + raw.depth_offset;
  p.behind = !(p.depth > 0.0);
  return p;
}

Vec3 NormalizedCrop::normalized_point(double u, double v, double z) const {
  return camera.pose.inverse().apply(pixel_ray(camera.intr, u, v) * z);
}

void NormalizedCrop::validate() const {
  const int r = resolution;
  if (r < 1 || rgb.width != r || rgb.height != r || mask.width != r || mask.height != r ||
      depth.width != r || depth.height != r) {
    throw Error(ErrorCode::kDimension, "crop buffers must all be " + std::to_string(r) + "x" +
                                           std::to_string(r));
  }
}

namespace {

NormalizedCrop blank_crop(int crop_res) {
  if (crop_res < 1) throw Error(ErrorCode::kDomain, "crop resolution must be positive");
  NormalizedCrop crop;
  crop.resolution = crop_res;
  crop.rgb = Image(crop_res, crop_res, kNeutral);
  crop.mask = EntityMask(crop_res, crop_res);
  crop.depth = DepthMap(crop_res, crop_res);
  return crop;
}

void clear_buffers(NormalizedCrop& crop) {
  const NormalizedCrop blank = blank_crop(crop.resolution);
  crop.rgb = blank.rgb;
  crop.mask = blank.mask;
  crop.depth = blank.depth;
}

void check_inputs(const EntityMask& mask, const DepthMap& depth, const Image& image,
                  const CameraIntrinsics& intr) {
  intr.validate();
  if (mask.width != intr.width || mask.height != intr.height || depth.width != intr.width ||
      depth.height != intr.height || image.width != intr.width || image.height != intr.height) {
    throw Error(ErrorCode::kDimension, "mask, depth and image must match the camera resolution");
  }
}

void write_pixel(NormalizedCrop& crop, int u, int v, double z, const float* color) {
  double& d = crop.depth.at(u, v);
  if (crop.depth.valid(u, v) && d <= z) return;
  d = z;
  float* dst = crop.rgb.pixel(u, v);
  dst[0] = color[0];
  dst[1] = color[1];
  dst[2] = color[2];
  crop.mask.set(u, v);
}

void splat(NormalizedCrop& crop, const EntityMask& mask, const DepthMap& depth,
           const Image& image, const CameraIntrinsics& intr) {
  const double f_crop = crop.camera.intr.fx;
  const double a = crop.camera.normalization.scale;
  const int r = crop.resolution;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (!mask.at(u, v) || !depth.valid(u, v)) continue;
      const double d = depth.at(u, v);
      const Vec3 p((u + 0.5 - intr.cx) * d / intr.fx, (v + 0.5 - intr.cy) * d / intr.fy, d);
      const Projection q = crop.locate(p);
      if (q.behind) continue;
      const int cu = static_cast<int>(std::floor(q.u));
      const int cv = static_cast<int>(std::floor(q.v));
      const double magnification = (d / intr.fx) * a * f_crop / q.depth;
      const int radius = magnification > 1.5 ? 1 : 0;
      const float* color = image.pixel(u, v);
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          const int tu = cu + du;
          const int tv = cv + dv;
          if (tu < 0 || tv < 0 || tu >= r || tv >= r) continue;
          write_pixel(crop, tu, tv, q.depth, color);
        }
      }
    }
  }
}

void resample(NormalizedCrop& crop, const EntityMask& mask, const DepthMap& depth,
              const Image& image) {
  const int r = crop.resolution;
  for (int v = 0; v < r; ++v) {
    for (int u = 0; u < r; ++u) {
      const double su = crop.raw.offset_u + (u + 0.5) / crop.raw.zoom;
      const double sv = crop.raw.offset_v + (v + 0.5) / crop.raw.zoom;
      const int iu = static_cast<int>(std::floor(su));
      const int iv = static_cast<int>(std::floor(sv));
      if (iu < 0 || iv < 0 || iu >= mask.width || iv >= mask.height) continue;
      if (!mask.at(iu, iv) || !depth.valid(iu, iv)) continue;
      const double z = crop.raw.depth_scale * depth.at(iu, iv) + crop.raw.depth_offset;
      if (!(z > 0.0)) continue;
      write_pixel(crop, u, v, z, image.pixel(iu, iv));
    }
  }
}

}  // namespace

NormalizedCrop reproject_instance(const EntityMask& mask, const DepthMap& depth,
                                  const Image& image, const CameraIntrinsics& intr,
                                  int crop_res) {
  check_inputs(mask, depth, image, intr);
  NormalizedCrop crop = blank_crop(crop_res);
  const PointCloud points = unproject(depth, intr, &mask);
  crop.camera = fit_virtual_camera(points.points, crop_res);
  crop.mode = CropMode::kReproject;
  splat(crop, mask, depth, image, intr);
  return crop;
}

NormalizedCrop raw_crop_instance(const EntityMask& mask, const DepthMap& depth,
                                 const Image& image, const CameraIntrinsics& intr,
                                 int crop_res) {
  check_inputs(mask, depth, image, intr);
  NormalizedCrop crop = blank_crop(crop_res);
  const PointCloud points = unproject(depth, intr, &mask);
  const VirtualCamera fitted = fit_virtual_camera(points.points, crop_res);
  crop.mode = CropMode::kRaw;
  crop.camera.normalization = fitted.normalization;
  crop.camera.intr = fitted.intr;
  crop.camera.pose = look_at(Vec3(0.0, 0.0, -kVirtualCameraDistance), Vec3::Zero());

  // Frame the mask box like a unit object seen by the virtual camera.
  const PixelBox box = bounding_box(mask);
  const double fill = crop.camera.intr.fx / (kVirtualCameraDistance * crop_res);
  const double side = std::max(box.width(), box.height()) / fill;
  crop.raw.source = intr;
  crop.raw.zoom = crop_res / side;
  crop.raw.offset_u = 0.5 * (box.u0 + box.u1 + 1) - 0.5 * side;
  crop.raw.offset_v = 0.5 * (box.v0 + box.v1 + 1) - 0.5 * side;
  Aabb bounds;
  for (const Vec3& p : points.points) bounds.extend(p);
  crop.raw.depth_scale = fitted.normalization.scale;
  crop.raw.depth_offset = kVirtualCameraDistance - crop.raw.depth_scale * bounds.center().z();
  resample(crop, mask, depth, image);
  return crop;
}

NormalizedCrop make_crop(CropMode mode, const EntityMask& mask, const DepthMap& depth,
                         const Image& image, const CameraIntrinsics& intr, int crop_res) {
  return mode == CropMode::kReproject ? reproject_instance(mask, depth, image, intr, crop_res)
                                      : raw_crop_instance(mask, depth, image, intr, crop_res);
}

NormalizedCrop resample_into(const NormalizedCrop& layout, const EntityMask& mask,
                             const DepthMap& depth, const Image& image,
                             const CameraIntrinsics& intr) {
  check_inputs(mask, depth, image, intr);
  NormalizedCrop crop = layout;
  clear_buffers(crop);
  if (crop.mode == CropMode::kReproject) {
    splat(crop, mask, depth, image, intr);
  } else {
    resample(crop, mask, depth, image);
  }
  return crop;
}

// ---------------------------------------------------------------------------
// Hooks

namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string templ = (fs::temp_directory_path() / "scenekit-hook-XXXXXX").string();
    if (!mkdtemp(templ.data())) throw Error(ErrorCode::kIo, "cannot create temporary directory");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string tail_of(const fs::path& path, std::size_t max_chars = 2000) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  if (s.size() > max_chars) s = "..." + s.substr(s.size() - max_chars);
  return s;
}

nlohmann::json crop_sidecar(const NormalizedCrop& crop, const std::string& label) {
  nlohmann::json j;
  j["label"] = label;
  j["resolution"] = crop.resolution;
  j["mode"] = to_string(crop.mode);
  const VirtualCamera& c = crop.camera;
  j["camera"] = {{"fx", c.intr.fx}, {"fy", c.intr.fy}, {"cx", c.intr.cx}, {"cy", c.intr.cy},
                 {"width", c.intr.width}, {"height", c.intr.height}};
  nlohmann::json rot = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    rot.push_back({c.pose.rotation(i, 0), c.pose.rotation(i, 1), c.pose.rotation(i, 2)});
  }
  j["camera"]["pose"] = {
      {"rotation", rot},
      {"translation", {c.pose.translation.x(), c.pose.translation.y(), c.pose.translation.z()}}};
  const Vec3& t = c.normalization.translation;
  j["normalization"] = {{"scale", c.normalization.scale}, {"translation", {t.x(), t.y(), t.z()}}};
  j["neutral"] = kNeutral;
  return j;
}

// Writes the crop to a fresh directory, runs `command <dir>` and returns the
// path of the declared output. Throws `code` with the process log on failure.
void run_hook(const NormalizedCrop& crop, const std::string& label, const std::string& command,
              const TempDir& dir, ErrorCode code) {
  if (command.empty()) throw Error(code, "external command is empty");
  write_png(dir.path() / "crop.png", crop.rgb);
  write_mask_png(dir.path() / "crop_mask.png", crop.mask);
  write_pfm(dir.path() / "crop_depth.pfm", crop.depth);
  {
    std::ofstream out(dir.path() / "crop.json");
    out << crop_sidecar(crop, label).dump(2) << '\n';
  }
  const fs::path log = dir.path() / "hook.log";
  const std::string line =
      command + " " + shell_quote(dir.path().string()) + " > " + shell_quote(log.string()) + " 2>&1";
  const int status = std::system(line.c_str());
  if (status == -1) throw Error(code, "could not launch external command: " + command);
  const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  if (exit_code != 0) {
    throw Error(code, "external command exited with code " + std::to_string(exit_code) +
                          ": " + command + "\n" + tail_of(log));
  }
}

}  // namespace

NormalizedCrop complete_crop(const NormalizedCrop& crop, const std::string& label,
                             const CompletionHook& hook) {
  crop.validate();
  if (hook.mode == CompletionHook::Mode::kIdentity) return crop;

  Image completed;
  switch (hook.mode) {
    case CompletionHook::Mode::kOracleFile:
      try {
        completed = read_png(hook.file);
      } catch (const Error& e) {
        throw Error(ErrorCode::kCompletion, std::string("completion fixture: ") + e.what());
      }
      break;
    case CompletionHook::Mode::kExternalCommand: {
      TempDir dir;
      run_hook(crop, label, hook.command, dir, ErrorCode::kCompletion);
      const fs::path out = dir.path() / hook.output_name;
      try {
        completed = read_png(out);
      } catch (const Error& e) {
        throw Error(ErrorCode::kCompletion, std::string("completion output unreadable: ") +
                                                e.what() + "\n" +
                                                tail_of(dir.path() / "hook.log"));
      }
      break;
    }
    case CompletionHook::Mode::kCustom:
      if (!hook.custom) throw Error(ErrorCode::kCompletion, "custom completion hook is empty");
      completed = hook.custom(crop, label);
      break;
    case CompletionHook::Mode::kIdentity:
      break;
  }
  if (completed.width != crop.resolution || completed.height != crop.resolution) {
    throw Error(ErrorCode::kCompletion,
                "completed view is " + std::to_string(completed.width) + "x" +
                    std::to_string(completed.height) + ", expected " +
                    std::to_string(crop.resolution) + "x" + std::to_string(crop.resolution));
  }
  NormalizedCrop out = crop;
  out.rgb = std::move(completed);
  out.mask = non_neutral_mask(out.rgb);
  return out;
}

TriangleMesh reconstruct_object(const NormalizedCrop& crop, const std::string& label,
                                const ReconstructionHook& hook) {
  TriangleMesh mesh;
  try {
    switch (hook.mode) {
      case ReconstructionHook::Mode::kOracleMesh:
        mesh = read_mesh(hook.file);
        break;
      case ReconstructionHook::Mode::kExternalCommand: {
        crop.validate();
        TempDir dir;
        run_hook(crop, label, hook.command, dir, ErrorCode::kReconstruction);
        mesh = read_mesh(dir.path() / hook.output_name);
        break;
      }
      case ReconstructionHook::Mode::kCustom:
        if (!hook.custom) {
          throw Error(ErrorCode::kReconstruction, "custom reconstruction hook is empty");
        }
        mesh = hook.custom(crop, label);
        break;
    }
    if (mesh.faces.empty()) {
      throw Error(ErrorCode::kReconstruction, "reconstruction has no faces");
    }
    mesh.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kReconstruction) throw;
    throw Error(ErrorCode::kReconstruction, std::string("invalid reconstruction: ") + e.what());
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// Scale alignment

RayPairs correspondences(const TriangleMesh& recon, const NormalizedCrop& crop) {
  crop.validate();
  const DepthMap rendered = render_depth(recon, crop.camera.intr, crop.camera.pose);
  RayPairs pairs;
  for (int v = 0; v < crop.resolution; ++v) {
    for (int u = 0; u < crop.resolution; ++u) {
      if (!crop.depth.valid(u, v) || !rendered.valid(u, v)) continue;
      const double norm = pixel_ray(crop.camera.intr, u + 0.5, v + 0.5).norm();
      pairs.crop.push_back(crop.depth.at(u, v) * norm);
      pairs.recon.push_back(rendered.at(u, v) * norm);
    }
  }
  return pairs;
}

ScaleEstimate ransac_scale(const RayPairs& pairs, std::uint64_t seed,
                           const RansacParams& params) {
  if (pairs.crop.size() != pairs.recon.size()) {
    throw Error(ErrorCode::kDimension, "correspondence arrays differ in length");
  }
  if (params.iterations < 1 || !(params.tolerance > 0.0)) {
    throw Error(ErrorCode::kDomain, "RANSAC needs iterations >= 1 and tolerance > 0");
  }
  ScaleEstimate est;
  const std::size_t n = pairs.crop.size();
  est.pairs = n;
  if (n == 0 || n < params.min_pairs) {
    est.fallback = true;
    est.scale = std::numeric_limits<double>::quiet_NaN();
    return est;
  }
  const std::vector<double>& c = pairs.crop;
  const std::vector<double>& r = pairs.recon;
  Rng rng(seed);
  std::size_t best_count = 0;
  double best = 0.0;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t j = rng.index(n);
    const double s = c[j] / r[j];
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(s * r[k] - c[k]) <= params.tolerance) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = s;
    }
  }
  double rc = 0.0, rr = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(best * r[k] - c[k]) <= params.tolerance) {
      rc += r[k] * c[k];
      rr += r[k] * r[k];
    }
  }
  est.scale = rc / rr;
  est.inliers = best_count;
  est.inlier_fraction = static_cast<double>(best_count) / static_cast<double>(n);
  return est;
}

double fallback_scale(const TriangleMesh& recon) {
  const double longest = bounds_of(recon.vertices).extent().maxCoeff();
  if (!(longest > 0.0) || !std::isfinite(longest)) {
    throw Error(ErrorCode::kReconstruction, "reconstruction has zero extent");
  }
  return 1.0 / longest;
}

ScaleEstimate align_scale_ransac(const TriangleMesh& recon, const NormalizedCrop& crop,
                                 std::uint64_t seed, const RansacParams& params) {
  ScaleEstimate est = ransac_scale(correspondences(recon, crop), seed, params);
  if (est.fallback) est.scale = fallback_scale(recon);
  return est;
}

TriangleMesh place_instance(const TriangleMesh& recon, double scale,
                            const VirtualCamera& camera) {
  return object_to_view(recon, camera, scale);
}

}  // namespace scenekit
