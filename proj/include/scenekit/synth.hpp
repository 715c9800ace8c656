#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenekit/camera.hpp"
#include "scenekit/geometry.hpp"
#include "scenekit/image.hpp"
#include "scenekit/instance.hpp"
#include "scenekit/scene.hpp"

namespace scenekit {

enum class PrimitiveKind { kSphere, kBox, kPlane };

const char* to_string(PrimitiveKind kind) noexcept;

// World frame is y-down (ground at y = 0, objects at y < 0) so that the
// OpenCV camera convention renders scenes upright.
struct Primitive {
  int id = 0;  // > 0; 0 marks empty pixels in id maps
  std::string label;
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Category category = Category::kThing;
  Mat3 rotation = Mat3::Identity();  // object to world
  Vec3 center = Vec3::Zero();
  // sphere: size.x() is the radius; box: full edge lengths; plane: full
  // extents along the object x and z axes (the plane is y = 0).
  Vec3 size = Vec3::Ones();
  Vec3 albedo = Vec3::Constant(0.5);

  // Nearest ray parameter t > 0 of origin + t * dir, or a negative value.
  double intersect(const Vec3& origin, const Vec3& dir, Vec3* normal = nullptr) const;
  // World-space corners of the primitive's bounding box.
  std::vector<Vec3> bounding_corners() const;
};

// Instance id used in bundles: "ground" for stuff, "thing_<id>" otherwise.
std::string instance_id(const Primitive& prim);

struct PrimitiveScene {
  std::vector<Primitive> primitives;
  CameraIntrinsics intr;
  RigidPose pose;  // world to camera
  std::uint64_t seed = 0;

  const Primitive* find(int id) const;
};

struct SceneSpec {
  int min_things = 3;
  int max_things = 6;
  double region = 0.45;  // things are placed in [-region, region]^2 on the ground
  double sphere_radius_min = 0.08, sphere_radius_max = 0.16;
  double box_edge_min = 0.12, box_edge_max = 0.28;
  double ground_size = 6.0;
  double gap = 0.02;  // minimum clearance between footprints
  int width = 480;
  int height = 360;
  double fov_deg = 60.0;
  Vec3 eye = Vec3(0.0, -0.8, -1.25);
  Vec3 target = Vec3(0.0, -0.05, 0.05);
  double margin = 0.05;  // fraction of the image kept clear around every thing
  double min_visible_fraction = 0.25;
  int max_attempts = 1000;

  void validate() const;  // throws kDomain
};

// Throws Error(kGeneration) when the things cannot be placed within the
// attempt budget.
PrimitiveScene generate_scene(std::uint64_t seed, const SceneSpec& spec = {});

struct RenderResult {
  DepthMap depth;               // camera z, invalid where nothing is hit
  std::vector<std::int32_t> ids;  // primitive id per pixel, 0 for none
  Image rgb;                    // neutral where nothing is hit

  EntityMask mask_of(int id) const;
};

// `only` restricts the render to one primitive id (0 renders everything).
RenderResult raycast_render(const PrimitiveScene& scene, int only = 0);

// Triangle mesh of a primitive in world coordinates. Spheres are UV spheres
// with `tessellation` segments around and tessellation / 2 rings.
TriangleMesh mesh_of_primitive(const Primitive& prim, int tessellation = 64);

// World-space mesh mapped into the camera frame.
TriangleMesh to_camera(const TriangleMesh& mesh, const RigidPose& pose);

struct PerturbRanges {
  double scale_min = 0.2;
  double scale_max = 5.0;
  bool rotate = true;
  double max_translation = 0.25;  // per axis, times the bounding-box diagonal
  double noise = 0.0;             // jitter sigma, times the bounding-box diagonal
  Vec3 pivot = Vec3::Zero();      // rotation and scale act about this point

  static PerturbRanges identity();
};

struct Perturbation {
  TriangleMesh mesh;
  SimilarityTransform applied;  // about the origin: mesh = applied(jittered input)
};

Perturbation perturb_reconstruction(const TriangleMesh& mesh, std::uint64_t seed,
                                    const PerturbRanges& ranges = {});

// A reconstruction hook that knows the ground truth: the object's view-space
// mesh, jittered, mapped through the crop embedding into normalized space and
// scaled about the virtual camera center by a random factor k. Faces whose
// centroid falls outside the (dilated) crop mask are removed, so the result
// only covers what the crop shows.
struct OracleReconstruction {
  TriangleMesh mesh;
  double scale = 1.0;  // k; the pipeline should recover 1 / k
};

struct OracleOptions {
  double scale_min = 0.2;
  double scale_max = 5.0;
  double noise = 0.01;
  int mask_dilation = 3;  // pixels; negative disables culling
};

OracleReconstruction oracle_reconstruction(const TriangleMesh& view_mesh,
                                           const NormalizedCrop& crop, std::uint64_t seed,
                                           const OracleOptions& options = {});

// The complete view of a thing: its unoccluded render pushed through the same
// crop embedding as `layout`.
Image oracle_completion(const PrimitiveScene& scene, int id, const NormalizedCrop& layout);

struct BundleOptions {
  int crop_res = kDefaultCropResolution;
  CropMode crop_mode = CropMode::kReproject;
  int tessellation = 48;
  OracleOptions oracle;
  bool write_oracles = true;
};

// Writes a manifest bundle: image.png, depth.pfm, masks/, gt/ meshes in the
// camera frame, oracle/ completion views and reconstructions, scene.json and
// manifest.json. Returns the manifest path.
std::filesystem::path write_bundle(const PrimitiveScene& scene, const std::filesystem::path& dir,
                                   const BundleOptions& options = {});

// Ground-truth scene mesh in the camera frame, one group per primitive; stuff
// primitives are merged into a group named "background".
TriangleMesh ground_truth_mesh(const PrimitiveScene& scene, int tessellation = 48);

struct OcclusionRange {
  double lo = 0.1;
  double hi = 0.5;
};

struct AmodalPair {
  Image conditioning;   // target with background and occluded pixels neutral
  Image target;         // target with background neutral
  EntityMask target_mask;
  EntityMask occluder;  // placed silhouette
  double occluded_fraction = 0.0;
  std::string prompt;
  std::uint64_t seed = 0;
};

// Places the silhouette with a seeded random translation and scale so the
// occluded fraction of the target mask falls inside `range`. Throws
// Error(kComposition) after `max_tries` failures.
AmodalPair compose_amodal_pair(const Image& target, const EntityMask& target_mask,
                               const EntityMask& silhouette, const std::string& prompt,
                               std::uint64_t seed, OcclusionRange range = {},
                               int max_tries = 100);

}  // namespace scenekit
