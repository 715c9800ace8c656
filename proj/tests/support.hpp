#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "scenekit/geometry.hpp"
#include "scenekit/mesh.hpp"
#include "scenekit/random.hpp"

namespace testing {

namespace fs = std::filesystem;

// Removed when it goes out of scope.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("scenekit-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline scenekit::ScalarGrid grid_over(double lo, double hi, int n) {
  scenekit::ScalarGrid g;
  g.dims = {n, n, n};
  g.bounds.min = scenekit::Vec3::Constant(lo);
  g.bounds.max = scenekit::Vec3::Constant(hi);
  g.values.resize(static_cast<std::size_t>(n) * n * n);
  return g;
}

template <typename F>
void fill(scenekit::ScalarGrid& g, F&& f) {
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) g.values[g.index(i, j, k)] = f(g.position(i, j, k));
}

inline scenekit::ScalarGrid sphere_grid(int n, double r = 0.5) {
  auto g = grid_over(-1.0, 1.0, n);
  fill(g, [r](const scenekit::Vec3& p) { return p.norm() - r; });
  return g;
}

inline std::vector<scenekit::Vec3> random_points(std::size_t n, std::uint64_t seed,
                                                 double lo = -1.0, double hi = 1.0) {
  scenekit::Rng rng(seed);
  std::vector<scenekit::Vec3> pts(n);
  for (auto& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return pts;
}

}  // namespace testing
