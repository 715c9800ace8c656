#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace scenekit {

// Row-major per-pixel depth. A pixel is valid iff its value is finite and > 0.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * h,
               std::numeric_limits<double>::quiet_NaN()) {}

  std::size_t size() const { return values.size(); }
  double& at(int u, int v) { return values[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  bool valid(std::size_t i) const { return std::isfinite(values[i]) && values[i] > 0.0; }
  bool valid(int u, int v) const { return valid(static_cast<std::size_t>(v) * width + u); }
};

struct EntityMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  EntityMask() = default;
  EntityMask(int w, int h)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t size() const { return bits.size(); }
  bool at(int u, int v) const { return bits[static_cast<std::size_t>(v) * width + u] != 0; }
  void set(int u, int v, bool on = true) {
    bits[static_cast<std::size_t>(v) * width + u] = on ? 1 : 0;
  }
  std::size_t count() const;
};

// Inclusive pixel bounding box of the set pixels of a mask.
struct PixelBox {
  int u0 = 0, v0 = 0, u1 = -1, v1 = -1;
  bool empty() const { return u1 < u0 || v1 < v0; }
  int width() const { return u1 - u0 + 1; }
  int height() const { return v1 - v0 + 1; }
};

PixelBox bounding_box(const EntityMask& mask);

// Interleaved RGB, channels in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  float* pixel(int u, int v) { return &rgb[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const float* pixel(int u, int v) const {
    return &rgb[(static_cast<std::size_t>(v) * width + u) * 3];
  }
};

// 127.5 / 255: the value background and occluded pixels take on every channel.
inline constexpr float kNeutral = 0.5f;

// Returns the pixels of `image` that differ from kNeutral by more than
// `threshold` on any channel.
EntityMask non_neutral_mask(const Image& image, float threshold = 2.0f / 255.0f);

// Sub-image covering `box` (inclusive).
Image crop_image(const Image& image, const PixelBox& box);
DepthMap crop_depth(const DepthMap& depth, const PixelBox& box);

// File I/O. PNG images are 8-bit; PFM depth is little-endian float32 with
// scale -1.0 and rows stored bottom-up. Invalid depths are written as 0.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
EntityMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const EntityMask& mask);
DepthMap read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const DepthMap& depth);

// Rounds each channel to the nearest 8-bit level, as a PNG round trip would.
Image quantize_8bit(const Image& image);
// Rounds each valid depth to float32, as a PFM round trip would.
DepthMap quantize_float32(const DepthMap& depth);

}  // namespace scenekit
