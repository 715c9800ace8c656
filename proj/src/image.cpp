#include "scenekit/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <png.h>

#include "scenekit/error.hpp"

namespace scenekit {

std::size_t EntityMask::count() const {
  return static_cast<std::size_t>(std::count_if(
      bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

PixelBox bounding_box(const EntityMask& mask) {
  PixelBox box{mask.width, mask.height, -1, -1};
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v)) continue;
      box.u0 = std::min(box.u0, u);
      box.v0 = std::min(box.v0, v);
      box.u1 = std::max(box.u1, u);
      box.v1 = std::max(box.v1, v);
    }
  }
  if (box.u1 < 0) return PixelBox{};
  return box;
}

EntityMask non_neutral_mask(const Image& image, float threshold) {
  EntityMask mask(image.width, image.height);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const float* p = image.pixel(u, v);
      for (int c = 0; c < 3; ++c) {
        if (std::abs(p[c] - kNeutral) > threshold) {
          mask.set(u, v);
          break;
        }
      }
    }
  }
  return mask;
}

Image crop_image(const Image& image, const PixelBox& box) {
  Image out(box.width(), box.height());
  for (int v = 0; v < out.height; ++v) {
    for (int u = 0; u < out.width; ++u) {
      std::copy_n(image.pixel(box.u0 + u, box.v0 + v), 3, out.pixel(u, v));
    }
  }
  return out;
}

DepthMap crop_depth(const DepthMap& depth, const PixelBox& box) {
  DepthMap out(box.width(), box.height());
  for (int v = 0; v < out.height; ++v) {
    for (int u = 0; u < out.width; ++u) out.at(u, v) = depth.at(box.u0 + u, box.v0 + v);
  }
  return out;
}

namespace {

std::uint8_t to_byte(float c) {
  const long q = std::lround(static_cast<double>(c) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path,
                                       png_uint_32 format, int& width, int& height) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error(ErrorCode::kIo, "cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::kIo, "cannot decode PNG " + path.string() + ": " + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buffer;
}

void write_png_raw(const std::filesystem::path& path, png_uint_32 format, int width,
                   int height, const std::vector<std::uint8_t>& buffer) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, "cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_png_raw(path, PNG_FORMAT_RGB, w, h);
  Image image(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) image.rgb[i] = raw[i] / 255.0f;
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> raw(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), raw.begin(), to_byte);
  write_png_raw(path, PNG_FORMAT_RGB, image.width, image.height, raw);
}

EntityMask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
  EntityMask mask(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) mask.bits[i] = raw[i] != 0 ? 1 : 0;
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const EntityMask& mask) {
  std::vector<std::uint8_t> raw(mask.bits.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = mask.bits[i] ? 255 : 0;
  write_png_raw(path, PNG_FORMAT_GRAY, mask.width, mask.height, raw);
}

DepthMap read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open PFM " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();  // single whitespace byte before the raster
  if (!in || magic != "Pf" || width < 1 || height < 1 || scale == 0.0) {
    throw Error(ErrorCode::kIo, "malformed PFM header in " + path.string());
  }
  if (scale > 0.0) {
    throw Error(ErrorCode::kIo, "big-endian PFM is not supported: " + path.string());
  }
  std::vector<float> raster(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raster.data()),
          static_cast<std::streamsize>(raster.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::kIo, "truncated PFM raster in " + path.string());
  DepthMap depth(width, height);
  for (int v = 0; v < height; ++v) {
    const float* row = &raster[static_cast<std::size_t>(height - 1 - v) * width];
    for (int u = 0; u < width; ++u) {
      const double d = row[u];
      depth.at(u, v) = (std::isfinite(d) && d > 0.0)
                           ? d * std::abs(scale)
                           : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return depth;
}

void write_pfm(const std::filesystem::path& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write PFM " + path.string());
  out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(depth.width));
  for (int v = depth.height - 1; v >= 0; --v) {
    for (int u = 0; u < depth.width; ++u) {
      row[u] = depth.valid(u, v) ? static_cast<float>(depth.at(u, v)) : 0.0f;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (float& c : out.rgb) c = to_byte(c) / 255.0f;
  return out;
}

DepthMap quantize_float32(const DepthMap& depth) {
  DepthMap out = depth;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] = out.valid(i) ? static_cast<double>(static_cast<float>(out.values[i]))
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace scenekit
