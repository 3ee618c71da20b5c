#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace op3d {

// Row-major single-channel image with intensities in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  bool operator==(const GrayImage&) const = default;
};

using Mask = std::vector<std::uint8_t>;

// 1 where intensity > threshold.
Mask binarize(const GrayImage& img, float threshold = 0.0f);
std::size_t count(const Mask& m);

// Intersection over union; two empty masks give 0.
double iou(const Mask& a, const Mask& b);

// 8-bit grayscale PNG, value = round(255 * intensity).
std::vector<std::uint8_t> encode_png(const GrayImage& img);
GrayImage decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_png(const std::filesystem::path& path);

// Quantizes through the 8-bit PNG representation.
GrayImage quantize8(const GrayImage& img);

}  // namespace op3d
