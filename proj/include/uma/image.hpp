#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "uma/bbox.hpp"
#include "uma/tensor.hpp"

namespace uma {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
};

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Per-channel mean in [0, 1].
std::array<double, 3> channel_mean(const Image& image);

/// Resamples the square region of side `side` centred at (cx, cy) into an
/// out_side x out_side x 3 tensor with values in [0, 1]. Samples falling
/// outside the image take `fill`.
Tensor crop_patch(const Image& image, double cx, double cy, double side, std::size_t out_side,
                  const std::array<double, 3>& fill);

/// Draws a 1-pixel rectangle outline and a numeric label above it.
void draw_box(Image& image, const BBox& box, std::array<std::uint8_t, 3> color, long label);

}  // namespace uma
