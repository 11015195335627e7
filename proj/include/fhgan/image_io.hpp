#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fhgan/tensor.hpp"

namespace fhgan {

// 8-bit RGB image, interleaved HWC.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image8() = default;
  Image8(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  friend bool operator==(const Image8&, const Image8&) = default;
};

// Grayscale, palette and alpha inputs are converted to 8-bit RGB.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// 8-bit -> [-1, 1] via v / 127.5 - 1, as a [3,H,W] tensor.
Tensor to_model_range(const Image8& image);
// [3,H,W] model-range tensor -> 8-bit, clamped and rounded to nearest.
Image8 to_image8(const Tensor& chw);

}  // namespace fhgan
