// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "discover/bytes.hpp"
#include "discover/codec.hpp"

namespace discover {

/// 8-bit interleaved RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Reads PNG (gray, RGB, palette or with alpha; alpha is dropped).
RgbImage load_png(const std::filesystem::path& path);
RgbImage decode_png(std::span<const std::uint8_t> data);
void save_png(const RgbImage& image, const std::filesystem::path& path);
Bytes encode_png(const RgbImage& image);

ImageTensor to_tensor(const RgbImage& image);
/// Rounds to 8 bits after clamping to [0, 1].
RgbImage to_rgb(const ImageTensor& image);

}  // namespace discover
