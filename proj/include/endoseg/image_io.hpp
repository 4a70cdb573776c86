#pragma once

#include "endoseg/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace endoseg {

// Decoding accepts 8-bit PNG and JPEG.
RgbImage load_rgb(const fs::path& path);
BinaryMask load_binary_mask(const fs::path& path);  // nonzero pixels are foreground

// Resize (when configured) followed by optional CLAHE on the lightness channel.
RgbImage preprocess(const RgbImage& image, const PreprocessConfig& cfg);

// Area-averaged downsample to one color per patch cell.
RgbImage downsample_to_grid(const RgbImage& image, int grid_h, int grid_w);
BinaryMask resize_mask_nearest(const BinaryMask& mask, int height, int width);

// Cell is in-field when at least half of its pixels are.
BinaryMask mask_to_grid(const BinaryMask& pixel_mask, int grid_h, int grid_w);

std::array<std::uint8_t, 3> palette_color(int id);

// 8-bit palette-indexed PNG; the palette is palette_color() for every index.
std::vector<std::uint8_t> encode_palette_png(const SemanticMask& mask);
// Restores labels and size; the legend is not stored in the PNG.
SemanticMask decode_palette_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_rgb_png(const RgbImage& image);
std::vector<std::uint8_t> encode_gray_png(const BinaryMask& mask);  // 0 / 255

void save_rgb_png(const fs::path& path, const RgbImage& image);
void save_binary_mask_png(const fs::path& path, const BinaryMask& mask);

}  // namespace endoseg
