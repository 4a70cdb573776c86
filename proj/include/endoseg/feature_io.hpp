#pragma once

#include "endoseg/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace endoseg {

// PFT1 layout (little-endian):
//   "PFT1" | u16 version=1 | u16 n_blocks | u32 grid_h | u32 grid_w | u32 dim | f32 payload
// The payload is block-major then row-major, n_blocks * grid_h * grid_w * dim values.
inline constexpr std::uint16_t kPftVersion = 1;
inline constexpr std::size_t kPftHeaderSize = 20;

std::vector<std::uint8_t> encode_features(const PatchFeatureTensor& tensor);
PatchFeatureTensor decode_features(std::span<const std::uint8_t> bytes, std::string image_id = {});

PatchFeatureTensor read_features(const fs::path& path, std::string image_id = {});
void write_features(const fs::path& path, const PatchFeatureTensor& tensor);

}  // namespace endoseg
