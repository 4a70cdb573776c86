#pragma once

// Synthetic endoscopy-like dataset with planted concepts.
//
// Each image is a grid of cells; every cell belongs to one of three concepts.
// Concepts 0 and 1 split the background along a random straight boundary and
// concept 2 (the "polyp") is a rectangle of 4-5 cells. Each concept has its
// own orthonormal feature direction and a distinct colour, so both affinity
// routes see the same partition.

#include "endoseg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace endoseg::testing {

struct SynthOptions {
    int n_images = 40;
    int grid = 12;
    int patch = 8;
    std::uint32_t dim = 16;
    std::uint32_t blocks = 4;
    double noise = 0.02;
    double class_offset = 0.05;
    int color_jitter = 6;
    bool field_masks = false;  // cut the four corners out of the field of view
    std::uint64_t seed = 7;
};

inline constexpr int kPolypConcept = 2;

struct SynthImage {
    std::string id;
    std::vector<int> cell_concept;  // grid*grid, row-major
    BinaryMask polyp;               // pixel resolution
    BinaryMask field;               // pixel resolution, all ones without field masks
};

struct SynthDataset {
    SynthOptions options;
    std::filesystem::path root;
    std::filesystem::path manifest;
    std::filesystem::path features;
    std::filesystem::path config;  // RunConfig overrides matching the generated geometry
    std::vector<SynthImage> images;

    int pixels() const { return options.grid * options.patch; }
    // Concept per pixel, -1 outside the field of view.
    std::vector<int> pixel_concepts(std::size_t image) const;
};

SynthDataset make_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& options = {});

}  // namespace endoseg::testing
