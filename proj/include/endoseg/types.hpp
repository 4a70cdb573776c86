#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace endoseg {

namespace fs = std::filesystem;

struct ImageEntry {
    std::string id;
    fs::path image_path;
    std::optional<int> label;       // index into DatasetManifest::classes
    std::optional<int> mces_label;  // 1, 2 or 3 when the image belongs to the MCES subset
    std::optional<fs::path> gt_mask_path;
    std::optional<fs::path> field_mask_path;

    bool annotated() const { return label.has_value() || gt_mask_path.has_value(); }
};

struct DatasetManifest {
    std::string dataset_id;
    std::vector<ImageEntry> images;
    std::vector<std::string> classes;
    std::map<std::string, std::vector<std::string>> folds;

    const ImageEntry* find(std::string_view id) const;
    std::optional<std::string> fold_of(std::string_view id) const;
    std::vector<std::string> fold_ids() const;
};

// Patch features for one image: [n_blocks, grid_h, grid_w, dim], block-major then row-major.
struct PatchFeatureTensor {
    std::string image_id;
    std::uint32_t n_blocks = 0;
    std::uint32_t grid_h = 0;
    std::uint32_t grid_w = 0;
    std::uint32_t dim = 0;
    std::vector<float> data;

    std::size_t n_patches() const { return std::size_t{grid_h} * grid_w; }
    std::size_t expected_size() const { return std::size_t{n_blocks} * n_patches() * dim; }

    std::span<const float> patch(std::size_t block, std::size_t row, std::size_t col) const {
        return {data.data() + ((block * grid_h + row) * grid_w + col) * dim, dim};
    }
    std::span<float> patch(std::size_t block, std::size_t row, std::size_t col) {
        return {data.data() + ((block * grid_h + row) * grid_w + col) * dim, dim};
    }

    bool operator==(const PatchFeatureTensor&) const = default;
};

// Id 0 is reserved for background / out-of-field pixels.
struct SemanticMask {
    std::string image_id;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;  // row-major
    std::map<int, std::string> legend;

    std::uint8_t at(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }

    bool operator==(const SemanticMask&) const = default;
};

// Pixel rectangle, inclusive-exclusive: [x0, x1) x [y0, y1).
struct PixelBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const PixelBox&) const = default;
};

// Binary mask (true = foreground), row-major.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
    std::size_t count() const;
    bool empty_mask() const { return count() == 0; }

    bool operator==(const BinaryMask&) const = default;
};

// 8-bit RGB image, row-major, interleaved.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    const std::uint8_t* at(int row, int col) const {
        return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3;
    }
};

enum class BlockFusion { concat, mean };
enum class EmbedMode { bbox, masked };

struct EigengapRule {
    double threshold = 0.1;  // eigenvalues <= threshold count as segments
    int max_segments = 12;

    bool operator==(const EigengapRule&) const = default;
};

struct ProbeConfig {
    std::vector<double> learning_rates{0.001, 0.01, 0.1};
    int epochs = 100;
    int batch_size = 32;
    double momentum = 0.9;
    std::vector<int> block_options{1, 4};  // how many trailing blocks to concatenate
    std::uint64_t seed = 0;

    bool operator==(const ProbeConfig&) const = default;
};

struct PreprocessConfig {
    std::optional<std::pair<int, int>> resize_to;  // (width, height)
    bool clahe = false;
    double clahe_clip = 2.0;
    int clahe_tiles = 8;

    bool operator==(const PreprocessConfig&) const = default;
};

struct RunConfig {
    int patch_size = 16;
    std::vector<int> blocks;  // empty: the last four available blocks; negative indices count from the end
    BlockFusion block_fusion = BlockFusion::concat;
    double color_weight = 1.0;
    int color_knn_k = 10;
    std::optional<double> color_spatial_scale;  // default 1 / max(grid_h, grid_w)
    int eig_count = 16;
    double eig_tol = 1e-6;
    EigengapRule eiggap_rule;
    EmbedMode embed_mode = EmbedMode::bbox;
    int pca_dim = 64;
    int kmeans_k = 15;
    int kmeans_restarts = 8;
    int kmeans_max_iter = 300;
    int knn_k = 20;
    double knn_temperature = 0.07;
    int knn_blocks = 1;
    ProbeConfig probe;
    double polyp_overlap = 0.5;
    double iou_threshold = 0.3;
    std::uint64_t seed = 0;
    PreprocessConfig preprocess;

    void validate() const;  // throws ConfigError

    bool operator==(const RunConfig&) const = default;
};

}  // namespace endoseg
