#include "endoseg/types.hpp"

#include "endoseg/error.hpp"

#include <algorithm>

namespace endoseg {

const ImageEntry* DatasetManifest::find(std::string_view id) const {
    for (const auto& img : images) {
        if (img.id == id) return &img;
    }
    return nullptr;
}

std::optional<std::string> DatasetManifest::fold_of(std::string_view id) const {
    for (const auto& [fold, ids] : folds) {
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) return fold;
    }
    return std::nullopt;
}

std::vector<std::string> DatasetManifest::fold_ids() const {
    std::vector<std::string> out;
    for (const auto& [fold, ids] : folds) out.push_back(fold);
    return out;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (!(color_weight >= 0.0)) fail("color_weight must be nonnegative");
    if (color_knn_k < 1) fail("color_knn_k must be >= 1");
    if (color_spatial_scale && !(*color_spatial_scale >= 0.0)) fail("color_spatial_scale must be nonnegative");
    if (eig_count < 2) fail("eig_count must be >= 2");
    if (!(eig_tol > 0.0)) fail("eig_tol must be positive");
    if (!(eiggap_rule.threshold >= 0.0)) fail("eiggap threshold must be nonnegative");
    if (eiggap_rule.max_segments < 2) fail("max_segments must be >= 2");
    if (eiggap_rule.max_segments > eig_count) fail("max_segments must not exceed eig_count");
    if (pca_dim < 1) fail("pca_dim must be >= 1");
    if (kmeans_k < 2 || kmeans_k > 254) fail("kmeans_k must be in [2, 254]");
    if (kmeans_restarts < 1) fail("kmeans_restarts must be >= 1");
    if (kmeans_max_iter < 1) fail("kmeans_max_iter must be >= 1");
    if (knn_k < 1) fail("knn_k must be >= 1");
    if (!(knn_temperature > 0.0)) fail("knn_temperature must be positive");
    if (knn_blocks < 1) fail("knn_blocks must be >= 1");
    if (probe.learning_rates.empty()) fail("probe.learning_rates must be non-empty");
    for (double lr : probe.learning_rates) {
        if (!(lr > 0.0)) fail("probe learning rates must be positive");
    }
    if (probe.epochs < 1) fail("probe.epochs must be >= 1");
    if (probe.batch_size < 1) fail("probe.batch_size must be >= 1");
    if (!(probe.momentum >= 0.0 && probe.momentum < 1.0)) fail("probe.momentum must be in [0, 1)");
    if (probe.block_options.empty()) fail("probe.block_options must be non-empty");
    for (int b : probe.block_options) {
        if (b < 1) fail("probe.block_options entries must be >= 1");
    }
    if (!(polyp_overlap > 0.0 && polyp_overlap <= 1.0)) fail("polyp_overlap must be in (0, 1]");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) fail("iou_threshold must be in (0, 1]");
    if (preprocess.resize_to && (preprocess.resize_to->first < 1 || preprocess.resize_to->second < 1)) {
        fail("preprocess.resize_to must be positive");
    }
    if (preprocess.resize_to &&
        (preprocess.resize_to->first % patch_size != 0 || preprocess.resize_to->second % patch_size != 0)) {
        fail("patch_size must divide preprocess.resize_to");
    }
    if (!(preprocess.clahe_clip > 0.0) || preprocess.clahe_tiles < 1) fail("invalid CLAHE parameters");
}

}  // namespace endoseg
