#pragma once

#include "endoseg/types.hpp"

#include <Eigen/SparseCore>

#include <optional>

namespace endoseg {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

// Symmetric nonnegative patch-graph weights over n = grid_h * grid_w cells,
// indexed row-major. Full (both triangles) storage.
struct AffinityMatrix {
    SparseMatrix weights;
    double color_weight_used = 0.0;

    Eigen::Index size() const { return weights.rows(); }
};

struct ColorGraphParams {
    int knn_k = 10;
    std::optional<double> spatial_scale;  // default 1 / max(grid_h, grid_w)
};

/// w_ij = max(0, <f_i, f_j>) with f the unit-normalized fused patch vectors.
/// Diagonal entries are not stored.
AffinityMatrix feature_affinity(const PatchFeatureTensor& tensor, BlockFusion fusion,
                                const std::vector<std::size_t>& blocks);

/// Sparse KNN-matting color affinity on an image already downsampled to the
/// patch grid. Each pixel links to its knn_k nearest neighbours in
/// (r, g, b, s*x, s*y) space with weight 1 - d / d_max, where d_max is the
/// largest retained neighbour distance in this image; the two directions of
/// an edge are merged with max. Distance ties resolve by lower index.
AffinityMatrix color_affinity(const RgbImage& grid_image, const ColorGraphParams& params);

/// W = W_feat + color_weight * W_color.
AffinityMatrix combine(const AffinityMatrix& feat, const AffinityMatrix& color, double color_weight);

}  // namespace endoseg
