#include "endoseg/affinity.hpp"

#include "endoseg/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>

namespace endoseg {

namespace {

using Triplet = Eigen::Triplet<double, int>;

Eigen::MatrixXd fused_patch_vectors(const PatchFeatureTensor& t, BlockFusion fusion,
                                    const std::vector<std::size_t>& blocks) {
    const Eigen::Index n = static_cast<Eigen::Index>(t.n_patches());
    const Eigen::Index width = fusion == BlockFusion::concat ? static_cast<Eigen::Index>(t.dim * blocks.size())
                                                             : static_cast<Eigen::Index>(t.dim);
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, width);
    for (std::uint32_t r = 0; r < t.grid_h; ++r) {
        for (std::uint32_t c = 0; c < t.grid_w; ++c) {
            const Eigen::Index i = static_cast<Eigen::Index>(r) * t.grid_w + c;
            for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
                const auto v = t.patch(blocks[bi], r, c);
                const Eigen::Index offset = fusion == BlockFusion::concat ? static_cast<Eigen::Index>(bi * t.dim) : 0;
                for (std::uint32_t d = 0; d < t.dim; ++d) f(i, offset + d) += v[d];
            }
            const double norm = f.row(i).norm();
            if (!(norm > 1e-12)) {
                throw NumericalError("feature affinity for " + t.image_id + ": zero-norm patch vector at (row " +
                                     std::to_string(r) + ", col " + std::to_string(c) + ")");
            }
            f.row(i) /= norm;
        }
    }
    return f;
}

}  // namespace

AffinityMatrix feature_affinity(const PatchFeatureTensor& tensor, BlockFusion fusion,
                                const std::vector<std::size_t>& blocks) {
    if (blocks.empty()) throw ConfigError("feature affinity: no blocks selected");
    const Eigen::MatrixXd f = fused_patch_vectors(tensor, fusion, blocks);
    const Eigen::MatrixXd gram = f * f.transpose();
    const Eigen::Index n = f.rows();
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(n * (n - 1)));
    // Upper triangle only, mirrored, so w_ij == w_ji bit for bit.
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double w = std::max(0.0, gram(i, j));
            if (w > 0.0) {
                trips.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
                trips.emplace_back(static_cast<int>(j), static_cast<int>(i), w);
            }
        }
    }
    AffinityMatrix out;
    out.weights.resize(n, n);
    out.weights.setFromTriplets(trips.begin(), trips.end());
    return out;
}

AffinityMatrix color_affinity(const RgbImage& img, const ColorGraphParams& params) {
    const int n = img.height * img.width;
    if (n < 2) throw DataError("color affinity: image must have at least two pixels");
    if (params.knn_k < 1 || params.knn_k >= n) {
        throw ConfigError("color affinity: knn_k must lie in [1, " + std::to_string(n - 1) + "]");
    }
    const double scale = params.spatial_scale.value_or(1.0 / std::max(img.height, img.width));

    Eigen::MatrixXd feat(n, 5);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const int i = r * img.width + c;
            const auto* px = img.at(r, c);
            feat.row(i) << px[0] / 255.0, px[1] / 255.0, px[2] / 255.0, scale * c, scale * r;
        }
    }

    const auto k = static_cast<std::size_t>(params.knn_k);
    std::vector<std::vector<std::pair<double, int>>> neighbors(static_cast<std::size_t>(n));
    std::vector<std::pair<double, int>> cand;
    cand.reserve(static_cast<std::size_t>(n));
    double d_max = 0.0;
    for (int i = 0; i < n; ++i) {
        cand.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            cand.emplace_back((feat.row(i) - feat.row(j)).norm(), j);
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        auto& nb = neighbors[static_cast<std::size_t>(i)];
        nb.assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k));
        d_max = std::max(d_max, nb.back().first);
    }

    // Each undirected edge may appear twice (i->j and j->i); keep the larger weight.
    std::vector<std::pair<std::pair<int, int>, double>> edges;
    edges.reserve(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i) {
        for (const auto& [d, j] : neighbors[static_cast<std::size_t>(i)]) {
            const double w = d_max > 0.0 ? 1.0 - d / d_max : 1.0;
            edges.push_back({{std::min(i, j), std::max(i, j)}, w});
        }
    }
    std::sort(edges.begin(), edges.end());
    std::vector<Triplet> trips;
    for (std::size_t e = 0; e < edges.size();) {
        const auto key = edges[e].first;
        double w = 0.0;
        for (; e < edges.size() && edges[e].first == key; ++e) w = std::max(w, edges[e].second);
        if (w > 0.0) {
            trips.emplace_back(key.first, key.second, w);
            trips.emplace_back(key.second, key.first, w);
        }
    }
    AffinityMatrix out;
    out.weights.resize(n, n);
    out.weights.setFromTriplets(trips.begin(), trips.end());
    return out;
}

AffinityMatrix combine(const AffinityMatrix& feat, const AffinityMatrix& color, double color_weight) {
    if (feat.size() != color.size()) {
        throw DataError("combine: affinity size mismatch (" + std::to_string(feat.size()) + " vs " +
                        std::to_string(color.size()) + ")");
    }
    if (!(color_weight >= 0.0)) throw ConfigError("combine: color weight must be nonnegative");
    AffinityMatrix out;
    if (color_weight == 0.0) {
        out.weights = feat.weights;
    } else {
        out.weights = feat.weights + color_weight * color.weights;
    }
    out.color_weight_used = color_weight;
    return out;
}

}  // namespace endoseg
