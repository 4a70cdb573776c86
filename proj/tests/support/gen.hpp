#pragma once

// Seeded random instance generators shared by the unit and acceptance tests.

#include "endoseg/affinity.hpp"
#include "endoseg/rng.hpp"
#include "endoseg/types.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

namespace endoseg::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("endoseg-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

inline PatchFeatureTensor random_tensor(Rng& rng, std::uint32_t blocks, std::uint32_t gh, std::uint32_t gw,
                                        std::uint32_t dim, const std::string& id = "img") {
    PatchFeatureTensor t;
    t.image_id = id;
    t.n_blocks = blocks;
    t.grid_h = gh;
    t.grid_w = gw;
    t.dim = dim;
    t.data.resize(t.expected_size());
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

inline BinaryMask random_mask(Rng& rng, int h, int w, double p) {
    BinaryMask m(h, w);
    for (auto& v : m.data) v = rng.uniform() < p ? 1 : 0;
    return m;
}

inline BinaryMask rect_mask(int h, int w, int x0, int y0, int x1, int y1) {
    BinaryMask m(h, w);
    for (int y = std::max(0, y0); y < std::min(h, y1); ++y) {
        for (int x = std::max(0, x0); x < std::min(w, x1); ++x) m.at(y, x) = 1;
    }
    return m;
}

// Connected sparse graph: a ring plus `extra` random chords, weights in (0.05, 1].
inline AffinityMatrix random_sparse_graph(Rng& rng, int n, int extra) {
    std::vector<Eigen::Triplet<double>> trips;
    auto add = [&](int a, int b, double w) {
        trips.emplace_back(a, b, w);
        trips.emplace_back(b, a, w);
    };
    for (int i = 0; i < n; ++i) add(i, (i + 1) % n, rng.uniform(0.05, 1.0));
    for (int e = 0; e < extra; ++e) {
        const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        if (a != b) add(a, b, rng.uniform(0.05, 1.0));
    }
    AffinityMatrix w;
    w.weights.resize(n, n);
    w.weights.setFromTriplets(trips.begin(), trips.end(), [](double a, double b) { return std::max(a, b); });
    return w;
}

struct PlantedGraph {
    AffinityMatrix affinity;
    std::vector<int> labels;  // planted block per vertex
    int blocks = 0;
};

// Block-diagonal affinity: dense random intra-block weights in [0.5, 1], nothing across blocks,
// vertex order shuffled.
inline PlantedGraph planted_blocks(Rng& rng, int blocks, int min_size, int max_size) {
    PlantedGraph g;
    g.blocks = blocks;
    for (int b = 0; b < blocks; ++b) {
        const int size = min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_size - min_size + 1)));
        g.labels.insert(g.labels.end(), static_cast<std::size_t>(size), b);
    }
    for (std::size_t i = g.labels.size(); i > 1; --i) std::swap(g.labels[i - 1], g.labels[rng.below(i)]);
    const auto n = static_cast<int>(g.labels.size());
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (g.labels[static_cast<std::size_t>(i)] != g.labels[static_cast<std::size_t>(j)]) continue;
            const double w = rng.uniform(0.5, 1.0);
            trips.emplace_back(i, j, w);
            trips.emplace_back(j, i, w);
        }
    }
    g.affinity.weights.resize(n, n);
    g.affinity.weights.setFromTriplets(trips.begin(), trips.end());
    return g;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, int classes) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return y;
}

}  // namespace endoseg::testing
