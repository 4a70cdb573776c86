#pragma once

#include "endoseg/affinity.hpp"
#include "endoseg/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace endoseg {

struct SpectralEmbedding {
    std::vector<double> eigenvalues;  // ascending
    Eigen::MatrixXd eigenvectors;     // n x m, orthonormal columns
    std::vector<double> residuals;    // ||L v - lambda v|| per pair
    int iterations = 0;
};

struct SegmentMap {
    std::string image_id;
    int grid_h = 0;
    int grid_w = 0;
    int patch_size = 1;
    std::vector<int> assignment;  // row-major, one id per patch cell
    int n_segments = 0;
    std::vector<PixelBox> bboxes;  // tight pixel bounds of each segment's cells
    std::vector<double> eigenvalues;

    int at(int row, int col) const { return assignment[static_cast<std::size_t>(row) * grid_w + col]; }
    std::vector<int> area_cells() const;
    BinaryMask cell_mask(int segment) const;  // grid-sized

    bool operator==(const SegmentMap&) const = default;
};

inline constexpr double kIsolatedSelfLoop = 1e-12;

/// L = I - D^{-1/2} W D^{-1/2}. Diagonal weights of W are ignored; a vertex
/// without neighbours gets a self-loop of weight kIsolatedSelfLoop, which
/// makes its row of L zero.
SparseMatrix normalized_laplacian(const AffinityMatrix& w);

struct EigenSolverOptions {
    double tol = 1e-6;
    int max_iter = 5000;
    std::uint64_t seed = 0;
    int guard_vectors = -1;  // extra block vectors beyond m; -1 picks max(4, m / 2)
};

/// The m smallest eigenpairs of a symmetric matrix by block locally optimal
/// preconditioned conjugate gradient (identity preconditioner) with explicit
/// basis orthonormalization. Every returned pair satisfies
/// ||L v - lambda v|| <= tol; eigenvector signs are fixed so the
/// largest-magnitude entry is positive. Throws NumericalError with the
/// residuals when max_iter is reached first.
SpectralEmbedding smallest_eigenpairs(const SparseMatrix& l, int m, const EigenSolverOptions& options = {});

/// Number of eigenvalues <= rule.threshold, clamped to [2, rule.max_segments]
/// (and to the number of eigenvalues supplied).
int choose_segment_count(const std::vector<double>& eigenvalues, const EigengapRule& rule);

struct DiscretizeOptions {
    std::uint64_t seed = 0;
    int restarts = 8;
    int max_iter = 300;
    int attempts = 5;
};

/// K-means on the row-normalized first k eigenvector coordinates. Segment
/// ids are ordered by size, largest first (ties: earliest cell first).
SegmentMap discretize(const SpectralEmbedding& embedding, int k, int grid_h, int grid_w, int patch_size,
                      const DiscretizeOptions& options = {});

// Relabels arbitrary cluster labels into a SegmentMap (size-descending ids, bboxes).
SegmentMap make_segment_map(const std::vector<int>& labels, int grid_h, int grid_w, int patch_size);

}  // namespace endoseg
