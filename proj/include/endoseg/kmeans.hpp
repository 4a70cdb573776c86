#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace endoseg {

struct KMeansOptions {
    int k = 2;
    std::uint64_t seed = 0;
    int max_iter = 300;
    int restarts = 8;
};

struct KMeansResult {
    Eigen::MatrixXd centroids;    // k x p
    std::vector<int> assignment;  // per point
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // after each assignment step of the kept restart
    int iterations = 0;
    bool converged = false;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing (or max_iter); the restart with the lowest inertia wins, earlier
/// restart on ties. A cluster that empties during an update is re-seeded at the
/// point farthest from its assigned centroid. Equidistant centroids resolve to
/// the lowest cluster id. Deterministic for a given seed.
KMeansResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options);

// Index of the nearest centroid (lowest id on ties); squared distance via `dist2` when non-null.
int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     double* dist2 = nullptr);

}  // namespace endoseg
