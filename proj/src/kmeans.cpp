#include "endoseg/kmeans.hpp"

#include "endoseg/error.hpp"
#include "endoseg/rng.hpp"

#include <limits>

namespace endoseg {

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     double* dist2) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist2) *dist2 = best_d;
    return best;
}

namespace {

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& pts, int k, Rng& rng) {
    const Eigen::Index n = pts.rows();
    Eigen::MatrixXd centers(k, pts.cols());
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    centers.row(0) = pts.row(first);
    chosen[static_cast<std::size_t>(first)] = 1;
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = (pts.row(i) - centers.row(0)).squaredNorm();

    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = -1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (d2[i] > 0.0 && acc > target) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                for (Eigen::Index i = n - 1; i >= 0; --i) {
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            // Every point coincides with a chosen center; fall back to index order.
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!chosen[static_cast<std::size_t>(i)]) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(c) = pts.row(pick);
        chosen[static_cast<std::size_t>(pick)] = 1;
        for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (pts.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

double assign(const Eigen::MatrixXd& pts, const Eigen::MatrixXd& centers, std::vector<int>& labels,
              Eigen::VectorXd& d2) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        double d = 0.0;
        labels[static_cast<std::size_t>(i)] = nearest_centroid(centers, pts.row(i), &d);
        d2[i] = d;
        inertia += d;
    }
    return inertia;
}

KMeansResult lloyd(const Eigen::MatrixXd& pts, Eigen::MatrixXd centers, int max_iter) {
    const Eigen::Index n = pts.rows();
    const int k = static_cast<int>(centers.rows());
    KMeansResult res;
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::vector<int> prev;
    Eigen::VectorXd d2(n);

    for (int it = 0; it < max_iter; ++it) {
        const double inertia = assign(pts, centers, labels, d2);
        res.inertia_trace.push_back(inertia);
        res.iterations = it + 1;
        if (labels == prev) {
            res.converged = true;
            break;
        }
        prev = labels;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, pts.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = labels[static_cast<std::size_t>(i)];
            sums.row(l) += pts.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // Empty cluster: move it onto the worst-served point.
            Eigen::Index far = 0;
            for (Eigen::Index i = 1; i < n; ++i) {
                if (d2[i] > d2[far]) far = i;
            }
            centers.row(c) = pts.row(far);
            d2[far] = -1.0;
        }
    }
    res.inertia = assign(pts, centers, labels, d2);
    if (!res.converged) res.inertia_trace.push_back(res.inertia);
    res.assignment = std::move(labels);
    res.centroids = std::move(centers);
    return res;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& opt) {
    const Eigen::Index n = points.rows();
    if (opt.k < 1) throw DataError("kmeans: k must be >= 1");
    if (n < opt.k) {
        throw DataError("kmeans: k = " + std::to_string(opt.k) + " exceeds the number of points (" +
                        std::to_string(n) + ")");
    }
    if (opt.max_iter < 1 || opt.restarts < 1) throw ConfigError("kmeans: max_iter and restarts must be >= 1");

    KMeansResult best;
    bool have = false;
    for (int r = 0; r < opt.restarts; ++r) {
        Rng rng(Rng::derive(opt.seed, static_cast<std::uint64_t>(r)));
        KMeansResult res = lloyd(points, seed_plus_plus(points, opt.k, rng), opt.max_iter);
        if (!have || res.inertia < best.inertia) {
            best = std::move(res);
            have = true;
        }
    }
    return best;
}

}  // namespace endoseg
