#include "endoseg/spectral.hpp"

#include "endoseg/error.hpp"
#include "endoseg/kmeans.hpp"
#include "endoseg/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace endoseg {

std::vector<int> SegmentMap::area_cells() const {
    std::vector<int> areas(static_cast<std::size_t>(n_segments), 0);
    for (int id : assignment) ++areas[static_cast<std::size_t>(id)];
    return areas;
}

BinaryMask SegmentMap::cell_mask(int segment) const {
    BinaryMask m(grid_h, grid_w);
    for (std::size_t i = 0; i < assignment.size(); ++i) m.data[i] = assignment[i] == segment ? 1 : 0;
    return m;
}

SparseMatrix normalized_laplacian(const AffinityMatrix& w) {
    const Eigen::Index n = w.size();
    if (w.weights.cols() != n) throw DataError("laplacian: affinity must be square");
    Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
    for (Eigen::Index col = 0; col < n; ++col) {
        for (SparseMatrix::InnerIterator it(w.weights, col); it; ++it) {
            if (it.row() == col) continue;
            if (!(it.value() >= 0.0) || !std::isfinite(it.value())) {
                throw DataError("laplacian: affinity weights must be finite and nonnegative");
            }
            degree[it.row()] += it.value();
        }
    }
    Eigen::VectorXd inv_sqrt(n);
    std::vector<Eigen::Triplet<double, int>> trips;
    trips.reserve(static_cast<std::size_t>(w.weights.nonZeros() + n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (degree[i] > 0.0) {
            inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
        } else {
            // Self-loop of weight eps with degree eps: 1 - eps / eps = 0 on the diagonal.
            inv_sqrt[i] = 1.0 / std::sqrt(kIsolatedSelfLoop);
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i), 0.0);
        }
    }
    for (Eigen::Index col = 0; col < n; ++col) {
        for (SparseMatrix::InnerIterator it(w.weights, col); it; ++it) {
            if (it.row() == col || it.value() == 0.0) continue;
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(col),
                               -it.value() * inv_sqrt[it.row()] * inv_sqrt[col]);
        }
    }
    SparseMatrix l(n, n);
    l.setFromTriplets(trips.begin(), trips.end());
    return l;
}

namespace {

// Orthonormal basis for the columns of `s`, processed left to right; columns
// that are numerically dependent on earlier ones are dropped.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& s) {
    Eigen::MatrixXd q(s.rows(), s.cols());
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        Eigen::VectorXd v = s.col(j);
        const double n0 = v.norm();
        if (!(n0 > 0.0)) continue;
        for (int pass = 0; pass < 2 && kept > 0; ++pass) {
            const auto basis = q.leftCols(kept);
            v -= basis * (basis.transpose() * v);
        }
        const double nv = v.norm();
        if (!(nv > 1e-10 * n0)) continue;
        v /= nv;
        if (kept > 0) {
            const auto basis = q.leftCols(kept);
            v -= basis * (basis.transpose() * v);
            v.normalize();
        }
        q.col(kept++) = v;
    }
    return q.leftCols(kept);
}

void fix_signs(Eigen::MatrixXd& vecs) {
    for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < vecs.rows(); ++i) {
            // Relative slack so near-equal magnitudes do not flip on rounding noise.
            if (std::abs(vecs(i, j)) > best * (1.0 + 1e-9)) {
                best = std::abs(vecs(i, j));
                arg = i;
            }
        }
        if (vecs(arg, j) < 0.0) vecs.col(j) = -vecs.col(j);
    }
}

}  // namespace

SpectralEmbedding smallest_eigenpairs(const SparseMatrix& l, int m, const EigenSolverOptions& opt) {
    const Eigen::Index n = l.rows();
    if (l.cols() != n) throw DataError("eigensolver: matrix must be square");
    if (m < 1 || m >= n) {
        throw DataError("eigensolver: requested " + std::to_string(m) + " eigenpairs from a " + std::to_string(n) +
                        "x" + std::to_string(n) + " matrix (need 1 <= m < n)");
    }
    if (!(opt.tol > 0.0)) throw ConfigError("eigensolver: tol must be positive");

    const int guard = opt.guard_vectors >= 0 ? opt.guard_vectors : std::max(4, m / 2);
    const Eigen::Index bs = std::min<Eigen::Index>(n, m + guard);

    Rng rng(opt.seed);
    Eigen::MatrixXd x(n, bs);
    for (Eigen::Index j = 0; j < bs; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) x(i, j) = rng.normal();
    }
    x = orthonormalize(x);
    if (x.cols() < bs) throw NumericalError("eigensolver: degenerate start block");

    auto rayleigh_ritz = [&](const Eigen::MatrixXd& basis, Eigen::VectorXd& theta) -> Eigen::MatrixXd {
        const Eigen::MatrixXd lb = l * basis;
        Eigen::MatrixXd h = basis.transpose() * lb;
        h = 0.5 * (h + h.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        if (es.info() != Eigen::Success) throw NumericalError("eigensolver: Rayleigh-Ritz step failed");
        theta = es.eigenvalues().head(bs);
        return es.eigenvectors().leftCols(bs);
    };

    Eigen::VectorXd theta;
    x = x * rayleigh_ritz(x, theta);
    Eigen::MatrixXd p(n, 0);
    Eigen::VectorXd res(bs);

    SpectralEmbedding out;
    int it = 0;
    for (;; ++it) {
        const Eigen::MatrixXd ax = l * x;
        Eigen::MatrixXd r = ax - x * theta.asDiagonal();
        bool done = true;
        for (Eigen::Index j = 0; j < bs; ++j) {
            res[j] = r.col(j).norm();
            if (j < m && !(res[j] <= opt.tol)) done = false;
        }
        if (done) break;
        if (it >= opt.max_iter) {
            std::ostringstream msg;
            msg << "eigensolver: no convergence after " << opt.max_iter << " iterations; residuals:";
            for (Eigen::Index j = 0; j < m; ++j) msg << ' ' << res[j];
            throw NumericalError(msg.str());
        }

        // Converged wanted pairs contribute no search direction (soft locking).
        std::vector<Eigen::Index> active;
        for (Eigen::Index j = 0; j < bs; ++j) {
            if (j >= m || res[j] > 0.1 * opt.tol) active.push_back(j);
        }
        Eigen::MatrixXd s(n, bs + static_cast<Eigen::Index>(active.size()) + p.cols());
        s.leftCols(bs) = x;
        for (std::size_t a = 0; a < active.size(); ++a) s.col(bs + static_cast<Eigen::Index>(a)) = r.col(active[a]);
        if (p.cols() > 0) s.rightCols(p.cols()) = p;

        const Eigen::MatrixXd q = orthonormalize(s);
        const Eigen::MatrixXd c = rayleigh_ritz(q, theta);
        x = q * c;
        const Eigen::Index rest = q.cols() - bs;
        p = rest > 0 ? Eigen::MatrixXd(q.rightCols(rest) * c.bottomRows(rest)) : Eigen::MatrixXd(n, 0);
    }

    out.iterations = it;
    out.eigenvectors = x.leftCols(m);
    fix_signs(out.eigenvectors);
    out.eigenvalues.assign(theta.data(), theta.data() + m);
    out.residuals.assign(res.data(), res.data() + m);
    return out;
}

int choose_segment_count(const std::vector<double>& eigenvalues, const EigengapRule& rule) {
    int count = 0;
    for (double v : eigenvalues) {
        if (v <= rule.threshold) ++count;
    }
    const int upper = std::min<int>(rule.max_segments, static_cast<int>(eigenvalues.size()));
    return std::clamp(count, 2, std::max(2, upper));
}

SegmentMap make_segment_map(const std::vector<int>& labels, int grid_h, int grid_w, int patch_size) {
    const std::size_t n = labels.size();
    if (n != static_cast<std::size_t>(grid_h) * grid_w) throw DataError("segment map: label count != grid size");
    const int max_label = n == 0 ? -1 : *std::max_element(labels.begin(), labels.end());
    std::vector<std::size_t> count(static_cast<std::size_t>(max_label + 1), 0);
    std::vector<std::size_t> first(static_cast<std::size_t>(max_label + 1), n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(labels[i]);
        ++count[l];
        first[l] = std::min(first[l], i);
    }
    std::vector<int> order;
    for (int l = 0; l <= max_label; ++l) {
        if (count[static_cast<std::size_t>(l)] > 0) order.push_back(l);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto ca = count[static_cast<std::size_t>(a)];
        const auto cb = count[static_cast<std::size_t>(b)];
        if (ca != cb) return ca > cb;
        return first[static_cast<std::size_t>(a)] < first[static_cast<std::size_t>(b)];
    });
    std::vector<int> remap(static_cast<std::size_t>(max_label + 1), -1);
    for (std::size_t i = 0; i < order.size(); ++i) remap[static_cast<std::size_t>(order[i])] = static_cast<int>(i);

    SegmentMap map;
    map.grid_h = grid_h;
    map.grid_w = grid_w;
    map.patch_size = patch_size;
    map.n_segments = static_cast<int>(order.size());
    map.assignment.resize(n);
    std::vector<int> r0(order.size(), grid_h), c0(order.size(), grid_w), r1(order.size(), -1), c1(order.size(), -1);
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * grid_w + c;
            const int id = remap[static_cast<std::size_t>(labels[i])];
            map.assignment[i] = id;
            const auto s = static_cast<std::size_t>(id);
            r0[s] = std::min(r0[s], r);
            c0[s] = std::min(c0[s], c);
            r1[s] = std::max(r1[s], r);
            c1[s] = std::max(c1[s], c);
        }
    }
    for (std::size_t s = 0; s < order.size(); ++s) {
        map.bboxes.push_back(PixelBox{c0[s] * patch_size, r0[s] * patch_size, (c1[s] + 1) * patch_size,
                                      (r1[s] + 1) * patch_size});
    }
    return map;
}

SegmentMap discretize(const SpectralEmbedding& emb, int k, int grid_h, int grid_w, int patch_size,
                      const DiscretizeOptions& opt) {
    const Eigen::Index n = emb.eigenvectors.rows();
    if (k < 1 || k > emb.eigenvectors.cols()) {
        throw DataError("discretize: k = " + std::to_string(k) + " but only " +
                        std::to_string(emb.eigenvectors.cols()) + " eigenvectors available");
    }
    if (n != static_cast<Eigen::Index>(grid_h) * grid_w) throw DataError("discretize: grid does not match embedding");
    Eigen::MatrixXd coords = emb.eigenvectors.leftCols(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = coords.row(i).norm();
        if (norm > 0.0) coords.row(i) /= norm;
    }
    for (int attempt = 0; attempt < opt.attempts; ++attempt) {
        const std::uint64_t seed = attempt == 0 ? opt.seed : Rng::derive(opt.seed, 1000 + attempt);
        const KMeansResult km = kmeans(coords, KMeansOptions{k, seed, opt.max_iter, opt.restarts});
        std::vector<int> used(static_cast<std::size_t>(k), 0);
        for (int a : km.assignment) used[static_cast<std::size_t>(a)] = 1;
        if (std::all_of(used.begin(), used.end(), [](int u) { return u != 0; })) {
            SegmentMap map = make_segment_map(km.assignment, grid_h, grid_w, patch_size);
            map.eigenvalues = emb.eigenvalues;
            return map;
        }
    }
    throw NumericalError("discretize: k-means left a cluster empty after " + std::to_string(opt.attempts) +
                         " attempts (k = " + std::to_string(k) + ")");
}

}  // namespace endoseg
