#include "endoseg/concepts.hpp"

#include "endoseg/detail/little_endian.hpp"
#include "endoseg/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace endoseg {

PcaModel fit_pca(const Eigen::MatrixXd& data, int p, bool clamp_to_rank) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (p < 1 || p > d) {
        throw DataError("pca: target dimension " + std::to_string(p) + " outside [1, " + std::to_string(d) + "]");
    }
    if (n < p + 1) {
        throw DataError("pca: need at least " + std::to_string(p + 1) + " vectors, got " + std::to_string(n));
    }
    PcaModel model;
    model.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = s.size() > 0 ? s[0] * 1e-9 : 0.0;
    model.rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > cutoff && s[i] > 0.0) ++model.rank;
    }
    if (model.rank < p) {
        if (!clamp_to_rank || model.rank < 1) {
            throw DataError("pca: data has rank " + std::to_string(model.rank) + ", below the requested " +
                            std::to_string(p) + " components");
        }
        p = model.rank;
    }
    model.basis = svd.matrixV().leftCols(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::Index arg = 0;
        model.basis.col(j).cwiseAbs().maxCoeff(&arg);
        if (model.basis(arg, j) < 0.0) model.basis.col(j) = -model.basis.col(j);
    }
    model.explained_variance = s.head(p).array().square() / static_cast<double>(n - 1);
    return model;
}

std::string default_concept_label(int cluster_id) { return "cluster-" + std::to_string(cluster_id); }

Eigen::VectorXd ConceptModel::project(const Eigen::VectorXd& v) const {
    if (v.size() != pca_mean.size()) {
        throw DataError("concept model: vector dimension " + std::to_string(v.size()) + " does not match model (" +
                        std::to_string(pca_mean.size()) + ")");
    }
    return pca_basis.cast<double>().transpose() * (v - pca_mean.cast<double>());
}

std::map<int, std::string> ConceptModel::legend() const {
    std::map<int, std::string> out{{kOutOfFieldId, "out-of-field"}};
    for (int c = 0; c < k(); ++c) out[c + 1] = labels[static_cast<std::size_t>(c)];
    return out;
}

bool ConceptModel::operator==(const ConceptModel& o) const {
    return pca_mean == o.pca_mean && pca_basis.rows() == o.pca_basis.rows() &&
           pca_basis.cols() == o.pca_basis.cols() && pca_basis == o.pca_basis &&
           centroids.rows() == o.centroids.rows() && centroids.cols() == o.centroids.cols() &&
           centroids == o.centroids && labels == o.labels && seed == o.seed;
}

std::vector<ClusterAssignment> assign_segments(const ConceptModel& model, const std::vector<SegmentRecord>& records) {
    const Eigen::MatrixXd centroids = model.centroids.cast<double>();
    std::vector<ClusterAssignment> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        const Eigen::RowVectorXd z = model.project(rec.vector).transpose();
        double d2 = 0.0;
        const int c = nearest_centroid(centroids, z, &d2);
        out.push_back(ClusterAssignment{rec.image_id, rec.segment_id, c, std::sqrt(d2)});
    }
    return out;
}

ConceptFit fit_concepts(const std::vector<SegmentRecord>& training, const RunConfig& cfg) {
    if (training.empty()) throw DataError("fit_concepts: no training segments");
    const Eigen::MatrixXd x = stack_vectors(training);
    const auto n = static_cast<int>(x.rows());
    const auto d = static_cast<int>(x.cols());
    if (cfg.kmeans_k > n) {
        throw DataError("fit_concepts: k = " + std::to_string(cfg.kmeans_k) + " exceeds the " + std::to_string(n) +
                        " training segments");
    }
    const int p = std::min({cfg.pca_dim, d, n - 1});
    if (p < 1) throw DataError("fit_concepts: need at least two training segments");
    const PcaModel pca = fit_pca(x, p, true);

    ConceptFit fit;
    fit.model.pca_mean = pca.mean.cast<float>();
    fit.model.pca_basis = pca.basis.cast<float>();
    fit.model.seed = cfg.seed;
    fit.pca_dim_used = static_cast<int>(pca.basis.cols());

    Eigen::MatrixXd z(n, fit.pca_dim_used);
    for (int i = 0; i < n; ++i) z.row(i) = fit.model.project(training[static_cast<std::size_t>(i)].vector).transpose();
    const KMeansResult km =
        kmeans(z, KMeansOptions{cfg.kmeans_k, cfg.seed, cfg.kmeans_max_iter, cfg.kmeans_restarts});
    fit.model.centroids = km.centroids.cast<float>();
    fit.model.labels.resize(static_cast<std::size_t>(cfg.kmeans_k));
    for (int c = 0; c < cfg.kmeans_k; ++c) fit.model.labels[static_cast<std::size_t>(c)] = default_concept_label(c);
    fit.assignments = assign_segments(fit.model, training);
    fit.inertia = 0.0;
    for (const auto& a : fit.assignments) fit.inertia += a.distance * a.distance;
    return fit;
}

SemanticMask render_mask(const ConceptModel& model, const SegmentMap& map,
                         std::span<const ClusterAssignment> assignments, const BinaryMask* field_mask) {
    if (assignments.size() != static_cast<std::size_t>(map.n_segments)) {
        throw DataError("render: " + map.image_id + " has " + std::to_string(map.n_segments) + " segments but " +
                        std::to_string(assignments.size()) + " assignments");
    }
    std::vector<std::uint8_t> seg_to_id(assignments.size());
    for (std::size_t s = 0; s < assignments.size(); ++s) {
        const auto& a = assignments[s];
        if (a.segment_id != static_cast<int>(s) || a.cluster_id < 0 || a.cluster_id >= model.k()) {
            throw DataError("render: assignment list for " + map.image_id + " is out of order or out of range");
        }
        seg_to_id[s] = static_cast<std::uint8_t>(a.cluster_id + 1);
    }
    SemanticMask mask;
    mask.image_id = map.image_id;
    mask.height = map.grid_h * map.patch_size;
    mask.width = map.grid_w * map.patch_size;
    if (field_mask && (field_mask->height != mask.height || field_mask->width != mask.width)) {
        throw DataError("render: field mask for " + map.image_id + " does not match the preprocessed extent");
    }
    mask.labels.resize(static_cast<std::size_t>(mask.height) * mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            const int seg = map.at(y / map.patch_size, x / map.patch_size);
            std::uint8_t id = seg_to_id[static_cast<std::size_t>(seg)];
            if (field_mask && !field_mask->at(y, x)) id = kOutOfFieldId;
            mask.labels[static_cast<std::size_t>(y) * mask.width + x] = id;
        }
    }
    mask.legend = model.legend();
    return mask;
}

std::vector<SemanticMask> assign_and_render(const ConceptModel& model, std::span<const RenderInput> inputs) {
    std::vector<SemanticMask> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) {
        const auto assignments = assign_segments(model, *in.records);
        out.push_back(render_mask(model, *in.map, assignments, in.field_mask));
    }
    return out;
}

ConceptModel apply_labels(const ConceptModel& model, const std::map<int, std::string>& names) {
    ConceptModel out = model;
    for (const auto& [id, name] : names) {
        if (id < 0 || id >= model.k()) {
            throw DataError("concept label id " + std::to_string(id) + " outside [0, " + std::to_string(model.k()) +
                            ")");
        }
        out.labels[static_cast<std::size_t>(id)] = name;
    }
    return out;
}

namespace {
constexpr char kModelMagic[4] = {'C', 'M', 'B', '1'};
}

std::vector<std::uint8_t> encode_concept_model(const ConceptModel& m) {
    detail::LeWriter w;
    w.bytes(kModelMagic, 4);
    w.uint<std::uint16_t>(1);
    w.uint<std::uint16_t>(0);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.input_dim()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.reduced_dim()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.k()));
    w.uint<std::uint64_t>(m.seed);
    for (Eigen::Index i = 0; i < m.pca_mean.size(); ++i) w.f32(m.pca_mean[i]);
    for (Eigen::Index r = 0; r < m.pca_basis.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.pca_basis.cols(); ++c) w.f32(m.pca_basis(r, c));
    }
    for (Eigen::Index r = 0; r < m.centroids.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.centroids.cols(); ++c) w.f32(m.centroids(r, c));
    }
    return std::move(w.buffer());
}

ConceptModel decode_concept_model(std::span<const std::uint8_t> bytes) {
    detail::LeReader r(bytes, "concept model");
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kModelMagic, 4) != 0) throw DataError("concept model: bad magic");
    if (r.uint<std::uint16_t>() != 1) throw DataError("concept model: unsupported version");
    r.uint<std::uint16_t>();
    const auto d = r.uint<std::uint32_t>();
    const auto p = r.uint<std::uint32_t>();
    const auto k = r.uint<std::uint32_t>();
    ConceptModel m;
    m.seed = r.uint<std::uint64_t>();
    if (d == 0 || p == 0 || p > d || k < 2) throw DataError("concept model: invalid header");
    const std::uint64_t floats = std::uint64_t{d} + std::uint64_t{d} * p + std::uint64_t{k} * p;
    if (r.remaining() != floats * 4) throw DataError("concept model: payload size does not match header");
    m.pca_mean.resize(d);
    for (std::uint32_t i = 0; i < d; ++i) m.pca_mean[i] = r.f32();
    m.pca_basis.resize(d, p);
    for (std::uint32_t i = 0; i < d; ++i) {
        for (std::uint32_t j = 0; j < p; ++j) m.pca_basis(i, j) = r.f32();
    }
    m.centroids.resize(k, p);
    for (std::uint32_t i = 0; i < k; ++i) {
        for (std::uint32_t j = 0; j < p; ++j) m.centroids(i, j) = r.f32();
    }
    m.labels.resize(k);
    for (std::uint32_t c = 0; c < k; ++c) m.labels[c] = default_concept_label(static_cast<int>(c));
    return m;
}

nlohmann::json concept_labels_to_json(const ConceptModel& model) {
    nlohmann::json j = nlohmann::json::object();
    for (int c = 0; c < model.k(); ++c) j[std::to_string(c)] = model.labels[static_cast<std::size_t>(c)];
    return j;
}

std::map<int, std::string> concept_labels_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("concepts.json: expected an object mapping cluster id to name");
    std::map<int, std::string> out;
    for (const auto& [key, value] : j.items()) {
        int id = 0;
        try {
            std::size_t used = 0;
            id = std::stoi(key, &used);
            if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw DataError("concepts.json: key '" + key + "' is not a cluster id");
        }
        if (!value.is_string()) throw DataError("concepts.json: name for cluster " + key + " must be a string");
        out[id] = value.get<std::string>();
    }
    return out;
}

}  // namespace endoseg
