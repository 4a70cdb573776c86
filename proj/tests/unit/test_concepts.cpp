#include "gen.hpp"
#include "oracles.hpp"

#include "endoseg/concepts.hpp"
#include "endoseg/error.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

using namespace endoseg;

namespace {

SegmentRecord record(const std::string& image, int seg, Eigen::VectorXd v) {
    SegmentRecord r;
    r.image_id = image;
    r.segment_id = seg;
    r.area_cells = 1;
    r.vector = v.normalized();
    return r;
}

// `groups` tight clusters around random unit directions in R^dim.
std::vector<SegmentRecord> planted_records(Rng& rng, int groups, int per_group, int dim, std::vector<int>* truth) {
    const Eigen::MatrixXd centers = testing::random_matrix(rng, groups, dim);
    std::vector<SegmentRecord> out;
    for (int i = 0; i < groups * per_group; ++i) {
        const int g = i % groups;
        const Eigen::VectorXd v = centers.row(g).transpose().normalized() + 0.01 * testing::random_matrix(rng, dim, 1);
        out.push_back(record("img" + std::to_string(i / 5), i % 5, v));
        if (truth) truth->push_back(g);
    }
    return out;
}

RunConfig concepts_config(int k, int pca_dim) {
    RunConfig cfg;
    cfg.kmeans_k = k;
    cfg.pca_dim = pca_dim;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("PCA reconstructs data in an exact 2-dim affine subspace") {
    Rng rng(1);
    const Eigen::MatrixXd coeffs = testing::random_matrix(rng, 40, 2);
    const Eigen::MatrixXd dirs = testing::random_matrix(rng, 2, 7);
    const Eigen::RowVectorXd offset = testing::random_matrix(rng, 1, 7);
    const Eigen::MatrixXd x = (coeffs * dirs).rowwise() + offset;
    const PcaModel pca = fit_pca(x, 2);
    CHECK(pca.rank == 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Eigen::VectorXd c = x.row(i).transpose() - pca.mean;
        const Eigen::VectorXd rec = pca.basis * (pca.basis.transpose() * c);
        CHECK((rec - c).norm() < 1e-10);
    }
    CHECK_THROWS_WITH(fit_pca(x, 3), Catch::Matchers::ContainsSubstring("rank 2"));
    CHECK(fit_pca(x, 3, true).basis.cols() == 2);
}

TEST_CASE("PCA with p = D preserves pairwise distances") {
    Rng rng(2);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 20, 6);
    const PcaModel pca = fit_pca(x, 6);
    const Eigen::MatrixXd z = (x.rowwise() - pca.mean.transpose()) * pca.basis;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            CHECK(std::abs((z.row(i) - z.row(j)).norm() - (x.row(i) - x.row(j)).norm()) < 1e-10);
        }
    }
}

TEST_CASE("PCA explained variance matches the covariance eigendecomposition") {
    Rng rng(3);
    Eigen::MatrixXd x = testing::random_matrix(rng, 200, 16);
    for (int j = 0; j < 16; ++j) x.col(j) *= 1.0 + j;  // distinct variances
    const PcaModel pca = fit_pca(x, 4);
    const oracle::DenseEigen ref = oracle::pca_covariance(x, 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(pca.explained_variance[i] - ref.values[i]) < 1e-8 * ref.values[0]);
        CHECK(std::abs(std::abs(pca.basis.col(i).dot(ref.vectors.col(i))) - 1.0) < 1e-8);
        Eigen::Index arg = 0;
        pca.basis.col(i).cwiseAbs().maxCoeff(&arg);
        CHECK(pca.basis(arg, i) > 0.0);
    }
    CHECK((pca.basis.transpose() * pca.basis - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("PCA projection is idempotent") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const int d = 3 + static_cast<int>(rng.below(10));
        const int p = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
        const Eigen::MatrixXd x = testing::random_matrix(rng, d + 5, d);
        const PcaModel pca = fit_pca(x, p);
        const Eigen::MatrixXd proj = pca.basis * pca.basis.transpose();
        const Eigen::VectorXd v = testing::random_matrix(rng, d, 1);
        const Eigen::VectorXd once = proj * (v - pca.mean);
        CHECK((proj * once - once).norm() < 1e-10);
        CHECK((v - pca.mean - once).norm() <= (v - pca.mean).norm() + 1e-12);
    }
}

TEST_CASE("PCA preconditions") {
    Rng rng(5);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 4, 6);
    CHECK_THROWS_AS(fit_pca(x, 4), DataError);
    CHECK_THROWS_AS(fit_pca(x, 7), DataError);
    CHECK_THROWS_AS(fit_pca(x, 0), DataError);
}

TEST_CASE("30 segments in 3 planted groups are recovered") {
    Rng rng(6);
    std::vector<int> truth;
    const auto records = planted_records(rng, 3, 10, 16, &truth);
    const ConceptFit fit = fit_concepts(records, concepts_config(3, 8));
    std::vector<int> got;
    for (const auto& a : fit.assignments) got.push_back(a.cluster_id);
    CHECK(oracle::ari_pairs(got, truth) == 1.0);
    CHECK(fit.model.k() == 3);
    CHECK(fit.pca_dim_used == 8);
    CHECK(fit.model.labels == std::vector<std::string>{"cluster-0", "cluster-1", "cluster-2"});
    const Eigen::MatrixXd basis = fit.model.pca_basis.cast<double>();
    const Eigen::Index p = basis.cols();
    CHECK((basis.transpose() * basis - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("default k of 15 gives a model with 15 centroids") {
    Rng rng(7);
    std::vector<SegmentRecord> records;
    for (int i = 0; i < 40; ++i) records.push_back(record("i" + std::to_string(i), 0, testing::random_matrix(rng, 12, 1)));
    RunConfig cfg;
    const ConceptFit fit = fit_concepts(records, cfg);
    CHECK(fit.model.k() == 15);
    CHECK(fit.model.centroids.rows() == 15);
    CHECK(fit.model.legend().size() == 16);
}

TEST_CASE("fit preconditions") {
    Rng rng(8);
    const std::vector<SegmentRecord> one{record("a", 0, testing::random_matrix(rng, 4, 1))};
    CHECK_THROWS_AS(fit_concepts(one, concepts_config(2, 8)), DataError);
    CHECK_THROWS_AS(fit_concepts({}, concepts_config(2, 8)), DataError);
}

TEST_CASE("pca dimension is clamped by D and N - 1") {
    Rng rng(9);
    std::vector<SegmentRecord> records;
    for (int i = 0; i < 5; ++i) records.push_back(record("i", i, testing::random_matrix(rng, 10, 1)));
    CHECK(fit_concepts(records, concepts_config(2, 64)).pca_dim_used == 4);
    records.clear();
    for (int i = 0; i < 30; ++i) records.push_back(record("i", i, testing::random_matrix(rng, 3, 1)));
    CHECK(fit_concepts(records, concepts_config(2, 64)).pca_dim_used == 3);
}

TEST_CASE("assignment on the training fold reproduces the fit") {
    Rng rng(10);
    for (int t = 0; t < 10; ++t) {
        const auto records = planted_records(rng, 4, 8, 10, nullptr);
        const ConceptFit fit = fit_concepts(records, concepts_config(5, 6));
        CHECK(assign_segments(fit.model, records) == fit.assignments);
        for (const auto& a : fit.assignments) {
            CHECK(a.distance >= 0.0);
            CHECK(a.cluster_id >= 0);
            CHECK(a.cluster_id < 5);
        }
    }
}

TEST_CASE("a segment equal to a centroid's pre-image lands on it with distance 0") {
    ConceptModel m;
    m.pca_mean = Eigen::VectorXf::Zero(3);
    m.pca_basis = Eigen::MatrixXf::Identity(3, 2);
    m.centroids.resize(2, 2);
    m.centroids << 1, 0, -1, 0;
    m.labels = {"a", "b"};
    Eigen::VectorXd v(3);
    v << -1, 0, 0;
    SegmentRecord r;
    r.vector = v;
    const auto a = assign_segments(m, {r});
    CHECK(a[0].cluster_id == 1);
    CHECK(a[0].distance == 0.0);
    v << 0.2, 3, 0;
    r.vector = v;
    CHECK(assign_segments(m, {r})[0].cluster_id == 0);
    r.vector = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(assign_segments(m, {r}), DataError);
}

TEST_CASE("rendered pixel counts equal member segment areas") {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const int gh = 2 + static_cast<int>(rng.below(6)), gw = 2 + static_cast<int>(rng.below(6));
        const int patch = 1 + static_cast<int>(rng.below(5));
        auto labels = testing::random_labels(rng, static_cast<std::size_t>(gh * gw), 4);
        SegmentMap map = make_segment_map(labels, gh, gw, patch);
        map.image_id = "r";
        std::vector<SegmentRecord> records;
        for (int s = 0; s < map.n_segments; ++s) records.push_back(record("r", s, testing::random_matrix(rng, 6, 1)));
        std::vector<SegmentRecord> train = records;
        for (int i = 0; i < 6; ++i) train.push_back(record("x", i, testing::random_matrix(rng, 6, 1)));
        const ConceptFit fit = fit_concepts(train, concepts_config(3, 4));
        const auto assigned = assign_segments(fit.model, records);
        const RenderInput in{&map, &records, nullptr};
        const SemanticMask mask = assign_and_render(fit.model, std::span(&in, 1)).front();
        CHECK(mask == render_mask(fit.model, map, assigned));
        CHECK(mask.height == gh * patch);
        CHECK(mask.width == gw * patch);
        const auto area = map.area_cells();
        for (int c = 0; c < 3; ++c) {
            long expect = 0;
            for (int s = 0; s < map.n_segments; ++s) {
                if (assigned[static_cast<std::size_t>(s)].cluster_id == c) expect += area[static_cast<std::size_t>(s)] * patch * patch;
            }
            CHECK(std::count(mask.labels.begin(), mask.labels.end(), static_cast<std::uint8_t>(c + 1)) == expect);
        }
        CHECK(std::count(mask.labels.begin(), mask.labels.end(), 0) == 0);
    }
}

TEST_CASE("out-of-field pixels render as id 0") {
    Rng rng(12);
    const SegmentMap map = make_segment_map({0, 0, 1, 1}, 2, 2, 4);
    std::vector<SegmentRecord> records{record("m", 0, testing::random_matrix(rng, 5, 1)),
                                       record("m", 1, testing::random_matrix(rng, 5, 1))};
    std::vector<SegmentRecord> train = records;
    train.push_back(record("t", 0, testing::random_matrix(rng, 5, 1)));
    const ConceptFit fit = fit_concepts(train, concepts_config(2, 2));
    const BinaryMask field = testing::rect_mask(8, 8, 2, 2, 7, 6);
    const SemanticMask mask = render_mask(fit.model, map, assign_segments(fit.model, records), &field);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const auto id = mask.labels[static_cast<std::size_t>(y * 8 + x)];
            CHECK((id == 0) == !field.at(y, x));
        }
    }
    CHECK(mask.legend.at(0) == "out-of-field");
    const BinaryMask wrong(4, 4);
    CHECK_THROWS_AS(render_mask(fit.model, map, assign_segments(fit.model, records), &wrong), DataError);
    const auto assigned = assign_segments(fit.model, records);
    CHECK_THROWS_AS(render_mask(fit.model, map, std::span(assigned).first(1)), DataError);
}

TEST_CASE("labels") {
    Rng rng(13);
    std::vector<SegmentRecord> records;
    for (int i = 0; i < 20; ++i) records.push_back(record("i", i, testing::random_matrix(rng, 8, 1)));
    const ConceptFit fit = fit_concepts(records, concepts_config(6, 5));

    SECTION("one name, the rest keep their defaults") {
        const ConceptModel named = apply_labels(fit.model, {{0, "lumen"}});
        CHECK(named.labels[0] == "lumen");
        for (int c = 1; c < 6; ++c) CHECK(named.labels[static_cast<std::size_t>(c)] == "cluster-" + std::to_string(c));
    }
    SECTION("the six reviewed concepts appear in the legend") {
        const std::vector<std::string> names{"lumen",    "out-of-field", "normal vascular pattern",
                                             "textureless", "erythema",  "bleeding"};
        std::map<int, std::string> m;
        for (int c = 0; c < 6; ++c) m[c] = names[static_cast<std::size_t>(c)];
        const auto legend = apply_labels(fit.model, m).legend();
        for (int c = 0; c < 6; ++c) CHECK(legend.at(c + 1) == names[static_cast<std::size_t>(c)]);
    }
    SECTION("out-of-range id") {
        CHECK_THROWS_AS(apply_labels(fit.model, {{99, "x"}}), DataError);
        CHECK_THROWS_AS(apply_labels(fit.model, {{-1, "x"}}), DataError);
    }
    SECTION("naming never changes mask ids") {
        const SegmentMap map = make_segment_map({0, 1, 2, 3}, 2, 2, 2);
        std::vector<SegmentRecord> four(records.begin(), records.begin() + 4);
        for (int s = 0; s < 4; ++s) four[static_cast<std::size_t>(s)].segment_id = s;
        const auto a = assign_segments(fit.model, four);
        const ConceptModel named = apply_labels(fit.model, {{0, "lumen"}, {3, "bleeding"}});
        const SemanticMask before = render_mask(fit.model, map, a);
        const SemanticMask after = render_mask(named, map, assign_segments(named, four));
        CHECK(before.labels == after.labels);
        CHECK(after.legend.at(1) == "lumen");
    }
}

TEST_CASE("concept model binary round-trip and corruption") {
    Rng rng(14);
    std::vector<SegmentRecord> records;
    for (int i = 0; i < 12; ++i) records.push_back(record("i", i, testing::random_matrix(rng, 9, 1)));
    const ConceptModel model = fit_concepts(records, concepts_config(4, 5)).model;
    const auto bytes = encode_concept_model(model);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CMB1");
    ConceptModel back = decode_concept_model(bytes);
    back.labels = model.labels;
    CHECK(back == model);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_concept_model(bad), DataError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_concept_model(bad), DataError);
}

TEST_CASE("concepts.json round-trip") {
    ConceptModel m;
    m.centroids = Eigen::MatrixXf::Zero(3, 1);
    m.labels = {"lumen", "cluster-1", "erythema"};
    const auto back = concept_labels_from_json(nlohmann::json::parse(concept_labels_to_json(m).dump()));
    CHECK(back == std::map<int, std::string>{{0, "lumen"}, {1, "cluster-1"}, {2, "erythema"}});
    CHECK_THROWS_AS(concept_labels_from_json(nlohmann::json{{"a", "x"}}), DataError);
    CHECK_THROWS_AS(concept_labels_from_json(nlohmann::json{{"1", 2}}), DataError);
    CHECK_THROWS_AS(concept_labels_from_json(nlohmann::json::array()), DataError);
}
