// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "gen.hpp"
#include "oracles.hpp"
#include "synth.hpp"

#include "endoseg/error.hpp"
#include "endoseg/evaluation.hpp"
#include "endoseg/file_util.hpp"
#include "endoseg/image_io.hpp"
#include "endoseg/metrics.hpp"
#include "endoseg/rng.hpp"
#include "endoseg/spectral.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace endoseg;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances ----
constexpr double kEigenvalueTol = 1e-6;
constexpr double kSubspaceSinTol = 1e-4;
constexpr double kSolverTol = 1e-9;
constexpr double kEigenBudgetSeconds = 60.0;
constexpr double kPixelAriMin = 0.9;
constexpr double kUnsupF1 = 1.0;
constexpr double kEndToEndBudgetSeconds = 300.0;
constexpr double kRatioTol = 1e-9;
constexpr double kKnnVoteRelTol = 1e-9;
constexpr double kGradTol = 1e-5;
constexpr double kSeparableAccuracyMin = 0.99;
constexpr double kRealDataMicroF1Min = 0.70;

struct Outcome {
    enum Status { pass, fail, skip } status;
    std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIP";
    if (o.status == Outcome::fail) ++g_failures;
    std::cout << tag << "  " << name << "  " << o.detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + ENDOSEG_CLI_PATH + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// ---- criteria ----

Outcome eigensolver_oracle() {
    Rng rng(101);
    const auto t0 = std::chrono::steady_clock::now();
    double worst_value = 0.0, worst_sin = 0.0;
    for (int g = 0; g < 50; ++g) {
        const int n = 20 + static_cast<int>(rng.below(481));
        const AffinityMatrix w = testing::random_sparse_graph(rng, n, 2 * n);
        const SparseMatrix l = normalized_laplacian(w);
        const SpectralEmbedding got = smallest_eigenpairs(l, 8, {kSolverTol, 20000, static_cast<std::uint64_t>(g), -1});
        const oracle::DenseEigen ref = oracle::smallest_dense(oracle::dense_laplacian(w), 8);
        for (int i = 0; i < 8; ++i) {
            worst_value = std::max(worst_value, std::abs(got.eigenvalues[static_cast<std::size_t>(i)] - ref.values[i]));
        }
        worst_sin = std::max(worst_sin, oracle::max_principal_angle_sin(got.eigenvectors, ref.vectors));
    }
    const double secs = seconds_since(t0);
    const bool ok = worst_value <= kEigenvalueTol && worst_sin < kSubspaceSinTol && secs < kEigenBudgetSeconds;
    return {ok ? Outcome::pass : Outcome::fail,
            "50 graphs: max |dlambda| " + fmt(worst_value) + ", max sin(angle) " + fmt(worst_sin) + ", " + fmt(secs) + " s"};
}

Outcome planted_recovery() {
    Rng rng(202);
    int count_ok = 0, ari_ok = 0;
    double worst_ari = 1.0;
    for (int t = 0; t < 100; ++t) {
        const int blocks = 2 + static_cast<int>(rng.below(5));
        const testing::PlantedGraph g = testing::planted_blocks(rng, blocks, 8, 40);
        const int n = static_cast<int>(g.labels.size());
        const SparseMatrix l = normalized_laplacian(g.affinity);
        const SpectralEmbedding emb = smallest_eigenpairs(l, std::min(16, n - 1), {1e-6, 5000, static_cast<std::uint64_t>(t), -1});
        const int k = choose_segment_count(emb.eigenvalues, EigengapRule{});
        if (k == blocks) ++count_ok;
        const SegmentMap map = discretize(emb, k, 1, n, 1, DiscretizeOptions{static_cast<std::uint64_t>(t), 8, 300, 5});
        const double ari = oracle::ari_pairs(map.assignment, g.labels);
        worst_ari = std::min(worst_ari, ari);
        if (ari == 1.0) ++ari_ok;
    }
    const bool ok = count_ok == 100 && ari_ok == 100;
    return {ok ? Outcome::pass : Outcome::fail, "100 instances: count correct " + std::to_string(count_ok) +
                                                    ", ARI = 1 in " + std::to_string(ari_ok) + ", min ARI " + fmt(worst_ari)};
}

struct EndToEnd {
    fs::path work;
    testing::SynthDataset data;
    fs::path run_single;
    fs::path run_parallel;
    fs::path log;
    bool ran = false;
    double seconds = 0.0;
    std::string failure;
    int polyp_cluster = -1;
};

const std::vector<std::string>& later_verbs() {
    static const std::vector<std::string> verbs{
        "embed",
        "fit-concepts --k 3 --pca-dim 8",
        "render",
        "eval-knn --task full-23 --k 15 --csv",
        "eval-probe --task mces-3 --csv",
        "eval-polyp --csv",
        "export-review --frames 6",
    };
    return verbs;
}

// Runs every batch verb against `run`; the polyp cluster id is chosen from the rendered masks.
std::string run_all_verbs(EndToEnd& e, const fs::path& run, int workers) {
    const std::string common = "--run-dir \"" + run.string() + "\" --workers " + std::to_string(workers);
    const std::string first = "segment " + common + " --manifest \"" + e.data.manifest.string() + "\" --features \"" +
                              e.data.features.string() + "\" --config \"" + e.data.config.string() +
                              "\" --seed 11";
    if (const int rc = run_cli(first, e.log); rc != 0) return "segment exited " + std::to_string(rc);
    for (const auto& v : later_verbs()) {
        if (const int rc = run_cli(v + " " + common, e.log); rc != 0) return v + " exited " + std::to_string(rc);
    }
    if (e.polyp_cluster < 0) {
        // Majority rendered id over planted polyp pixels of the training fold.
        std::map<int, long> votes;
        for (std::size_t i = 0; i < e.data.images.size(); i += 2) {
            const SemanticMask m = decode_palette_png(read_file_bytes(run / "masks" / (e.data.images[i].id + ".png")));
            const auto& polyp = e.data.images[i].polyp;
            for (std::size_t p = 0; p < m.labels.size(); ++p) {
                if (polyp.data[p]) ++votes[m.labels[p]];
            }
        }
        int best = 0;
        long best_n = -1;
        for (const auto& [id, n] : votes) {
            if (n > best_n) best = id, best_n = n;
        }
        e.polyp_cluster = best - 1;
    }
    const std::string unsup = "eval-polyp-unsup " + common + " --cluster " + std::to_string(e.polyp_cluster) + " --csv";
    if (const int rc = run_cli(unsup, e.log); rc != 0) return "eval-polyp-unsup exited " + std::to_string(rc);
    return {};
}

EndToEnd& end_to_end() {
    static EndToEnd e;
    if (e.ran) return e;
    e.ran = true;
    e.work = fs::temp_directory_path() / ("endoseg-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(e.work);
    fs::create_directories(e.work);
    e.log = e.work / "cli.log";
    e.data = testing::make_synthetic_dataset(e.work / "data");
    e.run_single = e.work / "run-1";
    e.run_parallel = e.work / "run-2";
    const auto t0 = std::chrono::steady_clock::now();
    e.failure = run_all_verbs(e, e.run_single, 1);
    e.seconds = seconds_since(t0);
    if (!e.failure.empty()) e.failure += " (log: " + e.log.string() + ")";
    return e;
}

Outcome end_to_end_synthetic() {
    EndToEnd& e = end_to_end();
    if (!e.failure.empty()) return {Outcome::fail, e.failure};
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < e.data.images.size(); ++i) {
        const SemanticMask m =
            decode_palette_png(read_file_bytes(e.run_single / "masks" / (e.data.images[i].id + ".png")));
        const std::vector<int> t = e.data.pixel_concepts(i);
        for (std::size_t p = 0; p < t.size(); ++p) {
            if (t[p] < 0) continue;
            truth.push_back(t[p]);
            pred.push_back(m.labels[p]);
        }
    }
    const double ari = adjusted_rand_index(truth, pred);
    const auto rep = nlohmann::json::parse(read_file_text(e.run_single / "reports" / "polyp-unsup.json"));
    const double f1 = rep.at("f1_at_iou").get<double>();
    const bool ok = ari >= kPixelAriMin && f1 >= kUnsupF1 && e.seconds < kEndToEndBudgetSeconds;
    return {ok ? Outcome::pass : Outcome::fail, "40 images: pixel ARI " + fmt(ari) + ", polyp cluster " +
                                                    std::to_string(e.polyp_cluster) + " F1@IoU=0.3 " + fmt(f1) +
                                                    ", all verbs " + fmt(e.seconds) + " s single-threaded"};
}

Outcome metric_oracles() {
    Rng rng(404);
    long f1_bad = 0, iou_bad = 0, det_bad = 0;
    for (int t = 0; t < 1000; ++t) {
        const int c = 2 + static_cast<int>(rng.below(7));
        const std::size_t n = 1 + rng.below(200);
        const auto y = testing::random_labels(rng, n, c);
        const auto p = testing::random_labels(rng, n, c);
        const F1Result got = f1_scores(y, p, c);
        const oracle::F1 ref = oracle::f1_confusion(y, p, c);
        bool ok = std::abs(got.macro_f1 - ref.macro) <= kRatioTol && std::abs(got.micro_f1 - ref.micro) <= kRatioTol;
        for (int k = 0; k < c; ++k) {
            const auto support = std::count(y.begin(), y.end(), k);
            ok = ok && std::abs(got.per_class[static_cast<std::size_t>(k)].f1 - ref.per_class[static_cast<std::size_t>(k)]) <= kRatioTol &&
                 got.per_class[static_cast<std::size_t>(k)].support == support;
        }
        if (!ok) ++f1_bad;
    }
    for (int t = 0; t < 1000; ++t) {
        const int h = 1 + static_cast<int>(rng.below(24));
        const int w = 1 + static_cast<int>(rng.below(24));
        const auto a = testing::random_mask(rng, h, w, rng.uniform() * 0.6);
        const auto b = testing::random_mask(rng, h, w, rng.uniform() * 0.6);
        if (std::abs(iou(a, b) - oracle::iou_sets(a, b)) > kRatioTol) ++iou_bad;
    }
    auto random_rect = [&](int size) {
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
        const int x1 = x0 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size - x0)));
        const int y1 = y0 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size - y0)));
        return testing::rect_mask(size, size, x0, y0, x1, y1);
    };
    for (int t = 0; t < 1000; ++t) {
        const int size = 8 + static_cast<int>(rng.below(17));
        const int n_img = 1 + static_cast<int>(rng.below(6));
        std::vector<DetectionImage> imgs;
        std::vector<std::pair<BinaryMask, std::vector<BinaryMask>>> ref_in;
        for (int i = 0; i < n_img; ++i) {
            DetectionImage d;
            d.image_id = "i" + std::to_string(i);
            d.gt = rng.uniform() < 0.2 ? BinaryMask(size, size) : random_rect(size);
            const int n_pred = static_cast<int>(rng.below(4));
            for (int k = 0; k < n_pred; ++k) d.predictions.push_back(random_rect(size));
            ref_in.emplace_back(d.gt, d.predictions);
            imgs.push_back(std::move(d));
        }
        const double thr = rng.uniform() < 0.5 ? 0.3 : rng.uniform();
        const DetectionReport got = polyp_detection_report(imgs, thr);
        const oracle::Detection ref = oracle::detection(ref_in, thr);
        const bool ok = got.tp == ref.tp && got.fp == ref.fp && got.fn == ref.fn &&
                        std::abs(got.f1 - ref.f1) <= kRatioTol && std::abs(got.mean_iou - ref.mean_iou) <= kRatioTol;
        if (!ok) ++det_bad;
    }
    // Worked example: one matching prediction, one stray prediction, nothing missed.
    DetectionImage ex{"ex", testing::rect_mask(20, 20, 2, 2, 10, 10), {}};
    ex.predictions.push_back(testing::rect_mask(20, 20, 2, 2, 10, 10));
    ex.predictions.push_back(testing::rect_mask(20, 20, 14, 14, 18, 18));
    const DetectionReport w = polyp_detection_report(std::span<const DetectionImage>(&ex, 1), 0.3);
    const bool worked = w.tp == 1 && w.fp == 1 && w.fn == 0 && std::abs(w.f1 - 2.0 / 3.0) <= kRatioTol;
    const bool ok = f1_bad == 0 && iou_bad == 0 && det_bad == 0 && worked;
    return {ok ? Outcome::pass : Outcome::fail,
            "mismatches f1 " + std::to_string(f1_bad) + "/1000, iou " + std::to_string(iou_bad) + "/1000, detection " +
                std::to_string(det_bad) + "/1000; worked example F1 " + fmt(w.f1) + " (TP " + std::to_string(w.tp) +
                ", FP " + std::to_string(w.fp) + ", FN " + std::to_string(w.fn) + ")"};
}

Outcome knn_oracle() {
    Rng rng(505);
    const int ks[] = {15, 20, 25, 50};
    const int classes = 5;
    const Eigen::MatrixXd train = testing::random_matrix(rng, 300, 24);
    const auto labels = testing::random_labels(rng, 300, classes);
    int label_bad = 0, vote_bad = 0;
    for (int q = 0; q < 500; ++q) {
        Eigen::VectorXd query(24);
        for (Eigen::Index d = 0; d < 24; ++d) query[d] = rng.normal();
        const int k = ks[q % 4];
        const double tau = q % 2 ? 0.07 : 0.5;
        const Eigen::VectorXd ref = oracle::knn_votes(train, labels, classes, query, k, tau);
        Eigen::Index ref_label = 0;
        for (Eigen::Index c = 1; c < classes; ++c) {
            if (ref[c] > ref[ref_label]) ref_label = c;
        }
        const Eigen::VectorXd got = knn_scores(train, labels, classes, query, k, tau);
        if (knn_classify(train, labels, classes, query, k, tau) != ref_label) ++label_bad;
        if ((got - ref).cwiseAbs().maxCoeff() > kKnnVoteRelTol * ref.cwiseAbs().maxCoeff()) ++vote_bad;
    }
    const bool ok = label_bad == 0 && vote_bad == 0;
    return {ok ? Outcome::pass : Outcome::fail, "500 queries, k in {15,20,25,50}: label mismatches " +
                                                    std::to_string(label_bad) + ", vote mismatches " +
                                                    std::to_string(vote_bad)};
}

Outcome probe_correctness() {
    Rng rng(606);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const int c = 2 + static_cast<int>(rng.below(4));
        const int d = 3 + static_cast<int>(rng.below(6));
        const Eigen::MatrixXd x = testing::random_matrix(rng, 25, d);
        const auto y = testing::random_labels(rng, 25, c);
        LinearClassifier clf{testing::random_matrix(rng, c, d), testing::random_matrix(rng, c, 1).col(0)};
        Eigen::MatrixXd gw;
        Eigen::VectorXd gb;
        cross_entropy(clf, x, y, &gw, &gb);
        const double h = 1e-6;
        for (int i = 0; i < c; ++i) {
            for (int j = 0; j <= d; ++j) {
                double& param = j < d ? clf.weights(i, j) : clf.bias[i];
                const double saved = param;
                param = saved + h;
                const double up = cross_entropy(clf, x, y);
                param = saved - h;
                const double down = cross_entropy(clf, x, y);
                param = saved;
                const double fd = (up - down) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - (j < d ? gw(i, j) : gb[i])));
            }
        }
    }
    // Linearly separable set with margin 1 around a random hyperplane.
    const int dim = 5;
    Eigen::VectorXd normal(dim);
    for (int i = 0; i < dim; ++i) normal[i] = rng.normal();
    normal.normalize();
    Eigen::MatrixXd x(200, dim);
    std::vector<int> y;
    for (int n = 0; n < 200;) {
        Eigen::VectorXd p(dim);
        for (int i = 0; i < dim; ++i) p[i] = rng.uniform(-4.0, 4.0);
        const double s = p.dot(normal);
        if (std::abs(s) < 1.0) continue;
        x.row(n++) = p.transpose();
        y.push_back(s > 0 ? 1 : 0);
    }
    ProbeConfig cfg;
    cfg.seed = 9;
    const ProbeFit fit = train_linear_probe(x, y, 2, cfg);
    const double acc = accuracy(fit.classifier, x, y);
    const bool ok = worst <= kGradTol && acc >= kSeparableAccuracyMin;
    return {ok ? Outcome::pass : Outcome::fail, "max |grad - finite difference| " + fmt(worst) +
                                                    "; separable set training accuracy " + fmt(acc) + " after " +
                                                    std::to_string(cfg.epochs) + " epochs (lr " +
                                                    fmt(fit.learning_rate) + ")"};
}

std::vector<std::string> diff_trees(const fs::path& a, const fs::path& b) {
    std::vector<std::string> out;
    std::map<std::string, fs::path> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) fa[fs::relative(e.path(), a).generic_string()] = e.path();
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
        if (e.is_regular_file()) fb[fs::relative(e.path(), b).generic_string()] = e.path();
    }
    for (const auto& [rel, p] : fa) {
        if (!fb.contains(rel)) out.push_back("only in first: " + rel);
        else if (read_file_bytes(p) != read_file_bytes(fb.at(rel))) out.push_back("differs: " + rel);
    }
    for (const auto& [rel, p] : fb) {
        if (!fa.contains(rel)) out.push_back("only in second: " + rel);
    }
    return out;
}

Outcome determinism() {
    EndToEnd& e = end_to_end();
    if (!e.failure.empty()) return {Outcome::fail, "first run failed: " + e.failure};
    if (const auto err = run_all_verbs(e, e.run_parallel, 4); !err.empty()) return {Outcome::fail, "second run: " + err};
    const auto diffs = diff_trees(e.run_single, e.run_parallel);
    std::size_t files = 0;
    for (const auto& f : fs::recursive_directory_iterator(e.run_single)) files += f.is_regular_file();
    if (!diffs.empty()) return {Outcome::fail, std::to_string(diffs.size()) + " differences, first: " + diffs.front()};
    return {Outcome::pass, "every batch verb run twice (1 and 4 workers): " + std::to_string(files) +
                               " files byte-identical"};
}

Outcome real_data() {
    const char* manifest = std::getenv("ENDOSEG_REAL_MANIFEST");
    const char* extractor = std::getenv("ENDOSEG_REAL_EXTRACTOR");
    const char* features = std::getenv("ENDOSEG_REAL_FEATURES");
    if (!manifest || (!extractor && !features)) {
        return {Outcome::skip, "set ENDOSEG_REAL_MANIFEST and ENDOSEG_REAL_EXTRACTOR or ENDOSEG_REAL_FEATURES"};
    }
    const fs::path run = end_to_end().work / "real";
    std::string args = "eval-probe --task full-23 --run-dir \"" + run.string() + "\" --manifest \"" + manifest + "\"";
    args += extractor ? std::string(" --extractor '") + extractor + "'" : std::string(" --features \"") + features + "\"";
    if (const char* cfg = std::getenv("ENDOSEG_REAL_CONFIG")) args += std::string(" --config \"") + cfg + "\"";
    if (const int rc = run_cli(args, end_to_end().log); rc != 0) return {Outcome::fail, "eval-probe exited " + std::to_string(rc)};
    const auto rep = nlohmann::json::parse(read_file_text(run / "reports" / "full-23-probe.json"));
    const double micro = rep.at("micro_f1").get<double>();
    return {micro >= kRealDataMicroF1Min ? Outcome::pass : Outcome::fail, "full-23 probe micro-F1 " + fmt(micro)};
}

}  // namespace

int main() {
    report("eigensolver-oracle", eigensolver_oracle);
    report("planted-segmentation-recovery", planted_recovery);
    report("end-to-end-synthetic", end_to_end_synthetic);
    report("metric-oracles", metric_oracles);
    report("knn-oracle", knn_oracle);
    report("probe-correctness", probe_correctness);
    report("determinism", determinism);
    report("real-data-probe", real_data);
    if (g_failures == 0 && !std::getenv("ENDOSEG_KEEP_WORK")) {
        std::error_code ec;
        fs::remove_all(end_to_end().work, ec);
    }
    return g_failures == 0 ? 0 : 1;
}
