#include "endoseg/evaluation.hpp"

#include "endoseg/config.hpp"
#include "endoseg/error.hpp"
#include "endoseg/feature_provider.hpp"
#include "endoseg/image_io.hpp"
#include "endoseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace endoseg {

Eigen::VectorXd image_embedding(const PatchFeatureTensor& tensor, int n_blocks) {
    if (n_blocks < 1 || static_cast<std::uint32_t>(n_blocks) > tensor.n_blocks) {
        throw DataError(tensor.image_id + ": asked for the last " + std::to_string(n_blocks) + " blocks of " +
                        std::to_string(tensor.n_blocks));
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(n_blocks) * tensor.dim);
    for (int i = 0; i < n_blocks; ++i) {
        const std::size_t b = tensor.n_blocks - static_cast<std::size_t>(n_blocks) + static_cast<std::size_t>(i);
        out.segment(static_cast<Eigen::Index>(i) * tensor.dim, tensor.dim) = pool_all(tensor, {b});
    }
    return l2_normalized(std::move(out), tensor.image_id);
}

// ---- weighted KNN ----

Eigen::VectorXd knn_scores(const Eigen::MatrixXd& train, std::span<const int> train_labels, int n_classes,
                           const Eigen::VectorXd& query, int k, double temperature) {
    const auto n = static_cast<int>(train.rows());
    if (n == 0) throw DataError("knn: empty training set");
    if (train_labels.size() != static_cast<std::size_t>(n)) throw DataError("knn: label count mismatch");
    if (k < 1 || k > n) throw DataError("knn: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    if (!(temperature > 0.0)) throw ConfigError("knn: temperature must be positive");
    if (query.size() != train.cols()) throw DataError("knn: query dimension mismatch");
    const double qn = query.norm();
    if (!(qn > 0.0)) throw NumericalError("knn: zero query vector");
    std::vector<double> sim(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double rn = train.row(i).norm();
        if (!(rn > 0.0)) throw NumericalError("knn: zero training vector at row " + std::to_string(i));
        sim[static_cast<std::size_t>(i)] = train.row(i).dot(query) / (rn * qn);
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        const double sa = sim[static_cast<std::size_t>(a)];
        const double sb = sim[static_cast<std::size_t>(b)];
        return sa != sb ? sa > sb : a < b;
    });
    Eigen::VectorXd scores = Eigen::VectorXd::Zero(n_classes);
    for (int j = 0; j < k; ++j) {
        const auto i = static_cast<std::size_t>(order[static_cast<std::size_t>(j)]);
        const int label = train_labels[i];
        if (label < 0 || label >= n_classes) throw DataError("knn: training label out of range");
        scores[label] += std::exp(sim[i] / temperature);
    }
    return scores;
}

int knn_classify(const Eigen::MatrixXd& train, std::span<const int> train_labels, int n_classes,
                 const Eigen::VectorXd& query, int k, double temperature) {
    const Eigen::VectorXd s = knn_scores(train, train_labels, n_classes, query, k, temperature);
    Eigen::Index best = 0;
    s.maxCoeff(&best);
    return static_cast<int>(best);
}

// ---- linear probe ----

int LinearClassifier::predict(const Eigen::VectorXd& x) const {
    Eigen::Index best = 0;
    logits(x).maxCoeff(&best);
    return static_cast<int>(best);
}

double cross_entropy(const LinearClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y,
                     Eigen::MatrixXd* grad_w, Eigen::VectorXd* grad_b) {
    const Eigen::Index n = x.rows();
    if (n == 0 || y.size() != static_cast<std::size_t>(n)) throw DataError("cross_entropy: empty or mismatched batch");
    const Eigen::Index c = clf.weights.rows();
    if (grad_w) *grad_w = Eigen::MatrixXd::Zero(c, x.cols());
    if (grad_b) *grad_b = Eigen::VectorXd::Zero(c);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd z = clf.logits(x.row(i).transpose());
        const double zmax = z.maxCoeff();
        const Eigen::ArrayXd e = (z.array() - zmax).exp();
        const double sum = e.sum();
        const auto label = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
        if (label < 0 || label >= c) throw DataError("cross_entropy: label out of range");
        loss += std::log(sum) + zmax - z[label];
        if (grad_w || grad_b) {
            Eigen::VectorXd p = e.matrix() / sum;
            p[label] -= 1.0;
            if (grad_w) grad_w->noalias() += p * x.row(i);
            if (grad_b) *grad_b += p;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    if (grad_w) *grad_w *= inv;
    if (grad_b) *grad_b *= inv;
    return loss * inv;
}

double accuracy(const LinearClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y) {
    if (x.rows() == 0) return 0.0;
    int hit = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) hit += clf.predict(x.row(i).transpose()) == y[static_cast<std::size_t>(i)];
    return static_cast<double>(hit) / static_cast<double>(x.rows());
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

std::vector<int> take(std::span<const int> y, std::span<const std::size_t> idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
    return out;
}

struct ProbeSelection {
    std::size_t candidate = 0;
    std::size_t lr_index = 0;
    double accuracy = -1.0;
    std::vector<std::vector<double>> table;  // [candidate][lr]
};

// Shared 90/10 split; every (candidate, lr) pair is scored on the held-out part.
ProbeSelection select_probe(const std::vector<Eigen::MatrixXd>& candidates, std::span<const int> y, int n_classes,
                            const ProbeConfig& cfg) {
    if (cfg.learning_rates.empty()) throw ConfigError("probe: no learning rates to choose from");
    const std::size_t n = y.size();
    std::vector<int> present(static_cast<std::size_t>(n_classes), 0);
    for (int label : y) {
        if (label < 0 || label >= n_classes) throw DataError("probe: label out of range");
        present[static_cast<std::size_t>(label)] = 1;
    }
    if (std::accumulate(present.begin(), present.end(), 0) < 2) {
        throw DataError("probe: training data must contain at least two classes");
    }
    if (n < 2) throw DataError("probe: need at least two training examples");
    Rng rng(Rng::derive(cfg.seed, 0x90));
    const auto perm = permutation(n, rng);
    const std::size_t n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    const std::span<const std::size_t> hold(perm.data(), n_hold);
    const std::span<const std::size_t> fit(perm.data() + n_hold, n - n_hold);
    const auto y_fit = take(y, fit);
    const auto y_hold = take(y, hold);

    ProbeSelection sel;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const Eigen::MatrixXd x_fit = take_rows(candidates[c], fit);
        const Eigen::MatrixXd x_hold = take_rows(candidates[c], hold);
        std::vector<double> row;
        for (std::size_t l = 0; l < cfg.learning_rates.size(); ++l) {
            const SgdOptions opt{cfg.learning_rates[l], cfg.epochs, cfg.batch_size, cfg.momentum,
                                 Rng::derive(cfg.seed, 0x100 + l)};
            const auto clf = sgd_train(x_fit, y_fit, n_classes, opt);
            if (!clf) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            const double acc = accuracy(*clf, x_hold, y_hold);
            row.push_back(acc);
            if (acc > sel.accuracy) {
                sel.accuracy = acc;
                sel.candidate = c;
                sel.lr_index = l;
            }
        }
        sel.table.push_back(std::move(row));
    }
    if (sel.accuracy < 0.0) throw NumericalError("probe: every learning rate diverged");
    return sel;
}

LinearClassifier refit(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes, const ProbeConfig& cfg,
                       std::size_t lr_index) {
    const SgdOptions opt{cfg.learning_rates[lr_index], cfg.epochs, cfg.batch_size, cfg.momentum,
                         Rng::derive(cfg.seed, 0x100 + lr_index)};
    auto clf = sgd_train(x, y, n_classes, opt);
    if (!clf) throw NumericalError("probe: refit on the full training set diverged");
    return std::move(*clf);
}

}  // namespace

std::optional<LinearClassifier> sgd_train(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                                          const SgdOptions& opt) {
    const std::size_t n = y.size();
    if (n == 0 || static_cast<std::size_t>(x.rows()) != n) throw DataError("sgd: empty or mismatched training set");
    if (opt.batch_size < 1 || opt.epochs < 0) throw ConfigError("sgd: batch_size >= 1 and epochs >= 0 required");
    LinearClassifier clf{Eigen::MatrixXd::Zero(n_classes, x.cols()), Eigen::VectorXd::Zero(n_classes)};
    Eigen::MatrixXd vw = Eigen::MatrixXd::Zero(n_classes, x.cols());
    Eigen::VectorXd vb = Eigen::VectorXd::Zero(n_classes);
    Eigen::MatrixXd gw;
    Eigen::VectorXd gb;
    Rng rng(opt.seed);
    const auto bs = static_cast<std::size_t>(opt.batch_size);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const auto order = permutation(n, rng);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::span<const std::size_t> idx(order.data() + start, std::min(bs, n - start));
            const Eigen::MatrixXd xb = take_rows(x, idx);
            const auto yb = take(y, idx);
            const double loss = cross_entropy(clf, xb, yb, &gw, &gb);
            if (!std::isfinite(loss)) return std::nullopt;
            vw = opt.momentum * vw + gw;
            vb = opt.momentum * vb + gb;
            clf.weights -= opt.learning_rate * vw;
            clf.bias -= opt.learning_rate * vb;
        }
    }
    if (!clf.weights.allFinite() || !clf.bias.allFinite()) return std::nullopt;
    return clf;
}

ProbeFit train_linear_probe(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes, const ProbeConfig& cfg) {
    const std::vector<Eigen::MatrixXd> candidates{x};
    const auto sel = select_probe(candidates, y, n_classes, cfg);
    ProbeFit fit;
    fit.learning_rate = cfg.learning_rates[sel.lr_index];
    fit.holdout_accuracy = sel.accuracy;
    fit.candidate_accuracy = sel.table.front();
    fit.classifier = refit(x, y, n_classes, cfg, sel.lr_index);
    return fit;
}

// ---- two-fold cross-validation ----

CvTask parse_cv_task(const std::string& name) {
    if (name == "full-23") return CvTask::full23;
    if (name == "mces-3") return CvTask::mces3;
    throw ConfigError("unknown task '" + name + "' (expected full-23 or mces-3)");
}

std::string to_string(CvTask task) { return task == CvTask::full23 ? "full-23" : "mces-3"; }
std::string to_string(CvMethod method) { return method == CvMethod::knn ? "knn" : "probe"; }

std::vector<std::pair<std::string, int>> task_labels(const DatasetManifest& manifest, CvTask task,
                                                     const std::string& fold) {
    const auto it = manifest.folds.find(fold);
    if (it == manifest.folds.end()) throw DataError("missing fold '" + fold + "'");
    std::vector<std::pair<std::string, int>> out;
    for (const auto& id : it->second) {
        const ImageEntry* img = manifest.find(id);
        if (!img) throw DataError("fold '" + fold + "' references unknown image id '" + id + "'");
        if (task == CvTask::full23 && img->label) out.emplace_back(id, *img->label);
        if (task == CvTask::mces3 && img->mces_label) out.emplace_back(id, *img->mces_label - 1);
    }
    return out;
}

std::vector<std::string> task_classes(const DatasetManifest& manifest, CvTask task) {
    if (task == CvTask::full23) return manifest.classes;
    return {"MCES 1", "MCES 2", "MCES 3"};
}

namespace {

Eigen::MatrixXd gather(const EmbeddingTable& table, int blocks, const std::vector<std::pair<std::string, int>>& items) {
    const auto it = table.find(blocks);
    if (it == table.end()) throw DataError("no image embeddings for " + std::to_string(blocks) + " trailing blocks");
    Eigen::MatrixXd x;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto v = it->second.find(items[i].first);
        if (v == it->second.end()) throw DataError("missing image embedding for '" + items[i].first + "'");
        if (i == 0) x.resize(static_cast<Eigen::Index>(items.size()), v->second.size());
        if (v->second.size() != x.cols()) throw DataError("image embeddings have inconsistent dimensions");
        x.row(static_cast<Eigen::Index>(i)) = v->second.transpose();
    }
    return x;
}

std::vector<int> labels_of(const std::vector<std::pair<std::string, int>>& items) {
    std::vector<int> y;
    y.reserve(items.size());
    for (const auto& [id, label] : items) y.push_back(label);
    return y;
}

}  // namespace

nlohmann::json two_fold_cv(const DatasetManifest& manifest, CvTask task, CvMethod method, const RunConfig& cfg,
                           const EmbeddingTable& embeddings) {
    if (manifest.folds.size() != 2) {
        throw DataError("two-fold cross-validation needs exactly 2 folds, manifest has " +
                        std::to_string(manifest.folds.size()));
    }
    const auto classes = task_classes(manifest, task);
    const auto n_classes = static_cast<int>(classes.size());
    std::vector<std::string> fold_ids;
    for (const auto& [f, ids] : manifest.folds) fold_ids.push_back(f);

    nlohmann::json report;
    report["task"] = to_string(task);
    report["method"] = to_string(method);
    report["classes"] = classes;
    report["config"] = to_json(cfg);
    report["folds"] = nlohmann::json::array();

    double macro = 0.0, micro = 0.0;
    std::vector<double> class_f1(classes.size(), 0.0);
    for (std::size_t t = 0; t < 2; ++t) {
        const std::string& test_fold = fold_ids[t];
        const std::string& train_fold = fold_ids[1 - t];
        const auto train = task_labels(manifest, task, train_fold);
        const auto test = task_labels(manifest, task, test_fold);
        if (train.empty() || test.empty()) {
            throw DataError("task " + to_string(task) + ": no labelled images in fold '" +
                            (train.empty() ? train_fold : test_fold) + "'");
        }
        const auto y_train = labels_of(train);
        const auto y_test = labels_of(test);
        std::vector<int> pred;
        nlohmann::json fold;
        fold["train_fold"] = train_fold;
        fold["test_fold"] = test_fold;
        fold["n_train"] = train.size();
        fold["n_test"] = test.size();
        if (method == CvMethod::knn) {
            const Eigen::MatrixXd x_train = gather(embeddings, cfg.knn_blocks, train);
            const Eigen::MatrixXd x_test = gather(embeddings, cfg.knn_blocks, test);
            // A fold smaller than k votes with all of its images.
            const int k = std::min(cfg.knn_k, static_cast<int>(x_train.rows()));
            for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
                pred.push_back(knn_classify(x_train, y_train, n_classes, x_test.row(i).transpose(), k,
                                            cfg.knn_temperature));
            }
            fold["k"] = k;
            fold["k_requested"] = cfg.knn_k;
            fold["temperature"] = cfg.knn_temperature;
            fold["blocks"] = cfg.knn_blocks;
        } else {
            ProbeConfig pc = cfg.probe;
            pc.seed = Rng::derive(cfg.seed, cfg.probe.seed);
            std::vector<Eigen::MatrixXd> candidates;
            for (int b : pc.block_options) candidates.push_back(gather(embeddings, b, train));
            const auto sel = select_probe(candidates, y_train, n_classes, pc);
            const int blocks = pc.block_options[sel.candidate];
            const LinearClassifier clf = refit(candidates[sel.candidate], y_train, n_classes, pc, sel.lr_index);
            const Eigen::MatrixXd x_test = gather(embeddings, blocks, test);
            for (Eigen::Index i = 0; i < x_test.rows(); ++i) pred.push_back(clf.predict(x_test.row(i).transpose()));
            fold["blocks"] = blocks;
            fold["learning_rate"] = pc.learning_rates[sel.lr_index];
            fold["holdout_accuracy"] = sel.accuracy;
        }
        const F1Result f1 = f1_scores(y_test, pred, n_classes);
        fold["macro_f1"] = f1.macro_f1;
        fold["micro_f1"] = f1.micro_f1;
        auto per_class = nlohmann::json::array();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const auto& s = f1.per_class[c];
            per_class.push_back({{"class", classes[c]},
                                 {"precision", s.precision},
                                 {"recall", s.recall},
                                 {"f1", s.f1},
                                 {"support", s.support}});
            class_f1[c] += s.f1;
        }
        fold["per_class"] = std::move(per_class);
        macro += f1.macro_f1;
        micro += f1.micro_f1;
        report["folds"].push_back(std::move(fold));
    }
    report["macro_f1"] = macro / 2.0;
    report["micro_f1"] = micro / 2.0;
    auto avg_class = nlohmann::json::object();
    for (std::size_t c = 0; c < classes.size(); ++c) avg_class[classes[c]] = class_f1[c] / 2.0;
    report["per_class_f1"] = std::move(avg_class);
    return report;
}

// ---- polyp masks ----

std::vector<int> segment_polyp_labels(const SegmentMap& map, const BinaryMask& gt, double min_overlap) {
    if (gt.height != map.grid_h * map.patch_size || gt.width != map.grid_w * map.patch_size) {
        throw DataError(map.image_id + ": ground-truth mask does not match the segment map extent");
    }
    const BinaryMask cells = mask_to_grid(gt, map.grid_h, map.grid_w);
    std::vector<int> inside(static_cast<std::size_t>(map.n_segments), 0);
    const auto area = map.area_cells();
    for (int r = 0; r < map.grid_h; ++r) {
        for (int c = 0; c < map.grid_w; ++c) {
            if (cells.at(r, c)) ++inside[static_cast<std::size_t>(map.at(r, c))];
        }
    }
    std::vector<int> out(inside.size());
    for (std::size_t s = 0; s < inside.size(); ++s) {
        out[s] = area[s] > 0 && static_cast<double>(inside[s]) >= min_overlap * static_cast<double>(area[s]) ? 1 : 0;
    }
    return out;
}

BinaryMask segments_to_mask(const SegmentMap& map, const std::vector<bool>& selected, const BinaryMask* field_mask) {
    BinaryMask out(map.grid_h * map.patch_size, map.grid_w * map.patch_size);
    if (field_mask && (field_mask->height != out.height || field_mask->width != out.width)) {
        throw DataError(map.image_id + ": field mask does not match the segment map extent");
    }
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const int s = map.at(y / map.patch_size, x / map.patch_size);
            out.at(y, x) = selected[static_cast<std::size_t>(s)] && (!field_mask || field_mask->at(y, x)) ? 1 : 0;
        }
    }
    return out;
}

namespace {

void check_polyp_image(const PolypImage& p) {
    if (!p.map || !p.records) throw DataError("polyp evaluation: image without segments");
    if (p.records->size() != static_cast<std::size_t>(p.map->n_segments)) {
        throw DataError(p.map->image_id + ": segment records do not match the segment map");
    }
}

}  // namespace

DetectionReport segment_polyp_probe(std::span<const PolypImage> train, std::span<const PolypImage> eval,
                                    const RunConfig& cfg) {
    std::vector<SegmentRecord> records;
    std::vector<int> y;
    for (const auto& p : train) {
        check_polyp_image(p);
        const auto labels = segment_polyp_labels(*p.map, p.gt, cfg.polyp_overlap);
        records.insert(records.end(), p.records->begin(), p.records->end());
        y.insert(y.end(), labels.begin(), labels.end());
    }
    if (std::find(y.begin(), y.end(), 1) == y.end()) {
        throw DataError("segment polyp probe: no positive segments in the training fold");
    }
    ProbeConfig pc = cfg.probe;
    pc.seed = Rng::derive(cfg.seed, cfg.probe.seed);
    const ProbeFit fit = train_linear_probe(stack_vectors(records), y, 2, pc);

    std::vector<DetectionImage> images;
    for (const auto& p : eval) {
        check_polyp_image(p);
        std::vector<bool> positive(p.records->size());
        for (std::size_t s = 0; s < positive.size(); ++s) positive[s] = fit.classifier.predict((*p.records)[s].vector) == 1;
        images.push_back(detection_image(p.map->image_id, p.gt, segments_to_mask(*p.map, positive, p.field_mask)));
    }
    return polyp_detection_report(images, cfg.iou_threshold);
}

DetectionReport unsupervised_polyp_eval(const ConceptModel& model, int cluster, std::span<const PolypImage> eval,
                                        const RunConfig& cfg) {
    if (cluster < 0 || cluster >= model.k()) {
        throw DataError("cluster id " + std::to_string(cluster) + " outside [0, " + std::to_string(model.k()) + ")");
    }
    std::vector<DetectionImage> images;
    for (const auto& p : eval) {
        check_polyp_image(p);
        const auto assignments = assign_segments(model, *p.records);
        std::vector<bool> chosen(assignments.size());
        for (std::size_t s = 0; s < chosen.size(); ++s) chosen[s] = assignments[s].cluster_id == cluster;
        images.push_back(detection_image(p.map->image_id, p.gt, segments_to_mask(*p.map, chosen, p.field_mask)));
    }
    return polyp_detection_report(images, cfg.iou_threshold);
}

nlohmann::json detection_report_to_json(const DetectionReport& rep) {
    nlohmann::json j;
    j["tp"] = rep.tp;
    j["fp"] = rep.fp;
    j["fn"] = rep.fn;
    j["precision"] = rep.precision;
    j["recall"] = rep.recall;
    j["f1_at_iou"] = rep.f1;
    j["iou_threshold"] = rep.threshold;
    j["mean_iou"] = rep.mean_iou;
    j["n_images"] = rep.per_image.size();
    auto per = nlohmann::json::array();
    for (const auto& r : rep.per_image) {
        per.push_back({{"image_id", r.image_id},
                       {"n_predictions", r.n_predictions},
                       {"tp", r.tp},
                       {"fp", r.fp},
                       {"fn", r.fn},
                       {"iou", r.iou}});
    }
    j["per_image"] = std::move(per);
    return j;
}

std::string report_to_csv(const nlohmann::json& report) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed;
    const std::string task = report.value("task", "");
    if (report.contains("folds")) {
        const std::string method = report.value("method", "");
        os << "task,method,test_fold,macro_f1,micro_f1\n";
        for (const auto& f : report["folds"]) {
            os << task << ',' << method << ',' << f["test_fold"].get<std::string>() << ','
               << f["macro_f1"].get<double>() << ',' << f["micro_f1"].get<double>() << '\n';
        }
        os << task << ',' << method << ",average," << report["macro_f1"].get<double>() << ','
           << report["micro_f1"].get<double>() << '\n';
    } else {
        os << "task,eval_fold,f1_at_iou,mean_iou,tp,fp,fn\n";
        os << task << ',' << report.value("eval_fold", "") << ',' << report["f1_at_iou"].get<double>() << ','
           << report["mean_iou"].get<double>() << ',' << report["tp"].get<int>() << ',' << report["fp"].get<int>()
           << ',' << report["fn"].get<int>() << '\n';
    }
    return os.str();
}

}  // namespace endoseg
