#pragma once

#include "endoseg/concepts.hpp"
#include "endoseg/metrics.hpp"
#include "endoseg/segment_embedding.hpp"
#include "endoseg/spectral.hpp"
#include "endoseg/types.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace endoseg {

// Per-block means over all patch cells, concatenated over the last `n_blocks` blocks, unit norm.
Eigen::VectorXd image_embedding(const PatchFeatureTensor& tensor, int n_blocks);

// ---- weighted KNN ----

/// Per-class vote totals: cosine top-k neighbours (ties: lower training
/// index first), each voting with weight exp(sim / temperature).
Eigen::VectorXd knn_scores(const Eigen::MatrixXd& train, std::span<const int> train_labels, int n_classes,
                           const Eigen::VectorXd& query, int k, double temperature);

// Argmax of knn_scores, lowest class index on ties.
int knn_classify(const Eigen::MatrixXd& train, std::span<const int> train_labels, int n_classes,
                 const Eigen::VectorXd& query, int k, double temperature);

// ---- linear probe ----

struct LinearClassifier {
    Eigen::MatrixXd weights;  // C x D
    Eigen::VectorXd bias;     // C

    Eigen::VectorXd logits(const Eigen::VectorXd& x) const { return weights * x + bias; }
    int predict(const Eigen::VectorXd& x) const;
};

// Mean softmax cross-entropy over the rows of x; gradients when requested.
double cross_entropy(const LinearClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y,
                     Eigen::MatrixXd* grad_w = nullptr, Eigen::VectorXd* grad_b = nullptr);

double accuracy(const LinearClassifier& clf, const Eigen::MatrixXd& x, std::span<const int> y);

struct SgdOptions {
    double learning_rate = 0.01;
    int epochs = 100;
    int batch_size = 32;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

// Mini-batch SGD with momentum from zero weights. Returns nullopt when the loss stops being finite.
std::optional<LinearClassifier> sgd_train(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                                          const SgdOptions& opt);

struct ProbeFit {
    LinearClassifier classifier;
    double learning_rate = 0.0;
    double holdout_accuracy = 0.0;
    std::vector<double> candidate_accuracy;  // per learning rate; NaN when it diverged
};

/// Picks the learning rate by accuracy on a seeded 90/10 split of the
/// training set (first best on ties), then refits on all of it.
ProbeFit train_linear_probe(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes, const ProbeConfig& cfg);

// ---- two-fold cross-validation ----

enum class CvTask { full23, mces3 };
enum class CvMethod { knn, probe };

CvTask parse_cv_task(const std::string& name);
std::string to_string(CvTask task);
std::string to_string(CvMethod method);

// Images of `fold` that carry a label for `task`, with the class index.
std::vector<std::pair<std::string, int>> task_labels(const DatasetManifest& manifest, CvTask task,
                                                     const std::string& fold);
std::vector<std::string> task_classes(const DatasetManifest& manifest, CvTask task);

// Image embeddings keyed by trailing block count, then by image id.
using EmbeddingTable = std::map<int, std::map<std::string, Eigen::VectorXd>>;

/// Trains on one fold and tests on the other, both ways. KNN uses
/// cfg.knn_blocks; the probe also picks the block count from
/// cfg.probe.block_options on the training split.
nlohmann::json two_fold_cv(const DatasetManifest& manifest, CvTask task, CvMethod method, const RunConfig& cfg,
                           const EmbeddingTable& embeddings);

// ---- polyp masks ----

struct PolypImage {
    const SegmentMap* map = nullptr;
    const std::vector<SegmentRecord>* records = nullptr;
    BinaryMask gt;                            // at the segment map's pixel extent
    const BinaryMask* field_mask = nullptr;  // same extent, optional
};

// Positive when at least `min_overlap` of the segment's cells are gt cells (cell in gt when >= half its pixels are).
std::vector<int> segment_polyp_labels(const SegmentMap& map, const BinaryMask& gt, double min_overlap);

// Pixels of the selected segments, restricted to the field of view when given.
BinaryMask segments_to_mask(const SegmentMap& map, const std::vector<bool>& selected,
                            const BinaryMask* field_mask = nullptr);

/// Linear probe on segment vectors labelled by gt overlap; predicted masks
/// on the evaluation images are the union of positive segments.
DetectionReport segment_polyp_probe(std::span<const PolypImage> train, std::span<const PolypImage> eval,
                                    const RunConfig& cfg);

// Predicted masks are the pixels of segments assigned to `cluster`.
DetectionReport unsupervised_polyp_eval(const ConceptModel& model, int cluster, std::span<const PolypImage> eval,
                                        const RunConfig& cfg);

nlohmann::json detection_report_to_json(const DetectionReport& rep);

// One row per fold plus an average row: macro/micro F1 for classification, F1@IoU and mean IoU for detection.
std::string report_to_csv(const nlohmann::json& report);

}  // namespace endoseg
