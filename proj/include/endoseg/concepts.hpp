#pragma once

#include "endoseg/kmeans.hpp"
#include "endoseg/segment_embedding.hpp"
#include "endoseg/spectral.hpp"
#include "endoseg/types.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace endoseg {

struct PcaModel {
    Eigen::VectorXd mean;                // D
    Eigen::MatrixXd basis;               // D x p, orthonormal columns
    Eigen::VectorXd explained_variance;  // p, descending
    int rank = 0;                        // numerical rank of the centered data
};

/// Top-p principal directions of the centered rows of `data` (N x D).
/// Each direction's largest-magnitude entry is made positive. Throws DataError
/// naming the achieved rank when it is below p, unless `clamp_to_rank` is set,
/// in which case p is reduced to the rank.
PcaModel fit_pca(const Eigen::MatrixXd& data, int p, bool clamp_to_rank = false);

inline constexpr std::uint8_t kOutOfFieldId = 0;

std::string default_concept_label(int cluster_id);

// Cluster c renders as mask id c + 1; id 0 is reserved for out-of-field pixels.
struct ConceptModel {
    Eigen::VectorXf pca_mean;
    Eigen::MatrixXf pca_basis;  // D x p
    Eigen::MatrixXf centroids;  // K x p
    std::vector<std::string> labels;
    std::uint64_t seed = 0;

    int k() const { return static_cast<int>(centroids.rows()); }
    int input_dim() const { return static_cast<int>(pca_mean.size()); }
    int reduced_dim() const { return static_cast<int>(pca_basis.cols()); }

    Eigen::VectorXd project(const Eigen::VectorXd& v) const;
    std::map<int, std::string> legend() const;

    bool operator==(const ConceptModel& o) const;
};

struct ClusterAssignment {
    std::string image_id;
    int segment_id = 0;
    int cluster_id = 0;
    double distance = 0.0;

    bool operator==(const ClusterAssignment&) const = default;
};

struct ConceptFit {
    ConceptModel model;
    std::vector<ClusterAssignment> assignments;  // training records, same order
    double inertia = 0.0;
    int pca_dim_used = 0;
};

/// PCA (p = min(pca_dim, D, N - 1, rank)) then K-means with k = cfg.kmeans_k
/// over the training records. Parameters are stored as f32; the returned
/// assignments are computed from the stored model.
ConceptFit fit_concepts(const std::vector<SegmentRecord>& training, const RunConfig& cfg);

// Nearest centroid in PCA space for each record (lowest id on ties).
std::vector<ClusterAssignment> assign_segments(const ConceptModel& model, const std::vector<SegmentRecord>& records);

/// Paints each segment's pixels with its cluster's mask id. `field_mask`
/// (pixel-sized) forces out-of-field pixels to id 0. `assignments` must hold
/// one entry per segment of `map`, in segment order.
SemanticMask render_mask(const ConceptModel& model, const SegmentMap& map,
                         std::span<const ClusterAssignment> assignments, const BinaryMask* field_mask = nullptr);

struct RenderInput {
    const SegmentMap* map = nullptr;
    const std::vector<SegmentRecord>* records = nullptr;
    const BinaryMask* field_mask = nullptr;
};

std::vector<SemanticMask> assign_and_render(const ConceptModel& model, std::span<const RenderInput> inputs);

// New model with the given names merged into the labels; ids outside [0, K) are rejected.
ConceptModel apply_labels(const ConceptModel& model, const std::map<int, std::string>& names);

// concept_model.bin: "CMB1" | u16 version | u16 0 | u32 D | u32 p | u32 K | u64 seed | f32 mean[D] |
// f32 basis[D*p] (row-major) | f32 centroids[K*p] (row-major). Labels live in concepts.json.
std::vector<std::uint8_t> encode_concept_model(const ConceptModel& model);
ConceptModel decode_concept_model(std::span<const std::uint8_t> bytes);

nlohmann::json concept_labels_to_json(const ConceptModel& model);
std::map<int, std::string> concept_labels_from_json(const nlohmann::json& j);

}  // namespace endoseg
