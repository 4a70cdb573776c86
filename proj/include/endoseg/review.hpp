#pragma once

#include "endoseg/concepts.hpp"
#include "endoseg/segment_embedding.hpp"
#include "endoseg/types.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace endoseg {

struct Exemplar {
    std::string image_id;
    int segment_id = 0;
    PixelBox bbox;
    double distance = 0.0;
};

struct ClusterSummary {
    int cluster_id = 0;
    std::string label;
    int n_segments = 0;
    double mean_distance = 0.0;  // 0 for an empty cluster
    std::vector<Exemplar> exemplars;  // nearest to the centroid first
};

// Exemplars are the n segments closest to each centroid (ties: image id, then segment id).
std::vector<ClusterSummary> summarize_clusters(const ConceptModel& model, const std::vector<SegmentRecord>& records,
                                               int n_exemplars);

nlohmann::json to_json(const ClusterSummary& summary);
nlohmann::json to_json(const Exemplar& exemplar);

/// Blends palette colours over the image with the given opacity. With
/// `only_id` set, just that mask id is tinted. Id 0 is never tinted.
RgbImage overlay(const RgbImage& image, const SemanticMask& mask, std::optional<int> only_id, double alpha = 0.5);

// Palette colours for every pixel.
RgbImage colorize(const SemanticMask& mask);

RgbImage crop(const RgbImage& image, const PixelBox& box);

}  // namespace endoseg
