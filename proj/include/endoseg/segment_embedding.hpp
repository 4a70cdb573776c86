#pragma once

#include "endoseg/feature_provider.hpp"
#include "endoseg/spectral.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace endoseg {

struct SegmentRecord {
    std::string image_id;
    int segment_id = 0;
    PixelBox bbox;
    int area_cells = 0;
    Eigen::VectorXd vector;  // unit norm
    std::optional<std::string> fold_id;
};

/// One record per segment, in segment-id order. Each vector is the crop
/// embedding of the segment's bounding box; EmbedMode::masked pools only the
/// segment's own cells. Out-of-field cells (zero in `field_cells`) do not
/// contribute unless the segment has no in-field cell at all, in which case
/// the field mask is ignored for that segment.
std::vector<SegmentRecord> embed_segments(const SegmentMap& map, const FeatureProvider& provider,
                                          const ImageEntry& image, const PatchFeatureTensor* tensor,
                                          EmbedMode mode = EmbedMode::bbox,
                                          const BinaryMask* field_cells = nullptr,
                                          std::optional<std::string> fold_id = std::nullopt);

// Stacks record vectors into an N x D matrix.
Eigen::MatrixXd stack_vectors(const std::vector<SegmentRecord>& records);

}  // namespace endoseg
