#pragma once

#include "endoseg/types.hpp"

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace endoseg {

struct CropRequest {
    std::string image_id;
    PixelBox bbox;
};

enum class SourceMode { precomputed, external_command };

struct FeatureSource {
    SourceMode mode = SourceMode::precomputed;
    fs::path root;        // precomputed: directory holding <image_id>.pft
    std::string command;  // external: template with {image}, {bbox}, {out}
    int patch_size = 16;
    std::vector<int> blocks_requested;  // empty: last four available; negative indices count from the end
    int max_parallel = 4;               // concurrent external commands
};

// Resolves requested block indices against a tensor's block count.
std::vector<std::size_t> resolve_blocks(const std::vector<int>& requested, std::uint32_t n_blocks);

// Mean over `blocks` and over the cells whose centers fall inside `bbox`.
// `cell_weights` (grid-sized, 0/1) drops out-of-field cells; `cell_selection`
// restricts pooling to a subset of cells (masked segment pooling).
// Returns std::nullopt when no cell qualifies.
std::optional<Eigen::VectorXd> pool_cells(const PatchFeatureTensor& tensor, const PixelBox& bbox, int patch_size,
                                          const std::vector<std::size_t>& blocks,
                                          const BinaryMask* cell_weights = nullptr,
                                          const BinaryMask* cell_selection = nullptr);

// Whole-tensor pooling: mean over the given blocks and every cell.
Eigen::VectorXd pool_all(const PatchFeatureTensor& tensor, const std::vector<std::size_t>& blocks);

Eigen::VectorXd l2_normalized(Eigen::VectorXd v, const std::string& what);

class FeatureProvider {
public:
    explicit FeatureProvider(FeatureSource source);
    FeatureProvider(const FeatureProvider&) = delete;
    FeatureProvider& operator=(const FeatureProvider&) = delete;

    const FeatureSource& source() const { return source_; }

    PatchFeatureTensor features_for(const ImageEntry& image) const;

    /// Unit-norm crop embedding.
    ///
    /// Precomputed mode pools the patch cells of `tensor` (or of the image's
    /// feature file when `tensor` is null) whose centers lie inside the crop.
    /// External mode re-runs the extractor on the crop and pools its output.
    Eigen::VectorXd embed_crop(const CropRequest& crop, const ImageEntry& image,
                               const PatchFeatureTensor* tensor = nullptr, const BinaryMask* cell_weights = nullptr,
                               const BinaryMask* cell_selection = nullptr) const;

private:
    PatchFeatureTensor run_extractor(const ImageEntry& image, const PixelBox& bbox) const;

    FeatureSource source_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace endoseg
