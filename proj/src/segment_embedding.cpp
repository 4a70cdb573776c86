#include "endoseg/segment_embedding.hpp"

#include "endoseg/error.hpp"

namespace endoseg {

namespace {

// Whether any cell that would be pooled for segment s lies in the field of view.
bool touches_field(const SegmentMap& map, int s, EmbedMode mode, const BinaryMask& field_cells) {
    const PixelBox& b = map.bboxes[static_cast<std::size_t>(s)];
    for (int r = b.y0 / map.patch_size; r < (b.y1 + map.patch_size - 1) / map.patch_size; ++r) {
        for (int c = b.x0 / map.patch_size; c < (b.x1 + map.patch_size - 1) / map.patch_size; ++c) {
            if (mode == EmbedMode::masked && map.at(r, c) != s) continue;
            if (field_cells.at(r, c)) return true;
        }
    }
    return false;
}

}  // namespace

std::vector<SegmentRecord> embed_segments(const SegmentMap& map, const FeatureProvider& provider,
                                          const ImageEntry& image, const PatchFeatureTensor* tensor,
                                          EmbedMode mode, const BinaryMask* field_cells,
                                          std::optional<std::string> fold_id) {
    const auto areas = map.area_cells();
    std::vector<SegmentRecord> out;
    out.reserve(static_cast<std::size_t>(map.n_segments));
    for (int s = 0; s < map.n_segments; ++s) {
        SegmentRecord rec;
        rec.image_id = image.id;
        rec.segment_id = s;
        rec.bbox = map.bboxes[static_cast<std::size_t>(s)];
        rec.area_cells = areas[static_cast<std::size_t>(s)];
        rec.fold_id = fold_id;
        const CropRequest crop{image.id, rec.bbox};
        const BinaryMask* weights = field_cells && touches_field(map, s, mode, *field_cells) ? field_cells : nullptr;
        if (mode == EmbedMode::masked) {
            const BinaryMask cells = map.cell_mask(s);
            rec.vector = provider.embed_crop(crop, image, tensor, weights, &cells);
        } else {
            rec.vector = provider.embed_crop(crop, image, tensor, weights);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

Eigen::MatrixXd stack_vectors(const std::vector<SegmentRecord>& records) {
    if (records.empty()) return {};
    const Eigen::Index d = records.front().vector.size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), d);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].vector.size() != d) {
            throw DataError("segment vectors have inconsistent dimensions (" + records[i].image_id + ")");
        }
        m.row(static_cast<Eigen::Index>(i)) = records[i].vector.transpose();
    }
    return m;
}

}  // namespace endoseg
