#include "endoseg/review.hpp"

#include "endoseg/error.hpp"
#include "endoseg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace endoseg {

std::vector<ClusterSummary> summarize_clusters(const ConceptModel& model, const std::vector<SegmentRecord>& records,
                                               int n_exemplars) {
    const auto assignments = assign_segments(model, records);
    std::vector<ClusterSummary> out(static_cast<std::size_t>(model.k()));
    std::vector<std::vector<Exemplar>> members(out.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& a = assignments[i];
        members[static_cast<std::size_t>(a.cluster_id)].push_back(
            Exemplar{a.image_id, a.segment_id, records[i].bbox, a.distance});
    }
    for (std::size_t c = 0; c < out.size(); ++c) {
        auto& s = out[c];
        auto& m = members[c];
        s.cluster_id = static_cast<int>(c);
        s.label = model.labels[c];
        s.n_segments = static_cast<int>(m.size());
        double sum = 0.0;
        for (const auto& e : m) sum += e.distance;
        s.mean_distance = m.empty() ? 0.0 : sum / static_cast<double>(m.size());
        std::sort(m.begin(), m.end(), [](const Exemplar& a, const Exemplar& b) {
            return std::tie(a.distance, a.image_id, a.segment_id) < std::tie(b.distance, b.image_id, b.segment_id);
        });
        if (n_exemplars >= 0 && m.size() > static_cast<std::size_t>(n_exemplars)) m.resize(static_cast<std::size_t>(n_exemplars));
        s.exemplars = std::move(m);
    }
    return out;
}

nlohmann::json to_json(const Exemplar& e) {
    return {{"image_id", e.image_id},
            {"segment_id", e.segment_id},
            {"bbox", {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1}},
            {"distance", e.distance}};
}

nlohmann::json to_json(const ClusterSummary& s) {
    auto ex = nlohmann::json::array();
    for (const auto& e : s.exemplars) ex.push_back(to_json(e));
    return {{"cluster_id", s.cluster_id},
            {"mask_id", s.cluster_id + 1},
            {"label", s.label},
            {"n_segments", s.n_segments},
            {"mean_distance", s.mean_distance},
            {"exemplars", std::move(ex)}};
}

RgbImage overlay(const RgbImage& image, const SemanticMask& mask, std::optional<int> only_id, double alpha) {
    if (image.height != mask.height || image.width != mask.width) {
        throw DataError("overlay: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                        " does not match mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height));
    }
    RgbImage out = image;
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const int id = mask.labels[i];
        if (id == 0 || (only_id && id != *only_id)) continue;
        const auto c = palette_color(id);
        for (int ch = 0; ch < 3; ++ch) {
            const double v = (1.0 - alpha) * image.pixels[i * 3 + static_cast<std::size_t>(ch)] + alpha * c[static_cast<std::size_t>(ch)];
            out.pixels[i * 3 + static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return out;
}

RgbImage colorize(const SemanticMask& mask) {
    RgbImage out{mask.height, mask.width, std::vector<std::uint8_t>(mask.labels.size() * 3)};
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const auto c = palette_color(mask.labels[i]);
        std::copy(c.begin(), c.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
    }
    return out;
}

RgbImage crop(const RgbImage& image, const PixelBox& box) {
    const int x0 = std::clamp(box.x0, 0, image.width);
    const int x1 = std::clamp(box.x1, x0, image.width);
    const int y0 = std::clamp(box.y0, 0, image.height);
    const int y1 = std::clamp(box.y1, y0, image.height);
    RgbImage out{y1 - y0, x1 - x0, {}};
    out.pixels.reserve(static_cast<std::size_t>(out.height) * out.width * 3);
    for (int y = y0; y < y1; ++y) {
        const auto* row = image.at(y, x0);
        out.pixels.insert(out.pixels.end(), row, row + static_cast<std::ptrdiff_t>(out.width) * 3);
    }
    return out;
}

}  // namespace endoseg
