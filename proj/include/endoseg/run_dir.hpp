#pragma once

#include "endoseg/concepts.hpp"
#include "endoseg/segment_embedding.hpp"
#include "endoseg/spectral.hpp"
#include "endoseg/types.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace endoseg {

// Canonical artifact locations inside a run directory.
struct RunPaths {
    fs::path root;

    fs::path config() const { return root / "config.json"; }
    fs::path segments_dir() const { return root / "segments"; }
    fs::path segment(const std::string& image_id) const { return segments_dir() / (image_id + ".json"); }
    fs::path masks_dir() const { return root / "masks"; }
    fs::path mask(const std::string& image_id) const { return masks_dir() / (image_id + ".png"); }
    fs::path legend() const { return masks_dir() / "legend.json"; }
    fs::path model() const { return root / "concept_model.bin"; }
    fs::path concepts() const { return root / "concepts.json"; }
    fs::path reports_dir() const { return root / "reports"; }
    fs::path report(const std::string& task) const { return reports_dir() / (task + ".json"); }
    fs::path review_dir() const { return root / "review"; }
    fs::path stamp(const std::string& stage) const { return root / "stamps" / (stage + ".json"); }
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Leaves the file (and its mtime) untouched when the serialized content is unchanged.
// `inputs` (manifest and feature source) is stored under the "inputs" key when not null.
fs::path write_config(const RunPaths& run, const RunConfig& cfg, const nlohmann::json& inputs = nullptr);
RunConfig read_config(const RunPaths& run);

nlohmann::json read_config_inputs(const RunPaths& run);  // null when absent

// stamps/<stage>.json: the config fields one stage reads. Rewritten only when they change,
// so its mtime is what the stage's freshness check compares against.
fs::path write_stage_stamp(const RunPaths& run, const std::string& stage, const nlohmann::json& fields);

// segments/<id>.json holds the map and, once embedded, one record per segment
// with its vector as base64 little-endian f32.
struct SegmentArtifact {
    SegmentMap map;
    std::vector<SegmentRecord> records;  // empty until the embed stage ran

    bool embedded() const { return !records.empty(); }
};

nlohmann::json segment_artifact_to_json(const SegmentArtifact& artifact);
SegmentArtifact segment_artifact_from_json(const nlohmann::json& j);
fs::path write_segments(const RunPaths& run, const SegmentArtifact& artifact);
SegmentArtifact read_segments(const RunPaths& run, const std::string& image_id);

// Vectors as they read back from disk (f32 rounding).
Eigen::VectorXd round_to_f32(const Eigen::VectorXd& v);

fs::path write_mask(const RunPaths& run, const SemanticMask& mask);
fs::path write_legend(const RunPaths& run, const std::map<int, std::string>& legend);
// Mask labels from the PNG, legend from masks/legend.json.
SemanticMask read_mask(const RunPaths& run, const std::string& image_id);

// concept_model.bin plus concepts.json.
fs::path write_concept_model(const RunPaths& run, const ConceptModel& model);
fs::path write_concept_labels(const RunPaths& run, const ConceptModel& model);
// Labels from concepts.json are merged when the sidecar exists.
ConceptModel read_concept_model(const RunPaths& run);

fs::path write_report(const RunPaths& run, const std::string& task, const nlohmann::json& report);
nlohmann::json read_report(const RunPaths& run, const std::string& task);

// Stable text form used for every JSON artifact.
std::string dump_json(const nlohmann::json& j);

}  // namespace endoseg
