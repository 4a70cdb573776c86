#pragma once

#include "endoseg/evaluation.hpp"
#include "endoseg/feature_provider.hpp"
#include "endoseg/run_dir.hpp"
#include "endoseg/spectral.hpp"
#include "endoseg/types.hpp"

#include "json.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace endoseg {

/// Affinity, Laplacian, eigenpairs, segment count and discretization for
/// one image. `grid_colors` holds one RGB value per patch cell.
SegmentMap segment_image(const PatchFeatureTensor& tensor, const RgbImage& grid_colors, const RunConfig& cfg);

// Runs fn(0..n-1) on up to `workers` threads. The error of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

struct PipelineInputs {
    fs::path manifest;
    FeatureSource features;
};

nlohmann::json inputs_to_json(const PipelineInputs& inputs);
PipelineInputs inputs_from_json(const nlohmann::json& j);

struct PipelineOptions {
    int workers = 1;
    bool force = false;
    bool write_csv = false;
};

struct StageStats {
    std::string stage;
    int computed = 0;
    int skipped = 0;
    std::vector<fs::path> outputs;
};

class Pipeline {
public:
    // Loads the manifest and records config plus inputs in config.json.
    Pipeline(fs::path run_dir, RunConfig cfg, PipelineInputs inputs, PipelineOptions options = {});

    const DatasetManifest& manifest() const { return manifest_; }
    const RunConfig& config() const { return cfg_; }
    const RunPaths& paths() const { return run_; }

    StageStats segment();
    StageStats embed();
    StageStats fit_concepts(const std::optional<std::string>& train_fold);
    StageStats render();
    StageStats eval_knn(CvTask task);
    StageStats eval_probe(CvTask task);
    StageStats eval_polyp(const std::optional<std::string>& train_fold);
    StageStats eval_polyp_unsup(const std::optional<std::string>& train_fold, int cluster);
    StageStats export_review(const std::optional<std::string>& train_fold, int n_frames = 10);

    // Explicit fold, else the first fold by name; nullopt when the manifest has no folds.
    std::optional<std::string> resolve_train_fold(const std::optional<std::string>& requested) const;

    RgbImage load_preprocessed(const ImageEntry& image) const;
    // Binary mask resized (nearest) to height x width; nullopt when the path is unset.
    std::optional<BinaryMask> load_mask_at(const std::optional<fs::path>& path, int height, int width) const;

private:
    std::vector<const ImageEntry*> fold_images(const std::optional<std::string>& fold, bool include) const;
    StageStats eval_cv(CvTask task, CvMethod method);
    void write_report_files(StageStats& stats, const std::string& name, const nlohmann::json& report) const;
    ImageEntry extractor_entry(const ImageEntry& image, const fs::path& scratch) const;
    fs::path stage_stamp(const std::string& stage) const;

    RunPaths run_;
    RunConfig cfg_;
    PipelineInputs inputs_;
    PipelineOptions options_;
    DatasetManifest manifest_;
    std::unique_ptr<FeatureProvider> provider_;
};

}  // namespace endoseg
