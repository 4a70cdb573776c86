#include "endoseg/pipeline.hpp"

#include "endoseg/affinity.hpp"
#include "endoseg/config.hpp"
#include "endoseg/concepts.hpp"
#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"
#include "endoseg/image_io.hpp"
#include "endoseg/manifest.hpp"
#include "endoseg/review.hpp"
#include "endoseg/rng.hpp"
#include "endoseg/segment_embedding.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <unistd.h>

namespace endoseg {

SegmentMap segment_image(const PatchFeatureTensor& tensor, const RgbImage& grid_colors, const RunConfig& cfg) {
    const int gh = static_cast<int>(tensor.grid_h);
    const int gw = static_cast<int>(tensor.grid_w);
    const int n = gh * gw;
    if (n < 3) throw DataError(tensor.image_id + ": patch grid too small to segment");
    if (grid_colors.height != gh || grid_colors.width != gw) {
        throw DataError(tensor.image_id + ": colour grid does not match the feature grid");
    }
    AffinityMatrix w = feature_affinity(tensor, cfg.block_fusion, resolve_blocks(cfg.blocks, tensor.n_blocks));
    if (cfg.color_weight > 0.0) {
        const ColorGraphParams params{std::min(cfg.color_knn_k, n - 1), cfg.color_spatial_scale};
        w = combine(w, color_affinity(grid_colors, params), cfg.color_weight);
    }
    const SparseMatrix l = normalized_laplacian(w);
    const std::uint64_t seed = Rng::derive(cfg.seed, Rng::hash(tensor.image_id));
    const int m = std::min(cfg.eig_count, n - 1);
    const SpectralEmbedding emb = smallest_eigenpairs(l, m, EigenSolverOptions{cfg.eig_tol, 5000, seed, -1});
    const int k = choose_segment_count(emb.eigenvalues, cfg.eiggap_rule);
    SegmentMap map =
        discretize(emb, k, gh, gw, cfg.patch_size, DiscretizeOptions{Rng::derive(seed, 1), cfg.kmeans_restarts,
                                                                      cfg.kmeans_max_iter, 5});
    map.image_id = tensor.image_id;
    return map;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(threads, n); ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n && !failed; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                        failed = true;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

nlohmann::json inputs_to_json(const PipelineInputs& in) {
    nlohmann::json j;
    j["manifest"] = fs::absolute(in.manifest).lexically_normal().string();
    if (in.features.mode == SourceMode::precomputed) {
        j["features"] = {{"mode", "precomputed"}, {"root", fs::absolute(in.features.root).lexically_normal().string()}};
    } else {
        j["features"] = {{"mode", "external_command"}, {"command", in.features.command}};
    }
    return j;
}

PipelineInputs inputs_from_json(const nlohmann::json& j) {
    PipelineInputs in;
    try {
        in.manifest = j.at("manifest").get<std::string>();
        const auto& f = j.at("features");
        const auto mode = f.at("mode").get<std::string>();
        if (mode == "precomputed") {
            in.features.mode = SourceMode::precomputed;
            in.features.root = f.at("root").get<std::string>();
        } else if (mode == "external_command") {
            in.features.mode = SourceMode::external_command;
            in.features.command = f.at("command").get<std::string>();
        } else {
            throw ConfigError("config.json: unknown feature mode '" + mode + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config.json inputs: ") + e.what());
    }
    return in;
}

namespace {

template <class F>
void with_context(const std::string& stage, const std::string& id, F&& f) {
    const std::string where = stage + " [" + id + "]: ";
    try {
        f();
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + e.what());
    } catch (const DataError& e) {
        throw DataError(where + e.what());
    } catch (const std::bad_alloc&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(where + e.what());
    }
}

// Deletes a scratch directory on scope exit.
struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("endoseg-" + std::to_string(::getpid()) + "-" + std::to_string(Rng::hash(tag)));
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
};

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

bool report_matches(const RunPaths& run, const std::string& name, const nlohmann::json& params) {
    try {
        const auto j = read_report(run, name);
        return j.contains("params") && j.at("params") == params;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

Pipeline::Pipeline(fs::path run_dir, RunConfig cfg, PipelineInputs inputs, PipelineOptions options)
    : run_{std::move(run_dir)}, cfg_(std::move(cfg)), inputs_(std::move(inputs)), options_(options) {
    cfg_.validate();
    if (options_.workers < 1) throw ConfigError("--workers must be >= 1");
    manifest_ = load_manifest(inputs_.manifest);
    inputs_.features.patch_size = cfg_.patch_size;
    inputs_.features.blocks_requested = cfg_.blocks;
    inputs_.features.max_parallel = options_.workers;
    provider_ = std::make_unique<FeatureProvider>(inputs_.features);
    std::error_code ec;
    fs::create_directories(run_.root, ec);
    if (ec) throw DataError("cannot create run directory " + run_.root.string() + ": " + ec.message());
    write_config(run_, cfg_, inputs_to_json(inputs_));
}

std::optional<std::string> Pipeline::resolve_train_fold(const std::optional<std::string>& requested) const {
    if (requested) {
        if (!manifest_.folds.contains(*requested)) throw ConfigError("unknown fold '" + *requested + "'");
        return requested;
    }
    if (manifest_.folds.empty()) return std::nullopt;
    return manifest_.folds.begin()->first;
}

std::vector<const ImageEntry*> Pipeline::fold_images(const std::optional<std::string>& fold, bool include) const {
    std::vector<const ImageEntry*> out;
    for (const auto& img : manifest_.images) {
        const auto f = manifest_.fold_of(img.id);
        if (!fold) {
            if (include) out.push_back(&img);
            continue;
        }
        if (include ? (f == fold) : (f && f != fold)) out.push_back(&img);
    }
    return out;
}

RgbImage Pipeline::load_preprocessed(const ImageEntry& image) const {
    return preprocess(load_rgb(image.image_path), cfg_.preprocess);
}

std::optional<BinaryMask> Pipeline::load_mask_at(const std::optional<fs::path>& path, int height, int width) const {
    if (!path) return std::nullopt;
    return resize_mask_nearest(load_binary_mask(*path), height, width);
}

ImageEntry Pipeline::extractor_entry(const ImageEntry& image, const fs::path& scratch) const {
    if (inputs_.features.mode != SourceMode::external_command) return image;
    if (!cfg_.preprocess.resize_to && !cfg_.preprocess.clahe) return image;
    ImageEntry e = image;
    e.image_path = scratch / (image.id + ".png");
    save_rgb_png(e.image_path, load_preprocessed(image));
    return e;
}

fs::path Pipeline::stage_stamp(const std::string& stage) const {
    static const std::map<std::string, std::vector<std::string>> keys{
        {"segment",
         {"patch_size", "blocks", "block_fusion", "color_weight", "color_knn_k", "color_spatial_scale", "eig_count",
          "eig_tol", "eiggap_rule", "kmeans_restarts", "kmeans_max_iter", "seed", "preprocess"}},
        {"embed", {"patch_size", "blocks", "embed_mode", "preprocess"}},
        {"fit-concepts", {"pca_dim", "kmeans_k", "kmeans_restarts", "kmeans_max_iter", "seed"}},
        {"render", {"preprocess"}},
        {"eval-knn", {"blocks", "knn_k", "knn_temperature", "knn_blocks"}},
        {"eval-probe", {"blocks", "probe", "seed"}},
        {"eval-polyp", {"probe", "seed", "polyp_overlap", "iou_threshold", "preprocess"}},
        {"eval-polyp-unsup", {"iou_threshold", "preprocess"}},
        {"export-review", {"seed", "preprocess"}},
    };
    const nlohmann::json all = to_json(cfg_);
    nlohmann::json fields = nlohmann::json::object();
    for (const auto& k : keys.at(stage)) fields[k] = all.at(k);
    fields["inputs"] = inputs_to_json(inputs_);
    return write_stage_stamp(run_, stage, fields);
}

StageStats Pipeline::segment() {
    StageStats stats{"segment", 0, 0, {}};
    const fs::path stamp = stage_stamp("segment");
    const auto& images = manifest_.images;
    std::vector<int> done(images.size(), 0);
    const std::optional<ScratchDir> scratch =
        inputs_.features.mode == SourceMode::external_command ? std::optional<ScratchDir>(std::in_place, "segment")
                                                              : std::nullopt;
    parallel_for(images.size(), options_.workers, [&](std::size_t i) {
        const ImageEntry& img = images[i];
        with_context("segment", img.id, [&] {
            std::vector<fs::path> deps{inputs_.manifest, img.image_path, stamp};
            if (inputs_.features.mode == SourceMode::precomputed) deps.push_back(inputs_.features.root / (img.id + ".pft"));
            if (!options_.force && is_fresh(run_.segment(img.id), deps)) return;
            const RgbImage original = load_rgb(img.image_path);
            for (const auto& mp : {img.gt_mask_path, img.field_mask_path}) {
                if (!mp) continue;
                const BinaryMask m = load_binary_mask(*mp);
                if (m.height != original.height || m.width != original.width) {
                    throw DataError("mask " + mp->string() + " is " + std::to_string(m.width) + "x" +
                                    std::to_string(m.height) + " but the image is " + std::to_string(original.width) +
                                    "x" + std::to_string(original.height));
                }
            }
            const RgbImage pre = preprocess(original, cfg_.preprocess);
            const PatchFeatureTensor tensor = provider_->features_for(scratch ? extractor_entry(img, scratch->path) : img);
            const auto gh = static_cast<int>(tensor.grid_h);
            const auto gw = static_cast<int>(tensor.grid_w);
            if (gh * cfg_.patch_size != pre.height || gw * cfg_.patch_size != pre.width) {
                throw DataError("feature grid " + std::to_string(gh) + "x" + std::to_string(gw) + " with patch size " +
                                std::to_string(cfg_.patch_size) + " does not tile the preprocessed image " +
                                std::to_string(pre.width) + "x" + std::to_string(pre.height));
            }
            const SegmentMap map = segment_image(tensor, downsample_to_grid(pre, gh, gw), cfg_);
            write_segments(run_, SegmentArtifact{map, {}});
            done[i] = 1;
        });
    });
    for (std::size_t i = 0; i < images.size(); ++i) {
        done[i] ? ++stats.computed : ++stats.skipped;
        stats.outputs.push_back(run_.segment(images[i].id));
    }
    return stats;
}

StageStats Pipeline::embed() {
    StageStats stats{"embed", 0, 0, {}};
    const fs::path stamp = stage_stamp("embed");
    const auto& images = manifest_.images;
    std::vector<int> done(images.size(), 0);
    const std::optional<ScratchDir> scratch =
        inputs_.features.mode == SourceMode::external_command ? std::optional<ScratchDir>(std::in_place, "embed")
                                                              : std::nullopt;
    parallel_for(images.size(), options_.workers, [&](std::size_t i) {
        const ImageEntry& img = images[i];
        with_context("embed", img.id, [&] {
            SegmentArtifact art = read_segments(run_, img.id);
            std::vector<fs::path> deps{inputs_.manifest, img.image_path, stamp};
            if (inputs_.features.mode == SourceMode::precomputed) deps.push_back(inputs_.features.root / (img.id + ".pft"));
            if (!options_.force && art.embedded() && is_fresh(run_.segment(img.id), deps)) return;
            const SegmentMap& map = art.map;
            const ImageEntry entry = scratch ? extractor_entry(img, scratch->path) : img;
            const PatchFeatureTensor tensor = provider_->features_for(entry);
            if (tensor.grid_h != static_cast<std::uint32_t>(map.grid_h) ||
                tensor.grid_w != static_cast<std::uint32_t>(map.grid_w)) {
                throw DataError("feature grid changed since segmentation; rerun segment");
            }
            std::optional<BinaryMask> field_cells;
            if (const auto fm = load_mask_at(img.field_mask_path, map.grid_h * map.patch_size, map.grid_w * map.patch_size)) {
                field_cells = mask_to_grid(*fm, map.grid_h, map.grid_w);
            }
            art.records = embed_segments(map, *provider_, entry, &tensor, cfg_.embed_mode,
                                         field_cells ? &*field_cells : nullptr, manifest_.fold_of(img.id));
            for (auto& r : art.records) r.vector = round_to_f32(r.vector);
            write_segments(run_, art);
            done[i] = 1;
        });
    });
    for (std::size_t i = 0; i < images.size(); ++i) {
        done[i] ? ++stats.computed : ++stats.skipped;
        stats.outputs.push_back(run_.segment(images[i].id));
    }
    return stats;
}

namespace {

std::vector<SegmentArtifact> read_embedded(const RunPaths& run, const std::vector<const ImageEntry*>& images,
                                           const std::string& stage, int workers) {
    std::vector<SegmentArtifact> out(images.size());
    parallel_for(images.size(), workers, [&](std::size_t i) {
        with_context(stage, images[i]->id, [&] {
            out[i] = read_segments(run, images[i]->id);
            if (!out[i].embedded()) throw DataError("segments are not embedded yet; run embed first");
        });
    });
    return out;
}

}  // namespace

StageStats Pipeline::fit_concepts(const std::optional<std::string>& train_fold) {
    StageStats stats{"fit-concepts", 0, 0, {run_.model(), run_.concepts()}};
    const auto fold = resolve_train_fold(train_fold);
    const auto images = fold_images(fold, true);
    if (images.empty()) throw DataError("fit-concepts: no images in the training fold");
    const nlohmann::json params = {{"train_fold", fold ? nlohmann::json(*fold) : nlohmann::json(nullptr)}};
    std::vector<fs::path> deps{stage_stamp("fit-concepts"), inputs_.manifest};
    for (const auto* img : images) deps.push_back(run_.segment(img->id));
    if (!options_.force && is_fresh(run_.model(), deps) && fs::exists(run_.concepts()) &&
        report_matches(run_, "concepts-fit", params)) {
        stats.skipped = 1;
        return stats;
    }
    const auto arts = read_embedded(run_, images, "fit-concepts", options_.workers);
    std::vector<SegmentRecord> records;
    for (const auto& a : arts) records.insert(records.end(), a.records.begin(), a.records.end());
    ConceptFit fit;
    with_context("fit-concepts", fold.value_or("all images"), [&] { fit = endoseg::fit_concepts(records, cfg_); });
    write_concept_model(run_, fit.model);
    std::vector<int> sizes(static_cast<std::size_t>(fit.model.k()), 0);
    for (const auto& a : fit.assignments) ++sizes[static_cast<std::size_t>(a.cluster_id)];
    nlohmann::json rep;
    rep["task"] = "concepts-fit";
    rep["params"] = params;
    rep["n_images"] = images.size();
    rep["n_segments"] = records.size();
    rep["k"] = fit.model.k();
    rep["pca_dim_used"] = fit.pca_dim_used;
    rep["inertia"] = fit.inertia;
    rep["cluster_sizes"] = sizes;
    write_report(run_, "concepts-fit", rep);
    stats.outputs.push_back(run_.report("concepts-fit"));
    stats.computed = 1;
    return stats;
}

StageStats Pipeline::render() {
    StageStats stats{"render", 0, 0, {}};
    const fs::path stamp = stage_stamp("render");
    const ConceptModel model = read_concept_model(run_);
    const auto& images = manifest_.images;
    std::vector<int> done(images.size(), 0);
    parallel_for(images.size(), options_.workers, [&](std::size_t i) {
        const ImageEntry& img = images[i];
        with_context("render", img.id, [&] {
            const std::vector<fs::path> deps{run_.segment(img.id), run_.model(), stamp, inputs_.manifest};
            if (!options_.force && is_fresh(run_.mask(img.id), deps)) return;
            const SegmentArtifact art = read_segments(run_, img.id);
            if (!art.embedded()) throw DataError("segments are not embedded yet; run embed first");
            const auto& map = art.map;
            const auto field = load_mask_at(img.field_mask_path, map.grid_h * map.patch_size, map.grid_w * map.patch_size);
            const auto assignments = assign_segments(model, art.records);
            write_mask(run_, render_mask(model, map, assignments, field ? &*field : nullptr));
            done[i] = 1;
        });
    });
    write_legend(run_, model.legend());
    for (std::size_t i = 0; i < images.size(); ++i) {
        done[i] ? ++stats.computed : ++stats.skipped;
        stats.outputs.push_back(run_.mask(images[i].id));
    }
    stats.outputs.push_back(run_.legend());
    return stats;
}

void Pipeline::write_report_files(StageStats& stats, const std::string& name, const nlohmann::json& report) const {
    stats.outputs.push_back(write_report(run_, name, report));
    if (options_.write_csv) {
        const fs::path csv = run_.reports_dir() / (name + ".csv");
        write_file_atomic(csv, report_to_csv(report));
        stats.outputs.push_back(csv);
    }
}

StageStats Pipeline::eval_cv(CvTask task, CvMethod method) {
    const std::string name = to_string(task) + "-" + to_string(method);
    StageStats stats{"eval-" + to_string(method), 0, 0, {}};
    const nlohmann::json params = {{"task", to_string(task)}, {"method", to_string(method)}};
    std::vector<const ImageEntry*> images;
    for (const auto& fold : manifest_.fold_ids()) {
        for (const auto& [id, label] : task_labels(manifest_, task, fold)) images.push_back(manifest_.find(id));
    }
    std::vector<fs::path> deps{stage_stamp(stats.stage), inputs_.manifest};
    if (inputs_.features.mode == SourceMode::precomputed) {
        for (const auto* img : images) deps.push_back(inputs_.features.root / (img->id + ".pft"));
    }
    if (!options_.force && is_fresh(run_.report(name), deps) && report_matches(run_, name, params)) {
        stats.skipped = 1;
        stats.outputs.push_back(run_.report(name));
        return stats;
    }
    std::vector<int> blocks;
    if (method == CvMethod::knn) {
        blocks.push_back(cfg_.knn_blocks);
    } else {
        blocks = cfg_.probe.block_options;
    }
    std::vector<std::vector<Eigen::VectorXd>> emb(images.size());
    const std::optional<ScratchDir> scratch =
        inputs_.features.mode == SourceMode::external_command ? std::optional<ScratchDir>(std::in_place, name)
                                                              : std::nullopt;
    parallel_for(images.size(), options_.workers, [&](std::size_t i) {
        with_context(stats.stage, images[i]->id, [&] {
            const PatchFeatureTensor t =
                provider_->features_for(scratch ? extractor_entry(*images[i], scratch->path) : *images[i]);
            for (int b : blocks) emb[i].push_back(image_embedding(t, b));
        });
    });
    EmbeddingTable table;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t b = 0; b < blocks.size(); ++b) table[blocks[b]][images[i]->id] = emb[i][b];
    }
    nlohmann::json report;
    with_context(stats.stage, to_string(task), [&] { report = two_fold_cv(manifest_, task, method, cfg_, table); });
    report["params"] = params;
    write_report_files(stats, name, report);
    stats.computed = 1;
    return stats;
}

StageStats Pipeline::eval_knn(CvTask task) { return eval_cv(task, CvMethod::knn); }
StageStats Pipeline::eval_probe(CvTask task) { return eval_cv(task, CvMethod::probe); }

namespace {

struct PolypSet {
    std::vector<SegmentArtifact> artifacts;
    std::vector<std::optional<BinaryMask>> fields;
    std::vector<PolypImage> images;
};

}  // namespace

static PolypSet load_polyp_set(const Pipeline& p, const std::vector<const ImageEntry*>& images, const std::string& stage,
                               int workers) {
    PolypSet set;
    set.artifacts = read_embedded(p.paths(), images, stage, workers);
    set.fields.resize(images.size());
    set.images.resize(images.size());
    parallel_for(images.size(), workers, [&](std::size_t i) {
        with_context(stage, images[i]->id, [&] {
            const SegmentMap& map = set.artifacts[i].map;
            const int h = map.grid_h * map.patch_size;
            const int w = map.grid_w * map.patch_size;
            set.fields[i] = p.load_mask_at(images[i]->field_mask_path, h, w);
            set.images[i].gt = *p.load_mask_at(images[i]->gt_mask_path, h, w);
        });
    });
    for (std::size_t i = 0; i < images.size(); ++i) {
        set.images[i].map = &set.artifacts[i].map;
        set.images[i].records = &set.artifacts[i].records;
        set.images[i].field_mask = set.fields[i] ? &*set.fields[i] : nullptr;
    }
    return set;
}

StageStats Pipeline::eval_polyp(const std::optional<std::string>& train_fold) {
    StageStats stats{"eval-polyp", 0, 0, {}};
    const auto fold = resolve_train_fold(train_fold);
    if (!fold) throw DataError("eval-polyp: the manifest defines no folds");
    auto with_gt = [](std::vector<const ImageEntry*> v) {
        std::erase_if(v, [](const ImageEntry* e) { return !e->gt_mask_path; });
        return v;
    };
    const auto train = with_gt(fold_images(fold, true));
    const auto eval = with_gt(fold_images(fold, false));
    if (train.empty() || eval.empty()) throw DataError("eval-polyp: both folds need images with ground-truth masks");
    std::vector<std::string> eval_folds;
    for (const auto& f : manifest_.fold_ids()) {
        if (f != *fold) eval_folds.push_back(f);
    }
    const std::string name = "polyp-probe";
    const nlohmann::json params = {{"task", name}, {"train_fold", *fold}};
    std::vector<fs::path> deps{stage_stamp("eval-polyp"), inputs_.manifest};
    for (const auto* v : {&train, &eval}) {
        for (const auto* img : *v) deps.push_back(run_.segment(img->id));
    }
    if (!options_.force && is_fresh(run_.report(name), deps) && report_matches(run_, name, params)) {
        stats.skipped = 1;
        stats.outputs.push_back(run_.report(name));
        return stats;
    }
    const PolypSet tr = load_polyp_set(*this, train, stats.stage, options_.workers);
    const PolypSet ev = load_polyp_set(*this, eval, stats.stage, options_.workers);
    DetectionReport rep;
    with_context(stats.stage, *fold, [&] { rep = segment_polyp_probe(tr.images, ev.images, cfg_); });
    nlohmann::json j = detection_report_to_json(rep);
    j["task"] = name;
    j["params"] = params;
    j["train_fold"] = *fold;
    j["eval_fold"] = join(eval_folds, "+");
    j["config"] = to_json(cfg_);
    write_report_files(stats, name, j);
    stats.computed = 1;
    return stats;
}

StageStats Pipeline::eval_polyp_unsup(const std::optional<std::string>& train_fold, int cluster) {
    StageStats stats{"eval-polyp-unsup", 0, 0, {}};
    const auto fold = resolve_train_fold(train_fold);
    if (!fold) throw DataError("eval-polyp-unsup: the manifest defines no folds");
    const ConceptModel model = read_concept_model(run_);
    if (cluster < 0 || cluster >= model.k()) {
        throw ConfigError("--cluster " + std::to_string(cluster) + " outside [0, " + std::to_string(model.k()) + ")");
    }
    try {
        const auto fit = read_report(run_, "concepts-fit");
        if (fit.at("params").at("train_fold") != *fold) {
            throw ConfigError("concept model was fit on fold " + fit.at("params").at("train_fold").dump() +
                              ", not '" + *fold + "'");
        }
    } catch (const nlohmann::json::exception&) {
        throw DataError("reports/concepts-fit.json is malformed");
    }
    auto eval = fold_images(fold, false);
    std::erase_if(eval, [](const ImageEntry* e) { return !e->gt_mask_path; });
    if (eval.empty()) throw DataError("eval-polyp-unsup: no ground-truth masks outside the training fold");
    std::vector<std::string> eval_folds;
    for (const auto& f : manifest_.fold_ids()) {
        if (f != *fold) eval_folds.push_back(f);
    }
    const std::string name = "polyp-unsup";
    const nlohmann::json params = {{"task", name}, {"train_fold", *fold}, {"chosen_cluster", cluster}};
    std::vector<fs::path> deps{stage_stamp("eval-polyp-unsup"), inputs_.manifest, run_.model()};
    for (const auto* img : eval) deps.push_back(run_.segment(img->id));
    if (!options_.force && is_fresh(run_.report(name), deps) && report_matches(run_, name, params)) {
        stats.skipped = 1;
        stats.outputs.push_back(run_.report(name));
        return stats;
    }
    const PolypSet ev = load_polyp_set(*this, eval, stats.stage, options_.workers);
    DetectionReport rep;
    with_context(stats.stage, *fold, [&] { rep = unsupervised_polyp_eval(model, cluster, ev.images, cfg_); });
    nlohmann::json j = detection_report_to_json(rep);
    j["task"] = name;
    j["params"] = params;
    j["chosen_cluster"] = cluster;
    j["train_fold"] = *fold;
    j["eval_fold"] = join(eval_folds, "+");
    j["config"] = to_json(cfg_);
    write_report_files(stats, name, j);
    stats.computed = 1;
    return stats;
}

StageStats Pipeline::export_review(const std::optional<std::string>& train_fold, int n_frames) {
    StageStats stats{"export-review", 0, 0, {}};
    if (n_frames < 0) throw ConfigError("export-review: frame count must be >= 0");
    const auto fold = resolve_train_fold(train_fold);
    const fs::path clusters_path = run_.review_dir() / "clusters.json";
    const fs::path frames_path = run_.review_dir() / "frames.json";
    const nlohmann::json params = {{"train_fold", fold ? nlohmann::json(*fold) : nlohmann::json(nullptr)},
                                   {"frames", n_frames}};
    std::vector<fs::path> deps{stage_stamp("export-review"), inputs_.manifest, run_.model(), run_.concepts(),
                               run_.legend()};
    for (const auto& img : manifest_.images) deps.push_back(run_.segment(img.id));
    bool fresh = !options_.force && is_fresh(clusters_path, deps) && is_fresh(frames_path, deps);
    if (fresh) {
        try {
            fresh = nlohmann::json::parse(read_file_text(frames_path)).at("params") == params;
        } catch (const std::exception&) {
            fresh = false;
        }
    }
    if (fresh) {
        stats.skipped = 1;
        stats.outputs = {clusters_path, frames_path};
        return stats;
    }
    const ConceptModel model = read_concept_model(run_);
    std::vector<const ImageEntry*> all;
    for (const auto& img : manifest_.images) all.push_back(&img);
    const auto arts = read_embedded(run_, all, stats.stage, options_.workers);
    std::vector<SegmentRecord> records;
    for (const auto& a : arts) records.insert(records.end(), a.records.begin(), a.records.end());
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& s : summarize_clusters(model, records, 16)) clusters.push_back(to_json(s));
    write_file_atomic(clusters_path, dump_json(clusters));

    auto pool = fold_images(fold, true);
    std::sort(pool.begin(), pool.end(), [](const ImageEntry* a, const ImageEntry* b) { return a->id < b->id; });
    Rng rng(Rng::derive(cfg_.seed, Rng::hash("review-frames")));
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(n_frames));
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(take);
    std::sort(pool.begin(), pool.end(), [](const ImageEntry* a, const ImageEntry* b) { return a->id < b->id; });
    nlohmann::json frames = nlohmann::json::array();
    std::vector<nlohmann::json> entries(pool.size());
    parallel_for(pool.size(), options_.workers, [&](std::size_t i) {
        with_context(stats.stage, pool[i]->id, [&] {
            const SemanticMask mask = read_mask(run_, pool[i]->id);
            const RgbImage pre = load_preprocessed(*pool[i]);
            const fs::path out = run_.review_dir() / "overlays" / (pool[i]->id + ".png");
            write_file_atomic(out, encode_rgb_png(overlay(pre, mask, std::nullopt)));
            std::vector<int> present;
            std::vector<int> counts(256, 0);
            for (auto v : mask.labels) ++counts[v];
            for (int id = 1; id < 256; ++id) {
                if (counts[static_cast<std::size_t>(id)]) present.push_back(id - 1);
            }
            entries[i] = {{"image_id", pool[i]->id},
                          {"overlay", "overlays/" + pool[i]->id + ".png"},
                          {"clusters_present", present}};
        });
    });
    for (auto& e : entries) frames.push_back(std::move(e));
    nlohmann::json doc = {{"params", params}, {"frames", frames}};
    write_file_atomic(frames_path, dump_json(doc));
    stats.computed = 1;
    stats.outputs = {clusters_path, frames_path};
    return stats;
}

}  // namespace endoseg
