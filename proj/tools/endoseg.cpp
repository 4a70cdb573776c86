// endoseg: pipeline stages over a run directory, plus the review service.

#include "endoseg/config.hpp"
#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"
#include "endoseg/pipeline.hpp"
#include "endoseg/review_service.hpp"
#include "endoseg/run_dir.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

using namespace endoseg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Flags {
    std::string run_dir;
    std::string manifest;
    std::string features;
    std::string extractor;
    std::string config_file;
    std::optional<double> color_weight;
    std::optional<int> k;
    std::optional<int> pca_dim;
    std::optional<int> knn_k;
    std::optional<double> temperature;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    bool force = false;
    bool csv = false;
    std::string task;
    std::optional<std::string> train_fold;
    std::string cluster;
    int frames = 10;
    int port = 8765;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--run-dir", f.run_dir, "Run directory")->required();
    cmd->add_option("--manifest", f.manifest, "Dataset manifest (JSON); defaults to the one recorded in the run");
    cmd->add_option("--features", f.features, "Directory of precomputed <image_id>.pft feature files");
    cmd->add_option("--extractor", f.extractor, "Feature extractor command template using {image}, {bbox}, {out}");
    cmd->add_option("--config", f.config_file, "RunConfig JSON; fields override the recorded config");
    cmd->add_option("--seed", f.seed, "Random seed");
    cmd->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--force", f.force, "Recompute even when outputs are fresh");
}

void add_train_fold(CLI::App* cmd, Flags& f) {
    cmd->add_option("--train-fold", f.train_fold, "Training fold (default: first fold by name)");
}

void add_task(CLI::App* cmd, Flags& f) {
    cmd->add_option("--task", f.task, "Classification task")->required()->check(CLI::IsMember({"full-23", "mces-3"}));
}

RunConfig resolve_config(const RunPaths& run, const Flags& f, const std::string& verb) {
    nlohmann::json doc = nlohmann::json::object();
    if (fs::exists(run.config())) {
        doc = nlohmann::json::parse(read_file_text(run.config()));
        doc.erase("inputs");
    }
    if (!f.config_file.empty()) {
        nlohmann::json over;
        try {
            over = nlohmann::json::parse(read_file_text(f.config_file));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(f.config_file + ": " + e.what());
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        if (!over.is_object()) throw ConfigError(f.config_file + ": expected a JSON object");
        over.erase("inputs");
        doc.merge_patch(over);
    }
    RunConfig cfg = run_config_from_json(doc);
    if (f.color_weight) cfg.color_weight = *f.color_weight;
    if (f.pca_dim) cfg.pca_dim = *f.pca_dim;
    if (f.knn_k) cfg.knn_k = *f.knn_k;
    if (f.k) {
        if (verb == "eval-knn") cfg.knn_k = *f.k;
        else cfg.kmeans_k = *f.k;
    }
    if (f.temperature) cfg.knn_temperature = *f.temperature;
    if (f.seed) cfg.seed = *f.seed;
    cfg.validate();
    return cfg;
}

PipelineInputs resolve_inputs(const RunPaths& run, const Flags& f) {
    if (!f.features.empty() && !f.extractor.empty()) throw ConfigError("--features and --extractor are exclusive");
    std::optional<PipelineInputs> stored;
    if (const auto j = read_config_inputs(run); !j.is_null()) stored = inputs_from_json(j);
    PipelineInputs in;
    if (!f.manifest.empty()) {
        in.manifest = f.manifest;
    } else if (stored) {
        in.manifest = stored->manifest;
    } else {
        throw ConfigError("--manifest is required for a new run directory");
    }
    if (!f.features.empty()) {
        in.features.mode = SourceMode::precomputed;
        in.features.root = f.features;
    } else if (!f.extractor.empty()) {
        in.features.mode = SourceMode::external_command;
        in.features.command = f.extractor;
    } else if (stored) {
        in.features = stored->features;
    } else {
        throw ConfigError("--features or --extractor is required for a new run directory");
    }
    if (in.features.mode == SourceMode::precomputed && !fs::is_directory(in.features.root)) {
        throw ConfigError("feature directory " + in.features.root.string() + " does not exist");
    }
    return in;
}

int resolve_cluster(const RunPaths& run, const std::string& value) {
    try {
        std::size_t used = 0;
        const int id = std::stoi(value, &used);
        if (used == value.size()) return id;
    } catch (const std::exception&) {
    }
    const ConceptModel model = read_concept_model(run);
    for (int c = 0; c < model.k(); ++c) {
        if (model.labels[static_cast<std::size_t>(c)] == value) return c;
    }
    throw ConfigError("--cluster '" + value + "' is neither a cluster id nor a concept label");
}

void print(const StageStats& s) {
    std::cout << s.stage << ": " << s.computed << " computed, " << s.skipped << " up to date\n";
}

ReviewService* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service) g_service->stop();
}

int run_verb(const std::string& verb, const Flags& f) {
    const RunPaths run{f.run_dir};
    if (verb == "serve") {
        ReviewService service(run.root);
        const int port = service.bind(f.port);
        g_service = &service;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "serving " << run.root.string() << " on http://127.0.0.1:" << port << std::endl;
        service.listen();
        g_service = nullptr;
        return 0;
    }
    const RunConfig cfg = resolve_config(run, f, verb);
    const PipelineInputs inputs = resolve_inputs(run, f);
    Pipeline p(run.root, cfg, inputs, PipelineOptions{f.workers, f.force, f.csv});
    if (verb == "segment") print(p.segment());
    else if (verb == "embed") print(p.embed());
    else if (verb == "fit-concepts") print(p.fit_concepts(f.train_fold));
    else if (verb == "render") print(p.render());
    else if (verb == "eval-knn") print(p.eval_knn(parse_cv_task(f.task)));
    else if (verb == "eval-probe") print(p.eval_probe(parse_cv_task(f.task)));
    else if (verb == "eval-polyp") print(p.eval_polyp(f.train_fold));
    else if (verb == "eval-polyp-unsup") print(p.eval_polyp_unsup(f.train_fold, resolve_cluster(run, f.cluster)));
    else if (verb == "export-review") print(p.export_review(f.train_fold, f.frames));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral segmentation and concept discovery over patch features"};
    app.require_subcommand(1);
    Flags f;

    auto* segment = app.add_subcommand("segment", "Per-image spectral segmentation into segments/<id>.json");
    add_common(segment, f);
    segment->add_option("--color-weight", f.color_weight, "Weight of the colour affinity (default 1.0)")
        ->check(CLI::NonNegativeNumber);

    auto* embed = app.add_subcommand("embed", "Crop embeddings for every segment");
    add_common(embed, f);

    auto* fit = app.add_subcommand("fit-concepts", "PCA and K-means over training-fold segments");
    add_common(fit, f);
    add_train_fold(fit, f);
    fit->add_option("--k", f.k, "Number of concept clusters (default 15)");
    fit->add_option("--pca-dim", f.pca_dim, "PCA dimension (default 64)");

    auto* render = app.add_subcommand("render", "Semantic masks for every image");
    add_common(render, f);

    auto* knn = app.add_subcommand("eval-knn", "Weighted KNN two-fold cross-validation");
    add_common(knn, f);
    add_task(knn, f);
    auto* knn_k = knn->add_option("--k", f.k, "Neighbours (default 20)");
    knn->add_option("--knn-k", f.knn_k, "Alias of --k")->excludes(knn_k);
    knn->add_option("--temperature", f.temperature, "Vote temperature (default 0.07)");
    knn->add_flag("--csv", f.csv, "Also write reports/<task>.csv");

    auto* probe = app.add_subcommand("eval-probe", "Linear-probe two-fold cross-validation");
    add_common(probe, f);
    add_task(probe, f);
    probe->add_flag("--csv", f.csv, "Also write reports/<task>.csv");

    auto* polyp = app.add_subcommand("eval-polyp", "Segment-level linear probe for polyp masks");
    add_common(polyp, f);
    add_train_fold(polyp, f);
    polyp->add_flag("--csv", f.csv, "Also write reports/<task>.csv");

    auto* unsup = app.add_subcommand("eval-polyp-unsup", "Score one concept cluster as the polyp detector");
    add_common(unsup, f);
    add_train_fold(unsup, f);
    unsup->add_option("--cluster", f.cluster, "Cluster id or concept label")->required();
    unsup->add_flag("--csv", f.csv, "Also write reports/<task>.csv");

    auto* review = app.add_subcommand("export-review", "Cluster summaries and overlays for seeded training frames");
    add_common(review, f);
    add_train_fold(review, f);
    review->add_option("--frames", f.frames, "Number of frames (default 10)")->check(CLI::NonNegativeNumber);

    auto* serve = app.add_subcommand("serve", "HTTP API for cluster review");
    serve->add_option("--run-dir", f.run_dir, "Run directory")->required();
    serve->add_option("--port", f.port, "Port on 127.0.0.1 (0 picks a free one)")->check(CLI::Range(0, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        return run_verb(verb, f);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
}
