#include "endoseg/config.hpp"

#include "endoseg/error.hpp"

#include <set>

namespace endoseg {

using nlohmann::json;

std::string to_string(BlockFusion fusion) { return fusion == BlockFusion::concat ? "concat" : "mean"; }

std::string to_string(EmbedMode mode) { return mode == EmbedMode::bbox ? "bbox" : "masked"; }

json to_json(const ProbeConfig& p) {
    return json{{"learning_rates", p.learning_rates}, {"epochs", p.epochs},       {"batch_size", p.batch_size},
                {"momentum", p.momentum},             {"block_options", p.block_options}, {"seed", p.seed}};
}

json to_json(const RunConfig& c) {
    json j;
    j["patch_size"] = c.patch_size;
    j["blocks"] = c.blocks;
    j["block_fusion"] = to_string(c.block_fusion);
    j["color_weight"] = c.color_weight;
    j["color_knn_k"] = c.color_knn_k;
    j["color_spatial_scale"] = c.color_spatial_scale ? json(*c.color_spatial_scale) : json(nullptr);
    j["eig_count"] = c.eig_count;
    j["eig_tol"] = c.eig_tol;
    j["eiggap_rule"] = {{"threshold", c.eiggap_rule.threshold}, {"max_segments", c.eiggap_rule.max_segments}};
    j["embed_mode"] = to_string(c.embed_mode);
    j["pca_dim"] = c.pca_dim;
    j["kmeans_k"] = c.kmeans_k;
    j["kmeans_restarts"] = c.kmeans_restarts;
    j["kmeans_max_iter"] = c.kmeans_max_iter;
    j["knn_k"] = c.knn_k;
    j["knn_temperature"] = c.knn_temperature;
    j["knn_blocks"] = c.knn_blocks;
    j["probe"] = to_json(c.probe);
    j["polyp_overlap"] = c.polyp_overlap;
    j["iou_threshold"] = c.iou_threshold;
    j["seed"] = c.seed;
    json pre;
    pre["resize_to"] = c.preprocess.resize_to
                           ? json::array({c.preprocess.resize_to->first, c.preprocess.resize_to->second})
                           : json(nullptr);
    pre["clahe"] = c.preprocess.clahe;
    pre["clahe_clip"] = c.preprocess.clahe_clip;
    pre["clahe_tiles"] = c.preprocess.clahe_tiles;
    j["preprocess"] = pre;
    return j;
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: field '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    std::set<std::string> names(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!names.contains(key)) throw ConfigError("config: unknown field '" + where + key + "'");
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    reject_unknown(j,
                   {"patch_size", "blocks", "block_fusion", "color_weight", "color_knn_k", "color_spatial_scale",
                    "eig_count", "eig_tol", "eiggap_rule", "embed_mode", "pca_dim", "kmeans_k", "kmeans_restarts",
                    "kmeans_max_iter", "knn_k", "knn_temperature", "knn_blocks", "probe", "polyp_overlap",
                    "iou_threshold", "seed", "preprocess", "inputs"},
                   "");
    RunConfig c;
    read(j, "patch_size", c.patch_size);
    read(j, "blocks", c.blocks);
    if (j.contains("block_fusion")) {
        const auto s = j.at("block_fusion").get<std::string>();
        if (s == "concat") c.block_fusion = BlockFusion::concat;
        else if (s == "mean") c.block_fusion = BlockFusion::mean;
        else throw ConfigError("config: block_fusion must be 'concat' or 'mean'");
    }
    read(j, "color_weight", c.color_weight);
    read(j, "color_knn_k", c.color_knn_k);
    if (j.contains("color_spatial_scale") && !j.at("color_spatial_scale").is_null()) {
        c.color_spatial_scale = j.at("color_spatial_scale").get<double>();
    }
    read(j, "eig_count", c.eig_count);
    read(j, "eig_tol", c.eig_tol);
    if (j.contains("eiggap_rule")) {
        const auto& e = j.at("eiggap_rule");
        reject_unknown(e, {"threshold", "max_segments"}, "eiggap_rule.");
        read(e, "threshold", c.eiggap_rule.threshold);
        read(e, "max_segments", c.eiggap_rule.max_segments);
    }
    if (j.contains("embed_mode")) {
        const auto s = j.at("embed_mode").get<std::string>();
        if (s == "bbox") c.embed_mode = EmbedMode::bbox;
        else if (s == "masked") c.embed_mode = EmbedMode::masked;
        else throw ConfigError("config: embed_mode must be 'bbox' or 'masked'");
    }
    read(j, "pca_dim", c.pca_dim);
    read(j, "kmeans_k", c.kmeans_k);
    read(j, "kmeans_restarts", c.kmeans_restarts);
    read(j, "kmeans_max_iter", c.kmeans_max_iter);
    read(j, "knn_k", c.knn_k);
    read(j, "knn_temperature", c.knn_temperature);
    read(j, "knn_blocks", c.knn_blocks);
    if (j.contains("probe")) {
        const auto& p = j.at("probe");
        reject_unknown(p, {"learning_rates", "epochs", "batch_size", "momentum", "block_options", "seed"}, "probe.");
        read(p, "learning_rates", c.probe.learning_rates);
        read(p, "epochs", c.probe.epochs);
        read(p, "batch_size", c.probe.batch_size);
        read(p, "momentum", c.probe.momentum);
        read(p, "block_options", c.probe.block_options);
        read(p, "seed", c.probe.seed);
    }
    read(j, "polyp_overlap", c.polyp_overlap);
    read(j, "iou_threshold", c.iou_threshold);
    read(j, "seed", c.seed);
    if (j.contains("preprocess")) {
        const auto& p = j.at("preprocess");
        reject_unknown(p, {"resize_to", "clahe", "clahe_clip", "clahe_tiles"}, "preprocess.");
        if (p.contains("resize_to") && !p.at("resize_to").is_null()) {
            const auto v = p.at("resize_to").get<std::vector<int>>();
            if (v.size() != 2) throw ConfigError("config: preprocess.resize_to must be [width, height]");
            c.preprocess.resize_to = std::pair{v[0], v[1]};
        }
        read(p, "clahe", c.preprocess.clahe);
        read(p, "clahe_clip", c.preprocess.clahe_clip);
        read(p, "clahe_tiles", c.preprocess.clahe_tiles);
    }
    c.validate();
    return c;
}

}  // namespace endoseg
