#include "endoseg/review_service.hpp"

#include "endoseg/config.hpp"
#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"
#include "endoseg/image_io.hpp"
#include "endoseg/manifest.hpp"
#include "endoseg/pipeline.hpp"
#include "endoseg/review.hpp"

#include "httplib.h"

#include <algorithm>

namespace endoseg {

ReviewService::ReviewService(fs::path run_dir) : run_{std::move(run_dir)} {
    std::vector<std::string> missing;
    for (const auto& p : {run_.config(), run_.model(), run_.legend()}) {
        if (!fs::exists(p)) missing.push_back(fs::relative(p, run_.root).string());
    }
    if (!missing.empty()) {
        std::string msg = "run directory " + run_.root.string() + " is missing:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    cfg_ = read_config(run_);
    config_doc_ = nlohmann::json::parse(read_file_text(run_.config()));
    const auto inputs = read_config_inputs(run_);
    if (inputs.is_null()) throw ConfigError("config.json records no inputs");
    manifest_ = load_manifest(inputs_from_json(inputs).manifest);
    model_ = read_concept_model(run_);
    for (const auto& img : manifest_.images) {
        if (!fs::exists(run_.segment(img.id))) missing.push_back("segments/" + img.id + ".json");
        if (!fs::exists(run_.mask(img.id))) missing.push_back("masks/" + img.id + ".png");
    }
    if (!missing.empty()) {
        std::string msg = "run directory " + run_.root.string() + " is missing:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    for (const auto& img : manifest_.images) {
        const auto art = read_segments(run_, img.id);
        records_.insert(records_.end(), art.records.begin(), art.records.end());
    }
}

ReviewService::~ReviewService() = default;

const ImageEntry& ReviewService::image(const std::string& id) const {
    const ImageEntry* e = manifest_.find(id);
    if (!e) throw HttpError(404, "unknown image id '" + id + "'");
    return *e;
}

void ReviewService::check_cluster(int cluster_id) const {
    if (cluster_id < 0 || cluster_id >= model_.k()) {
        throw HttpError(404, "cluster id " + std::to_string(cluster_id) + " outside [0, " +
                                 std::to_string(model_.k()) + ")");
    }
}

nlohmann::json ReviewService::clusters() const {
    std::shared_lock lock(labels_mutex_);
    auto out = nlohmann::json::array();
    for (const auto& s : summarize_clusters(model_, records_, 0)) {
        auto j = to_json(s);
        j.erase("exemplars");
        j["color"] = palette_color(s.cluster_id + 1);
        j["labeled"] = s.label != default_concept_label(s.cluster_id);
        out.push_back(std::move(j));
    }
    return out;
}

nlohmann::json ReviewService::exemplars(int cluster_id, int n) const {
    check_cluster(cluster_id);
    if (n < 0) throw HttpError(400, "n must be >= 0");
    ClusterSummary s;
    {
        std::shared_lock lock(labels_mutex_);
        s = summarize_clusters(model_, records_, n)[static_cast<std::size_t>(cluster_id)];
    }
    auto out = nlohmann::json::array();
    for (const auto& e : s.exemplars) {
        auto j = to_json(e);
        const RgbImage pre = preprocess(load_rgb(image(e.image_id).image_path), cfg_.preprocess);
        j["thumbnail_png"] = base64_encode(encode_rgb_png(crop(pre, e.bbox)));
        out.push_back(std::move(j));
    }
    return {{"cluster_id", cluster_id}, {"label", s.label}, {"exemplars", std::move(out)}};
}

nlohmann::json ReviewService::set_label(int cluster_id, const std::string& name) {
    check_cluster(cluster_id);
    const auto first = name.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw HttpError(400, "label name must not be blank");
    std::unique_lock lock(labels_mutex_);
    ConceptModel next = apply_labels(model_, {{cluster_id, name}});
    write_concept_labels(run_, next);
    model_ = std::move(next);
    return {{"cluster_id", cluster_id}, {"label", name}};
}

std::vector<std::uint8_t> ReviewService::mask_png(const std::string& image_id) const {
    image(image_id);
    return read_file_bytes(run_.mask(image_id));
}

std::vector<std::uint8_t> ReviewService::overlay_png(const std::string& image_id, std::optional<int> cluster_id) const {
    const ImageEntry& e = image(image_id);
    if (cluster_id) check_cluster(*cluster_id);
    const SemanticMask mask = decode_palette_png(read_file_bytes(run_.mask(image_id)));
    const RgbImage pre = preprocess(load_rgb(e.image_path), cfg_.preprocess);
    std::optional<int> only;
    if (cluster_id) only = *cluster_id + 1;
    return encode_rgb_png(overlay(pre, mask, only));
}

nlohmann::json ReviewService::config() const {
    nlohmann::json j = config_doc_;
    std::shared_lock lock(labels_mutex_);
    j["k"] = model_.k();
    j["legend"] = nlohmann::json::object();
    for (const auto& [id, name] : model_.legend()) j["legend"][std::to_string(id)] = name;
    return j;
}

namespace {

int parse_int(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw HttpError(400, std::string(what) + " must be an integer");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const HttpError& e) {
        res.status = e.status;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const DataError& e) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
}

void send_json(httplib::Response& res, const nlohmann::json& j) { res.set_content(j.dump(), "application/json"); }

void send_png(httplib::Response& res, const std::vector<std::uint8_t>& bytes) {
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
}

}  // namespace

void ReviewService::install(httplib::Server& s) {
    s.Get("/api/clusters", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, clusters()); });
    });
    s.Get(R"(/api/clusters/(-?\d+)/exemplars)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const int n = req.has_param("n") ? parse_int(req.get_param_value("n"), "n") : 8;
            send_json(res, exemplars(parse_int(req.matches[1], "cluster id"), n));
        });
    });
    s.Post(R"(/api/clusters/(-?\d+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception&) {
                throw HttpError(400, "body must be JSON of the form {\"name\": \"...\"}");
            }
            if (!body.is_object() || !body.contains("name") || !body["name"].is_string()) {
                throw HttpError(400, "body must be JSON of the form {\"name\": \"...\"}");
            }
            send_json(res, set_label(parse_int(req.matches[1], "cluster id"), body["name"].get<std::string>()));
        });
    });
    s.Get(R"(/api/images/([^/]+)/mask)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_png(res, mask_png(req.matches[1])); });
    });
    s.Get(R"(/api/images/([^/]+)/overlay)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::optional<int> cluster;
            if (req.has_param("cluster")) cluster = parse_int(req.get_param_value("cluster"), "cluster");
            send_png(res, overlay_png(req.matches[1], cluster));
        });
    });
    s.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, config()); });
    });
}

int ReviewService::bind(int port) {
    server_ = std::make_unique<httplib::Server>();
    // No SO_REUSEPORT: a second server on the same port must fail to bind.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    install(*server_);
    if (port == 0) {
        const int bound = server_->bind_to_any_port("127.0.0.1");
        if (bound < 0) throw ConfigError("could not bind any port on 127.0.0.1");
        return bound;
    }
    if (!server_->bind_to_port("127.0.0.1", port)) {
        throw ConfigError("port " + std::to_string(port) + " is unavailable");
    }
    return port;
}

void ReviewService::listen() {
    if (!server_) throw ConfigError("serve: bind() before listen()");
    server_->listen_after_bind();
}

void ReviewService::stop() {
    if (server_) server_->stop();
}

}  // namespace endoseg
