#pragma once

#include "endoseg/concepts.hpp"
#include "endoseg/run_dir.hpp"
#include "endoseg/segment_embedding.hpp"
#include "endoseg/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace endoseg {

// Thrown by handlers; carries the HTTP status to answer with.
struct HttpError : std::runtime_error {
    int status;
    HttpError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

/// Review backend over a finished run directory. Everything is read-only
/// except cluster labels, which are persisted to concepts.json.
class ReviewService {
public:
    // Throws DataError listing every missing artifact by name.
    explicit ReviewService(fs::path run_dir);
    ~ReviewService();

    nlohmann::json clusters() const;
    nlohmann::json exemplars(int cluster_id, int n) const;
    nlohmann::json set_label(int cluster_id, const std::string& name);
    std::vector<std::uint8_t> mask_png(const std::string& image_id) const;
    std::vector<std::uint8_t> overlay_png(const std::string& image_id, std::optional<int> cluster_id) const;
    nlohmann::json config() const;

    void install(httplib::Server& server);

    // Binds 127.0.0.1:port (0 picks a free port) and returns the bound port; ConfigError when unavailable.
    int bind(int port);
    void listen();  // blocks until stop()
    void stop();

private:
    const ImageEntry& image(const std::string& id) const;
    void check_cluster(int cluster_id) const;

    RunPaths run_;
    RunConfig cfg_;
    nlohmann::json config_doc_;
    DatasetManifest manifest_;
    ConceptModel model_;
    std::vector<SegmentRecord> records_;
    mutable std::shared_mutex labels_mutex_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace endoseg
