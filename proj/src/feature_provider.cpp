#include "endoseg/feature_provider.hpp"

#include "endoseg/error.hpp"
#include "endoseg/feature_io.hpp"
#include "endoseg/image_io.hpp"

#include <array>
#include <atomic>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

namespace endoseg {

std::vector<std::size_t> resolve_blocks(const std::vector<int>& requested, std::uint32_t n_blocks) {
    std::vector<std::size_t> out;
    if (requested.empty()) {
        const std::uint32_t take = std::min<std::uint32_t>(4, n_blocks);
        for (std::uint32_t b = n_blocks - take; b < n_blocks; ++b) out.push_back(b);
        return out;
    }
    for (int b : requested) {
        const long long idx = b < 0 ? static_cast<long long>(n_blocks) + b : b;
        if (idx < 0 || idx >= n_blocks) {
            throw ConfigError("block index " + std::to_string(b) + " out of range for a tensor with " +
                              std::to_string(n_blocks) + " blocks");
        }
        out.push_back(static_cast<std::size_t>(idx));
    }
    return out;
}

std::optional<Eigen::VectorXd> pool_cells(const PatchFeatureTensor& tensor, const PixelBox& bbox, int patch_size,
                                          const std::vector<std::size_t>& blocks, const BinaryMask* cell_weights,
                                          const BinaryMask* cell_selection) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(tensor.dim);
    std::size_t cells = 0;
    for (std::uint32_t r = 0; r < tensor.grid_h; ++r) {
        const double cy = (r + 0.5) * patch_size;
        if (cy < bbox.y0 || cy >= bbox.y1) continue;
        for (std::uint32_t c = 0; c < tensor.grid_w; ++c) {
            const double cx = (c + 0.5) * patch_size;
            if (cx < bbox.x0 || cx >= bbox.x1) continue;
            if (cell_weights && !cell_weights->at(static_cast<int>(r), static_cast<int>(c))) continue;
            if (cell_selection && !cell_selection->at(static_cast<int>(r), static_cast<int>(c))) continue;
            for (std::size_t b : blocks) {
                const auto v = tensor.patch(b, r, c);
                for (std::uint32_t d = 0; d < tensor.dim; ++d) sum[d] += v[d];
            }
            ++cells;
        }
    }
    if (cells == 0) return std::nullopt;
    return sum / static_cast<double>(cells * blocks.size());
}

Eigen::VectorXd pool_all(const PatchFeatureTensor& tensor, const std::vector<std::size_t>& blocks) {
    const PixelBox all{0, 0, static_cast<int>(tensor.grid_w), static_cast<int>(tensor.grid_h)};
    return *pool_cells(tensor, all, 1, blocks);
}

Eigen::VectorXd l2_normalized(Eigen::VectorXd v, const std::string& what) {
    const double n = v.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) throw NumericalError(what + ": pooled vector has degenerate norm");
    v /= n;
    return v;
}

FeatureProvider::FeatureProvider(FeatureSource source)
    : source_(std::move(source)),
      slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, source_.max_parallel))) {
    if (source_.patch_size < 1) throw ConfigError("feature source: patch_size must be >= 1");
    if (source_.mode == SourceMode::external_command && source_.command.find("{out}") == std::string::npos) {
        throw ConfigError("feature source: extractor command must contain an {out} placeholder");
    }
}

PatchFeatureTensor FeatureProvider::features_for(const ImageEntry& image) const {
    if (source_.mode == SourceMode::precomputed) {
        return read_features(source_.root / (image.id + ".pft"), image.id);
    }
    const RgbImage img = load_rgb(image.image_path);
    return run_extractor(image, PixelBox{0, 0, img.width, img.height});
}

Eigen::VectorXd FeatureProvider::embed_crop(const CropRequest& crop, const ImageEntry& image,
                                            const PatchFeatureTensor* tensor, const BinaryMask* cell_weights,
                                            const BinaryMask* cell_selection) const {
    if (crop.bbox.width() <= 0 || crop.bbox.height() <= 0) {
        throw DataError("crop for " + crop.image_id + ": empty bounding box");
    }
    const std::string what = "crop embedding for " + crop.image_id;
    if (source_.mode == SourceMode::external_command) {
        const PatchFeatureTensor t = run_extractor(image, crop.bbox);
        return l2_normalized(pool_all(t, resolve_blocks(source_.blocks_requested, t.n_blocks)), what);
    }
    PatchFeatureTensor loaded;
    if (!tensor) {
        loaded = features_for(image);
        tensor = &loaded;
    }
    const auto blocks = resolve_blocks(source_.blocks_requested, tensor->n_blocks);
    auto pooled = pool_cells(*tensor, crop.bbox, source_.patch_size, blocks, cell_weights, cell_selection);
    if (!pooled) throw DataError(what + ": crop covers no patch cell");
    return l2_normalized(std::move(*pooled), what);
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'') out += "'\\''";
        else out += ch;
    }
    return out + "'";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

}  // namespace

PatchFeatureTensor FeatureProvider::run_extractor(const ImageEntry& image, const PixelBox& bbox) const {
    static std::atomic<unsigned long> counter{0};
    const fs::path out = fs::temp_directory_path() / ("endoseg-" + std::to_string(::getpid()) + "-" +
                                                      std::to_string(counter.fetch_add(1)) + ".pft");
    std::string cmd = source_.command;
    replace_all(cmd, "{image}", shell_quote(image.image_path.string()));
    replace_all(cmd, "{bbox}", std::to_string(bbox.x0) + "," + std::to_string(bbox.y0) + "," +
                                   std::to_string(bbox.x1) + "," + std::to_string(bbox.y1));
    replace_all(cmd, "{out}", shell_quote(out.string()));

    slots_->acquire();
    std::string diagnostics;
    int status = -1;
    {
        FILE* pipe = ::popen(("(" + cmd + ") 2>&1").c_str(), "r");
        if (pipe) {
            std::array<char, 512> buf{};
            while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) diagnostics += buf.data();
            status = ::pclose(pipe);
        }
    }
    slots_->release();

    const bool ok = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    if (!ok) {
        std::error_code ec;
        fs::remove(out, ec);
        const int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        throw DataError("extractor failed for " + image.id + " (exit " + std::to_string(code) + "): " + diagnostics);
    }
    PatchFeatureTensor t;
    try {
        t = read_features(out, image.id);
    } catch (...) {
        std::error_code ec;
        fs::remove(out, ec);
        throw;
    }
    std::error_code ec;
    fs::remove(out, ec);
    return t;
}

}  // namespace endoseg
