#include "endoseg/feature_io.hpp"

#include "endoseg/detail/little_endian.hpp"
#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"

#include <cmath>
#include <limits>

namespace endoseg {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'T', '1'};

}  // namespace

std::vector<std::uint8_t> encode_features(const PatchFeatureTensor& tensor) {
    if (tensor.data.size() != tensor.expected_size()) {
        throw DataError("feature tensor " + tensor.image_id + ": payload size does not match its shape");
    }
    if (tensor.n_blocks > std::numeric_limits<std::uint16_t>::max()) {
        throw DataError("feature tensor " + tensor.image_id + ": too many blocks for PFT1");
    }
    detail::LeWriter w;
    w.buffer().reserve(kPftHeaderSize + tensor.data.size() * 4);
    w.bytes(kMagic, 4);
    w.uint<std::uint16_t>(kPftVersion);
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(tensor.n_blocks));
    w.uint<std::uint32_t>(tensor.grid_h);
    w.uint<std::uint32_t>(tensor.grid_w);
    w.uint<std::uint32_t>(tensor.dim);
    for (float v : tensor.data) w.f32(v);
    return std::move(w.buffer());
}

PatchFeatureTensor decode_features(std::span<const std::uint8_t> bytes, std::string image_id) {
    const std::string what = "feature file" + (image_id.empty() ? std::string{} : " for " + image_id);
    detail::LeReader r(bytes, what);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(what + ": bad magic (expected PFT1)");
    const auto version = r.uint<std::uint16_t>();
    if (version != kPftVersion) throw DataError(what + ": unsupported version " + std::to_string(version));

    PatchFeatureTensor t;
    t.image_id = std::move(image_id);
    t.n_blocks = r.uint<std::uint16_t>();
    t.grid_h = r.uint<std::uint32_t>();
    t.grid_w = r.uint<std::uint32_t>();
    t.dim = r.uint<std::uint32_t>();
    if (t.n_blocks == 0 || t.grid_h == 0 || t.grid_w == 0 || t.dim == 0) {
        throw DataError(what + ": zero extent in header");
    }
    const std::uint64_t count = std::uint64_t{t.n_blocks} * t.grid_h * t.grid_w * t.dim;
    if (count * 4 != r.remaining()) {
        if (count * 4 > r.remaining()) {
            throw DataError(what + ": truncated payload (expected " + std::to_string(count * 4) + " bytes, found " +
                            std::to_string(r.remaining()) + ")");
        }
        throw DataError(what + ": trailing bytes after payload");
    }
    t.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float v = r.f32();
        if (!std::isfinite(v)) throw DataError(what + ": non-finite value at element " + std::to_string(i));
        t.data[i] = v;
    }
    return t;
}

PatchFeatureTensor read_features(const fs::path& path, std::string image_id) {
    if (!fs::exists(path)) {
        throw DataError("missing feature file " + path.string() +
                        (image_id.empty() ? std::string{} : " for image " + image_id));
    }
    const auto bytes = read_file_bytes(path);
    return decode_features(bytes, std::move(image_id));
}

void write_features(const fs::path& path, const PatchFeatureTensor& tensor) {
    write_file_atomic(path, encode_features(tensor));
}

}  // namespace endoseg
