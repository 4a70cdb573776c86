#include "endoseg/run_dir.hpp"

#include "endoseg/config.hpp"
#include "endoseg/detail/little_endian.hpp"
#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"
#include "endoseg/image_io.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/dataflow_exception.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <algorithm>

namespace endoseg {

namespace bai = boost::archive::iterators;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    using Enc = bai::base64_from_binary<bai::transform_width<const std::uint8_t*, 6, 8>>;
    std::string out(Enc(bytes.data()), Enc(bytes.data() + bytes.size()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw DataError("base64: length is not a multiple of 4");
    std::string body(text);
    std::size_t pad = 0;
    while (pad < 2 && pad < body.size() && body[body.size() - 1 - pad] == '=') {
        body[body.size() - 1 - pad] = 'A';
        ++pad;
    }
    using Dec = bai::transform_width<bai::binary_from_base64<std::string::const_iterator>, 8, 6>;
    const std::size_t n = body.size() / 4 * 3;
    std::vector<std::uint8_t> out;
    out.reserve(n);
    try {
        auto it = Dec(body.cbegin());
        for (std::size_t i = 0; i < n; ++i, ++it) out.push_back(static_cast<std::uint8_t>(*it));
    } catch (const bai::dataflow_exception&) {
        throw DataError("base64: invalid character");
    }
    out.resize(n - pad);
    return out;
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

namespace {

nlohmann::json parse_json_file(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

nlohmann::json box_to_json(const PixelBox& b) { return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}); }

PixelBox box_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw DataError("segment artifact: bbox must be [x0, y0, x1, y1]");
    return PixelBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

std::string encode_vector(const Eigen::VectorXd& v) {
    detail::LeWriter w;
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(static_cast<float>(v[i]));
    return base64_encode(w.buffer());
}

Eigen::VectorXd decode_vector(const std::string& text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % 4 != 0) throw DataError("segment artifact: vector payload is not a whole number of f32");
    detail::LeReader r(bytes, "segment vector");
    Eigen::VectorXd v(static_cast<Eigen::Index>(bytes.size() / 4));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f32();
    return v;
}

}  // namespace

Eigen::VectorXd round_to_f32(const Eigen::VectorXd& v) { return v.cast<float>().cast<double>(); }

namespace {

fs::path write_if_changed(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (fs::exists(path, ec)) {
        try {
            if (read_file_text(path) == text) return path;
        } catch (const std::exception&) {
        }
    }
    write_file_atomic(path, text);
    return path;
}

}  // namespace

fs::path write_config(const RunPaths& run, const RunConfig& cfg, const nlohmann::json& inputs) {
    nlohmann::json j = to_json(cfg);
    if (!inputs.is_null()) j["inputs"] = inputs;
    return write_if_changed(run.config(), dump_json(j));
}

fs::path write_stage_stamp(const RunPaths& run, const std::string& stage, const nlohmann::json& fields) {
    fs::create_directories(run.stamp(stage).parent_path());
    return write_if_changed(run.stamp(stage), dump_json(fields));
}

RunConfig read_config(const RunPaths& run) {
    if (!fs::exists(run.config())) throw ConfigError("missing " + run.config().string());
    return run_config_from_json(parse_json_file(run.config()));
}

nlohmann::json read_config_inputs(const RunPaths& run) {
    if (!fs::exists(run.config())) return nullptr;
    const auto j = parse_json_file(run.config());
    return j.contains("inputs") ? j.at("inputs") : nlohmann::json(nullptr);
}

nlohmann::json segment_artifact_to_json(const SegmentArtifact& a) {
    const SegmentMap& m = a.map;
    nlohmann::json j;
    j["image_id"] = m.image_id;
    j["grid_h"] = m.grid_h;
    j["grid_w"] = m.grid_w;
    j["patch_size"] = m.patch_size;
    j["n_segments"] = m.n_segments;
    j["assignment"] = m.assignment;
    j["eigenvalues"] = m.eigenvalues;
    j["area_cells"] = m.area_cells();
    auto boxes = nlohmann::json::array();
    for (const auto& b : m.bboxes) boxes.push_back(box_to_json(b));
    j["bboxes"] = std::move(boxes);
    if (a.embedded()) {
        auto segs = nlohmann::json::array();
        for (const auto& r : a.records) {
            nlohmann::json s;
            s["segment_id"] = r.segment_id;
            s["bbox"] = box_to_json(r.bbox);
            s["area_cells"] = r.area_cells;
            s["dim"] = r.vector.size();
            s["vector"] = encode_vector(r.vector);
            if (r.fold_id) s["fold"] = *r.fold_id;
            segs.push_back(std::move(s));
        }
        j["segments"] = std::move(segs);
    }
    return j;
}

SegmentArtifact segment_artifact_from_json(const nlohmann::json& j) {
    SegmentArtifact a;
    try {
        SegmentMap& m = a.map;
        m.image_id = j.at("image_id").get<std::string>();
        m.grid_h = j.at("grid_h").get<int>();
        m.grid_w = j.at("grid_w").get<int>();
        m.patch_size = j.at("patch_size").get<int>();
        m.n_segments = j.at("n_segments").get<int>();
        m.assignment = j.at("assignment").get<std::vector<int>>();
        m.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
        for (const auto& b : j.at("bboxes")) m.bboxes.push_back(box_from_json(b));
        if (m.grid_h < 1 || m.grid_w < 1 || m.patch_size < 1 ||
            m.assignment.size() != static_cast<std::size_t>(m.grid_h) * m.grid_w ||
            m.bboxes.size() != static_cast<std::size_t>(m.n_segments)) {
            throw DataError("segment artifact for '" + m.image_id + "' is inconsistent");
        }
        for (int s : m.assignment) {
            if (s < 0 || s >= m.n_segments) throw DataError("segment artifact for '" + m.image_id + "': bad segment id");
        }
        if (j.contains("segments")) {
            const auto areas = m.area_cells();
            for (const auto& s : j.at("segments")) {
                SegmentRecord r;
                r.image_id = m.image_id;
                r.segment_id = s.at("segment_id").get<int>();
                r.bbox = box_from_json(s.at("bbox"));
                r.area_cells = s.at("area_cells").get<int>();
                r.vector = decode_vector(s.at("vector").get<std::string>());
                if (r.vector.size() != s.at("dim").get<Eigen::Index>()) {
                    throw DataError("segment artifact for '" + m.image_id + "': vector length does not match dim");
                }
                if (s.contains("fold")) r.fold_id = s.at("fold").get<std::string>();
                a.records.push_back(std::move(r));
            }
            if (a.records.size() != static_cast<std::size_t>(m.n_segments)) {
                throw DataError("segment artifact for '" + m.image_id + "': record count does not match n_segments");
            }
            for (std::size_t i = 0; i < a.records.size(); ++i) {
                if (a.records[i].segment_id != static_cast<int>(i) || a.records[i].area_cells != areas[i]) {
                    throw DataError("segment artifact for '" + m.image_id + "': records out of order");
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("segment artifact: ") + e.what());
    }
    return a;
}

fs::path write_segments(const RunPaths& run, const SegmentArtifact& artifact) {
    const fs::path path = run.segment(artifact.map.image_id);
    write_file_atomic(path, dump_json(segment_artifact_to_json(artifact)));
    return path;
}

SegmentArtifact read_segments(const RunPaths& run, const std::string& image_id) {
    const fs::path path = run.segment(image_id);
    if (!fs::exists(path)) throw DataError("missing segment artifact " + path.string());
    auto a = segment_artifact_from_json(parse_json_file(path));
    if (a.map.image_id != image_id) throw DataError(path.string() + ": image id mismatch");
    return a;
}

fs::path write_mask(const RunPaths& run, const SemanticMask& mask) {
    const fs::path path = run.mask(mask.image_id);
    write_file_atomic(path, encode_palette_png(mask));
    return path;
}

fs::path write_legend(const RunPaths& run, const std::map<int, std::string>& legend) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, name] : legend) {
        const auto c = palette_color(id);
        j[std::to_string(id)] = {{"name", name}, {"color", {c[0], c[1], c[2]}}};
    }
    write_file_atomic(run.legend(), dump_json(j));
    return run.legend();
}

SemanticMask read_mask(const RunPaths& run, const std::string& image_id) {
    const fs::path path = run.mask(image_id);
    if (!fs::exists(path)) throw DataError("missing mask " + path.string());
    SemanticMask mask = decode_palette_png(read_file_bytes(path));
    mask.image_id = image_id;
    if (fs::exists(run.legend())) {
        const auto j = parse_json_file(run.legend());
        for (const auto& [key, value] : j.items()) mask.legend[std::stoi(key)] = value.at("name").get<std::string>();
    }
    return mask;
}

fs::path write_concept_labels(const RunPaths& run, const ConceptModel& model) {
    write_file_atomic(run.concepts(), dump_json(concept_labels_to_json(model)));
    return run.concepts();
}

fs::path write_concept_model(const RunPaths& run, const ConceptModel& model) {
    write_file_atomic(run.model(), encode_concept_model(model));
    write_concept_labels(run, model);
    return run.model();
}

ConceptModel read_concept_model(const RunPaths& run) {
    if (!fs::exists(run.model())) throw DataError("missing concept model " + run.model().string());
    ConceptModel model = decode_concept_model(read_file_bytes(run.model()));
    if (fs::exists(run.concepts())) model = apply_labels(model, concept_labels_from_json(parse_json_file(run.concepts())));
    return model;
}

fs::path write_report(const RunPaths& run, const std::string& task, const nlohmann::json& report) {
    const fs::path path = run.report(task);
    write_file_atomic(path, dump_json(report));
    return path;
}

nlohmann::json read_report(const RunPaths& run, const std::string& task) {
    const fs::path path = run.report(task);
    if (!fs::exists(path)) throw DataError("missing report " + path.string());
    return parse_json_file(path);
}

}  // namespace endoseg
