#include "endoseg/manifest.hpp"

#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"

#include <set>

namespace endoseg {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& msg) {
    throw DataError("manifest: " + where + ": " + msg);
}

fs::path resolve(const fs::path& base, const std::string& rel) {
    const fs::path p(rel);
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string relativize(const fs::path& p, const fs::path& base) {
    if (base.empty()) return p.generic_string();
    return p.lexically_relative(base).generic_string();
}

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) schema_error(where, std::string("missing required field '") + key + "'");
    return obj.at(key);
}

}  // namespace

DatasetManifest parse_manifest(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) schema_error("<root>", "expected an object");
    static const std::set<std::string> root_keys{"dataset_id", "classes", "images", "folds"};
    for (const auto& [key, _] : doc.items()) {
        if (!root_keys.contains(key)) schema_error("<root>", "unknown field '" + key + "'");
    }

    DatasetManifest m;
    const auto& id = field(doc, "dataset_id", "<root>");
    if (!id.is_string()) schema_error("dataset_id", "expected a string");
    m.dataset_id = id.get<std::string>();

    if (doc.contains("classes")) {
        const auto& classes = doc.at("classes");
        if (!classes.is_array()) schema_error("classes", "expected an array of strings");
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (!classes[i].is_string()) schema_error("classes[" + std::to_string(i) + "]", "expected a string");
            m.classes.push_back(classes[i].get<std::string>());
        }
    }

    const auto& images = field(doc, "images", "<root>");
    if (!images.is_array()) schema_error("images", "expected an array");
    static const std::set<std::string> image_keys{"id", "image", "label", "mces_label", "gt_mask", "field_mask"};
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto where = "images[" + std::to_string(i) + "]";
        const auto& e = images[i];
        if (!e.is_object()) schema_error(where, "expected an object");
        for (const auto& [key, _] : e.items()) {
            if (!image_keys.contains(key)) schema_error(where, "unknown field '" + key + "'");
        }
        ImageEntry entry;
        const auto& eid = field(e, "id", where);
        if (!eid.is_string() || eid.get<std::string>().empty()) schema_error(where + ".id", "expected a non-empty string");
        entry.id = eid.get<std::string>();
        const auto& path = field(e, "image", where);
        if (!path.is_string()) schema_error(where + ".image", "expected a path string");
        entry.image_path = resolve(base_dir, path.get<std::string>());
        if (e.contains("label")) {
            if (!e.at("label").is_number_integer()) schema_error(where + ".label", "expected an integer");
            entry.label = e.at("label").get<int>();
        }
        if (e.contains("mces_label")) {
            if (!e.at("mces_label").is_number_integer()) schema_error(where + ".mces_label", "expected an integer");
            entry.mces_label = e.at("mces_label").get<int>();
        }
        if (e.contains("gt_mask")) {
            if (!e.at("gt_mask").is_string()) schema_error(where + ".gt_mask", "expected a path string");
            entry.gt_mask_path = resolve(base_dir, e.at("gt_mask").get<std::string>());
        }
        if (e.contains("field_mask")) {
            if (!e.at("field_mask").is_string()) schema_error(where + ".field_mask", "expected a path string");
            entry.field_mask_path = resolve(base_dir, e.at("field_mask").get<std::string>());
        }
        m.images.push_back(std::move(entry));
    }

    if (doc.contains("folds")) {
        const auto& folds = doc.at("folds");
        if (!folds.is_object()) schema_error("folds", "expected an object mapping fold id to image ids");
        for (const auto& [fold, ids] : folds.items()) {
            if (!ids.is_array()) schema_error("folds." + fold, "expected an array of image ids");
            auto& list = m.folds[fold];
            for (const auto& v : ids) {
                if (!v.is_string()) schema_error("folds." + fold, "expected string ids");
                list.push_back(v.get<std::string>());
            }
        }
    }

    validate_manifest(m);
    return m;
}

void validate_manifest(const DatasetManifest& m) {
    std::set<std::string> ids;
    for (const auto& img : m.images) {
        if (!ids.insert(img.id).second) throw DataError("manifest: duplicate image id '" + img.id + "'");
        if (img.label && (*img.label < 0 || *img.label >= static_cast<int>(m.classes.size()))) {
            throw DataError("manifest: image '" + img.id + "': label " + std::to_string(*img.label) +
                            " outside [0, " + std::to_string(m.classes.size()) + ")");
        }
        if (img.mces_label && (*img.mces_label < 1 || *img.mces_label > 3)) {
            throw DataError("manifest: image '" + img.id + "': mces_label must be 1, 2 or 3");
        }
    }

    std::set<std::string> in_folds;
    for (const auto& [fold, members] : m.folds) {
        for (const auto& id : members) {
            if (!ids.contains(id)) {
                throw DataError("manifest: fold '" + fold + "' references unknown image id '" + id + "'");
            }
            if (!in_folds.insert(id).second) {
                throw DataError("manifest: image '" + id + "' appears in more than one fold");
            }
        }
    }
    if (!m.folds.empty()) {
        for (const auto& img : m.images) {
            if (img.annotated() && !in_folds.contains(img.id)) {
                throw DataError("manifest: annotated image '" + img.id + "' is not assigned to any fold");
            }
            if (!img.annotated() && in_folds.contains(img.id)) {
                throw DataError("manifest: fold member '" + img.id + "' has neither a label nor a ground-truth mask");
            }
        }
    }
}

DatasetManifest load_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
    json doc;
    try {
        doc = json::parse(read_file_text(path));
    } catch (const json::parse_error& e) {
        throw DataError("manifest " + path.string() + ": parse error: " + e.what());
    }
    return parse_manifest(doc, fs::absolute(path).parent_path());
}

json manifest_to_json(const DatasetManifest& m, const fs::path& base_dir) {
    json doc;
    doc["dataset_id"] = m.dataset_id;
    doc["classes"] = m.classes;
    json images = json::array();
    for (const auto& img : m.images) {
        json e{{"id", img.id}, {"image", relativize(img.image_path, base_dir)}};
        if (img.label) e["label"] = *img.label;
        if (img.mces_label) e["mces_label"] = *img.mces_label;
        if (img.gt_mask_path) e["gt_mask"] = relativize(*img.gt_mask_path, base_dir);
        if (img.field_mask_path) e["field_mask"] = relativize(*img.field_mask_path, base_dir);
        images.push_back(std::move(e));
    }
    doc["images"] = std::move(images);
    json folds = json::object();
    for (const auto& [fold, ids] : m.folds) folds[fold] = ids;
    doc["folds"] = std::move(folds);
    return doc;
}

}  // namespace endoseg
