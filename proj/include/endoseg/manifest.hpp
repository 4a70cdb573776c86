#pragma once

#include "endoseg/types.hpp"

#include "json.hpp"

namespace endoseg {

/// Loads and validates a dataset manifest (JSON, schema in docs/manifest.md).
///
/// Relative paths are resolved against the manifest's directory. Structural
/// invariants are checked here: unique ids, label ranges, MCES values, fold
/// references, and that the folds partition the annotated images (those with
/// a class label or a ground-truth mask). Mask/image dimension agreement is
/// checked when masks are loaded.
DatasetManifest load_manifest(const fs::path& path);

DatasetManifest parse_manifest(const nlohmann::json& doc, const fs::path& base_dir);
void validate_manifest(const DatasetManifest& manifest);

nlohmann::json manifest_to_json(const DatasetManifest& manifest, const fs::path& base_dir);

}  // namespace endoseg
