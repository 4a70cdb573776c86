#pragma once

#include "endoseg/types.hpp"

#include "json.hpp"

namespace endoseg {

nlohmann::json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys and out-of-range values raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ProbeConfig& cfg);

std::string to_string(BlockFusion fusion);
std::string to_string(EmbedMode mode);

}  // namespace endoseg
