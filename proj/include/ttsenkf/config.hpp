#pragma once

#include <string>
#include <vector>

#include "ttsenkf/bench.hpp"

namespace ttsenkf {

/// JSON scenario document with sections plant / filter / noise / run / ef.
/// Schema problems (unknown keys, missing required keys, wrong types) are
/// collected and thrown together as one ConfigError naming each key path.
/// Range invariants are left to validate().
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::string& path);

/// Canonical JSON echo of a config (stable key order, round-trips through parse_config).
std::string config_to_json(const ScenarioConfig& cfg);

/// Write via a temporary sibling file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

struct PresetInfo {
    std::string id;    // e.g. "turbine-v1"
    std::string file;  // shipped scenario file name
    std::string description;
};

const std::vector<PresetInfo>& shipped_presets();

}  // namespace ttsenkf
