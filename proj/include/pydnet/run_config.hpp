#pragma once

#include <map>
#include <string>
#include <vector>

#include "pydnet/train.hpp"

// Flat key=value run configuration shared by the command-line tool and tests.
// No nesting; '#' starts a comment; blank lines ignored; flags win over file
// values; unknown keys are errors.

namespace pydnet {

struct RunConfig {
    TrainConfig train;
    std::string data_dir;  // empty -> PYDNET_DATA_DIR environment fallback
    std::string out_dir = "runs/out";
    std::string resume;  // checkpoint path to continue from
};

// Parses a config file into ordered key/value pairs. Throws on unreadable
// files or lines that are not `key=value`.
std::vector<std::pair<std::string, std::string>> parse_key_value_file(const std::string& path);

// Applies one key. Throws std::invalid_argument naming the key when it is
// unknown or its value does not parse.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical listing of every accepted key, one `key=value` line each, in
// fixed order — byte-stable for identical configs.
std::string render_config(const RunConfig& cfg);

// Documented key set (for usage text).
const std::vector<std::string>& config_keys();

}  // namespace pydnet
