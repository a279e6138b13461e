#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "unifield/config.hpp"
#include "unifield/training.hpp"

namespace unifield {

struct DataConfig {
    std::vector<std::string> manifests;
    std::vector<std::string> domains;  // domains to train and evaluate on; empty = every manifest domain
    bool balance_domains = false;
};

/// Everything a training run needs. `seed` drives both parameter initialization and
/// batch order, so the model block carries no seed of its own.
struct RunConfig {
    ModelConfig model;
    DataConfig data;
    TrainOptions train;
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
};

/// The default configuration as JSON; also the schema used to reject unknown keys.
nlohmann::json default_run_config_json();

/// Parses a (possibly partial) configuration on top of the defaults. Throws ConfigError
/// for unknown keys, wrong value types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Applies "a.b.c=value". The value is parsed as JSON when possible and kept as a
/// string otherwise. The key path must exist in the default configuration.
void apply_override(nlohmann::json& j, const std::string& assignment);

nlohmann::json load_json_file(const std::filesystem::path& path);

} // namespace unifield
