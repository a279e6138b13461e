#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "unifield/aggregation.hpp"

namespace unifield {

/// Architecture hyperparameters. Widths double per level: D_l = base_channels * 2^l.
struct ModelConfig {
    Index stages = 4;
    Index base_channels = 32;
    Index k = 16;
    double downsample_ratio = 0.25;
    Index ffn_ratio = 4;
    std::string scale_preset;  // empty, or a preset name applied before explicit keys
    std::uint64_t seed = 0;
    bool block_norm = false;
    Index aggregation_iterations = 1;
    SlotNeighbors slot_neighbors = SlotNeighbors::Coordinates;
    FpsSeed fps_seed = FpsSeed::Centroid;
    Index interpolation_k = 3;
    std::string dtype = "float32";  // "float32" | "float64"

    Index width(Index level) const { return base_channels << level; }
    /// Throws ConfigError on out-of-range fields.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Named (stages, base_channels) pairs: tiny (2, 8), small (3, 16), base (4, 32), large (4, 64).
void apply_preset(ModelConfig& config, const std::string& preset);

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Unknown keys are rejected with ConfigError. A "scale_preset" is applied first, so
/// explicit "stages"/"base_channels" in the same object take precedence.
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Point counts per encoder level: N_0 = N, N_{l+1} = ceil(N_l * ratio).
std::vector<Index> level_sizes(Index n, const ModelConfig& config);

} // namespace unifield
