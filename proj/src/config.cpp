#include "unifield/config.hpp"

#include <cmath>

#include "unifield/errors.hpp"

namespace unifield {

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (stages < 1 || stages > 10) fail("stages must lie in [1, 10]");
    if (base_channels < 1) fail("base_channels must be positive");
    if (k < 1) fail("k must be positive");
    if (!(downsample_ratio > 0.0 && downsample_ratio <= 1.0)) fail("downsample_ratio must lie in (0, 1]");
    if (ffn_ratio < 1) fail("ffn_ratio must be positive");
    if (aggregation_iterations < 1) fail("aggregation_iterations must be positive");
    if (interpolation_k < 1) fail("interpolation_k must be positive");
    if (dtype != "float32" && dtype != "float64") fail("dtype must be float32 or float64");
}

void apply_preset(ModelConfig& c, const std::string& preset) {
    if (preset == "tiny") c.stages = 2, c.base_channels = 8;
    else if (preset == "small") c.stages = 3, c.base_channels = 16;
    else if (preset == "base") c.stages = 4, c.base_channels = 32;
    else if (preset == "large") c.stages = 4, c.base_channels = 64;
    else throw ConfigError("unknown scale_preset '" + preset + "' (tiny, small, base, large)");
    c.scale_preset = preset;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"stages", c.stages},
                       {"base_channels", c.base_channels},
                       {"k", c.k},
                       {"downsample_ratio", c.downsample_ratio},
                       {"ffn_ratio", c.ffn_ratio},
                       {"scale_preset", c.scale_preset},
                       {"seed", c.seed},
                       {"block_norm", c.block_norm},
                       {"aggregation_iterations", c.aggregation_iterations},
                       {"slot_neighbors", c.slot_neighbors == SlotNeighbors::Features ? "features" : "coordinates"},
                       {"fps_seed", c.fps_seed == FpsSeed::Index0 ? "index0" : "centroid"},
                       {"interpolation_k", c.interpolation_k},
                       {"dtype", c.dtype}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (!j.is_object()) throw ConfigError("model config must be an object");
    c = ModelConfig{};
    try {
        if (j.contains("scale_preset")) {
            const auto preset = j.at("scale_preset").get<std::string>();
            if (!preset.empty()) apply_preset(c, preset);
        }
        for (const auto& [key, v] : j.items()) {
            if (key == "scale_preset") continue;
            else if (key == "stages") v.get_to(c.stages);
            else if (key == "base_channels") v.get_to(c.base_channels);
            else if (key == "k") v.get_to(c.k);
            else if (key == "downsample_ratio") v.get_to(c.downsample_ratio);
            else if (key == "ffn_ratio") v.get_to(c.ffn_ratio);
            else if (key == "seed") v.get_to(c.seed);
            else if (key == "block_norm") v.get_to(c.block_norm);
            else if (key == "aggregation_iterations") v.get_to(c.aggregation_iterations);
            else if (key == "interpolation_k") v.get_to(c.interpolation_k);
            else if (key == "dtype") v.get_to(c.dtype);
            else if (key == "slot_neighbors") {
                const auto s = v.get<std::string>();
                if (s == "coordinates") c.slot_neighbors = SlotNeighbors::Coordinates;
                else if (s == "features") c.slot_neighbors = SlotNeighbors::Features;
                else throw ConfigError("slot_neighbors must be coordinates or features, got '" + s + "'");
            } else if (key == "fps_seed") {
                const auto s = v.get<std::string>();
                if (s == "centroid") c.fps_seed = FpsSeed::Centroid;
                else if (s == "index0") c.fps_seed = FpsSeed::Index0;
                else throw ConfigError("fps_seed must be centroid or index0, got '" + s + "'");
            } else {
                throw ConfigError("unknown model config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
}

std::vector<Index> level_sizes(Index n, const ModelConfig& config) {
    std::vector<Index> sizes{n};
    for (Index l = 0; l < config.stages; ++l) {
        const double next = std::ceil(static_cast<double>(sizes.back()) * config.downsample_ratio);
        sizes.push_back(std::max<Index>(1, static_cast<Index>(next)));
    }
    return sizes;
}

} // namespace unifield
