#include "unifield/run_config.hpp"

#include <fstream>
#include <sstream>

#include "unifield/errors.hpp"

namespace unifield {

namespace {

nlohmann::json train_json(const TrainOptions& t) {
    return {{"steps", t.steps},
            {"stop_at", t.stop_at},
            {"batch_size", t.batch_size},
            {"points_per_sample", t.points_per_sample},
            {"lr", t.adam.lr},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"eps", t.adam.eps},
            {"weight_decay", t.adam.weight_decay},
            {"final_lr_fraction", t.final_lr_fraction},
            {"clip_norm", t.clip_norm},
            {"eval_every", t.eval_every},
            {"eval_chunk", t.eval_chunk},
            {"log_every", t.log_every}};
}

void check_keys(const nlohmann::json& j, const nlohmann::json& schema, const std::string& where) {
    if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (const auto& [key, v] : j.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!schema.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (schema[key].is_object() && key != "model") check_keys(v, schema[key], path);
    }
}

} // namespace

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json model = c.model;
    model.erase("seed");
    return {{"model", model},
            {"data", {{"manifests", c.data.manifests}, {"domains", c.data.domains}, {"balance_domains", c.data.balance_domains}}},
            {"train", train_json(c.train)},
            {"seed", c.seed},
            {"out_dir", c.out_dir}};
}

nlohmann::json default_run_config_json() { return to_json(RunConfig{}); }

RunConfig run_config_from_json(const nlohmann::json& j) {
    const auto schema = default_run_config_json();
    check_keys(j, schema, "");
    if (j.contains("model") && j["model"].contains("seed")) throw ConfigError("set the top-level 'seed' instead of 'model.seed'");
    auto merged = schema;
    merged.merge_patch(j);
    RunConfig c;
    try {
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.out_dir = merged.at("out_dir").get<std::string>();
        // only the user's model keys: a preset must not be overridden by default widths
        c.model = j.value("model", nlohmann::json::object()).get<ModelConfig>();
        c.model.seed = c.seed;
        const auto& d = merged.at("data");
        c.data.manifests = d.at("manifests").get<std::vector<std::string>>();
        c.data.domains = d.at("domains").get<std::vector<std::string>>();
        c.data.balance_domains = d.at("balance_domains").get<bool>();
        const auto& t = merged.at("train");
        c.train.steps = t.at("steps").get<std::uint64_t>();
        c.train.stop_at = t.at("stop_at").get<std::uint64_t>();
        c.train.batch_size = t.at("batch_size").get<std::size_t>();
        c.train.points_per_sample = t.at("points_per_sample").get<Index>();
        c.train.adam.lr = t.at("lr").get<double>();
        c.train.adam.beta1 = t.at("beta1").get<double>();
        c.train.adam.beta2 = t.at("beta2").get<double>();
        c.train.adam.eps = t.at("eps").get<double>();
        c.train.adam.weight_decay = t.at("weight_decay").get<double>();
        c.train.final_lr_fraction = t.at("final_lr_fraction").get<double>();
        c.train.clip_norm = t.at("clip_norm").get<double>();
        c.train.eval_every = t.at("eval_every").get<std::uint64_t>();
        c.train.eval_chunk = t.at("eval_chunk").get<Index>();
        c.train.log_every = t.at("log_every").get<std::uint64_t>();
        c.train.seed = c.seed;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    if (c.train.batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (c.train.points_per_sample < 1) throw ConfigError("train.points_per_sample must be positive");
    if (!(c.train.adam.lr > 0)) throw ConfigError("train.lr must be positive");
    if (!(c.train.adam.beta1 >= 0 && c.train.adam.beta1 < 1 && c.train.adam.beta2 >= 0 && c.train.adam.beta2 < 1))
        throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
    if (!(c.train.final_lr_fraction >= 0 && c.train.final_lr_fraction <= 1)) throw ConfigError("train.final_lr_fraction must lie in [0, 1]");
    if (c.train.eval_chunk < 0) throw ConfigError("train.eval_chunk must be non-negative");
    return c;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;
    }
    auto schema = default_run_config_json();
    const nlohmann::json* s = &schema;
    nlohmann::json* node = &j;
    std::stringstream ss(key);
    std::vector<std::string> parts;
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        const bool model_key = i == 1 && parts[0] == "model";
        if (!model_key && (!s->is_object() || !s->contains(p))) throw ConfigError("unknown config key '" + key + "'");
        if (!node->is_object()) *node = nlohmann::json::object();
        if (i + 1 == parts.size()) {
            (*node)[p] = value;
        } else {
            node = &(*node)[p];
            s = &(*s)[p];
        }
    }
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
}

} // namespace unifield
