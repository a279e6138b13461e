#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>

#include "json.hpp"

#include "unifield/model.hpp"
#include "unifield/optim.hpp"

// Checkpoint container:
//   8 bytes  "UFCKPT\0\0"
//   u32      format version (1)
//   u64      header length H
//   H bytes  JSON header: config, registry, dtype, step, parameter names/shapes,
//            optimizer settings, free-form "extra"
//   raw parameter buffers in header order (dtype, little endian)
//   if the header says so: Adam first then second moments per parameter (f64)

namespace unifield {

inline constexpr char kCheckpointMagic[8] = {'U', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class Scalar>
constexpr const char* dtype_name() {
    static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
    return std::is_same_v<Scalar, float> ? "float32" : "float64";
}

template <class Scalar>
struct Checkpoint {
    std::unique_ptr<UniFieldModel<Scalar>> model;
    std::uint64_t step = 0;
    std::optional<AdamOptions> adam;
    std::uint64_t adam_steps = 0;
    std::vector<Eigen::VectorXd> adam_m, adam_v;
    nlohmann::json extra;
};

namespace detail {

template <class T>
void write_raw(std::ostream& out, const T* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

template <class T>
void read_raw(std::istream& in, T* data, std::size_t count, const std::string& what) {
    const auto offset = static_cast<std::size_t>(in.tellg());
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) throw ParseError("checkpoint truncated while reading " + what + " at offset " + std::to_string(offset), offset);
}

/// Parsed header plus the byte offset where the payload starts.
inline std::pair<nlohmann::json, std::size_t> read_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ParseError("'" + path.string() + "' is not a checkpoint", 0);
    std::uint32_t version = 0;
    detail::read_raw(in, &version, 1, "version");
    if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);
    std::uint64_t len = 0;
    detail::read_raw(in, &len, 1, "header length");
    if (len > (std::uint64_t{1} << 32)) throw ParseError("implausible checkpoint header length", 12);
    std::string header(static_cast<std::size_t>(len), '\0');
    detail::read_raw(in, header.data(), header.size(), "header");
    try {
        return {nlohmann::json::parse(header), 20 + header.size()};
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what(), 20 + e.byte);
    }
}

} // namespace detail

/// Reads only the JSON header (useful to dispatch on dtype before loading).
inline nlohmann::json read_checkpoint_header(const std::filesystem::path& path) { return detail::read_header(path).first; }

template <class Scalar>
void save_checkpoint(const std::filesystem::path& path, const UniFieldModel<Scalar>& model, std::uint64_t step,
                     const Adam<Scalar>* adam = nullptr, const nlohmann::json& extra = nlohmann::json::object()) {
    const auto params = model.parameters();
    nlohmann::json h;
    h["dtype"] = dtype_name<Scalar>();
    h["step"] = step;
    h["config"] = model.config();
    h["registry"] = registry_to_json(model.registry());
    auto plist = nlohmann::json::array();
    for (const auto& [name, t] : params) plist.push_back({{"name", name}, {"shape", t.shape()}});
    h["parameters"] = std::move(plist);
    if (adam) {
        const auto& o = adam->options();
        h["optimizer"] = {{"type", "adam"},       {"lr", o.lr},   {"beta1", o.beta1}, {"beta2", o.beta2},
                          {"eps", o.eps},         {"weight_decay", o.weight_decay}, {"steps", adam->steps()}};
    }
    h["extra"] = extra;
    const std::string header = h.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
        out.write(kCheckpointMagic, 8);
        detail::write_raw(out, &kCheckpointVersion, 1);
        const std::uint64_t len = header.size();
        detail::write_raw(out, &len, 1);
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (const auto& [name, t] : params) detail::write_raw(out, t.value().data(), static_cast<std::size_t>(t.size()));
        if (adam) {
            for (const auto& m : adam->first_moments()) detail::write_raw(out, m.data(), static_cast<std::size_t>(m.size()));
            for (const auto& v : adam->second_moments()) detail::write_raw(out, v.data(), static_cast<std::size_t>(v.size()));
        }
        if (!out) throw IoError("write failed for checkpoint '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

template <class Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
    const auto [h, payload] = detail::read_header(path);
    Checkpoint<Scalar> ck;
    try {
        if (h.at("dtype").get<std::string>() != dtype_name<Scalar>())
            throw ContractError("checkpoint holds " + h.at("dtype").get<std::string>() + " parameters, requested " + dtype_name<Scalar>());
        auto config = h.at("config").get<ModelConfig>();
        auto registry = registry_from_json(h.at("registry"));
        ck.model = std::make_unique<UniFieldModel<Scalar>>(std::move(config), std::move(registry));
        ck.step = h.at("step").get<std::uint64_t>();
        ck.extra = h.value("extra", nlohmann::json::object());
        if (h.contains("optimizer")) {
            const auto& o = h.at("optimizer");
            AdamOptions a;
            a.lr = o.at("lr");
            a.beta1 = o.at("beta1");
            a.beta2 = o.at("beta2");
            a.eps = o.at("eps");
            a.weight_decay = o.at("weight_decay");
            ck.adam = a;
            ck.adam_steps = o.at("steps");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what(), 20);
    }

    auto params = ck.model->parameters();
    const auto& plist = h.at("parameters");
    if (plist.size() != params.size())
        throw ContractError("checkpoint lists " + std::to_string(plist.size()) + " parameters, model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (plist[i].at("name").get<std::string>() != params[i].first || plist[i].at("shape").get<Shape>() != params[i].second.shape())
            throw ContractError("checkpoint parameter " + plist[i].at("name").get<std::string>() + " does not match model parameter " +
                                params[i].first);
    }

    std::ifstream in(path, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(payload));
    for (auto& [name, t] : params) detail::read_raw(in, t.mutable_value().data(), static_cast<std::size_t>(t.size()), name);
    if (ck.adam) {
        for (auto* moments : {&ck.adam_m, &ck.adam_v})
            for (const auto& [name, t] : params) {
                Eigen::VectorXd m(t.size());
                detail::read_raw(in, m.data(), static_cast<std::size_t>(m.size()), "optimizer state of " + name);
                moments->push_back(std::move(m));
            }
    }
    in.peek();
    if (!in.eof()) throw ParseError("trailing bytes after checkpoint payload", static_cast<std::size_t>(in.tellg()));
    return ck;
}

} // namespace unifield
