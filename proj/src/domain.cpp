#include "unifield/domain.hpp"

#include <algorithm>
#include <cmath>

#include "unifield/errors.hpp"

namespace unifield {

double standardize_pressure(double p_raw, double mean, double std) {
    if (!(std > 0.0)) throw ContractError("pressure standard deviation must be positive, got " + std::to_string(std));
    return (p_raw - mean) / std;
}

double destandardize_pressure(double p_standardized, double mean, double std) {
    if (!(std > 0.0)) throw ContractError("pressure standard deviation must be positive, got " + std::to_string(std));
    return p_standardized * std + mean;
}

namespace {

void check_spec(const DomainSpec& s) {
    const std::string who = "domain '" + s.name + "' (id " + std::to_string(s.id) + ")";
    if (s.flow_dim < 1) throw RegistryError(who + ": flow_dim must be at least 1");
    const auto fd = static_cast<std::size_t>(s.flow_dim);
    if (!s.condition_names.empty() && s.condition_names.size() != fd)
        throw RegistryError(who + ": " + std::to_string(s.condition_names.size()) + " condition names for flow_dim " + std::to_string(fd));
    if (!s.condition_units.empty() && s.condition_units.size() != fd)
        throw RegistryError(who + ": condition units do not match flow_dim");
    if (s.flow_mean.size() != s.flow_std.size() || (!s.flow_mean.empty() && s.flow_mean.size() != fd))
        throw RegistryError(who + ": flow standardization constants do not match flow_dim");
    for (double v : s.flow_std)
        if (!(v > 0.0)) throw RegistryError(who + ": flow standard deviations must be positive");
    if (s.pressure_mode == PressureMode::Affine && !(s.pressure_std > 0.0))
        throw RegistryError(who + ": pressure_std must be positive");
}

} // namespace

DomainRegistry::DomainRegistry(std::vector<DomainSpec> specs) {
    for (const auto& s : specs) merge(s);
    validate();
}

void DomainRegistry::merge(const DomainSpec& spec) {
    check_spec(spec);
    auto it = std::lower_bound(specs_.begin(), specs_.end(), spec.id, [](const DomainSpec& s, DomainId id) { return s.id < id; });
    if (it != specs_.end() && it->id == spec.id) {
        if (it->name != spec.name || it->flow_dim != spec.flow_dim)
            throw RegistryError("domain id " + std::to_string(spec.id) + " registered twice with different schemas ('" + it->name +
                                "' vs '" + spec.name + "')");
        return;
    }
    for (const auto& s : specs_)
        if (s.name == spec.name) throw RegistryError("domain name '" + spec.name + "' registered under two ids");
    specs_.insert(it, spec);
}

void DomainRegistry::validate() const {
    if (specs_.empty()) throw RegistryError("domain registry is empty");
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        check_spec(specs_[i]);
        if (specs_[i].id != static_cast<DomainId>(i + 1))
            throw RegistryError("domain ids must be dense 1.." + std::to_string(specs_.size()) + ", found id " + std::to_string(specs_[i].id));
    }
}

const DomainSpec& DomainRegistry::at(DomainId id) const {
    for (const auto& s : specs_)
        if (s.id == id) return s;
    throw RegistryError("domain id " + std::to_string(id) + " is not registered");
}

DomainSpec& DomainRegistry::mutable_at(DomainId id) {
    return const_cast<DomainSpec&>(static_cast<const DomainRegistry&>(*this).at(id));
}

const DomainSpec& DomainRegistry::by_name(const std::string& name) const {
    for (const auto& s : specs_)
        if (s.name == name) return s;
    throw RegistryError("domain '" + name + "' is not registered");
}

bool DomainRegistry::contains(DomainId id) const {
    return std::any_of(specs_.begin(), specs_.end(), [id](const DomainSpec& s) { return s.id == id; });
}

void DomainRegistry::check_flow(DomainId id, const std::vector<double>& flow) const {
    const auto& s = at(id);
    if (static_cast<Index>(flow.size()) != s.flow_dim)
        throw DomainSchemaError("domain '" + s.name + "' expects " + std::to_string(s.flow_dim) + " flow conditions, got " +
                                std::to_string(flow.size()));
    for (double v : flow)
        if (!std::isfinite(v)) throw DomainSchemaError("non-finite flow condition for domain '" + s.name + "'");
}

std::vector<double> DomainRegistry::standardize_flow(DomainId id, const std::vector<double>& raw) const {
    check_flow(id, raw);
    const auto& s = at(id);
    if (s.flow_mean.empty()) return raw;
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - s.flow_mean[i]) / s.flow_std[i];
    return out;
}

double DomainRegistry::pressure_to_target(DomainId id, double raw) const {
    const auto& s = at(id);
    if (s.pressure_mode == PressureMode::Coefficient) return raw;
    return standardize_pressure(raw, s.pressure_mean, s.pressure_std);
}

double DomainRegistry::target_to_pressure(DomainId id, double target) const {
    const auto& s = at(id);
    if (s.pressure_mode == PressureMode::Coefficient) return target;
    return destandardize_pressure(target, s.pressure_mean, s.pressure_std);
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const DomainSpec& s) {
    j = nlohmann::json{{"id", s.id},
                       {"name", s.name},
                       {"flow_dim", s.flow_dim},
                       {"condition_names", s.condition_names},
                       {"condition_units", s.condition_units},
                       {"flow_mean", s.flow_mean},
                       {"flow_std", s.flow_std},
                       {"pressure_mode", s.pressure_mode == PressureMode::Affine ? "affine" : "coefficient"},
                       {"pressure_mean", s.pressure_mean},
                       {"pressure_std", s.pressure_std}};
}

void from_json(const nlohmann::json& j, DomainSpec& s) {
    static const std::vector<std::string> known{"id", "name", "flow_dim", "condition_names", "condition_units", "flow_mean",
                                                "flow_std", "pressure_mode", "pressure_mean", "pressure_std"};
    if (!j.is_object()) throw RegistryError("domain entry must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw RegistryError("unknown domain key '" + key + "'");
    try {
        s = DomainSpec{};
        j.at("id").get_to(s.id);
        j.at("name").get_to(s.name);
        j.at("flow_dim").get_to(s.flow_dim);
        if (j.contains("condition_names")) j.at("condition_names").get_to(s.condition_names);
        if (j.contains("condition_units")) j.at("condition_units").get_to(s.condition_units);
        if (j.contains("flow_mean")) j.at("flow_mean").get_to(s.flow_mean);
        if (j.contains("flow_std")) j.at("flow_std").get_to(s.flow_std);
        if (j.contains("pressure_mode")) {
            const auto mode = j.at("pressure_mode").get<std::string>();
            if (mode == "affine") s.pressure_mode = PressureMode::Affine;
            else if (mode == "coefficient") s.pressure_mode = PressureMode::Coefficient;
            else throw RegistryError("unknown pressure_mode '" + mode + "'");
        }
        if (j.contains("pressure_mean")) j.at("pressure_mean").get_to(s.pressure_mean);
        if (j.contains("pressure_std")) j.at("pressure_std").get_to(s.pressure_std);
    } catch (const nlohmann::json::exception& e) {
        throw RegistryError(std::string("malformed domain entry: ") + e.what());
    }
}

nlohmann::json registry_to_json(const DomainRegistry& registry) {
    auto arr = nlohmann::json::array();
    for (const auto& s : registry.specs()) arr.push_back(s);
    return arr;
}

DomainRegistry registry_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw RegistryError("domain registry must be a list");
    std::vector<DomainSpec> specs;
    for (const auto& e : j) specs.push_back(e.get<DomainSpec>());
    return DomainRegistry(std::move(specs));
}

DomainSpec synthetic_domain(const std::string& name) {
    DomainSpec s;
    s.name = name;
    if (name == "cylinder") {
        s.id = 1;
        s.flow_dim = 1;
        s.condition_names = {"U"};
        s.condition_units = {"m/s"};
    } else if (name == "sphere") {
        s.id = 2;
        s.flow_dim = 2;
        s.condition_names = {"U", "alpha"};
        s.condition_units = {"m/s", "rad"};
    } else {
        throw RegistryError("unknown synthetic domain '" + name + "' (expected cylinder or sphere)");
    }
    return s;
}

} // namespace unifield
