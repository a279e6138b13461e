#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "unifield/adapters.hpp"

namespace unifield {

/// How a domain's raw pressure column maps to the training/evaluation target.
enum class PressureMode {
    Coefficient,  // the column already holds a dimensionless pressure coefficient
    Affine,       // (p - mean) / std
};

/// Registry entry for one source domain and its flow-condition schema.
struct DomainSpec {
    DomainId id = 0;
    std::string name;
    Index flow_dim = 0;
    std::vector<std::string> condition_names;
    std::vector<std::string> condition_units;
    // Per-component flow standardization; identity until fitted on a training split.
    std::vector<double> flow_mean;
    std::vector<double> flow_std;
    PressureMode pressure_mode = PressureMode::Coefficient;
    double pressure_mean = 0.0;
    double pressure_std = 1.0;

    bool operator==(const DomainSpec&) const = default;
};

/// (p_raw - mean) / std. Throws ContractError when std <= 0.
double standardize_pressure(double p_raw, double mean, double std);
double destandardize_pressure(double p_standardized, double mean, double std);

/// Ordered set of domains with unique, dense ids 1..M.
class DomainRegistry {
public:
    DomainRegistry() = default;
    explicit DomainRegistry(std::vector<DomainSpec> specs);

    /// Adds a domain, or checks consistency when the id is already present.
    void merge(const DomainSpec& spec);
    /// Throws RegistryError unless ids are unique and form 1..M and every schema is well formed.
    void validate() const;

    const DomainSpec& at(DomainId id) const;
    const DomainSpec& by_name(const std::string& name) const;
    DomainSpec& mutable_at(DomainId id);
    bool contains(DomainId id) const;

    const std::vector<DomainSpec>& specs() const { return specs_; }
    std::size_t size() const { return specs_.size(); }
    bool empty() const { return specs_.empty(); }

    /// Applies the domain's flow standardization. Throws DomainSchemaError on length mismatch.
    std::vector<double> standardize_flow(DomainId id, const std::vector<double>& raw) const;
    void check_flow(DomainId id, const std::vector<double>& flow) const;

    /// Maps a raw pressure column value to the domain's target space and back.
    double pressure_to_target(DomainId id, double raw) const;
    double target_to_pressure(DomainId id, double target) const;

    bool operator==(const DomainRegistry&) const = default;

private:
    std::vector<DomainSpec> specs_;  // sorted by id
};

void to_json(nlohmann::json& j, const DomainSpec& spec);
void from_json(const nlohmann::json& j, DomainSpec& spec);
nlohmann::json registry_to_json(const DomainRegistry& registry);
DomainRegistry registry_from_json(const nlohmann::json& j);

/// Built-in analytic domains: "cylinder" (id 1, flow [U]) and "sphere" (id 2, flow [U, alpha]).
DomainSpec synthetic_domain(const std::string& name);

} // namespace unifield
