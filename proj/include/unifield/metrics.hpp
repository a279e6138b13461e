#pragma once

#include <map>

#include <Eigen/Core>

#include "json.hpp"

#include "unifield/adapters.hpp"

namespace unifield {

/// Error metrics of one prediction. Relative errors are percentages and are left
/// undefined (rel_defined = false) when the target norm is zero.
struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    double rel_l2 = 0.0;
    double rel_l1 = 0.0;
    bool rel_defined = true;
};

Metrics compute_metrics(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target);

/// Unweighted means of per-sample metrics. Relative metrics average only the samples
/// where they are defined.
struct MetricsSummary {
    Metrics mean;
    std::size_t samples = 0;
    std::size_t rel_samples = 0;
};

struct MetricsReport {
    MetricsSummary overall;
    std::map<DomainId, MetricsSummary> per_domain;
};

class MetricsAccumulator {
public:
    void add(DomainId domain, const Metrics& m);
    void add(DomainId domain, const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target) {
        add(domain, compute_metrics(pred, target));
    }
    MetricsReport report() const;

private:
    struct Sums {
        double mse = 0, mae = 0, rel_l2 = 0, rel_l1 = 0;
        std::size_t n = 0, rel_n = 0;
    };
    static MetricsSummary finish(const Sums& s);
    Sums overall_;
    std::map<DomainId, Sums> domains_;
};

nlohmann::json to_json(const MetricsSummary& s);
/// Domain keys are written as names when `names` maps them, otherwise as ids.
nlohmann::json to_json(const MetricsReport& r, const std::map<DomainId, std::string>& names = {});

} // namespace unifield
