#include "unifield/metrics.hpp"

#include <cmath>

#include "unifield/errors.hpp"

namespace unifield {

Metrics compute_metrics(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (pred.size() != target.size())
        throw DimensionError("metrics: prediction length " + std::to_string(pred.size()) + " vs target length " +
                             std::to_string(target.size()));
    if (pred.size() < 1) throw ContractError("metrics: empty prediction");
    const double n = static_cast<double>(pred.size());
    double sq = 0, ab = 0, tsq = 0, tab = 0;
    for (Index i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        sq += e * e;
        ab += std::abs(e);
        tsq += target[i] * target[i];
        tab += std::abs(target[i]);
    }
    Metrics m;
    m.mse = sq / n;
    m.mae = ab / n;
    if (tsq > 0.0) {
        m.rel_l2 = 100.0 * std::sqrt(sq) / std::sqrt(tsq);
        m.rel_l1 = 100.0 * ab / tab;
    } else {
        m.rel_defined = false;
    }
    return m;
}

void MetricsAccumulator::add(DomainId domain, const Metrics& m) {
    for (Sums* s : {&overall_, &domains_[domain]}) {
        s->mse += m.mse;
        s->mae += m.mae;
        ++s->n;
        if (m.rel_defined) {
            s->rel_l2 += m.rel_l2;
            s->rel_l1 += m.rel_l1;
            ++s->rel_n;
        }
    }
}

MetricsSummary MetricsAccumulator::finish(const Sums& s) {
    MetricsSummary out;
    out.samples = s.n;
    out.rel_samples = s.rel_n;
    if (s.n > 0) {
        out.mean.mse = s.mse / static_cast<double>(s.n);
        out.mean.mae = s.mae / static_cast<double>(s.n);
    }
    out.mean.rel_defined = s.rel_n > 0;
    if (s.rel_n > 0) {
        out.mean.rel_l2 = s.rel_l2 / static_cast<double>(s.rel_n);
        out.mean.rel_l1 = s.rel_l1 / static_cast<double>(s.rel_n);
    }
    return out;
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    r.overall = finish(overall_);
    for (const auto& [id, s] : domains_) r.per_domain[id] = finish(s);
    return r;
}

nlohmann::json to_json(const MetricsSummary& s) {
    nlohmann::json j{{"mse", s.mean.mse}, {"mae", s.mean.mae}, {"samples", s.samples}};
    if (s.mean.rel_defined) {
        j["rel_l2_percent"] = s.mean.rel_l2;
        j["rel_l1_percent"] = s.mean.rel_l1;
    } else {
        j["rel_l2_percent"] = nullptr;
        j["rel_l1_percent"] = nullptr;
    }
    j["rel_undefined"] = !s.mean.rel_defined;
    return j;
}

nlohmann::json to_json(const MetricsReport& r, const std::map<DomainId, std::string>& names) {
    nlohmann::json j;
    j["overall"] = to_json(r.overall);
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [id, s] : r.per_domain) {
        auto it = names.find(id);
        per[it != names.end() ? it->second : std::to_string(id)] = to_json(s);
    }
    j["per_domain"] = std::move(per);
    return j;
}

} // namespace unifield
