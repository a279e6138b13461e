#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "unifield/nn.hpp"

namespace unifield {

using DomainId = int;

/// Flow-conditioned adapter for one domain at one network level.
///   (sigma_raw, mu) = MLP(C),  sigma = 1 + sigma_raw
///   y = P_out((P_in(x) + mu) * sigma),  out = x + y
/// The condition MLP's last layer and P_out's linear map start at zero, so a fresh
/// adapter is the identity and ignores the flow vector.
template <class Scalar>
struct FlowAdapter {
    Index flow_dim = 0;
    Mlp2<Scalar> condition;  // D_f -> hidden -> 2D
    Projection<Scalar> in;   // D -> D
    Projection<Scalar> out;  // D -> D

    FlowAdapter() = default;
    FlowAdapter(Index width, Index flow_dim_, Initializer& init)
        : flow_dim(flow_dim_),
          condition(flow_dim_, condition_hidden(flow_dim_), 2 * width, init, InitMode::Zero),
          in(width, width, init),
          out(width, width, init, InitMode::Zero) {}

    static Index condition_hidden(Index flow_dim) { return std::max<Index>(4 * flow_dim, 16); }

    Index width() const { return in.linear.in_features(); }

    void collect(ParameterList<Scalar>& params, const std::string& prefix) const {
        condition.collect(params, prefix + ".condition");
        in.collect(params, prefix + ".in");
        out.collect(params, prefix + ".out");
    }
};

/// Apply one adapter. `flow` is the (standardized) flow vector of shape [D_f].
template <class Scalar>
Tensor<Scalar> fca_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& flow, const FlowAdapter<Scalar>& adapter) {
    if (flow.rank() != 1 || flow.dim(0) != adapter.flow_dim) {
        throw DomainSchemaError("flow vector of shape " + to_string(flow.shape()) + " does not match the adapter's " +
                                std::to_string(adapter.flow_dim) + " flow conditions");
    }
    const Index d = adapter.width();
    if (x.rank() != 2 || x.dim(1) != d) {
        throw DimensionError("fca_forward: features " + to_string(x.shape()) + " vs adapter width " + std::to_string(d));
    }
    const auto cond = adapter.condition(reshape(flow, {1, adapter.flow_dim}));  // [1, 2D]
    const auto sigma = add_scalar(reshape(slice(cond, 1, 0, d), {d}), Scalar(1));
    const auto mu = reshape(slice(cond, 1, d, 2 * d), {d});
    const auto y = adapter.out(mul_channels(add_channels(adapter.in(x), mu), sigma));
    return add(x, y);
}

/// Parallel adapters of one network level, keyed by domain id.
template <class Scalar>
struct AdapterBank {
    std::map<DomainId, FlowAdapter<Scalar>> adapters;

    const FlowAdapter<Scalar>& at(DomainId domain) const {
        auto it = adapters.find(domain);
        if (it == adapters.end()) throw RoutingError("no flow adapter registered for domain " + std::to_string(domain));
        return it->second;
    }

    std::size_t size() const { return adapters.size(); }

    void collect(ParameterList<Scalar>& params, const std::string& prefix) const {
        for (const auto& [id, adapter] : adapters) adapter.collect(params, prefix + ".domain" + std::to_string(id));
    }
};

/// One-hot routing: sample b is transformed only by the adapter of domain_ids[b]. Each
/// sample is evaluated independently, so results do not depend on batch composition.
template <class Scalar>
std::vector<Tensor<Scalar>> routed_fca(const std::vector<Tensor<Scalar>>& x_batch, const std::vector<Tensor<Scalar>>& flows,
                                       const std::vector<DomainId>& domain_ids, const AdapterBank<Scalar>& bank) {
    if (x_batch.size() != flows.size() || x_batch.size() != domain_ids.size()) {
        throw DimensionError("routed_fca: batch lists differ in length");
    }
    std::vector<Tensor<Scalar>> out;
    out.reserve(x_batch.size());
    for (std::size_t b = 0; b < x_batch.size(); ++b) out.push_back(fca_forward(x_batch[b], flows[b], bank.at(domain_ids[b])));
    return out;
}

} // namespace unifield
