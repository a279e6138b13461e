#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "unifield/adapters.hpp"
#include "unifield/aggregation.hpp"
#include "unifield/config.hpp"
#include "unifield/datasets.hpp"
#include "unifield/domain.hpp"

namespace unifield {

template <class Scalar>
struct EncoderLevel {
    PointTransformerBlock<Scalar> block;
    AdapterBank<Scalar> fca;
    SemanticAggregationParams<Scalar> aggregation;
    Linear<Scalar> transition;  // D_l -> D_{l+1}
};

template <class Scalar>
struct DecoderLevel {
    Linear<Scalar> merge;  // concat(D_{l+1}, D_l) -> D_l
    PointTransformerBlock<Scalar> block;
    AdapterBank<Scalar> fca;
};

/// Shared point-transformer UNet with one flow-conditioned adapter per domain at every
/// block. Only the adapter banks are domain specific.
template <class Scalar>
class UniFieldModel {
public:
    UniFieldModel(ModelConfig config, DomainRegistry registry) : config_(std::move(config)), registry_(std::move(registry)) {
        config_.validate();
        registry_.validate();
        Initializer init(config_.seed);
        const Index d0 = config_.width(0);
        embed_ = Linear<Scalar>(3, d0, init);
        for (Index l = 0; l < config_.stages; ++l) {
            const Index d = config_.width(l);
            EncoderLevel<Scalar> e;
            e.block = PointTransformerBlock<Scalar>(d, config_.ffn_ratio, config_.block_norm, init);
            e.fca = make_bank(d, init);
            e.aggregation = SemanticAggregationParams<Scalar>(d, config_.ffn_ratio, init);
            e.transition = Linear<Scalar>(d, config_.width(l + 1), init);
            encoder_.push_back(std::move(e));
        }
        for (Index l = 0; l < config_.stages; ++l) {
            const Index d = config_.width(l);
            DecoderLevel<Scalar> dl;
            dl.merge = Linear<Scalar>(config_.width(l + 1) + d, d, init);
            dl.block = PointTransformerBlock<Scalar>(d, config_.ffn_ratio, config_.block_norm, init);
            dl.fca = make_bank(d, init);
            decoder_.push_back(std::move(dl));
        }
        head_ = Linear<Scalar>(d0, 1, init);
    }

    const ModelConfig& config() const { return config_; }
    const DomainRegistry& registry() const { return registry_; }
    const std::vector<EncoderLevel<Scalar>>& encoder() const { return encoder_; }
    const std::vector<DecoderLevel<Scalar>>& decoder() const { return decoder_; }

    /// Per-point predictions [N] for one sample. `raw_flow` is standardized with the
    /// registry's constants before it reaches the adapters. Throws ContractError if N < k.
    Tensor<Scalar> forward(const PointSet<Scalar>& points, DomainId domain, const std::vector<double>& raw_flow) const {
        if (points.rows() < config_.k)
            throw ContractError("forward: " + std::to_string(points.rows()) + " points is fewer than k=" + std::to_string(config_.k));
        return forward_clamped(points, domain, raw_flow);
    }

    Tensor<Scalar> forward(const Sample& sample) const { return forward(sample.points.template cast<Scalar>(), sample.domain, sample.flow); }

    /// Same as forward but accepts any N >= 1; neighbour counts are clamped to the level size.
    Tensor<Scalar> forward_clamped(const PointSet<Scalar>& points, DomainId domain, const std::vector<double>& raw_flow) const {
        validate_points(points);
        const auto flow = flow_tensor(domain, raw_flow);
        const Index n = points.rows();
        const auto sizes = level_sizes(n, config_);

        std::vector<PointSet<Scalar>> pos{points};
        std::vector<NeighborIndex> nbrs;
        std::vector<Tensor<Scalar>> skips;
        auto x = embed_(Tensor<Scalar>::from_matrix(points));
        for (Index l = 0; l < config_.stages; ++l) {
            const auto& lvl = encoder_[static_cast<std::size_t>(l)];
            const auto& p = pos.back();
            nbrs.push_back(knn(p, p, std::min(config_.k, p.rows()), true));
            x = lvl.block(x, p, nbrs.back());
            x = fca_forward(x, flow, lvl.fca.at(domain));
            skips.push_back(x);
            AggregationOptions opt;
            opt.iterations = config_.aggregation_iterations;
            opt.neighbors = config_.k;
            opt.seed = config_.fps_seed;
            opt.neighbor_space = config_.slot_neighbors;
            auto slots = aggregate(x, p, sizes[static_cast<std::size_t>(l + 1)], lvl.aggregation, opt);
            x = lvl.transition(slots.features);
            pos.push_back(std::move(slots.positions));
        }
        for (Index l = config_.stages - 1; l >= 0; --l) {
            const auto& lvl = decoder_[static_cast<std::size_t>(l)];
            const auto& coarse = pos[static_cast<std::size_t>(l + 1)];
            const auto& fine = pos[static_cast<std::size_t>(l)];
            auto up = knn_interpolate(x, coarse, fine, std::min(config_.interpolation_k, coarse.rows()));
            x = lvl.merge(concat(up, skips[static_cast<std::size_t>(l)], 1));
            x = lvl.block(x, fine, nbrs[static_cast<std::size_t>(l)]);
            x = fca_forward(x, flow, lvl.fca.at(domain));
        }
        return reshape(head_(x), {n});
    }

    /// Chunked inference: a seeded permutation splits the points into ceil(N/chunk)
    /// near-equal groups, each group runs forward on its own and the outputs are
    /// scattered back to the input order.
    Tensor<Scalar> predict_chunked(const PointSet<Scalar>& points, DomainId domain, const std::vector<double>& raw_flow, Index chunk,
                                   std::uint64_t seed = 0) const {
        if (chunk < config_.k) throw ContractError("predict_chunked: chunk " + std::to_string(chunk) + " is smaller than k");
        const Index n = points.rows();
        if (n < config_.k) throw ContractError("predict_chunked: fewer points than k");
        const auto groups = chunk_groups(n, chunk, seed);
        if (groups.size() == 1) return forward(points, domain, raw_flow);
        typename Tensor<Scalar>::Vector out(n);
        for (const auto& g : groups) {
            PointSet<Scalar> sub(static_cast<Index>(g.size()), 3);
            for (std::size_t i = 0; i < g.size(); ++i) sub.row(static_cast<Index>(i)) = points.row(g[i]);
            const auto y = forward_clamped(sub, domain, raw_flow);
            for (std::size_t i = 0; i < g.size(); ++i) out[g[i]] = y.value()[static_cast<Index>(i)];
        }
        return Tensor<Scalar>({n}, std::move(out), false);
    }

    /// The index groups used by predict_chunked.
    static std::vector<std::vector<Index>> chunk_groups(Index n, Index chunk, std::uint64_t seed) {
        if (chunk < 1) throw ContractError("chunk must be positive");
        const Index g = (n + chunk - 1) / chunk;
        std::vector<std::vector<Index>> groups(static_cast<std::size_t>(g));
        if (g == 1) {
            groups[0].resize(static_cast<std::size_t>(n));
            std::iota(groups[0].begin(), groups[0].end(), Index{0});
            return groups;
        }
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::mt19937_64 rng(seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        Index begin = 0;
        for (Index i = 0; i < g; ++i) {
            const Index size = n / g + (i < n % g ? 1 : 0);
            groups[static_cast<std::size_t>(i)].assign(perm.begin() + begin, perm.begin() + begin + size);
            begin += size;
        }
        return groups;
    }

    /// Every trainable tensor with a stable hierarchical name, in construction order.
    ParameterList<Scalar> parameters() const {
        ParameterList<Scalar> out;
        embed_.collect(out, "embed");
        for (std::size_t l = 0; l < encoder_.size(); ++l) {
            const std::string p = "encoder." + std::to_string(l);
            encoder_[l].block.collect(out, p + ".block");
            encoder_[l].fca.collect(out, p + ".fca");
            encoder_[l].aggregation.collect(out, p + ".aggregation");
            encoder_[l].transition.collect(out, p + ".transition");
        }
        for (std::size_t l = 0; l < decoder_.size(); ++l) {
            const std::string p = "decoder." + std::to_string(l);
            decoder_[l].merge.collect(out, p + ".merge");
            decoder_[l].block.collect(out, p + ".block");
            decoder_[l].fca.collect(out, p + ".fca");
        }
        head_.collect(out, "head");
        return out;
    }

    std::size_t parameter_count() const { return unifield::parameter_count(parameters()); }

    /// Parameters that belong to one domain's adapters.
    static bool is_adapter_of(const std::string& name, DomainId domain) {
        return name.find(".fca.domain" + std::to_string(domain) + ".") != std::string::npos;
    }
    static bool is_adapter(const std::string& name) { return name.find(".fca.domain") != std::string::npos; }

private:
    AdapterBank<Scalar> make_bank(Index width, Initializer& init) const {
        AdapterBank<Scalar> bank;
        for (const auto& spec : registry_.specs()) bank.adapters.emplace(spec.id, FlowAdapter<Scalar>(width, spec.flow_dim, init));
        return bank;
    }

    Tensor<Scalar> flow_tensor(DomainId domain, const std::vector<double>& raw) const {
        if (!registry_.contains(domain)) throw RoutingError("domain " + std::to_string(domain) + " is not registered with the model");
        const auto z = registry_.standardize_flow(domain, raw);
        typename Tensor<Scalar>::Vector v(static_cast<Index>(z.size()));
        for (std::size_t i = 0; i < z.size(); ++i) v[static_cast<Index>(i)] = static_cast<Scalar>(z[i]);
        return Tensor<Scalar>({static_cast<Index>(z.size())}, std::move(v), false);
    }

    ModelConfig config_;
    DomainRegistry registry_;
    Linear<Scalar> embed_;
    std::vector<EncoderLevel<Scalar>> encoder_;
    std::vector<DecoderLevel<Scalar>> decoder_;
    Linear<Scalar> head_;
};

} // namespace unifield
