#pragma once

#include <string>
#include <vector>

#include "unifield/geometry.hpp"
#include "unifield/nn.hpp"

namespace unifield {

/// Projections of one vector-attention layer at channel width D.
template <class Scalar>
struct VectorAttentionParams {
    Linear<Scalar> query, key, value;  // D -> D
    Mlp2<Scalar> position;             // 3 -> D -> D
    Mlp2<Scalar> attention;            // D -> D -> D (gamma)

    VectorAttentionParams() = default;
    VectorAttentionParams(Index width, Initializer& init)
        : query(width, width, init),
          key(width, width, init),
          value(width, width, init, InitMode::Small),
          position(3, width, width, init, InitMode::Small),
          attention(width, width, width, init, InitMode::Small) {}

    Index width() const { return query.in_features(); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        query.collect(out, prefix + ".query");
        key.collect(out, prefix + ".key");
        value.collect(out, prefix + ".value");
        position.collect(out, prefix + ".position");
        attention.collect(out, prefix + ".attention");
    }
};

template <class Scalar>
struct AttentionOutput {
    Tensor<Scalar> features;  // [Q, D]
    Tensor<Scalar> weights;   // [Q, k, D], softmax-normalized over the neighbour axis
};

/// Vector attention of each query over its neighbours in the reference set:
///   delta_ij = P(p_i - p_j)
///   y_i = sum_j softmax_j(gamma(q_i - k_j + delta_ij)) * (v_j + delta_ij)
/// with the softmax taken over j independently per channel. Queries and references may
/// be the same set (self-attention) or different ones (slot aggregation).
template <class Scalar>
AttentionOutput<Scalar> vector_attention(const Tensor<Scalar>& query_feats, const PointSet<Scalar>& query_pos,
                                         const Tensor<Scalar>& ref_feats, const PointSet<Scalar>& ref_pos,
                                         const NeighborIndex& nbr, const VectorAttentionParams<Scalar>& params) {
    const Index nq = query_pos.rows();
    const Index nr = ref_pos.rows();
    const Index d = params.width();
    if (query_feats.rank() != 2 || query_feats.dim(0) != nq || query_feats.dim(1) != d || ref_feats.rank() != 2 ||
        ref_feats.dim(0) != nr || ref_feats.dim(1) != d) {
        throw DimensionError("vector_attention: features " + to_string(query_feats.shape()) + " / " +
                             to_string(ref_feats.shape()) + " inconsistent with " + std::to_string(nq) + "/" +
                             std::to_string(nr) + " points of width " + std::to_string(d));
    }
    if (nbr.queries() != nq) {
        throw DimensionError("vector_attention: neighbour index has " + std::to_string(nbr.queries()) + " rows for " +
                             std::to_string(nq) + " queries");
    }
    const Index k = nbr.k();
    for (Index i = 0; i < nbr.indices.size(); ++i) {
        const Index j = nbr.indices.data()[i];
        if (j < 0 || j >= nr) throw ContractError("vector_attention: neighbour index " + std::to_string(j) + " out of range");
    }

    std::vector<Index> centers(static_cast<std::size_t>(nq * k));
    typename Tensor<Scalar>::Vector rel(nq * k * 3);
    for (Index i = 0; i < nq; ++i)
        for (Index j = 0; j < k; ++j) {
            const Index row = i * k + j;
            centers[static_cast<std::size_t>(row)] = i;
            for (int c = 0; c < 3; ++c) rel[row * 3 + c] = query_pos(i, c) - ref_pos(nbr.indices(i, j), c);
        }
    const Tensor<Scalar> offsets(Shape{nq * k, 3}, std::move(rel));

    const auto delta = params.position(offsets);  // [Qk, D]
    const auto q = gather_rows(params.query(query_feats), std::span<const Index>(centers));
    const auto keys = gather_rows(params.key(ref_feats), nbr.flat());
    const auto values = gather_rows(params.value(ref_feats), nbr.flat());

    const auto logits = params.attention(add(sub(q, keys), delta));
    const auto weights = softmax(reshape(logits, {nq, k, d}), 1);
    const auto messages = reshape(add(values, delta), {nq, k, d});
    return {sum(mul(weights, messages), 1), weights};
}

template <class Scalar>
Tensor<Scalar> vector_self_attention(const Tensor<Scalar>& x, const PointSet<Scalar>& p, const NeighborIndex& nbr,
                                     const VectorAttentionParams<Scalar>& params) {
    if (nbr.num_refs != p.rows()) throw ContractError("vector_self_attention: neighbour index built over a different point set");
    return vector_attention(x, p, x, p, nbr, params).features;
}

/// Residual attention + residual FFN. Optional pre-normalization of both branches.
template <class Scalar>
struct PointTransformerBlock {
    VectorAttentionParams<Scalar> attention;
    Mlp2<Scalar> ffn;  // D -> ffn_ratio*D -> D
    bool pre_norm = false;
    LayerNorm<Scalar> attention_norm;
    LayerNorm<Scalar> ffn_norm;

    PointTransformerBlock() = default;
    PointTransformerBlock(Index width, Index ffn_ratio, bool use_norm, Initializer& init)
        : attention(width, init), ffn(width, ffn_ratio * width, width, init), pre_norm(use_norm) {
        if (pre_norm) {
            attention_norm = LayerNorm<Scalar>(width, init);
            ffn_norm = LayerNorm<Scalar>(width, init);
        }
    }

    Tensor<Scalar> operator()(const Tensor<Scalar>& x, const PointSet<Scalar>& p, const NeighborIndex& nbr) const {
        const auto a_in = pre_norm ? attention_norm(x) : x;
        auto h = add(x, vector_self_attention(a_in, p, nbr, attention));
        const auto f_in = pre_norm ? ffn_norm(h) : h;
        return add(h, ffn(f_in));
    }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        attention.collect(out, prefix + ".attn");
        ffn.collect(out, prefix + ".ffn");
        if (pre_norm) {
            attention_norm.collect(out, prefix + ".attn_norm");
            ffn_norm.collect(out, prefix + ".ffn_norm");
        }
    }
};

} // namespace unifield
