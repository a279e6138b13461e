#pragma once

#include <string>
#include <vector>

#include "unifield/attention.hpp"

namespace unifield {

/// How the first farthest-point-sampling center is chosen.
enum class FpsSeed {
    Index0,    // point 0
    Centroid,  // point farthest from the centroid; independent of point order
};

/// Where the neighbours of a slot come from.
enum class SlotNeighbors {
    Coordinates,  // k nearest input points to the slot position
    Features,     // k nearest input features to the current slot features
};

template <class Scalar>
struct SemanticAggregationParams {
    VectorAttentionParams<Scalar> attention;  // Q_s, K_s, V_s, P_s, gamma_s
    GruParams<Scalar> gru;
    Mlp2<Scalar> ffn;

    SemanticAggregationParams() = default;
    SemanticAggregationParams(Index width, Index ffn_ratio, Initializer& init)
        : attention(width, init), gru(width, init), ffn(width, ffn_ratio * width, width, init) {}

    Index width() const { return attention.width(); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        attention.collect(out, prefix + ".attn");
        gru.collect(out, prefix + ".gru");
        ffn.collect(out, prefix + ".ffn");
    }
};

struct AggregationOptions {
    Index iterations = 1;
    Index neighbors = 16;  // clamped to the input size
    FpsSeed seed = FpsSeed::Index0;
    SlotNeighbors neighbor_space = SlotNeighbors::Coordinates;
};

template <class Scalar>
struct SlotState {
    Tensor<Scalar> features;      // x_s [K, D]
    PointSet<Scalar> positions;   // p_s [K, 3], rows of the input coordinates
    std::vector<Index> centers;   // input indices of the slots, in FPS order
    Tensor<Scalar> last_weights;  // attention weights of the final iteration [K, k, D]
    Index gru_updates = 0;
};

/// Downsample (x, p) to `count` slots: FPS picks the slot positions, slot features start
/// as the selected point features and are refined by vector attention over each slot's
/// neighbourhood, a GRU update and a residual FFN. Slot positions never move.
template <class Scalar>
SlotState<Scalar> aggregate(const Tensor<Scalar>& x, const PointSet<Scalar>& p, Index count,
                            const SemanticAggregationParams<Scalar>& params, const AggregationOptions& options = {}) {
    const Index n = p.rows();
    if (x.rank() != 2 || x.dim(0) != n || x.dim(1) != params.width()) {
        throw DimensionError("aggregate: features " + to_string(x.shape()) + " do not match " + std::to_string(n) +
                             " points of width " + std::to_string(params.width()));
    }
    if (count < 1 || count > n) {
        throw ContractError("aggregate: slot count " + std::to_string(count) + " must lie in [1, " + std::to_string(n) + "]");
    }
    if (options.iterations < 1) throw ContractError("aggregate: iterations must be >= 1");

    SlotState<Scalar> slots;
    const Index seed = options.seed == FpsSeed::Centroid ? farthest_from_centroid(p) : 0;
    slots.centers = farthest_point_sampling(p, count, seed);
    slots.positions.resize(count, 3);
    for (Index i = 0; i < count; ++i) slots.positions.row(i) = p.row(slots.centers[static_cast<std::size_t>(i)]);
    slots.features = gather_rows(x, std::span<const Index>(slots.centers));

    const Index k = std::min(options.neighbors, n);
    NeighborIndex nbr;
    if (options.neighbor_space == SlotNeighbors::Coordinates) nbr = knn(slots.positions, p, k, true);
    for (Index it = 0; it < options.iterations; ++it) {
        if (options.neighbor_space == SlotNeighbors::Features) nbr = knn_features(slots.features.matrix(), x.matrix(), k);
        auto attended = vector_attention(slots.features, slots.positions, x, p, nbr, params.attention);
        slots.last_weights = attended.weights;
        slots.features = gru_cell(slots.features, attended.features, params.gru);
        ++slots.gru_updates;
        slots.features = add(slots.features, params.ffn(slots.features));
    }
    return slots;
}

} // namespace unifield
