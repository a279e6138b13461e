#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unifield/tensor.hpp"

// Non-differentiable index computations over point sets: farthest point sampling,
// exact k-nearest neighbours and inverse-distance interpolation weights.

namespace unifield {

template <class Scalar>
using PointSet = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row i lists the k nearest reference points of query i, nearest first,
/// ties broken by ascending reference index.
struct NeighborIndex {
    IndexMatrix indices;
    Index num_refs = 0;

    Index queries() const { return indices.rows(); }
    Index k() const { return indices.cols(); }
    std::span<const Index> flat() const { return {indices.data(), static_cast<std::size_t>(indices.size())}; }
};

template <class Scalar>
void validate_points(const PointSet<Scalar>& points) {
    if (points.rows() < 1) throw ContractError("point set must contain at least one point");
    if (!points.allFinite()) throw ContractError("point set contains NaN or Inf coordinates");
}

/// Greedy max-min selection of `count` indices starting from `seed_index`. Each
/// subsequent pick maximizes the distance to the nearest already-selected point;
/// ties go to the lowest index.
template <class Scalar>
std::vector<Index> farthest_point_sampling(const PointSet<Scalar>& points, Index count, Index seed_index = 0) {
    const Index n = points.rows();
    if (count < 1 || count > n) {
        throw ContractError("farthest_point_sampling: need 1 <= K <= N, got K=" + std::to_string(count) +
                            " N=" + std::to_string(n));
    }
    if (seed_index < 0 || seed_index >= n) {
        throw ContractError("farthest_point_sampling: seed index " + std::to_string(seed_index) + " out of range");
    }
    std::vector<Index> selected;
    selected.reserve(static_cast<std::size_t>(count));
    std::vector<Scalar> nearest(static_cast<std::size_t>(n), std::numeric_limits<Scalar>::infinity());
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    Index current = seed_index;
    for (Index step = 0; step < count; ++step) {
        selected.push_back(current);
        taken[static_cast<std::size_t>(current)] = true;
        if (step + 1 == count) break;
        Index best = -1;
        Scalar best_dist = -1;
        for (Index i = 0; i < n; ++i) {
            auto& d = nearest[static_cast<std::size_t>(i)];
            d = std::min(d, (points.row(i) - points.row(current)).squaredNorm());
            if (!taken[static_cast<std::size_t>(i)] && d > best_dist) {
                best_dist = d;
                best = i;
            }
        }
        current = best;
    }
    return selected;
}

/// Index of the point farthest from the centroid (lowest index on ties). Used as a
/// point-order independent FPS seed.
template <class Scalar>
Index farthest_from_centroid(const PointSet<Scalar>& points) {
    validate_points(points);
    const Eigen::Matrix<Scalar, 1, 3> centroid = points.colwise().mean();
    Index best = 0;
    Scalar best_dist = -1;
    for (Index i = 0; i < points.rows(); ++i) {
        const Scalar d = (points.row(i) - centroid).squaredNorm();
        if (d > best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

/// Exact Euclidean k-nearest neighbours by brute force. With `include_self == false`
/// the two sets are taken to be identical and query i never lists reference i.
template <class Scalar>
NeighborIndex knn(const PointSet<Scalar>& queries, const PointSet<Scalar>& refs, Index k, bool include_self = true) {
    const Index nq = queries.rows();
    const Index nr = refs.rows();
    if (!include_self && nq != nr) {
        throw ContractError("knn: include_self=false requires identical query and reference sets");
    }
    const Index available = include_self ? nr : nr - 1;
    if (k < 1 || k > available) {
        throw ContractError("knn: k=" + std::to_string(k) + " exceeds the " + std::to_string(available) +
                            " available reference points");
    }
    NeighborIndex out;
    out.indices.resize(nq, k);
    out.num_refs = nr;
    std::vector<std::pair<Scalar, Index>> cand(static_cast<std::size_t>(nr));
    for (Index q = 0; q < nq; ++q) {
        std::size_t m = 0;
        for (Index r = 0; r < nr; ++r) {
            if (!include_self && r == q) continue;
            cand[m++] = {(queries.row(q) - refs.row(r)).squaredNorm(), r};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.begin() + static_cast<std::ptrdiff_t>(m));
        for (Index j = 0; j < k; ++j) out.indices(q, j) = cand[static_cast<std::size_t>(j)].second;
    }
    return out;
}

/// kNN in feature space: rows of `queries` [Q,D] against rows of `refs` [R,D].
template <class DerivedQ, class DerivedR>
NeighborIndex knn_features(const Eigen::MatrixBase<DerivedQ>& queries, const Eigen::MatrixBase<DerivedR>& refs, Index k) {
    using Scalar = typename DerivedQ::Scalar;
    const Index nq = queries.rows();
    const Index nr = refs.rows();
    if (k < 1 || k > nr) throw ContractError("knn_features: k exceeds the reference count");
    NeighborIndex out;
    out.indices.resize(nq, k);
    out.num_refs = nr;
    std::vector<std::pair<Scalar, Index>> cand(static_cast<std::size_t>(nr));
    for (Index q = 0; q < nq; ++q) {
        for (Index r = 0; r < nr; ++r) cand[static_cast<std::size_t>(r)] = {(queries.row(q) - refs.row(r)).squaredNorm(), r};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (Index j = 0; j < k; ++j) out.indices(q, j) = cand[static_cast<std::size_t>(j)].second;
    }
    return out;
}

inline constexpr double kInterpolationEpsilon = 1e-8;

template <class Scalar>
struct InterpolationWeights {
    NeighborIndex neighbors;                                                           // [N,k] into the coarse set
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights;  // [N,k], rows sum to 1
};

/// w_j = (d_j + eps)^-1 / sum (d + eps)^-1 over the k nearest coarse points.
template <class Scalar>
InterpolationWeights<Scalar> interpolation_weights(const PointSet<Scalar>& coarse_pos, const PointSet<Scalar>& fine_pos,
                                                   Index k = 3) {
    if (coarse_pos.rows() == 0) throw ContractError("knn_interpolate: empty coarse point set");
    InterpolationWeights<Scalar> out;
    out.neighbors = knn(fine_pos, coarse_pos, k, true);
    out.weights.resize(fine_pos.rows(), k);
    for (Index i = 0; i < fine_pos.rows(); ++i) {
        Scalar total(0);
        for (Index j = 0; j < k; ++j) {
            const Scalar d = (fine_pos.row(i) - coarse_pos.row(out.neighbors.indices(i, j))).norm();
            const Scalar w = Scalar(1) / (d + Scalar(kInterpolationEpsilon));
            out.weights(i, j) = w;
            total += w;
        }
        out.weights.row(i) /= total;
    }
    return out;
}

/// Upsample coarse features [M,D] to the fine positions. Differentiable with respect to
/// `coarse_feats`; the weights are constants.
template <class Scalar>
Tensor<Scalar> knn_interpolate(const Tensor<Scalar>& coarse_feats, const PointSet<Scalar>& coarse_pos,
                               const PointSet<Scalar>& fine_pos, Index k = 3) {
    if (coarse_pos.rows() == 0) throw ContractError("knn_interpolate: empty coarse point set");
    if (coarse_feats.rank() != 2 || coarse_feats.dim(0) != coarse_pos.rows()) {
        throw DimensionError("knn_interpolate: features " + to_string(coarse_feats.shape()) + " vs " +
                             std::to_string(coarse_pos.rows()) + " coarse points");
    }
    auto iw = interpolation_weights(coarse_pos, fine_pos, k);
    const Index n = fine_pos.rows();
    const Index d = coarse_feats.dim(1);
    using V = typename Tensor<Scalar>::Vector;
    V out = V::Zero(n * d);
    const auto& src = coarse_feats.value();
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) out.segment(i * d, d) += iw.weights(i, j) * src.segment(iw.neighbors.indices(i, j) * d, d);
    return detail::record<Scalar>(Shape{n, d}, std::move(out), {coarse_feats}, [iw = std::move(iw), n, d, k](detail::Node<Scalar>& node) {
        auto& g = node.parents[0]->grad_buffer();
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < k; ++j)
                g.segment(iw.neighbors.indices(i, j) * d, d) += iw.weights(i, j) * node.grad.segment(i * d, d);
    });
}

} // namespace unifield
