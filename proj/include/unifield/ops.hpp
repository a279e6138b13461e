#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "unifield/tensor.hpp"

// Differentiable operations over Tensor. Every op is a free function; reductions and
// accumulations run in fixed index order so results are bitwise reproducible on one thread.

namespace unifield {

namespace detail {

struct AxisSplit {
    Index outer;
    Index extent;
    Index inner;
};

inline std::size_t check_axis(const Shape& shape, int axis) {
    const int rank = static_cast<int>(shape.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape));
    }
    return static_cast<std::size_t>(axis);
}

inline AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
    }
}

template <class Scalar, class F, class DF>
Tensor<Scalar> unary(const Tensor<Scalar>& x, F f, DF df) {
    using V = typename Tensor<Scalar>::Vector;
    V out = x.value().unaryExpr(f);
    return record<Scalar>(x.shape(), std::move(out), {x}, [df](Node<Scalar>& n) {
        auto& p = *n.parents[0];
        V g(n.grad.size());
        for (Index i = 0; i < g.size(); ++i) g[i] = n.grad[i] * df(p.value[i], n.value[i]);
        p.accumulate(g);
    });
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// Y = A·B for rank-2 operands.
template <class Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    using T = Tensor<Scalar>;
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
    }
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    typename T::Vector out(m * n);
    typename T::MatrixMap(out.data(), m, n).noalias() = a.matrix() * b.matrix();
    return detail::record<Scalar>(Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<Scalar>& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        typename T::ConstMatrixMap gy(node.grad.data(), m, n);
        if (pa.requires_grad) {
            typename T::Vector ga(m * k);
            typename T::MatrixMap(ga.data(), m, k).noalias() =
                gy * typename T::ConstMatrixMap(pb.value.data(), k, n).transpose();
            pa.accumulate(ga);
        }
        if (pb.requires_grad) {
            typename T::Vector gb(k * n);
            typename T::MatrixMap(gb.data(), k, n).noalias() =
                typename T::ConstMatrixMap(pa.value.data(), m, k).transpose() * gy;
            pb.accumulate(gb);
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "add");
    typename Tensor<Scalar>::Vector out = a.value() + b.value();
    return detail::record<Scalar>(a.shape(), std::move(out), {a, b}, [](detail::Node<Scalar>& n) {
        for (auto& p : n.parents) {
            if (p->requires_grad) p->accumulate(n.grad);
        }
    });
}

template <class Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "sub");
    typename Tensor<Scalar>::Vector out = a.value() - b.value();
    return detail::record<Scalar>(a.shape(), std::move(out), {a, b}, [](detail::Node<Scalar>& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-n.grad);
    });
}

template <class Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "mul");
    typename Tensor<Scalar>::Vector out = a.value().cwiseProduct(b.value());
    return detail::record<Scalar>(a.shape(), std::move(out), {a, b}, [](detail::Node<Scalar>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
    });
}

template <class Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar c) {
    typename Tensor<Scalar>::Vector out = x.value() * c;
    return detail::record<Scalar>(x.shape(), std::move(out), {x},
                                  [c](detail::Node<Scalar>& n) { n.parents[0]->accumulate(n.grad * c); });
}

template <class Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar c) {
    typename Tensor<Scalar>::Vector out = x.value().array() + c;
    return detail::record<Scalar>(x.shape(), std::move(out), {x},
                                  [](detail::Node<Scalar>& n) { n.parents[0]->accumulate(n.grad); });
}

template <class Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& x) {
    return scale(x, Scalar(-1));
}

template <class Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
    return detail::unary(x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

/// |x| with subgradient 0 at x = 0.
template <class Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& x) {
    return detail::unary(
        x, [](Scalar v) { return std::abs(v); },
        [](Scalar v, Scalar) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); });
}

template <class Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
    return detail::unary(
        x,
        [](Scalar v) {
            if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
            const Scalar e = std::exp(v);
            return e / (Scalar(1) + e);
        },
        [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <class Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
    return detail::unary(
        x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

/// Exact GELU, x·Φ(x) with Φ the standard normal CDF.
template <class Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
    return detail::unary(
        x,
        [](Scalar v) { return v * Scalar(0.5) * (Scalar(1) + std::erf(v / std::numbers::sqrt2_v<Scalar>)); },
        [](Scalar v, Scalar) {
            const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v / std::numbers::sqrt2_v<Scalar>));
            const Scalar pdf = std::exp(Scalar(-0.5) * v * v) * std::numbers::inv_sqrtpi_v<Scalar> /
                               std::numbers::sqrt2_v<Scalar>;
            return cdf + v * pdf;
        });
}

// ---------------------------------------------------------------------------
// Channel broadcasting: `c` has shape [D] and is broadcast over all leading axes of `x`
// whose last extent is D.

template <class Scalar>
Tensor<Scalar> add_channels(const Tensor<Scalar>& x, const Tensor<Scalar>& c) {
    if (x.rank() == 0 || c.rank() != 1 || c.dim(0) != x.shape().back()) {
        throw DimensionError("add_channels: shapes " + to_string(x.shape()) + " and " + to_string(c.shape()));
    }
    using T = Tensor<Scalar>;
    const Index d = c.dim(0);
    const Index rows = x.size() / d;
    typename T::Vector out(x.size());
    typename T::MatrixMap(out.data(), rows, d) = x.matrix().rowwise() + c.value().transpose();
    return detail::record<Scalar>(x.shape(), std::move(out), {x, c}, [rows, d](detail::Node<Scalar>& n) {
        auto& px = *n.parents[0];
        auto& pc = *n.parents[1];
        if (px.requires_grad) px.accumulate(n.grad);
        if (pc.requires_grad) {
            typename T::ConstMatrixMap g(n.grad.data(), rows, d);
            typename T::Vector gc = T::Vector::Zero(d);
            for (Index r = 0; r < rows; ++r) gc += g.row(r).transpose();
            pc.accumulate(gc);
        }
    });
}

template <class Scalar>
Tensor<Scalar> mul_channels(const Tensor<Scalar>& x, const Tensor<Scalar>& c) {
    if (x.rank() == 0 || c.rank() != 1 || c.dim(0) != x.shape().back()) {
        throw DimensionError("mul_channels: shapes " + to_string(x.shape()) + " and " + to_string(c.shape()));
    }
    using T = Tensor<Scalar>;
    const Index d = c.dim(0);
    const Index rows = x.size() / d;
    typename T::Vector out(x.size());
    typename T::MatrixMap(out.data(), rows, d) = x.matrix() * c.value().asDiagonal();
    return detail::record<Scalar>(x.shape(), std::move(out), {x, c}, [rows, d](detail::Node<Scalar>& n) {
        auto& px = *n.parents[0];
        auto& pc = *n.parents[1];
        typename T::ConstMatrixMap g(n.grad.data(), rows, d);
        if (px.requires_grad) {
            typename T::Vector gx(rows * d);
            typename T::MatrixMap(gx.data(), rows, d) = g * pc.value.asDiagonal();
            px.accumulate(gx);
        }
        if (pc.requires_grad) {
            typename T::ConstMatrixMap xv(px.value.data(), rows, d);
            typename T::Vector gc = T::Vector::Zero(d);
            for (Index r = 0; r < rows; ++r) gc += g.row(r).cwiseProduct(xv.row(r)).transpose();
            pc.accumulate(gc);
        }
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    return detail::record<Scalar>(std::move(shape), x.value(), {x},
                                  [](detail::Node<Scalar>& n) { n.parents[0]->accumulate(n.grad); });
}

/// Concatenate two tensors along `axis`; all other extents must match.
template <class Scalar>
Tensor<Scalar> concat(const Tensor<Scalar>& a, const Tensor<Scalar>& b, int axis) {
    const std::size_t ax = detail::check_axis(a.shape(), axis);
    if (a.rank() != b.rank()) throw DimensionError("concat: rank mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i != ax && a.dim(i) != b.dim(i)) {
            throw DimensionError("concat: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                                 " differ off the concatenation axis");
        }
    }
    const auto sa = detail::split_at(a.shape(), ax);
    const auto sb = detail::split_at(b.shape(), ax);
    const Index ca = sa.extent * sa.inner;
    const Index cb = sb.extent * sb.inner;
    Shape shape = a.shape();
    shape[ax] = sa.extent + sb.extent;
    typename Tensor<Scalar>::Vector out(a.size() + b.size());
    for (Index o = 0; o < sa.outer; ++o) {
        out.segment(o * (ca + cb), ca) = a.value().segment(o * ca, ca);
        out.segment(o * (ca + cb) + ca, cb) = b.value().segment(o * cb, cb);
    }
    const Index outer = sa.outer;
    return detail::record<Scalar>(std::move(shape), std::move(out), {a, b}, [outer, ca, cb](detail::Node<Scalar>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            typename Tensor<Scalar>::Vector g(outer * ca);
            for (Index o = 0; o < outer; ++o) g.segment(o * ca, ca) = n.grad.segment(o * (ca + cb), ca);
            pa.accumulate(g);
        }
        if (pb.requires_grad) {
            typename Tensor<Scalar>::Vector g(outer * cb);
            for (Index o = 0; o < outer; ++o) g.segment(o * cb, cb) = n.grad.segment(o * (ca + cb) + ca, cb);
            pb.accumulate(g);
        }
    });
}

/// Elements [begin, end) of `axis`.
template <class Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, Index begin, Index end) {
    const std::size_t ax = detail::check_axis(x.shape(), axis);
    if (begin < 0 || end > x.dim(ax) || begin >= end) {
        throw ContractError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") invalid for shape " + to_string(x.shape()));
    }
    const auto s = detail::split_at(x.shape(), ax);
    const Index width = (end - begin) * s.inner;
    const Index stride = s.extent * s.inner;
    const Index offset = begin * s.inner;
    Shape shape = x.shape();
    shape[ax] = end - begin;
    typename Tensor<Scalar>::Vector out(s.outer * width);
    for (Index o = 0; o < s.outer; ++o) out.segment(o * width, width) = x.value().segment(o * stride + offset, width);
    const Index outer = s.outer;
    return detail::record<Scalar>(std::move(shape), std::move(out), {x}, [outer, width, stride, offset](detail::Node<Scalar>& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (Index o = 0; o < outer; ++o) g.segment(o * stride + offset, width) += n.grad.segment(o * width, width);
    });
}

/// Rows of `x` (axis 0) selected by `indices`, repeats allowed. Backward scatter-adds,
/// so an index appearing m times receives m contributions.
template <class Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& x, std::span<const Index> indices) {
    if (x.rank() == 0) throw DimensionError("gather_rows: scalar input");
    const Index rows = x.dim(0);
    const Index width = x.size() / rows;
    for (Index i : indices) {
        if (i < 0 || i >= rows) {
            throw ContractError("gather_rows: index " + std::to_string(i) + " out of range for " + std::to_string(rows) + " rows");
        }
    }
    Shape shape = x.shape();
    shape[0] = static_cast<Index>(indices.size());
    typename Tensor<Scalar>::Vector out(static_cast<Index>(indices.size()) * width);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.segment(static_cast<Index>(r) * width, width) = x.value().segment(indices[r] * width, width);
    }
    std::vector<Index> idx(indices.begin(), indices.end());
    return detail::record<Scalar>(std::move(shape), std::move(out), {x}, [idx = std::move(idx), width](detail::Node<Scalar>& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            g.segment(idx[r] * width, width) += n.grad.segment(static_cast<Index>(r) * width, width);
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

template <class Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
    Scalar acc(0);
    for (Index i = 0; i < x.size(); ++i) acc += x.value()[i];
    const Index n = x.size();
    return detail::record<Scalar>(Shape{}, Tensor<Scalar>::Vector::Constant(1, acc), {x}, [n](detail::Node<Scalar>& node) {
        node.parents[0]->accumulate(Tensor<Scalar>::Vector::Constant(n, node.grad[0]));
    });
}

template <class Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
    return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

/// Sum along `axis`, removing it from the shape.
template <class Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x, int axis) {
    const std::size_t ax = detail::check_axis(x.shape(), axis);
    const auto s = detail::split_at(x.shape(), ax);
    Shape shape = x.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
    typename Tensor<Scalar>::Vector out = Tensor<Scalar>::Vector::Zero(s.outer * s.inner);
    for (Index o = 0; o < s.outer; ++o)
        for (Index j = 0; j < s.extent; ++j)
            for (Index i = 0; i < s.inner; ++i) out[o * s.inner + i] += x.value()[(o * s.extent + j) * s.inner + i];
    return detail::record<Scalar>(std::move(shape), std::move(out), {x}, [s](detail::Node<Scalar>& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (Index o = 0; o < s.outer; ++o)
            for (Index j = 0; j < s.extent; ++j)
                for (Index i = 0; i < s.inner; ++i) g[(o * s.extent + j) * s.inner + i] += n.grad[o * s.inner + i];
    });
}

template <class Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x, int axis) {
    const std::size_t ax = detail::check_axis(x.shape(), axis);
    return scale(sum(x, axis), Scalar(1) / static_cast<Scalar>(x.dim(ax)));
}

/// Max along `axis`; the gradient flows to the first maximizing element.
template <class Scalar>
Tensor<Scalar> max(const Tensor<Scalar>& x, int axis) {
    const std::size_t ax = detail::check_axis(x.shape(), axis);
    const auto s = detail::split_at(x.shape(), ax);
    Shape shape = x.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
    typename Tensor<Scalar>::Vector out(s.outer * s.inner);
    std::vector<Index> arg(static_cast<std::size_t>(s.outer * s.inner));
    for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.inner; ++i) {
            Index best = (o * s.extent) * s.inner + i;
            for (Index j = 1; j < s.extent; ++j) {
                const Index at = (o * s.extent + j) * s.inner + i;
                if (x.value()[at] > x.value()[best]) best = at;
            }
            out[o * s.inner + i] = x.value()[best];
            arg[static_cast<std::size_t>(o * s.inner + i)] = best;
        }
    return detail::record<Scalar>(std::move(shape), std::move(out), {x}, [arg = std::move(arg)](detail::Node<Scalar>& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < arg.size(); ++r) g[arg[r]] += n.grad[static_cast<Index>(r)];
    });
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax along `axis`, stabilized by subtracting the slice maximum.
template <class Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis) {
    const std::size_t ax = detail::check_axis(x.shape(), axis);
    const auto s = detail::split_at(x.shape(), ax);
    typename Tensor<Scalar>::Vector out(x.size());
    const auto& v = x.value();
    for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.extent * s.inner + i;
            Scalar m = v[base];
            for (Index j = 1; j < s.extent; ++j) m = std::max(m, v[base + j * s.inner]);
            Scalar z(0);
            for (Index j = 0; j < s.extent; ++j) {
                const Scalar e = std::exp(v[base + j * s.inner] - m);
                out[base + j * s.inner] = e;
                z += e;
            }
            for (Index j = 0; j < s.extent; ++j) out[base + j * s.inner] /= z;
        }
    return detail::record<Scalar>(x.shape(), std::move(out), {x}, [s](detail::Node<Scalar>& n) {
        typename Tensor<Scalar>::Vector g(n.grad.size());
        for (Index o = 0; o < s.outer; ++o)
            for (Index i = 0; i < s.inner; ++i) {
                const Index base = o * s.extent * s.inner + i;
                Scalar dot(0);
                for (Index j = 0; j < s.extent; ++j) dot += n.grad[base + j * s.inner] * n.value[base + j * s.inner];
                for (Index j = 0; j < s.extent; ++j) {
                    const Index at = base + j * s.inner;
                    g[at] = n.value[at] * (n.grad[at] - dot);
                }
            }
        n.parents[0]->accumulate(g);
    });
}

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Normalize each slice along `axis` to zero mean / unit variance (variance + 1e-5),
/// then apply per-position gain and bias of length shape[axis].
template <class Scalar>
Tensor<Scalar> layernorm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias, int axis = -1) {
    const std::size_t ax = detail::check_axis(x.shape(), axis);
    const auto s = detail::split_at(x.shape(), ax);
    if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != s.extent || bias.dim(0) != s.extent) {
        throw DimensionError("layernorm: gain " + to_string(gain.shape()) + " / bias " + to_string(bias.shape()) +
                             " must have length " + std::to_string(s.extent));
    }
    using V = typename Tensor<Scalar>::Vector;
    const auto& v = x.value();
    V normalized(x.size());
    V inv_std(s.outer * s.inner);
    V out(x.size());
    const Scalar count = static_cast<Scalar>(s.extent);
    for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.extent * s.inner + i;
            Scalar mu(0);
            for (Index j = 0; j < s.extent; ++j) mu += v[base + j * s.inner];
            mu /= count;
            Scalar var(0);
            for (Index j = 0; j < s.extent; ++j) {
                const Scalar d = v[base + j * s.inner] - mu;
                var += d * d;
            }
            var /= count;
            const Scalar r = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEpsilon));
            inv_std[o * s.inner + i] = r;
            for (Index j = 0; j < s.extent; ++j) {
                const Index at = base + j * s.inner;
                normalized[at] = (v[at] - mu) * r;
                out[at] = normalized[at] * gain.value()[j] + bias.value()[j];
            }
        }
    return detail::record<Scalar>(
        x.shape(), std::move(out), {x, gain, bias},
        [s, count, normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node<Scalar>& n) {
            auto& px = *n.parents[0];
            auto& pg = *n.parents[1];
            auto& pb = *n.parents[2];
            if (pg.requires_grad || pb.requires_grad) {
                V gg = V::Zero(s.extent);
                V gb = V::Zero(s.extent);
                for (Index o = 0; o < s.outer; ++o)
                    for (Index j = 0; j < s.extent; ++j)
                        for (Index i = 0; i < s.inner; ++i) {
                            const Index at = (o * s.extent + j) * s.inner + i;
                            gg[j] += n.grad[at] * normalized[at];
                            gb[j] += n.grad[at];
                        }
                if (pg.requires_grad) pg.accumulate(gg);
                if (pb.requires_grad) pb.accumulate(gb);
            }
            if (px.requires_grad) {
                V gx(n.grad.size());
                for (Index o = 0; o < s.outer; ++o)
                    for (Index i = 0; i < s.inner; ++i) {
                        const Index base = o * s.extent * s.inner + i;
                        Scalar m1(0), m2(0);
                        for (Index j = 0; j < s.extent; ++j) {
                            const Index at = base + j * s.inner;
                            const Scalar dn = n.grad[at] * pg.value[j];
                            m1 += dn;
                            m2 += dn * normalized[at];
                        }
                        m1 /= count;
                        m2 /= count;
                        const Scalar r = inv_std[o * s.inner + i];
                        for (Index j = 0; j < s.extent; ++j) {
                            const Index at = base + j * s.inner;
                            const Scalar dn = n.grad[at] * pg.value[j];
                            gx[at] = r * (dn - m1 - normalized[at] * m2);
                        }
                    }
                px.accumulate(gx);
            }
        });
}

} // namespace unifield
