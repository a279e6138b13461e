#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "unifield/ops.hpp"

// Parameterized building blocks shared by every layer: linear maps, two-layer MLPs,
// Linear->LayerNorm->GELU projections and the gated recurrent unit.

namespace unifield {

template <class Scalar>
using NamedParameter = std::pair<std::string, Tensor<Scalar>>;

template <class Scalar>
using ParameterList = std::vector<NamedParameter<Scalar>>;

/// Deterministic parameter initializer; draw order defines the parameter values.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    template <class Scalar>
    Tensor<Scalar> uniform(Shape shape, double bound) {
        std::uniform_real_distribution<double> u(-bound, bound);
        typename Tensor<Scalar>::Vector v(numel(shape));
        for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(u(rng_));
        return Tensor<Scalar>(std::move(shape), std::move(v), true);
    }

    template <class Scalar>
    Tensor<Scalar> constant(Shape shape, double value) {
        return Tensor<Scalar>::full(std::move(shape), static_cast<Scalar>(value), true);
    }

private:
    std::mt19937_64 rng_;
};

enum class InitMode {
    FanIn,  // U(-1/sqrt(in), 1/sqrt(in)) for weights and bias
    Small,  // U(-1e-2, 1e-2)
    Zero,
};

inline constexpr double kSmallInitBound = 1e-2;

template <class Scalar>
struct Linear {
    Tensor<Scalar> weight;  // [in, out]
    Tensor<Scalar> bias;    // [out]

    Linear() = default;
    Linear(Index in, Index out, Initializer& init, InitMode mode = InitMode::FanIn) {
        switch (mode) {
        case InitMode::FanIn: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            weight = init.uniform<Scalar>({in, out}, bound);
            bias = init.uniform<Scalar>({out}, bound);
            break;
        }
        case InitMode::Small:
            weight = init.uniform<Scalar>({in, out}, kSmallInitBound);
            bias = init.uniform<Scalar>({out}, kSmallInitBound);
            break;
        case InitMode::Zero:
            weight = init.constant<Scalar>({in, out}, 0.0);
            bias = init.constant<Scalar>({out}, 0.0);
            break;
        }
    }

    Index in_features() const { return weight.dim(0); }
    Index out_features() const { return weight.dim(1); }

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return add_channels(matmul(x, weight), bias); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }
};

/// Linear -> GELU -> Linear.
template <class Scalar>
struct Mlp2 {
    Linear<Scalar> first;
    Linear<Scalar> second;

    Mlp2() = default;
    Mlp2(Index in, Index hidden, Index out, Initializer& init, InitMode last = InitMode::FanIn)
        : first(in, hidden, init), second(hidden, out, init, last) {}

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return second(gelu(first(x))); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        first.collect(out, prefix + ".0");
        second.collect(out, prefix + ".1");
    }
};

template <class Scalar>
struct LayerNorm {
    Tensor<Scalar> gain;
    Tensor<Scalar> bias;

    LayerNorm() = default;
    LayerNorm(Index width, Initializer& init) : gain(init.constant<Scalar>({width}, 1.0)), bias(init.constant<Scalar>({width}, 0.0)) {}

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return layernorm(x, gain, bias, -1); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".gain", gain);
        out.emplace_back(prefix + ".bias", bias);
    }
};

/// Linear -> LayerNorm -> GELU. With a zero linear map and zero LayerNorm bias the
/// output is exactly zero.
template <class Scalar>
struct Projection {
    Linear<Scalar> linear;
    LayerNorm<Scalar> norm;

    Projection() = default;
    Projection(Index in, Index out, Initializer& init, InitMode mode = InitMode::FanIn)
        : linear(in, out, init, mode), norm(out, init) {}

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return gelu(norm(linear(x))); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        linear.collect(out, prefix + ".linear");
        norm.collect(out, prefix + ".norm");
    }
};

/// Gated recurrent unit over D channels:
///   z = sigmoid(x Wz + h Uz + bz),  r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wc + (r * h) Uc + bc),  h' = (1 - z) * h + z * c
template <class Scalar>
struct GruParams {
    Linear<Scalar> input_update, input_reset, input_candidate;  // x -> gate, carry the gate biases
    Tensor<Scalar> hidden_update, hidden_reset, hidden_candidate; // [D, D]

    GruParams() = default;
    GruParams(Index width, Initializer& init) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(width));
        input_update = Linear<Scalar>(width, width, init);
        input_reset = Linear<Scalar>(width, width, init);
        input_candidate = Linear<Scalar>(width, width, init);
        hidden_update = init.uniform<Scalar>({width, width}, bound);
        hidden_reset = init.uniform<Scalar>({width, width}, bound);
        hidden_candidate = init.uniform<Scalar>({width, width}, bound);
    }

    Index width() const { return hidden_update.dim(0); }

    void collect(ParameterList<Scalar>& out, const std::string& prefix) const {
        input_update.collect(out, prefix + ".input_update");
        input_reset.collect(out, prefix + ".input_reset");
        input_candidate.collect(out, prefix + ".input_candidate");
        out.emplace_back(prefix + ".hidden_update", hidden_update);
        out.emplace_back(prefix + ".hidden_reset", hidden_reset);
        out.emplace_back(prefix + ".hidden_candidate", hidden_candidate);
    }
};

template <class Scalar>
Tensor<Scalar> gru_cell(const Tensor<Scalar>& state, const Tensor<Scalar>& input, const GruParams<Scalar>& p) {
    if (state.rank() != 2 || state.shape() != input.shape()) {
        throw DimensionError("gru_cell: state " + to_string(state.shape()) + " and input " + to_string(input.shape()) +
                             " must both be [K,D]");
    }
    const Index d = state.dim(1);
    for (const Tensor<Scalar>* w : {&p.hidden_update, &p.hidden_reset, &p.hidden_candidate, &p.input_update.weight,
                                    &p.input_reset.weight, &p.input_candidate.weight}) {
        if (w->shape() != Shape{d, d}) {
            throw DimensionError("gru_cell: parameter shape " + to_string(w->shape()) + " does not match width " +
                                 std::to_string(d));
        }
    }
    const auto z = sigmoid(add(p.input_update(input), matmul(state, p.hidden_update)));
    const auto r = sigmoid(add(p.input_reset(input), matmul(state, p.hidden_reset)));
    const auto c = tanh(add(p.input_candidate(input), matmul(mul(r, state), p.hidden_candidate)));
    return add(state, mul(z, sub(c, state)));
}

template <class Scalar>
std::size_t parameter_count(const ParameterList<Scalar>& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += static_cast<std::size_t>(t.size());
    return n;
}

} // namespace unifield
