#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "unifield/errors.hpp"

namespace unifield {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

inline std::uint64_t& sequence_counter() {
    thread_local std::uint64_t counter = 0;
    return counter;
}

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

template <class Scalar>
struct Node {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Shape shape;
    Vector value;
    Vector grad;  // empty until something flows into it
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Vector& g) {
        if (grad.size() == 0) {
            grad = g;
        } else {
            grad += g;
        }
    }

    Vector& grad_buffer() {
        if (grad.size() == 0) grad = Vector::Zero(value.size());
        return grad;
    }
};

} // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Dense array of Scalar with an arbitrary-rank shape and optional participation in
/// reverse-mode differentiation. Copies share the underlying node (handle semantics);
/// the value buffer is never mutated after creation except through `mutable_value()`
/// on leaves (optimizer updates).
template <class Scalar>
class Tensor {
public:
    using scalar_type = Scalar;
    using NodeType = detail::Node<Scalar>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;

    Tensor() = default;

    Tensor(Shape shape, Vector values, bool requires_grad = false)
        : node_(std::make_shared<NodeType>()) {
        if (numel(shape) != values.size()) {
            throw DimensionError("tensor shape " + to_string(shape) + " does not match buffer of " +
                                 std::to_string(values.size()) + " elements");
        }
        for (Index e : shape) {
            if (e <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
        }
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
        node_->seq = detail::sequence_counter()++;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const Index n = numel(shape);
        return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
    }

    static Tensor full(Shape shape, Scalar v, bool requires_grad = false) {
        const Index n = numel(shape);
        return Tensor(std::move(shape), Vector::Constant(n, v), requires_grad);
    }

    static Tensor scalar(Scalar v, bool requires_grad = false) {
        return Tensor(Shape{}, Vector::Constant(1, v), requires_grad);
    }

    static Tensor from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false) {
        Vector v(static_cast<Index>(values.size()));
        std::copy(values.begin(), values.end(), v.data());
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    template <class Derived>
    static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m, bool requires_grad = false) {
        Matrix rm = m;
        Vector v = Eigen::Map<const Vector>(rm.data(), rm.size());
        return Tensor(Shape{rm.rows(), rm.cols()}, std::move(v), requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    Index size() const { return node_->value.size(); }
    Index dim(std::size_t axis) const { return node_->shape.at(axis); }

    const Vector& value() const { return node_->value; }
    /// Direct write access, reserved for optimizer updates and deserialization of leaves.
    Vector& mutable_value() { return node_->value; }

    /// View as [prod(shape[:-1]), shape[-1]] row-major matrix. Scalars view as 1x1.
    ConstMatrixMap matrix() const {
        const auto [r, c] = matrix_extents();
        return ConstMatrixMap(node_->value.data(), r, c);
    }

    Scalar item() const {
        if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
        return node_->value[0];
    }

    Scalar operator[](Index i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() != 0; }
    const Vector& grad() const { return node_->grad; }
    Vector grad_or_zero() const { return has_grad() ? node_->grad : Vector::Zero(size()); }
    void zero_grad() { node_->grad.resize(0); }

    std::uint64_t sequence() const { return node_->seq; }
    const std::shared_ptr<NodeType>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

    /// Detached copy sharing no graph history.
    Tensor detach() const { return Tensor(shape(), value(), false); }

    /// Populate gradients of every requires-grad ancestor of this scalar.
    void backward() const;

private:
    std::pair<Index, Index> matrix_extents() const {
        const auto& s = node_->shape;
        if (s.empty()) return {1, 1};
        const Index cols = s.back();
        return {node_->value.size() / cols, cols};
    }

    std::shared_ptr<NodeType> node_;
};

namespace detail {

/// Builds an op result; records it on the tape when any parent requires grad.
template <class Scalar, class Backward>
Tensor<Scalar> record(Shape shape, typename Tensor<Scalar>::Vector value,
                      std::initializer_list<Tensor<Scalar>> parents, Backward&& backward) {
    Tensor<Scalar> out(std::move(shape), std::move(value), false);
    if (!grad_mode()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& p : parents) node.parents.push_back(p.node());
    node.backward_fn = std::forward<Backward>(backward);
    return out;
}

} // namespace detail

template <class Scalar>
void Tensor<Scalar>::backward() const {
    if (!defined() || size() != 1 || rank() > 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            (defined() ? to_string(shape()) : std::string("<undefined>")));
    }
    if (!requires_grad()) {
        throw ContractError("backward() on a tensor that is not connected to any parameter");
    }

    std::vector<std::shared_ptr<NodeType>> order;
    std::unordered_set<NodeType*> seen;
    std::vector<std::shared_ptr<NodeType>> stack{node_};
    while (!stack.empty()) {
        std::shared_ptr<NodeType> n = std::move(stack.back());
        stack.pop_back();
        if (!seen.insert(n.get()).second) continue;
        for (const auto& p : n->parents) {
            if (p->requires_grad) stack.push_back(p);
        }
        order.push_back(std::move(n));
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

    node_->grad_buffer().setConstant(Scalar(1));
    for (const auto& n : order) {
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
    // The tape is consumed: interior nodes drop their closures and operand references.
    for (const auto& n : order) {
        if (n->backward_fn) {
            n->backward_fn = nullptr;
            n->parents.clear();
        }
    }
}

} // namespace unifield
