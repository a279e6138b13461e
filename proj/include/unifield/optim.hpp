#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "unifield/nn.hpp"

namespace unifield {

/// Mean absolute error. The subgradient of |e| at e = 0 is 0.
template <class Scalar>
Tensor<Scalar> l1_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
    if (pred.shape() != target.shape() || pred.rank() != 1)
        throw DimensionError("l1_loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
    return mean(abs(sub(pred, target)));
}

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adam with bias correction. Weight decay, when non-zero, is added to the gradient.
/// Moments are kept in double regardless of the parameter type.
template <class Scalar>
class Adam {
public:
    Adam(ParameterList<Scalar> params, AdamOptions options = {}) : params_(std::move(params)), options_(options) {
        for (const auto& [name, t] : params_) {
            m_.push_back(Eigen::VectorXd::Zero(t.size()));
            v_.push_back(Eigen::VectorXd::Zero(t.size()));
        }
    }

    /// One update with learning rate `lr` using the gradients currently stored on the
    /// parameters (missing gradients count as zero).
    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].second;
            if (!p.has_grad() && options_.weight_decay == 0.0) {
                m_[i] *= options_.beta1;
                v_[i] *= options_.beta2;
            } else {
                Eigen::VectorXd g = p.grad_or_zero().template cast<double>();
                if (options_.weight_decay != 0.0) g += options_.weight_decay * p.value().template cast<double>();
                m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
                v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
            }
            auto& w = p.mutable_value();
            for (Index j = 0; j < w.size(); ++j) {
                const double mhat = m_[i][j] / bc1, vhat = v_[i][j] / bc2;
                w[j] = static_cast<Scalar>(static_cast<double>(w[j]) - lr * mhat / (std::sqrt(vhat) + options_.eps));
            }
        }
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`. Returns the norm before clipping.
    double clip_grad_norm(double max_norm) {
        double sq = 0.0;
        for (const auto& [name, t] : params_)
            if (t.has_grad()) sq += t.grad().template cast<double>().squaredNorm();
        const double norm = std::sqrt(sq);
        if (max_norm > 0.0 && norm > max_norm) {
            const double s = max_norm / (norm + 1e-12);
            for (auto& [name, t] : params_)
                if (t.has_grad()) t.node()->grad *= static_cast<Scalar>(s);
        }
        return norm;
    }

    const AdamOptions& options() const { return options_; }
    std::uint64_t steps() const { return t_; }
    const ParameterList<Scalar>& parameters() const { return params_; }
    const std::vector<Eigen::VectorXd>& first_moments() const { return m_; }
    const std::vector<Eigen::VectorXd>& second_moments() const { return v_; }

    void restore(std::uint64_t steps, std::vector<Eigen::VectorXd> m, std::vector<Eigen::VectorXd> v) {
        if (m.size() != params_.size() || v.size() != params_.size()) throw DimensionError("adam state does not match parameters");
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (m[i].size() != params_[i].second.size() || v[i].size() != params_[i].second.size())
                throw DimensionError("adam state shape mismatch for " + params_[i].first);
        t_ = steps;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    ParameterList<Scalar> params_;
    AdamOptions options_;
    std::vector<Eigen::VectorXd> m_, v_;
    std::uint64_t t_ = 0;
};

/// Cosine decay from `base` at step 0 to `final_fraction * base` at `total_steps`.
inline double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps, double final_fraction = 0.1) {
    if (total_steps == 0) return base;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    const double lo = final_fraction * base;
    return lo + 0.5 * (base - lo) * (1.0 + std::cos(std::numbers::pi * t));
}

} // namespace unifield
