#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "unifield/tensor.hpp"

namespace unifield {

/// Outcome of comparing reverse-mode gradients with central finite differences.
struct GradcheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::string worst;  // "<name>[index]" plus both derivative values for the element with the largest relative error
};

struct GradcheckOptions {
    double epsilon = 1e-5;
    /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    /// Check at most this many elements per tensor (evenly strided); 0 = all.
    std::size_t max_per_tensor = 0;
    /// Five-point stencil (truncation error O(eps^4)) instead of the two-point one.
    bool fourth_order = false;
};

using NamedTensor = std::pair<std::string, Tensor<double>>;

/// `loss` must rebuild the graph from the current values of `inputs` on every call and
/// return a scalar. Input values are restored after perturbation.
inline GradcheckResult gradcheck(const std::function<Tensor<double>()>& loss, std::vector<NamedTensor> inputs,
                                 const GradcheckOptions& options = {}) {
    for (auto& [name, t] : inputs) t.zero_grad();
    loss().backward();

    GradcheckResult result;
    for (auto& [name, t] : inputs) {
        const Tensor<double>::Vector analytic = t.grad_or_zero();
        const Index n = t.size();
        Index stride = 1;
        if (options.max_per_tensor > 0 && static_cast<std::size_t>(n) > options.max_per_tensor) {
            stride = (n + static_cast<Index>(options.max_per_tensor) - 1) / static_cast<Index>(options.max_per_tensor);
        }
        for (Index i = 0; i < n; i += stride) {
            double& slot = t.mutable_value()[i];
            const double original = slot;
            auto at = [&](double offset) {
                slot = original + offset;
                return static_cast<double>(loss().item());
            };
            double numeric = 0.0;
            {
                NoGradGuard guard;
                const double h = options.epsilon;
                if (options.fourth_order)
                    numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
                else
                    numeric = (at(h) - at(-h)) / (2.0 * h);
            }
            slot = original;
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
            const double rel = abs_err / denom;
            ++result.checked;
            result.max_abs_error = std::max(result.max_abs_error, abs_err);
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                char buf[64];
                std::snprintf(buf, sizeof buf, " analytic %.6e numeric %.6e", analytic[i], numeric);
                result.worst = name + "[" + std::to_string(i) + "]" + buf;
            }
        }
    }
    return result;
}

} // namespace unifield
