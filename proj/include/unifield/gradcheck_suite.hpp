#pragma once

#include <string>
#include <vector>

#include "unifield/gradcheck.hpp"

namespace unifield {

struct GradcheckCase {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;
    std::string worst;
    bool passed() const { return max_rel_error < tolerance; }
};

struct GradcheckSuiteOptions {
    double op_tolerance = 1e-4;
    double model_tolerance = 1e-3;
    Index model_stages = 2;
    Index model_channels = 4;
    Index model_points = 32;
    std::uint64_t seed = 0;
};

/// Finite-difference checks, in 64-bit, of every differentiable op and layer followed by
/// the end-to-end model (last entry).
std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

} // namespace unifield
