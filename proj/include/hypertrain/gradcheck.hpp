#pragma once

// Randomized validation of tape gradients against central finite differences.
//
// Configurations cycle through three kinds:
//   op          one primitive (matmul, elementwise, reduce, reshape, slice) under a random weighting
//   elementary  training loss of a model with 0-2 hidden layers, w.r.t. weights and lambda
//   hypernet    training and validation losses through a linear, factorized or mlp hypernetwork
// ReLU inputs within `relu_margin` of zero are avoided by redrawing the configuration.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hypertrain {

struct GradcheckSettings {
    std::size_t configs = 50;
    double step = 1e-5;
    double tolerance = 1e-5;
    /// Relative error is |a - b| / max(|a|, |b|, floor * max(1, |loss|)).
    double floor = 1e-5;
    double relu_margin = 1e-3;
    std::uint64_t seed = 0;
};

struct GradcheckCase {
    std::size_t index = 0;
    std::string kind;
    std::string description;
    std::size_t coordinates = 0; ///< gradient entries compared
    double max_rel_error = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckCase> cases;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    double seconds = 0.0;

    bool passed() const { return max_rel_error < tolerance; }
};

/// Runs every configuration; deterministic per seed apart from timing.
GradcheckReport gradcheck_suite(const GradcheckSettings& settings);

} // namespace hypertrain
