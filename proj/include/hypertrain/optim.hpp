#pragma once

#include "hypertrain/tensor.hpp"

#include <cstddef>
#include <span>

namespace hypertrain {

struct AdamConfig {
    double step_size = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Tensor m;
    Tensor v;
    std::size_t t = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(Shape{n}), v(Shape{n}) {}
};

/// One bias-corrected Adam update of `params` in place. Throws
/// DivergenceError (phase "adam", iteration = the step about to be taken) on a
/// non-finite gradient; state and params are left untouched in that case.
void adam_step(AdamState& state, const AdamConfig& config, std::span<double> params, std::span<const double> grad);

/// params -= step_size * grad
void sgd_step(std::span<double> params, std::span<const double> grad, double step_size);

/// Convenience owner of a parameter vector and its Adam state.
class Adam {
public:
    Adam(AdamConfig config, std::size_t n) : config_(config), state_(n) {}

    void step(Tensor& params, const Tensor& grad) { adam_step(state_, config_, params.data(), grad.data()); }

    const AdamConfig& config() const { return config_; }
    const AdamState& state() const { return state_; }
    std::size_t steps() const { return state_.t; }

private:
    AdamConfig config_;
    AdamState state_;
};

} // namespace hypertrain
