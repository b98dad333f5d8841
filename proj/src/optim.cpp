#include "hypertrain/optim.hpp"

#include "hypertrain/errors.hpp"

#include <cmath>

namespace hypertrain {

void adam_step(AdamState& state, const AdamConfig& config, std::span<double> params, std::span<const double> grad)
{
    if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam: params, gradient and state sizes disagree (" + std::to_string(params.size()) + ", " +
                         std::to_string(grad.size()) + ", " + std::to_string(state.m.size()) + ")");
    for (double g : grad)
        if (!std::isfinite(g))
            throw DivergenceError("adam", state.t + 1);

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    auto m = state.m.data();
    auto v = state.v.data();
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        params[i] -= config.step_size * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

void sgd_step(std::span<double> params, std::span<const double> grad, double step_size)
{
    if (params.size() != grad.size())
        throw ShapeError("sgd: params and gradient sizes disagree");
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= step_size * grad[i];
}

} // namespace hypertrain
