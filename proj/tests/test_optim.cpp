#include "doctest.h"

#include "hypertrain/errors.hpp"
#include "hypertrain/optim.hpp"

#include <cmath>
#include <limits>

using namespace hypertrain;

TEST_CASE("zero gradient leaves parameters unchanged")
{
    AdamState state(3);
    Tensor params = Tensor::vector({1, -2, 3});
    adam_step(state, AdamConfig{}, params.data(), Tensor(Shape{3}).data());
    CHECK(params == Tensor::vector({1, -2, 3}));
    CHECK(state.t == 1);
}

TEST_CASE("first Adam step has magnitude alpha")
{
    const AdamConfig config{1e-4, 0.9, 0.999, 1e-8};
    for (double g : {10.0, -10.0, 0.5}) {
        AdamState state(1);
        Tensor params = Tensor::vector({0.0});
        adam_step(state, config, params.data(), Tensor::vector({g}).data());
        // m_hat = g, v_hat = g^2 after bias correction
        const double expected = -config.step_size * g / (std::abs(g) + config.epsilon);
        CHECK(std::abs(params[0] - expected) < 1e-12);
        if (std::abs(g) >= 10.0)
            CHECK(std::abs(std::abs(params[0]) - config.step_size) < 1e-12);
    }
}

TEST_CASE("Adam minimizes a scalar quadratic")
{
    AdamState state(1);
    Tensor x = Tensor::vector({1.0});
    for (int i = 0; i < 500; ++i)
        adam_step(state, AdamConfig{0.1}, x.data(), Tensor::vector({2.0 * x[0]}).data());
    CHECK(std::abs(x[0]) < 1e-3);
}

TEST_CASE("Adam updates are invariant to gradient scale in the long run")
{
    auto last_update = [](double g) {
        AdamState state(1);
        Tensor x = Tensor::vector({0.0});
        double before = 0.0;
        for (int i = 0; i < 1000; ++i) {
            before = x[0];
            adam_step(state, AdamConfig{1e-3}, x.data(), Tensor::vector({g}).data());
        }
        return x[0] - before;
    };
    const double u1 = last_update(0.3), u10 = last_update(3.0);
    CHECK(std::abs(u1 - u10) / std::abs(u1) < 1e-6);
}

TEST_CASE("non-finite gradient raises divergence with the step index")
{
    AdamState state(2);
    Tensor params = Tensor::vector({1, 1});
    adam_step(state, AdamConfig{}, params.data(), Tensor::vector({1, 1}).data());
    const Tensor before = params;
    try {
        adam_step(state, AdamConfig{}, params.data(),
                  Tensor::vector({1, std::numeric_limits<double>::quiet_NaN()}).data());
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration() == 2);
    }
    CHECK(params == before);
    CHECK(state.t == 1);
    CHECK_THROWS_AS(adam_step(state, AdamConfig{}, params.data(), Tensor(Shape{3}).data()), ShapeError);
}

TEST_CASE("plain SGD")
{
    Tensor p = Tensor::vector({1});
    sgd_step(p.data(), Tensor::vector({2}).data(), 0.0);
    CHECK(p[0] == 1.0);
    sgd_step(p.data(), Tensor::vector({2}).data(), 0.5);
    CHECK(p[0] == 0.0);

    // quadratic bowl: x_{k+1} = (1 - 2 alpha) x_k, reference recursion computed separately
    Tensor x = Tensor::vector({1.0, -3.0});
    double ref0 = 1.0, ref1 = -3.0;
    for (int i = 0; i < 200; ++i) {
        sgd_step(x.data(), Tensor::vector({2 * x[0], 2 * x[1]}).data(), 0.1);
        ref0 *= 0.8;
        ref1 *= 0.8;
    }
    CHECK(x[0] == doctest::Approx(ref0).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(ref1).epsilon(1e-12));
    CHECK(std::abs(x[1]) < 1e-15);
}

TEST_CASE("identical inputs give identical trajectories")
{
    auto run = [] {
        Adam opt(AdamConfig{0.01}, 2);
        Tensor x = Tensor::vector({0.3, -0.7});
        for (int i = 0; i < 100; ++i)
            opt.step(x, Tensor::vector({std::sin(x[0] * 3), x[1] * x[1] - 0.2}));
        return x;
    };
    CHECK(run() == run());
}
