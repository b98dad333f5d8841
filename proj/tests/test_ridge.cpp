#include "doctest.h"

#include "hypertrain/errors.hpp"
#include "hypertrain/ridge.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace hypertrain;

TEST_CASE("sum-form ridge solution")
{
    // (I + I)^{-1} e1 = e1 / 2
    Tensor eye(Shape{3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        eye.at(i, i) = 1.0;
    const Tensor theta = ridge_solve(eye, Tensor::matrix(3, 1, {1, 0, 0}), Tensor::scalar(std::exp(0.0)));
    CHECK(theta.at(0, 0) == doctest::Approx(0.5));
    CHECK(theta.at(1, 0) == doctest::Approx(0.0));
    CHECK(theta.at(2, 0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(ridge_solve(eye, Tensor::matrix(2, 1, {1, 0}), Tensor::scalar(1)), ShapeError);
}

TEST_CASE("ridge best response against a Gauss-Jordan oracle")
{
    const RidgeProblem problem = make_ridge_problem(RidgeConfig{}, 4);
    const std::size_t n = problem.train.rows(), d = problem.train.input_dim();
    for (double lam : {-3.0, 0.0, 2.5}) {
        std::vector<std::vector<double>> a(d + 1, std::vector<double>(d + 1, 0.0));
        std::vector<double> b(d + 1, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            std::vector<double> z(d + 1, 1.0);
            for (std::size_t i = 0; i < d; ++i)
                z[i] = problem.train.x.at(r, i);
            for (std::size_t i = 0; i <= d; ++i) {
                b[i] += z[i] * problem.train.t.at(r, 0);
                for (std::size_t j = 0; j <= d; ++j)
                    a[i][j] += z[i] * z[j];
            }
        }
        for (std::size_t i = 0; i <= d; ++i)
            a[i][i] += static_cast<double>(n) * std::exp(lam);
        const std::vector<double> ref = oracle::solve(a, b);
        const Tensor w = ridge_best_response(problem.train, Tensor::vector({lam})).flat();
        for (std::size_t i = 0; i <= d; ++i)
            CHECK(std::abs(w[i] - ref[i]) <= 1e-9 * (1.0 + std::abs(ref[i])));
    }
}

TEST_CASE("infinite penalty drives the best response to zero")
{
    const RidgeProblem problem = make_ridge_problem(RidgeConfig{}, 1);
    CHECK(ridge_best_response(problem.train, Tensor::vector({30})).flat().norm() < 1e-8);
}

TEST_CASE("best response is stationary for the mean-form training loss")
{
    const RidgeProblem problem = make_ridge_problem(RidgeConfig{}, 2);
    const ModelSpec spec = problem.model();
    for (double lam : {-4.0, 0.0, 3.0}) {
        const Tensor lambda = Tensor::vector({lam});
        const ElementaryWeights w = ridge_best_response(problem.train, lambda);
        Tape tape;
        Var v = tape.variable(w.flat());
        const Tensor g = tape.backward(train_loss(spec, RegSpec{}, v, Var::constant(lambda), problem.train.batch())).of(v);
        CHECK(g.norm() < 1e-8);
    }
}

TEST_CASE("per-weight best response is stationary")
{
    const RidgeProblem problem = make_ridge_problem(RidgeConfig{}, 3);
    const ModelSpec spec = problem.model();
    Tensor lambda(Shape{param_count(spec)});
    for (std::size_t i = 0; i < lambda.size(); ++i)
        lambda[i] = -2.0 + 0.2 * static_cast<double>(i);
    const ElementaryWeights w = ridge_best_response(problem.train, lambda);
    Tape tape;
    Var v = tape.variable(w.flat());
    const Tensor g =
        tape.backward(train_loss(spec, RegSpec{RegMode::per_weight}, v, Var::constant(lambda), problem.train.batch()))
            .of(v);
    CHECK(g.norm() < 1e-8);
}

TEST_CASE("multi-output best response is stationary")
{
    Tensor x = Tensor::matrix(4, 2, {1, 2, -1, 0.5, 0.3, -2, 2, 1});
    Tensor t = Tensor::matrix(4, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0});
    const Dataset train(x, t, Split::train);
    const Tensor lambda = Tensor::vector({-1.0});
    const ElementaryWeights w = ridge_best_response(train, lambda);
    Tape tape;
    Var v = tape.variable(w.flat());
    const Tensor g =
        tape.backward(train_loss(ModelSpec::linear(2, 3), RegSpec{}, v, Var::constant(lambda), train.batch())).of(v);
    CHECK(g.norm() < 1e-10);
}

TEST_CASE("implicit derivative matches finite differences")
{
    const RidgeProblem problem = make_ridge_problem(RidgeConfig{}, 5);
    for (double lam : {-2.0, 1.0, 4.0}) {
        const Tensor analytic = ridge_best_response_derivative(problem.train, lam);
        const double h = 1e-5;
        const Tensor up = ridge_best_response(problem.train, Tensor::vector({lam + h})).flat();
        const Tensor down = ridge_best_response(problem.train, Tensor::vector({lam - h})).flat();
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double fd = (up[i] - down[i]) / (2 * h);
            CHECK(std::abs(fd - analytic[i]) < 1e-6 * std::max(1.0, std::abs(analytic[i])));
        }
    }
}

TEST_CASE("generated problem structure")
{
    const RidgeConfig config;
    const RidgeProblem p = make_ridge_problem(config, 7);
    CHECK(p.train.rows() == 15);
    CHECK(p.train.input_dim() == 20);
    CHECK(p.valid.rows() == 100);
    double t_sum = 0.0;
    for (double v : p.train.t.data())
        t_sum += v;
    CHECK(std::abs(t_sum) < 1e-9);
    for (std::size_t c = 0; c < 20; ++c) {
        double col = 0.0;
        for (std::size_t r = 0; r < 15; ++r)
            col += p.train.x.at(r, c);
        CHECK(std::abs(col) < 1e-9);
    }
    // centered data: the bias of the best response vanishes at every lambda
    for (double lam : {-5.0, 0.0, 5.0})
        CHECK(std::abs(ridge_best_response(p.train, Tensor::vector({lam})).flat()[20]) < 1e-10);
    CHECK(make_ridge_problem(config, 7).valid.x == p.valid.x);
}

TEST_CASE("validation optimum lies inside the search range")
{
    const RidgeProblem p = make_ridge_problem(RidgeConfig{}, 0);
    const GridOptimum best = ridge_validation_optimum(p);
    CHECK(best.lambda > -10.0);
    CHECK(best.lambda < 10.0);
    const auto curve = ridge_validation_curve(p, {best.lambda - 1.0, best.lambda, best.lambda + 1.0});
    CHECK(curve[1] <= curve[0]);
    CHECK(curve[1] <= curve[2]);
}
