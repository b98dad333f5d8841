#include "doctest.h"

#include "hypertrain/errors.hpp"
#include "hypertrain/model.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>

using namespace hypertrain;

TEST_CASE("parameter counts")
{
    CHECK(param_count(ModelSpec::linear(784, 10)) == 7850);
    CHECK(param_count(ModelSpec{{3, 5, 2}}) == 3 * 5 + 5 + 5 * 2 + 2);
    CHECK_THROWS_AS(param_count(ModelSpec{{3}}), DomainError);
    CHECK_THROWS_AS(param_count(ModelSpec{{3, 0, 2}}), DomainError);
    CHECK_THROWS_AS(ElementaryWeights(ModelSpec::linear(2, 2), Tensor(Shape{5})), ShapeError);
}

TEST_CASE("forward examples")
{
    const ModelSpec spec = ModelSpec::linear(1, 1);
    const Tensor x = Tensor::matrix(1, 1, {3});
    CHECK(forward(ElementaryWeights(spec, Tensor::vector({2, 1})), x) == Tensor::matrix(1, 1, {7}));

    const ModelSpec deep{{4, 3, 2}};
    std::mt19937_64 rng(1);
    const Tensor xs = oracle::uniform({6, 4}, -1, 1, rng);
    CHECK(forward(ElementaryWeights::zeros(deep), xs) == Tensor(Shape{6, 2}));

    CHECK_THROWS_AS(forward(ElementaryWeights::zeros(deep), Tensor::matrix(1, 3, {1, 2, 3})), ShapeError);
}

TEST_CASE("flattening order is weight matrix row-major then bias, per layer")
{
    // 2 -> 2 -> 1 with hand-computed output
    const ModelSpec spec{{2, 2, 1}};
    // W1 = [[1, 2], [3, 4]] (rows = inputs), b1 = [0.5, -100], W2 = [[2], [5]], b2 = [1]
    const ElementaryWeights w(spec, Tensor::vector({1, 2, 3, 4, 0.5, -100, 2, 5, 1}));
    const Tensor y = forward(w, Tensor::matrix(1, 2, {1, 1}));
    // h = relu([1+3+0.5, 2+4-100]) = [4.5, 0]; y = 4.5*2 + 0*5 + 1
    CHECK(y.item() == doctest::Approx(10.0));
}

TEST_CASE("prediction loss")
{
    const ModelSpec spec = ModelSpec::linear(1, 2);
    const ElementaryWeights w(spec, Tensor::vector({0, 0, 1, 0}));  // y = [1, 0] for any x
    const Batch batch{Tensor::matrix(1, 1, {7}), Tensor::matrix(1, 2, {0, 0})};
    CHECK(pred_loss(w, batch) == doctest::Approx(0.5));

    const Batch exact{Tensor::matrix(1, 1, {7}), Tensor::matrix(1, 2, {1, 0})};
    CHECK(pred_loss(w, exact) == 0.0);

    const Batch empty{Tensor(Shape{0, 1}), Tensor(Shape{0, 2})};
    CHECK_THROWS_AS(pred_loss(w, empty), DomainError);
    const Batch wrong{Tensor::matrix(1, 1, {7}), Tensor::matrix(1, 3, {0, 0, 0})};
    CHECK_THROWS_AS(pred_loss(w, wrong), ShapeError);
}

TEST_CASE("prediction loss matches a naive double loop")
{
    std::mt19937_64 rng(5);
    const ModelSpec spec = ModelSpec::linear(3, 2);
    const Tensor flat = oracle::uniform({8}, -1, 1, rng);
    const Tensor x = oracle::uniform({4, 3}, -1, 1, rng);
    const Tensor t = oracle::uniform({4, 2}, -1, 1, rng);

    double acc = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
            double y = flat[6 + c];
            for (std::size_t i = 0; i < 3; ++i)
                y += x.at(r, i) * flat[i * 2 + c];
            acc += (y - t.at(r, c)) * (y - t.at(r, c));
        }
    }
    CHECK(pred_loss(ElementaryWeights(spec, flat), Batch{x, t}) == doctest::Approx(acc / 8.0).epsilon(1e-14));
}

TEST_CASE("regularization loss")
{
    const ModelSpec spec = ModelSpec::linear(1, 1);
    const RegSpec scalar{RegMode::scalar};
    const RegSpec per_weight{RegMode::per_weight};
    CHECK(reg_loss(ElementaryWeights::zeros(spec), Tensor::vector({3}), scalar) == 0.0);
    CHECK(reg_loss(ElementaryWeights(spec, Tensor::vector({1, 2})), Tensor::vector({0}), scalar) == 5.0);
    CHECK(reg_loss(ElementaryWeights(spec, Tensor::vector({1, 1})), Tensor::vector({std::log(2.0), std::log(3.0)}),
                   per_weight) == doctest::Approx(5.0));
    CHECK_THROWS_AS(reg_loss(ElementaryWeights(spec, Tensor::vector({1, 1})), Tensor::vector({0, 0}), scalar),
                    ShapeError);
    CHECK_THROWS_AS(reg_loss(ElementaryWeights(spec, Tensor::vector({1, 1})), Tensor::vector({0}), per_weight),
                    ShapeError);
    CHECK(scalar.hyper_dim(ModelSpec::linear(784, 10)) == 1);
    CHECK(per_weight.hyper_dim(ModelSpec::linear(784, 10)) == 7850);
}

TEST_CASE("training loss")
{
    std::mt19937_64 rng(9);
    const ModelSpec spec{{3, 4, 2}};
    const RegSpec reg{RegMode::scalar};
    const ElementaryWeights w(spec, oracle::uniform({param_count(spec)}, -1, 1, rng));
    const Batch batch{oracle::uniform({5, 3}, -1, 1, rng), oracle::uniform({5, 2}, -1, 1, rng)};

    SUBCASE("vanishing penalty")
    {
        CHECK(std::abs(train_loss(w, Tensor::vector({-30}), reg, batch) - pred_loss(w, batch)) < 1e-9);
    }
    SUBCASE("zero weights give the mean squared target")
    {
        double mean_sq = 0.0;
        for (double v : batch.t.data())
            mean_sq += v * v;
        mean_sq /= static_cast<double>(batch.t.size());
        CHECK(train_loss(ElementaryWeights::zeros(spec), Tensor::vector({1.0}), reg, batch) ==
              doctest::Approx(mean_sq).epsilon(1e-14));
    }
    SUBCASE("sum of parts")
    {
        const Tensor lam = Tensor::vector({0.3});
        CHECK(train_loss(w, lam, reg, batch) == pred_loss(w, batch) + reg_loss(w, lam, reg));
    }
}

TEST_CASE("d train_loss / d lambda_i = exp(lambda_i) w_i^2")
{
    std::mt19937_64 rng(21);
    const ModelSpec spec{{3, 2}};
    const std::size_t n = param_count(spec);
    const Tensor flat = oracle::uniform({n}, -1, 1, rng);
    const Tensor lambda = oracle::uniform({n}, -2, 2, rng);
    const Batch batch{oracle::uniform({4, 3}, -1, 1, rng), oracle::uniform({4, 2}, -1, 1, rng)};

    Tape tape;
    Var lam = tape.variable(lambda);
    const Gradients g = tape.backward(train_loss(spec, RegSpec{RegMode::per_weight}, Var::constant(flat), lam, batch));
    const Tensor grad = g.of(lam);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(oracle::relative_error(grad[i], std::exp(lambda[i]) * flat[i] * flat[i], 1e-300) < 1e-8);
}

TEST_CASE("training loss never falls below prediction loss")
{
    std::mt19937_64 rng(4);
    const ModelSpec spec{{2, 3, 1}};
    for (int trial = 0; trial < 50; ++trial) {
        const ElementaryWeights w(spec, oracle::uniform({param_count(spec)}, -3, 3, rng));
        const Batch batch{oracle::uniform({3, 2}, -2, 2, rng), oracle::uniform({3, 1}, -2, 2, rng)};
        const Tensor lam = oracle::uniform({1}, -10, 10, rng);
        CHECK(train_loss(w, lam, RegSpec{}, batch) >= pred_loss(w, batch));
    }
}

TEST_CASE("linear model is affine in its input")
{
    std::mt19937_64 rng(8);
    const ModelSpec spec = ModelSpec::linear(4, 3);
    const ElementaryWeights w(spec, oracle::uniform({param_count(spec)}, -1, 1, rng));
    const Tensor x1 = oracle::uniform({1, 4}, -1, 1, rng);
    const Tensor x2 = oracle::uniform({1, 4}, -1, 1, rng);
    const double alpha = 0.7, beta = -1.9;
    Tensor mix(Shape{1, 4});
    for (std::size_t i = 0; i < 4; ++i)
        mix[i] = alpha * x1[i] + beta * x2[i];
    const Tensor y1 = forward(w, x1), y2 = forward(w, x2), ym = forward(w, mix);
    for (std::size_t c = 0; c < 3; ++c) {
        const double bias = w.flat()[12 + c];
        CHECK(std::abs(ym[c] - (alpha * y1[c] + beta * y2[c] - (alpha + beta - 1.0) * bias)) < 1e-12);
    }
}

TEST_CASE("accuracy counts argmax agreement")
{
    const ModelSpec spec = ModelSpec::linear(1, 2);
    const ElementaryWeights w(spec, Tensor::vector({1, -1, 0, 0}));  // y = [x, -x]
    const Batch batch{Tensor::matrix(3, 1, {1, -1, 2}), Tensor::matrix(3, 2, {1, 0, 1, 0, 1, 0})};
    CHECK(accuracy(w, batch) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("random init has zero biases and fan-in bounds")
{
    Rng rng(3);
    const ModelSpec spec{{16, 4, 2}};
    const ElementaryWeights w = ElementaryWeights::random(spec, rng);
    for (std::size_t i = 0; i < 64; ++i)
        CHECK(std::abs(w.flat()[i]) <= 0.25);
    for (std::size_t i = 64; i < 68; ++i)
        CHECK(w.flat()[i] == 0.0);
    CHECK(w.flat()[param_count(spec) - 1] == 0.0);
}
