#include "doctest.h"

#include "hypertrain/errors.hpp"
#include "hypertrain/tape.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>

using namespace hypertrain;

namespace {

double eval_const(const std::function<Var(const Var&)>& f, const Tensor& x)
{
    return f(Var::constant(x)).value().item();
}

Tensor tape_grad(const std::function<Var(const Var&)>& f, const Tensor& x)
{
    Tape tape;
    Var v = tape.variable(x);
    return tape.backward(f(v)).of(v);
}

} // namespace

TEST_CASE("matmul forward")
{
    Var a = Var::constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    Var b = Var::constant(Tensor::matrix(2, 1, {3, 4}));
    CHECK(matmul(a, b).value() == Tensor::matrix(2, 1, {3, 4}));

    Var c = Var::constant(Tensor::matrix(1, 2, {1, 2}));
    CHECK(matmul(c, b).value() == Tensor::matrix(1, 1, {11}));
}

TEST_CASE("matmul gradient matches finite differences")
{
    const Tensor b = Tensor::matrix(2, 1, {3, 4});
    auto f = [&](const Var& a) { return sum(matmul(a, Var::constant(b))); };
    const Tensor a0 = Tensor::matrix(1, 2, {1, 2});

    const Tensor fd = oracle::central_diff([&](const Tensor& a) { return eval_const(f, a); }, a0, 1e-6);
    CHECK(fd[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(fd[1] == doctest::Approx(4.0).epsilon(1e-8));

    const Tensor g = tape_grad(f, a0);
    CHECK(g.shape() == Shape{1, 2});
    CHECK(g[0] == 3.0);
    CHECK(g[1] == 4.0);
}

TEST_CASE("matmul shape mismatch names both shapes")
{
    Var a = Var::constant(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
    Var b = Var::constant(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[2x3] and [2x3]") != std::string::npos);
    }
}

TEST_CASE("elementwise forward values")
{
    CHECK(relu(Var::constant(Tensor::vector({-1, 0, 2}))).value() == Tensor::vector({0, 0, 2}));
    CHECK(exp(Var::constant(Tensor::vector({0}))).value() == Tensor::vector({1}));
    CHECK(tape_grad([](const Var& x) { return sum(square(x)); }, Tensor::vector({3}))[0] == 6.0);

    const Var a = Var::constant(Tensor::vector({1, 2}));
    const Var s = Var::constant(Tensor::scalar(3));
    CHECK((a * s).value() == Tensor::vector({3, 6}));
    CHECK((s - a).value() == Tensor::vector({2, 1}));
    CHECK_THROWS_AS(add(a, Var::constant(Tensor::vector({1, 2, 3}))), ShapeError);
}

TEST_CASE("elementwise dispatch by tag")
{
    const std::vector<Var> two{Var::constant(Tensor::vector({1, 2})), Var::constant(Tensor::vector({3, 5}))};
    CHECK(elementwise(ElementwiseOp::sub, two).value() == Tensor::vector({-2, -3}));
    CHECK(elementwise(ElementwiseOp::square, std::span(two).first(1)).value() == Tensor::vector({1, 4}));
    CHECK_THROWS_AS(elementwise(ElementwiseOp::relu, two), ShapeError);
}

TEST_CASE("relu subgradient at zero is zero")
{
    const Tensor g = tape_grad([](const Var& x) { return sum(relu(x)); }, Tensor::vector({-1, 0, 2}));
    CHECK(g == Tensor::vector({0, 0, 1}));
}

TEST_CASE("reductions")
{
    CHECK(mean(Var::constant(Tensor::vector({2, 4}))).value().item() == 3.0);
    CHECK_THROWS_AS(sum(Var::constant(Tensor::vector({}))), DomainError);
    CHECK_THROWS_AS(mean(Var::constant(Tensor::vector({}))), DomainError);
    CHECK(tape_grad([](const Var& x) { return mean(x); }, Tensor::vector({5, 7}))[0] == 0.5);
}

TEST_CASE("backward on simple losses")
{
    CHECK(tape_grad([](const Var& w) { return sum(w); }, Tensor::vector({1, 2, 3})) == Tensor::vector({1, 1, 1}));
    CHECK(tape_grad([](const Var& w) { return sum(square(w)); }, Tensor::vector({1, 2})) == Tensor::vector({2, 4}));
}

TEST_CASE("gradients accumulate across fan-out")
{
    const Tensor g = tape_grad([](const Var& w) { return sum(w) + sum(w); }, Tensor::vector({1, 2, 3}));
    CHECK(g == Tensor::vector({2, 2, 2}));
}

TEST_CASE("backward contract errors")
{
    Tape tape;
    Var w = tape.variable(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(square(w)), TapeError);

    Tape other;
    Var foreign = other.variable(Tensor::scalar(1));
    CHECK_THROWS_AS(tape.backward(foreign), TapeError);
    CHECK_THROWS_AS(w * foreign, TapeError);
    CHECK_THROWS_AS(tape.backward(Var::constant(Tensor::scalar(1))), TapeError);
}

TEST_CASE("constants receive no node and leaves are tracked")
{
    Tape tape;
    Var c = Var::constant(Tensor::vector({1, 2}));
    CHECK(c.is_constant());
    CHECK_FALSE(c.node_id().has_value());
    Var w = tape.variable(Tensor::vector({3, 4}));
    REQUIRE(w.node_id().has_value());
    Var loss = sum(w * c);
    const Gradients grads = tape.backward(loss);
    CHECK(grads.at(*w.node_id()) == Tensor::vector({1, 2}));
    CHECK(grads.of(c) == Tensor::vector({0, 0}));
    // constant-only arithmetic is not recorded
    const std::size_t before = tape.size();
    (void)(c + c);
    CHECK(tape.size() == before);
}

TEST_CASE("random two-layer MLP loss matches finite differences")
{
    std::mt19937_64 rng(7);
    const Tensor x = oracle::uniform({5, 4}, -2, 2, rng);
    const Tensor t = oracle::uniform({5, 3}, -1, 1, rng);
    const Tensor w1 = oracle::uniform({4, 6}, -1, 1, rng);
    const Tensor w2 = oracle::uniform({6, 3}, -1, 1, rng);

    auto loss = [&](const Var& a, const Var& b) {
        Var h = relu(matmul(Var::constant(x), a));
        return mean(square(matmul(h, b) - Var::constant(t)));
    };
    Tape tape;
    Var va = tape.variable(w1);
    Var vb = tape.variable(w2);
    const Gradients g = tape.backward(loss(va, vb));

    auto fa = [&](const Tensor& a) { return loss(Var::constant(a), Var::constant(w2)).value().item(); };
    auto fb = [&](const Tensor& b) { return loss(Var::constant(w1), Var::constant(b)).value().item(); };
    CHECK(oracle::max_relative_error(g.of(va), oracle::central_diff(fa, w1)) < 1e-5);
    CHECK(oracle::max_relative_error(g.of(vb), oracle::central_diff(fb, w2)) < 1e-5);
}

TEST_CASE("every op matches finite differences on random inputs")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = oracle::uniform({3, 4}, -2, 2, rng);
        const Tensor b = oracle::uniform({3, 4}, -2, 2, rng);
        const Tensor m = oracle::uniform({4, 2}, -2, 2, rng);
        const Tensor s = oracle::uniform({}, -2, 2, rng);
        bool near_kink = false;
        for (double v : a.data())
            near_kink |= std::abs(v) < 1e-3;

        std::vector<std::function<Var(const Var&)>> cases = {
            [&](const Var& v) { return sum(square(v + Var::constant(b))); },
            [&](const Var& v) { return sum(square(Var::constant(b) - v)); },
            [&](const Var& v) { return sum(v * Var::constant(b) * v); },
            [&](const Var& v) { return sum(exp(v)); },
            [&](const Var& v) { return mean(square(matmul(v, Var::constant(m)))); },
            [&](const Var& v) { return sum(square(v * Var::constant(s))); },
            [&](const Var& v) { return sum(square(slice(v, 2, {2, 3}))); },
            [&](const Var& v) { return mean(square(reshape(v, {4, 3}) - Var::constant(Tensor::filled({4, 3}, 0.5)))); },
            [&](const Var& v) { return sum(scale(exp(v), -0.3)); },
        };
        if (!near_kink)
            cases.push_back([&](const Var& v) { return sum(square(relu(v))); });

        for (const auto& f : cases) {
            const Tensor fd = oracle::central_diff([&](const Tensor& x) { return eval_const(f, x); }, a);
            CHECK(oracle::max_relative_error(tape_grad(f, a), fd) < 1e-5);
        }

        // gradient with respect to the broadcast scalar operand
        auto fs = [&](const Var& v) { return sum(square(Var::constant(a) * v)); };
        const Tensor fd = oracle::central_diff([&](const Tensor& x) { return eval_const(fs, x); }, s);
        CHECK(oracle::max_relative_error(tape_grad(fs, s), fd) < 1e-5);
    }
}

TEST_CASE("backward is bitwise deterministic")
{
    std::mt19937_64 rng(3);
    const Tensor x = oracle::uniform({8, 5}, -2, 2, rng);
    const Tensor w = oracle::uniform({5, 4}, -1, 1, rng);
    auto run = [&] {
        Tape tape;
        Var v = tape.variable(w);
        return tape.backward(mean(square(relu(matmul(Var::constant(x), v))))).of(v);
    };
    CHECK(run() == run());
}
