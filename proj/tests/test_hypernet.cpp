#include "doctest.h"

#include "hypertrain/errors.hpp"
#include "hypertrain/hypernet.hpp"
#include "hypertrain/rng.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>
#include <string>

using namespace hypertrain;

TEST_CASE("hypernetwork parameter counts")
{
    CHECK(param_count(HypernetSpec::linear(1, 7850)) == 15'700);
    CHECK(param_count(HypernetSpec::factorized(7850, 10, 7850)) == 164'860);
    CHECK(param_count(HypernetSpec::mlp(1, 50, 7850)) == 400'450);
    CHECK(param_count(HypernetSpec::linear(3, 4)) == 3 * 4 + 4);
    CHECK_THROWS_AS(param_count(HypernetSpec::mlp(1, 0, 4)), DomainError);
}

TEST_CASE("linear emission")
{
    const HypernetSpec spec = HypernetSpec::linear(2, 3);
    const ModelSpec model = ModelSpec::linear(1, 1);
    (void)model;
    SUBCASE("zero parameters emit zero weights")
    {
        const Var out = emit(spec, Var::constant(Tensor(Shape{param_count(spec)})), Var::constant(Tensor::vector({4, -2})));
        CHECK(out.value() == Tensor(Shape{3}));
    }
    SUBCASE("emit is lambda W + b")
    {
        // W = [[1, 2, 3], [4, 5, 6]], b = [0.5, 0, -1]
        const Tensor phi = Tensor::vector({1, 2, 3, 4, 5, 6, 0.5, 0, -1});
        const Var out = emit(spec, Var::constant(phi), Var::constant(Tensor::vector({2, -1})));
        CHECK(out.value() == Tensor::vector({2 - 4 + 0.5, 4 - 5 + 0.0, 6 - 6 - 1.0}));
    }
    SUBCASE("wrong hyperparameter count")
    {
        CHECK_THROWS_AS(emit(spec, Var::constant(Tensor(Shape{9})), Var::constant(Tensor::vector({1}))), ShapeError);
    }
}

TEST_CASE("emission into a model checks the output width")
{
    const HypernetParams params = HypernetParams::init(HypernetSpec::linear(1, 4), 1);
    CHECK(emit(params, HyperPoint::filled(1, 0.0), ModelSpec::linear(1, 2)).flat().size() == 4);
    CHECK_THROWS_AS(emit(params, HyperPoint::filled(1, 0.0), ModelSpec::linear(2, 2)), ShapeError);
}

TEST_CASE("initialization")
{
    const HypernetSpec spec = HypernetSpec::mlp(3, 8, 5);
    CHECK(HypernetParams::init(spec, 42).flat() == HypernetParams::init(spec, 42).flat());
    CHECK_FALSE(HypernetParams::init(spec, 42).flat() == HypernetParams::init(spec, 43).flat());

    const HypernetParams lin = HypernetParams::init(HypernetSpec::linear(4, 6), 7);
    const Var out = emit(lin.spec(), Var::constant(lin.flat()), Var::constant(Tensor(Shape{4})));
    CHECK(out.value() == Tensor(Shape{6}));

    // every architecture starts the elementary model at zero when lambda = 0
    for (const auto& s : {HypernetSpec::factorized(3, 2, 5), HypernetSpec::mlp(3, 4, 5)}) {
        const HypernetParams p = HypernetParams::init(s, 3);
        CHECK(emit(s, Var::constant(p.flat()), Var::constant(Tensor(Shape{3}))).value() == Tensor(Shape{5}));
    }
}

TEST_CASE("initial norm grows like sqrt(param_count)")
{
    // ratio norm / sqrt(count) stays within a factor 2 across widths and seeds
    double lo = 1e300, hi = 0.0;
    for (std::size_t out : {10u, 100u, 1000u}) {
        const HypernetSpec spec = HypernetSpec::linear(2, out);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const double ratio = HypernetParams::init(spec, seed).flat().norm() /
                                 std::sqrt(static_cast<double>(param_count(spec)));
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
    }
    CHECK(hi / lo < 2.0);
}

TEST_CASE("linear emission is affine in lambda")
{
    std::mt19937_64 rng(12);
    const HypernetSpec spec = HypernetSpec::linear(3, 7);
    const Var phi = Var::constant(oracle::uniform({param_count(spec)}, -1, 1, rng));
    const Tensor l1 = oracle::uniform({3}, -2, 2, rng), l2 = oracle::uniform({3}, -2, 2, rng),
                 l3 = oracle::uniform({3}, -2, 2, rng);
    const double a = 0.3, b = -1.2, c = 1.0 - a - b;  // affine combination
    Tensor mix(Shape{3});
    for (std::size_t i = 0; i < 3; ++i)
        mix[i] = a * l1[i] + b * l2[i] + c * l3[i];
    const Tensor e1 = emit(spec, phi, Var::constant(l1)).value();
    const Tensor e2 = emit(spec, phi, Var::constant(l2)).value();
    const Tensor e3 = emit(spec, phi, Var::constant(l3)).value();
    const Tensor em = emit(spec, phi, Var::constant(mix)).value();
    for (std::size_t i = 0; i < 7; ++i)
        CHECK(std::abs(em[i] - (a * e1[i] + b * e2[i] + c * e3[i])) < 1e-12);
}

TEST_CASE("emission Jacobian matches finite differences for every architecture")
{
    std::mt19937_64 rng(19);
    for (const HypernetSpec& spec :
         {HypernetSpec::linear(3, 5), HypernetSpec::factorized(3, 2, 5), HypernetSpec::mlp(3, 6, 5)}) {
        const Tensor phi = oracle::uniform({param_count(spec)}, -1, 1, rng);
        const Tensor lambda = oracle::uniform({3}, -2, 2, rng);
        const Tensor probe = oracle::uniform({5}, -1, 1, rng);
        // contract the Jacobian with a random vector; d/dlambda of probe . emit
        auto contracted = [&](const Var& p, const Var& l) { return sum(emit(spec, p, l) * Var::constant(probe)); };

        Tape tape;
        Var vp = tape.variable(phi);
        Var vl = tape.variable(lambda);
        const Gradients g = tape.backward(contracted(vp, vl));

        const Tensor fd_l = oracle::central_diff(
            [&](const Tensor& l) { return contracted(Var::constant(phi), Var::constant(l)).value().item(); }, lambda);
        const Tensor fd_p = oracle::central_diff(
            [&](const Tensor& p) { return contracted(Var::constant(p), Var::constant(lambda)).value().item(); }, phi);
        CHECK(oracle::max_relative_error(g.of(vl), fd_l) < 1e-5);
        CHECK(oracle::max_relative_error(g.of(vp), fd_p) < 1e-5);
    }
}

TEST_CASE("checkpoint serialization")
{
    const HypernetParams params = HypernetParams::init(HypernetSpec::factorized(4, 3, 6), 5);
    const auto bytes = serialize(params);
    CHECK(bytes.size() == 44 + 8 * param_count(params.spec()));
    CHECK(bytes[0] == 'H');
    const HypernetParams back = deserialize_hypernet(bytes);
    CHECK(back.spec() == params.spec());
    CHECK(back.flat() == params.flat());
    CHECK(serialize(back) == bytes);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(deserialize_hypernet(truncated), FormatError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_hypernet(bad), FormatError);
}

TEST_CASE("elementary weights checkpoint")
{
    Rng rng = make_rng(3, "weights");
    const ModelSpec spec{{4, 3, 2}};
    const ElementaryWeights w = ElementaryWeights::random(spec, rng);
    const auto bytes = serialize(w);
    // magic, version, layer count, three sizes, value count, values
    CHECK(bytes.size() == 4 + 4 + 8 + 3 * 8 + 8 + 8 * w.flat().size());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HTEW");
    const ElementaryWeights back = deserialize_weights(bytes);
    CHECK(back.spec().layer_sizes == spec.layer_sizes);
    CHECK(back.flat() == w.flat());

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_weights(truncated), FormatError);
    auto wrong_count = bytes;
    wrong_count[4 + 4 + 8 + 3 * 8] += 1;
    CHECK_THROWS_AS(deserialize_weights(wrong_count), FormatError);
    CHECK_THROWS_AS(deserialize_weights(serialize(HypernetParams::init(HypernetSpec::linear(1, 2), 0))), FormatError);
}
