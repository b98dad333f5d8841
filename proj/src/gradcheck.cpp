#include "hypertrain/gradcheck.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/hypernet.hpp"
#include "hypertrain/model.hpp"
#include "hypertrain/rng.hpp"
#include "hypertrain/tape.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>

namespace hypertrain {

namespace {

using Objective = std::function<Var(const std::vector<Var>&)>;

constexpr std::size_t max_redraws = 200;

Tensor uniform(Shape shape, double lo, double hi, Rng& rng)
{
    Tensor out(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : out.data())
        v = dist(rng);
    return out;
}

std::size_t pick(std::size_t lo, std::size_t hi, Rng& rng)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double min_abs(const Tensor& t)
{
    double out = std::numeric_limits<double>::infinity();
    for (double v : t.data())
        out = std::min(out, std::abs(v));
    return out;
}

// Smallest |pre-activation| over the hidden layers: the output of a prefix of
// the model is the pre-activation of its last layer, since outputs are linear.
double hidden_margin(const ModelSpec& spec, const Tensor& flat, const Tensor& x)
{
    double out = std::numeric_limits<double>::infinity();
    for (std::size_t l = 1; l + 1 < spec.layer_sizes.size(); ++l) {
        ModelSpec prefix{{spec.layer_sizes.begin(), spec.layer_sizes.begin() + static_cast<std::ptrdiff_t>(l) + 1}};
        const std::size_t count = param_count(prefix);
        Tensor head(Shape{count}, std::vector<double>(flat.values().begin(), flat.values().begin() + static_cast<std::ptrdiff_t>(count)));
        out = std::min(out, min_abs(forward(ElementaryWeights(prefix, std::move(head)), x)));
    }
    return out;
}

GradcheckCase compare(const Objective& f, const std::vector<Tensor>& leaves, const GradcheckSettings& s)
{
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : leaves)
            vars.push_back(tape.variable(t));
        const Gradients grads = tape.backward(f(vars));
        for (const auto& v : vars)
            analytic.push_back(grads.of(v));
    }

    auto value = [&](const std::vector<Tensor>& at) {
        std::vector<Var> vars;
        for (const auto& t : at)
            vars.push_back(Var::constant(t));
        return f(vars).value().item();
    };

    // Central differences carry an absolute rounding error near eps |f| / step,
    // so entries far below the loss value are compared on the loss scale.
    const double floor = s.floor * std::max(1.0, std::abs(value(leaves)));
    GradcheckCase out;
    std::vector<Tensor> probe = leaves;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        for (std::size_t i = 0; i < leaves[l].size(); ++i) {
            const double orig = probe[l][i];
            probe[l][i] = orig + s.step;
            const double up = value(probe);
            probe[l][i] = orig - s.step;
            const double down = value(probe);
            probe[l][i] = orig;
            const double fd = (up - down) / (2.0 * s.step);
            const double a = analytic[l][i];
            const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
            out.max_rel_error = std::max(out.max_rel_error, std::isfinite(err) ? err : 1e300);
            ++out.coordinates;
        }
    }
    return out;
}

// loss = sum(c * y) + 0.5 * sum(y^2): a non-uniform upstream gradient.
Var weighted(const Var& y, const Tensor& c) { return sum(mul(y, Var::constant(c))) + scale(sum(square(y)), 0.5); }

GradcheckCase op_case(std::size_t which, Rng& rng, const GradcheckSettings& s)
{
    const std::size_t m = pick(1, 4, rng), k = pick(1, 4, rng), n = pick(1, 4, rng);
    const Shape shape{m, n};
    auto away_from_kink = [&](Tensor t) {
        for (auto& v : t.data())
            while (std::abs(v) < s.relu_margin)
                v = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
        return t;
    };

    std::string name;
    std::vector<Tensor> leaves;
    std::function<Var(const std::vector<Var>&)> op;
    switch (which % 14) {
    case 0:
        name = "matmul";
        leaves = {uniform(Shape{m, k}, -2, 2, rng), uniform(Shape{k, n}, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return matmul(v[0], v[1]); };
        break;
    case 1:
        name = "add";
        leaves = {uniform(shape, -2, 2, rng), uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return add(v[0], v[1]); };
        break;
    case 2:
        name = "sub";
        leaves = {uniform(shape, -2, 2, rng), uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return sub(v[0], v[1]); };
        break;
    case 3:
        name = "mul";
        leaves = {uniform(shape, -2, 2, rng), uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return mul(v[0], v[1]); };
        break;
    case 4:
        name = "relu";
        leaves = {away_from_kink(uniform(shape, -2, 2, rng))};
        op = [](const std::vector<Var>& v) { return relu(v[0]); };
        break;
    case 5:
        name = "exp";
        leaves = {uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return exp(v[0]); };
        break;
    case 6:
        name = "square";
        leaves = {uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return square(v[0]); };
        break;
    case 7:
        name = "sum";
        leaves = {uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return sum(v[0]); };
        break;
    case 8:
        name = "mean";
        leaves = {uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return mean(v[0]); };
        break;
    case 9:
        name = "scale";
        leaves = {uniform(shape, -2, 2, rng)};
        op = [f = std::uniform_real_distribution<double>(-2.0, 2.0)(rng)](const std::vector<Var>& v) {
            return scale(v[0], f);
        };
        break;
    case 10:
        name = "reshape";
        leaves = {uniform(shape, -2, 2, rng)};
        op = [m, n](const std::vector<Var>& v) { return reshape(v[0], Shape{n, m}); };
        break;
    case 11: {
        name = "slice";
        leaves = {uniform(Shape{m * n + 3}, -2, 2, rng)};
        const std::size_t offset = pick(0, 3, rng);
        op = [offset, m, n](const std::vector<Var>& v) { return slice(v[0], offset, Shape{m, n}); };
        break;
    }
    case 12:
        name = "add scalar";
        leaves = {uniform(Shape{1}, -2, 2, rng), uniform(shape, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return add(v[0], v[1]); };
        break;
    default:
        name = "mul scalar";
        leaves = {uniform(shape, -2, 2, rng), uniform(Shape{1}, -2, 2, rng)};
        op = [](const std::vector<Var>& v) { return mul(v[0], v[1]); };
        break;
    }
    // the weighting matches the op's output shape, found by a constant evaluation
    std::vector<Var> consts;
    for (const auto& t : leaves)
        consts.push_back(Var::constant(t));
    const Tensor c = uniform(op(consts).shape(), -2, 2, rng);

    GradcheckCase out = compare([&](const std::vector<Var>& v) { return weighted(op(v), c); }, leaves, s);
    out.kind = "op";
    out.description = name;
    return out;
}

ModelSpec random_model(std::size_t max_width, Rng& rng)
{
    ModelSpec spec;
    const std::size_t hidden = pick(0, 2, rng);
    spec.layer_sizes.push_back(pick(1, max_width, rng));
    for (std::size_t h = 0; h < hidden; ++h)
        spec.layer_sizes.push_back(pick(1, max_width, rng));
    spec.layer_sizes.push_back(pick(1, 3, rng));
    return spec;
}

GradcheckCase elementary_case(Rng& rng, const GradcheckSettings& s)
{
    for (std::size_t attempt = 0; attempt < max_redraws; ++attempt) {
        const ModelSpec spec = random_model(5, rng);
        const RegSpec reg{pick(0, 1, rng) ? RegMode::per_weight : RegMode::scalar};
        const std::size_t rows = pick(1, 5, rng);
        const Batch batch{uniform(Shape{rows, spec.input_size()}, -2, 2, rng),
                          uniform(Shape{rows, spec.output_size()}, -2, 2, rng)};
        const Tensor w = uniform(Shape{param_count(spec)}, -1, 1, rng);
        const Tensor lambda = uniform(Shape{reg.hyper_dim(spec)}, -2, 2, rng);
        if (hidden_margin(spec, w, batch.x) < s.relu_margin)
            continue;
        GradcheckCase out = compare(
            [&](const std::vector<Var>& v) { return train_loss(spec, reg, v[0], v[1], batch); }, {w, lambda}, s);
        out.kind = "elementary";
        out.description = spec.describe() + " " + to_string(reg.mode) + " batch " + std::to_string(rows);
        return out;
    }
    throw NumericError("gradcheck could not draw an elementary configuration clear of ReLU kinks");
}

GradcheckCase hypernet_case(std::size_t which, Rng& rng, const GradcheckSettings& s)
{
    const auto arch = static_cast<HypernetArch>(which % 3);
    for (std::size_t attempt = 0; attempt < max_redraws; ++attempt) {
        const ModelSpec model = random_model(3, rng);
        const RegSpec reg{pick(0, 1, rng) ? RegMode::per_weight : RegMode::scalar};
        const std::size_t in = reg.hyper_dim(model), out_dim = param_count(model);
        const HypernetSpec spec{arch, in, out_dim, arch == HypernetArch::linear ? 0 : pick(1, 4, rng)};
        const std::size_t rows = pick(1, 4, rng);
        const Batch train{uniform(Shape{rows, model.input_size()}, -2, 2, rng),
                          uniform(Shape{rows, model.output_size()}, -2, 2, rng)};
        const Batch valid{uniform(Shape{rows, model.input_size()}, -2, 2, rng),
                          uniform(Shape{rows, model.output_size()}, -2, 2, rng)};
        // fan-in scale, as at initialization; unit-scale entries over many inputs emit huge weights
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        const Tensor phi = uniform(Shape{param_count(spec)}, -bound, bound, rng);
        const Tensor lambda = uniform(Shape{in}, -2, 2, rng);

        const Tensor lambda_row = lambda.reshaped(Shape{1, in});
        if (arch == HypernetArch::mlp && hidden_margin(spec.as_model(), phi, lambda_row) < s.relu_margin)
            continue;
        const Tensor w = emit(HypernetParams(spec, phi), HyperPoint{lambda}, model).flat();
        if (hidden_margin(model, w, train.x) < s.relu_margin || hidden_margin(model, w, valid.x) < s.relu_margin)
            continue;

        // training loss in (phi, lambda) plus validation loss through the emitted weights
        GradcheckCase out = compare(
            [&](const std::vector<Var>& v) {
                const Var emitted = emit(spec, v[0], v[1]);
                return train_loss(model, reg, emitted, v[1], train) + pred_loss(model, emitted, valid);
            },
            {phi, lambda}, s);
        out.kind = "hypernet";
        out.description = spec.describe() + " over " + model.describe();
        return out;
    }
    throw NumericError("gradcheck could not draw a hypernetwork configuration clear of ReLU kinks");
}

} // namespace

GradcheckReport gradcheck_suite(const GradcheckSettings& s)
{
    if (s.configs == 0)
        throw ConfigError("gradcheck.configs must be at least 1");
    if (!(s.step > 0.0) || !(s.tolerance > 0.0) || !(s.floor > 0.0) || !(s.relu_margin > s.step))
        throw ConfigError("gradcheck.step, tolerance and floor must be positive, relu_margin larger than step");
    const auto start = std::chrono::steady_clock::now();
    GradcheckReport report;
    report.tolerance = s.tolerance;
    for (std::size_t i = 0; i < s.configs; ++i) {
        Rng rng = make_rng(s.seed, "gradcheck", i);
        GradcheckCase c;
        switch (i % 3) {
        case 0: c = op_case(i / 3, rng, s); break;
        case 1: c = elementary_case(rng, s); break;
        default: c = hypernet_case(i / 3, rng, s); break;
        }
        c.index = i;
        report.max_rel_error = std::max(report.max_rel_error, c.max_rel_error);
        report.cases.push_back(std::move(c));
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

} // namespace hypertrain
