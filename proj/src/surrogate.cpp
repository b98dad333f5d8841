#include "hypertrain/surrogate.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/parallel.hpp"
#include "hypertrain/rng.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace hypertrain {

namespace {

nlohmann::json tensor_json(const Tensor& t) { return nlohmann::json(t.data()); }

std::vector<Tensor> draw(const HyperDistribution& prior, std::size_t n, std::size_t dim, Rng& rng)
{
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(prior.sample(Tensor(Shape{dim}), rng));
    return out;
}

} // namespace

EvalTuple make_eval_tuple(const Problem& problem, const Tensor& lambda, const ElementaryTraining& inner, Rng& rng)
{
    TrainedWeights trained = train_elementary(problem, lambda, inner, rng);
    const double loss = pred_loss(trained.weights, problem.valid.batch());
    if (!std::isfinite(loss))
        throw DivergenceError("tuple evaluation", inner.iterations);
    return EvalTuple{lambda, std::move(trained.weights), loss, trained.gradient_evals};
}

TupleSet build_eval_tuples(const Problem& problem, const std::vector<Tensor>& lambdas,
                           const ElementaryTraining& inner, std::uint64_t seed, const std::string& stream,
                           std::size_t threads)
{
    std::vector<std::optional<EvalTuple>> done(lambdas.size());
    std::vector<std::string> failures(lambdas.size());
    parallel_for(lambdas.size(), worker_threads(threads), [&](std::size_t i) {
        Rng rng = make_rng(seed, stream, i);
        try {
            done[i] = make_eval_tuple(problem, lambdas[i], inner, rng);
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    TupleSet out;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (done[i])
            out.tuples.push_back(std::move(*done[i]));
        else
            out.warnings.push_back(stream + " tuple " + std::to_string(i) + " failed: " + failures[i]);
    }
    return out;
}

Tensor tuple_inputs(const std::vector<EvalTuple>& tuples)
{
    if (tuples.empty())
        throw DomainError("no tuples to stack");
    const std::size_t dim = tuples.front().lambda.size();
    Tensor out(Shape{tuples.size(), dim});
    for (std::size_t r = 0; r < tuples.size(); ++r) {
        if (tuples[r].lambda.size() != dim)
            throw ShapeError("tuple " + std::to_string(r) + " has " + std::to_string(tuples[r].lambda.size()) +
                             " hyperparameters, expected " + std::to_string(dim));
        for (std::size_t c = 0; c < dim; ++c)
            out.at(r, c) = tuples[r].lambda[c];
    }
    return out;
}

HypernetParams fit_fixed_set(const HypernetSpec& spec, const std::vector<EvalTuple>& tuples,
                             const FixedSetTraining& training, std::uint64_t seed, double init_gain)
{
    spec.validate();
    const Tensor inputs = tuple_inputs(tuples);
    if (inputs.cols() != spec.in_dim)
        throw ShapeError("hypernetwork " + spec.describe() + " takes " + std::to_string(spec.in_dim) +
                         " hyperparameters, tuples have " + std::to_string(inputs.cols()));
    Tensor targets(Shape{tuples.size(), spec.out_dim});
    for (std::size_t r = 0; r < tuples.size(); ++r) {
        const Tensor& w = tuples[r].weights.flat();
        if (w.size() != spec.out_dim)
            throw ShapeError("hypernetwork emits " + std::to_string(spec.out_dim) + " weights, tuple " +
                             std::to_string(r) + " has " + std::to_string(w.size()));
        for (std::size_t c = 0; c < spec.out_dim; ++c)
            targets.at(r, c) = w[c];
    }

    // The hypernetwork is an ordinary dense stack, so weight regression is its prediction loss.
    const ModelSpec stack = spec.as_model();
    const Batch batch{inputs, targets};
    HypernetParams phi = HypernetParams::init(spec, substream_seed(seed, "fixed-set"), init_gain);
    Adam opt(training.optimizer, phi.flat().size());
    for (std::size_t it = 0; it < training.iterations; ++it) {
        Tape tape;
        const Var v = tape.variable(phi.flat());
        const Var loss = pred_loss(stack, v, batch);
        const Tensor grad = tape.backward(loss).of(v);
        if (!std::isfinite(loss.value().item()) || !grad.all_finite())
            throw DivergenceError("fixed-set fit", it + 1);
        opt.step(phi.flat(), grad);
    }
    return phi;
}

double inferred_loss(const Problem& problem, const HypernetParams& phi, const Tensor& lambda)
{
    return pred_loss(emit(phi, HyperPoint{lambda}, problem.model), problem.valid.batch());
}

MethodReport summarize(std::string name, std::vector<Prediction> predictions, std::size_t bins)
{
    MethodReport out;
    out.name = std::move(name);
    out.predictions = std::move(predictions);
    if (out.predictions.empty())
        return out;
    double lo = out.predictions.front().error(), hi = lo;
    for (const auto& p : out.predictions) {
        out.mean_signed_error += p.error();
        out.mean_abs_error += std::abs(p.error());
        lo = std::min(lo, p.error());
        hi = std::max(hi, p.error());
    }
    const auto n = static_cast<double>(out.predictions.size());
    out.mean_signed_error /= n;
    out.mean_abs_error /= n;
    out.errors.lo = lo;
    out.errors.hi = hi;
    out.errors.counts.assign(std::max<std::size_t>(bins, 1), 0);
    const double width = (hi - lo) / static_cast<double>(out.errors.counts.size());
    for (const auto& p : out.predictions) {
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((p.error() - lo) / width) : 0;
        ++out.errors.counts[std::min(b, out.errors.counts.size() - 1)];
    }
    return out;
}

const MethodReport& ComparisonReport::method(const std::string& name) const
{
    for (const auto& m : methods)
        if (m.name == name)
            return m;
    throw DomainError("no surrogate method named '" + name + "'");
}

nlohmann::json ComparisonReport::to_json() const
{
    nlohmann::json out;
    out["budget_tuples"] = budget_tuples;
    out["eval_tuples"] = eval_tuples;
    out["budget_evals"] = budget_evals;
    out["hypertrain_evals"] = hypertrain_evals;
    out["gp_hyper"] = {{"length_scale", gp_hyper.length_scale},
                       {"signal_variance", gp_hyper.signal_variance},
                       {"noise_variance", gp_hyper.noise_variance}};
    out["warnings"] = warnings;
    out["methods"] = nlohmann::json::array();
    for (const auto& m : methods) {
        nlohmann::json j;
        j["name"] = m.name;
        j["mean_signed_error"] = m.mean_signed_error;
        j["mean_abs_error"] = m.mean_abs_error;
        j["histogram"] = {{"lo", m.errors.lo}, {"hi", m.errors.hi}, {"counts", m.errors.counts}};
        j["predictions"] = nlohmann::json::array();
        for (const auto& p : m.predictions)
            j["predictions"].push_back({{"lambda", tensor_json(p.lambda)}, {"inferred", p.inferred}, {"true", p.truth}});
        out["methods"].push_back(std::move(j));
    }
    return out;
}

ComparisonReport compare_surrogates(const Problem& problem, const SurrogateSettings& s)
{
    problem.validate();
    s.prior.validate();
    s.hypernet.validate();
    const std::size_t dim = problem.hyper_dim();
    if (s.hypernet.in_dim != dim)
        throw ConfigError("hypernet.in_dim is " + std::to_string(s.hypernet.in_dim) + " but reg.mode gives " +
                          std::to_string(dim) + " hyperparameters");
    if (s.hypernet.out_dim != param_count(problem.model))
        throw ConfigError("hypernet.out_dim is " + std::to_string(s.hypernet.out_dim) + " but model has " +
                          std::to_string(param_count(problem.model)) + " weights");
    if (s.budget_tuples < 2)
        throw ConfigError("surrogate.budget_tuples must be at least 2");
    if (s.eval_tuples == 0)
        throw ConfigError("surrogate.eval_tuples must be at least 1");

    Rng proposal = make_rng(s.seed, "proposal");
    const std::vector<Tensor> budget_lambdas = draw(s.prior, s.budget_tuples, dim, proposal);
    const std::vector<Tensor> heldout_lambdas = draw(s.prior, s.eval_tuples, dim, proposal);

    ComparisonReport report;
    TupleSet built = build_eval_tuples(problem, budget_lambdas, s.inner, s.seed, "budget", s.threads);
    const std::vector<EvalTuple> budget = std::move(built.tuples);
    report.warnings = std::move(built.warnings);
    built = build_eval_tuples(problem, heldout_lambdas, s.inner, s.seed, "heldout", s.threads);
    const std::vector<EvalTuple> heldout = std::move(built.tuples);
    report.warnings.insert(report.warnings.end(), built.warnings.begin(), built.warnings.end());
    if (budget.size() < 2)
        throw NumericError("only " + std::to_string(budget.size()) + " budget tuples trained successfully");
    if (heldout.empty())
        throw NumericError("no held-out tuple trained successfully");
    report.budget_tuples = budget.size();
    report.eval_tuples = heldout.size();
    for (const auto& t : budget)
        report.budget_evals += t.gradient_evals;

    // (a) GP on the budget tuples' validation losses.
    std::vector<double> losses;
    for (const auto& t : budget)
        losses.push_back(t.valid_loss);
    GpOptions gp_options = s.gp;
    gp_options.seed = substream_seed(s.seed, "gp");
    const GpModel gp = gp_fit(tuple_inputs(budget), losses, gp_options);
    report.gp_hyper = gp.hyper;

    // (b) hypernetwork regressed onto the budget tuples' weights.
    const HypernetParams fixed = fit_fixed_set(s.hypernet, budget, s.fixed_set, s.seed, s.init_gain);

    // (c) global hyper-training capped at the budget's gradient evaluations.
    GlobalSettings g;
    g.common.hypernet = s.hypernet;
    g.common.phi_optimizer = s.hyper_optimizer;
    g.common.hyper_samples = s.hyper_samples;
    g.common.train_batch = s.inner.batch_size;
    g.common.record_every = 0;
    g.common.seed = substream_seed(s.seed, "hypertrain");
    g.common.init_gain = s.init_gain;
    g.prior = s.prior;
    g.phase1_iters = report.budget_evals / s.hyper_samples;
    g.phase2_iters = 0;
    const HyperTrainResult trained = hypertrain_global(problem, g);
    report.hypertrain_evals = trained.counts.train;
    if (report.hypertrain_evals > report.budget_evals)
        throw NumericError("hyper-training used " + std::to_string(report.hypertrain_evals) +
                           " gradient evaluations, over the budget of " + std::to_string(report.budget_evals));

    std::vector<Prediction> by_gp, by_fixed, by_hyper;
    for (const auto& t : heldout) {
        by_gp.push_back({t.lambda, gp_predict(gp, t.lambda).mean, t.valid_loss});
        by_fixed.push_back({t.lambda, inferred_loss(problem, fixed, t.lambda), t.valid_loss});
        by_hyper.push_back({t.lambda, inferred_loss(problem, trained.phi, t.lambda), t.valid_loss});
    }
    report.methods.push_back(summarize("gp", std::move(by_gp), s.histogram_bins));
    report.methods.push_back(summarize("fixed_set", std::move(by_fixed), s.histogram_bins));
    report.methods.push_back(summarize("hypertrain", std::move(by_hyper), s.histogram_bins));
    return report;
}

} // namespace hypertrain
