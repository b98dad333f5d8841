#include "hypertrain/algorithms.hpp"

#include "hypertrain/errors.hpp"
#include "hypertrain/parallel.hpp"
#include "hypertrain/ridge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace hypertrain {

namespace {

using Clock = std::chrono::steady_clock;

bool is_empty(const Dataset& d) { return d.x.rank() != 2 || d.x.rows() == 0; }

void check_split(const Problem& p, const Dataset& d, const char* name)
{
    if (d.input_dim() != p.model.input_size())
        throw ConfigError(std::string(name) + " input width " + std::to_string(d.input_dim()) +
                          " does not match model.layers input " + std::to_string(p.model.input_size()));
    if (d.target_dim() != p.model.output_size())
        throw ConfigError(std::string(name) + " target width " + std::to_string(d.target_dim()) +
                          " does not match model.layers output " + std::to_string(p.model.output_size()));
}

void check_hypernet(const Problem& p, const HypernetSpec& spec)
{
    spec.validate();
    if (spec.in_dim != p.hyper_dim())
        throw ConfigError("hypernet in_dim " + std::to_string(spec.in_dim) + " does not match reg.mode " +
                          to_string(p.reg.mode) + " hyperparameter count " + std::to_string(p.hyper_dim()));
    if (spec.out_dim != param_count(p.model))
        throw ConfigError("hypernet out_dim " + std::to_string(spec.out_dim) + " does not match model.layers " +
                          p.model.describe() + " parameter count " + std::to_string(param_count(p.model)));
}

void check_finite(double value, const std::string& phase, std::size_t iteration)
{
    if (!std::isfinite(value))
        throw DivergenceError(phase, iteration);
}

// Adam step that reports divergence under the caller's phase name.
void step(Adam& opt, Tensor& params, const Tensor& grad, const std::string& phase, std::size_t iteration)
{
    try {
        opt.step(params, grad);
    } catch (const DivergenceError&) {
        throw DivergenceError(phase, iteration);
    }
}

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared machinery for the three hyper-training procedures.
class HyperRun {
public:
    HyperRun(const Problem& problem, const HyperTrainSettings& s)
        : problem_(problem), s_(s),
          phi_(s.warm_start ? *s.warm_start : HypernetParams::init(s.hypernet, substream_seed(s.seed, "init"), s.init_gain)),
          lambda_(Tensor::filled(Shape{problem.hyper_dim()}, s.lambda_init)),
          phi_opt_(s.phi_optimizer, param_count(s.hypernet)), lambda_opt_(s.lambda_optimizer, problem.hyper_dim()),
          data_rng_(make_rng(s.seed, "data")), valid_rng_(make_rng(s.seed, "valid")),
          sample_rng_(make_rng(s.seed, "sampling")), start_(Clock::now())
    {
        problem.validate();
        check_hypernet(problem, s.hypernet);
        if (s.warm_start && !(s.warm_start->spec() == s.hypernet))
            throw ConfigError("warm_start hypernet " + s.warm_start->spec().describe() + " does not match hypernet " +
                              s.hypernet.describe());
        if (s.hyper_samples == 0)
            throw ConfigError("hyper_samples must be at least 1");
        if (s.train_batch == 0)
            throw ConfigError("train_batch must be at least 1");
        if (!(s.lambda_min < s.lambda_max))
            throw ConfigError("lambda_min " + std::to_string(s.lambda_min) + " must be below lambda_max " +
                              std::to_string(s.lambda_max));
        if (s.lambda_init < s.lambda_min || s.lambda_init > s.lambda_max)
            throw ConfigError("lambda_init " + std::to_string(s.lambda_init) + " lies outside [lambda_min, lambda_max]");
    }

    const Tensor& lambda() const { return lambda_; }

    void phi_step(const std::vector<Tensor>& lambdas, const std::string& phase, std::size_t iteration)
    {
        const Batch batch = minibatch(problem_.train, s_.train_batch, data_rng_);
        const PhiObjective obj = hypernet_objective(problem_, phi_, lambdas, batch);
        check_finite(obj.loss, phase, iteration);
        step(phi_opt_, phi_.flat(), obj.gradient, phase, iteration);
        counts_.train += lambdas.size();
    }

    std::vector<Tensor> draw(const HyperDistribution& dist, std::size_t count)
    {
        std::vector<Tensor> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            out.push_back(dist.sample(lambda_, sample_rng_));
        return out;
    }

    void lambda_step(const std::string& phase, std::size_t iteration)
    {
        const std::size_t size = s_.valid_batch != 0 ? s_.valid_batch : s_.train_batch;
        const Batch batch = minibatch(problem_.valid, size, valid_rng_);
        const Tensor grad = hyper_gradient(phi_, HyperPoint{lambda_}, problem_.model, batch);
        step(lambda_opt_, lambda_, grad, phase, iteration);
        counts_.valid += 1;
        bool clamped = false;
        for (double& v : lambda_.data()) {
            if (v < s_.lambda_min || v > s_.lambda_max) {
                v = std::clamp(v, s_.lambda_min, s_.lambda_max);
                clamped = true;
            }
        }
        if (clamped && !was_clamped_)
            record(iteration, phase,
                   "lambda-hat clamped to [" + std::to_string(s_.lambda_min) + ", " + std::to_string(s_.lambda_max) + "]");
        was_clamped_ = clamped;
    }

    void maybe_record(std::size_t iteration, const std::string& phase)
    {
        if (s_.record_every != 0 && iteration % s_.record_every == 0)
            record(iteration, phase, "");
    }

    void record(std::size_t iteration, const std::string& phase, std::string warning)
    {
        if (!records_.empty() && records_.back().iteration == iteration) {
            if (!warning.empty())
                records_.back().warning = std::move(warning);
            return;
        }
        RunRecord r;
        r.iteration = iteration;
        r.phase = phase;
        r.lambda = lambda_;
        r.losses = evaluate(problem_, current_weights(), lambda_);
        r.seconds = seconds_since(start_);
        r.seed = s_.seed;
        r.warning = std::move(warning);
        records_.push_back(std::move(r));
    }

    ElementaryWeights current_weights() const { return emit(phi_, HyperPoint{lambda_}, problem_.model); }
    const HypernetParams& phi() const { return phi_; }

    HyperTrainResult finish(std::size_t iteration, const std::string& phase)
    {
        record(iteration, phase, "");
        return HyperTrainResult{lambda_, current_weights(), phi_, std::move(records_), counts_};
    }

private:
    const Problem& problem_;
    const HyperTrainSettings& s_;
    HypernetParams phi_;
    Tensor lambda_;
    Adam phi_opt_;
    Adam lambda_opt_;
    Rng data_rng_;
    Rng valid_rng_;
    Rng sample_rng_;
    Clock::time_point start_;
    std::vector<RunRecord> records_;
    GradientCounter counts_;
    bool was_clamped_ = false;
};

} // namespace

void Problem::validate() const
{
    model.validate();
    if (is_empty(train) || is_empty(valid))
        throw ConfigError("problem needs non-empty train and valid splits");
    check_split(*this, train, "train");
    check_split(*this, valid, "valid");
    if (!is_empty(test))
        check_split(*this, test, "test");
}

Tensor HyperDistribution::sample(const Tensor& center, Rng& rng) const
{
    validate();
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    Tensor out(Shape{center.size()});
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (kind == Kind::global_gaussian ? mean : center[i]) + normal(rng);
    return out;
}

void HyperDistribution::validate() const
{
    if (!(variance > 0.0) || !std::isfinite(variance))
        throw ConfigError("hyperparameter distribution variance must be positive, got " + std::to_string(variance));
}

Losses evaluate(const Problem& problem, const ElementaryWeights& weights, const Tensor& lambda)
{
    Losses out;
    out.train = train_loss(weights, lambda, problem.reg, problem.train.batch());
    out.valid = pred_loss(weights, problem.valid.batch());
    out.test = is_empty(problem.test) ? std::numeric_limits<double>::quiet_NaN()
                                      : pred_loss(weights, problem.test.batch());
    return out;
}

std::string to_string(SearchKind kind) { return kind == SearchKind::grid ? "grid" : "random"; }

SearchKind parse_search_kind(const std::string& text)
{
    if (text == "grid")
        return SearchKind::grid;
    if (text == "random")
        return SearchKind::random;
    throw ConfigError("unknown search kind '" + text + "' (expected grid or random)");
}

std::string to_string(SelectOn select) { return select == SelectOn::valid ? "valid" : "train"; }

SelectOn parse_select_on(const std::string& text)
{
    if (text == "valid")
        return SelectOn::valid;
    if (text == "train")
        return SelectOn::train;
    throw ConfigError("unknown selection split '" + text + "' (expected train or valid)");
}

TrainedWeights train_elementary(const Problem& problem, const Tensor& lambda, const ElementaryTraining& training,
                                Rng& rng)
{
    ElementaryWeights init = ElementaryWeights::random(problem.model, rng);
    Tensor w = init.flat();
    Adam opt(training.optimizer, w.size());
    const Var lam = Var::constant(lambda);
    for (std::size_t it = 0; it < training.iterations; ++it) {
        const Batch batch = minibatch(problem.train, training.batch_size, rng);
        Tape tape;
        const Var v = tape.variable(w);
        const Var loss = train_loss(problem.model, problem.reg, v, lam, batch);
        check_finite(loss.value().item(), "inner", it + 1);
        step(opt, w, tape.backward(loss).of(v), "inner", it + 1);
    }
    return TrainedWeights{ElementaryWeights(problem.model, std::move(w)), training.iterations};
}

CrossValidationResult cross_validation(const Problem& problem, const CrossValidationSettings& settings)
{
    problem.validate();
    if (settings.candidates == 0)
        throw ConfigError("cross-validation needs at least one candidate");
    const std::size_t dim = problem.hyper_dim();

    std::vector<Candidate> candidates(settings.candidates);
    const auto grid = linspace(settings.grid_lo, settings.grid_hi, settings.candidates);
    Rng proposal = make_rng(settings.seed, "proposal");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        candidates[i].index = i;
        candidates[i].lambda = settings.search == SearchKind::grid
                                   ? Tensor::filled(Shape{dim}, grid[i])
                                   : settings.prior.sample(Tensor(Shape{dim}), proposal);
    }

    const auto start = Clock::now();
    std::vector<double> finished(candidates.size(), 0.0);
    parallel_for(candidates.size(), worker_threads(settings.threads), [&](std::size_t i) {
        Candidate& c = candidates[i];
        Rng rng = make_rng(settings.seed, "candidate", i);
        try {
            TrainedWeights trained = train_elementary(problem, c.lambda, settings.inner, rng);
            c.losses = evaluate(problem, trained.weights, c.lambda);
            c.gradient_evals = trained.gradient_evals;
            const double key = settings.select_on == SelectOn::valid ? c.losses.valid : c.losses.train;
            if (!std::isfinite(key))
                throw DivergenceError("candidate evaluation", settings.inner.iterations);
            c.weights = std::move(trained.weights);
        } catch (const Error& e) {
            c.error = e.what();
            c.weights.reset();
        }
        finished[i] = seconds_since(start);
    });

    CrossValidationResult result;
    std::optional<std::size_t> best;
    auto key = [&](const Candidate& c) {
        return settings.select_on == SelectOn::valid ? c.losses.valid : c.losses.train;
    };
    for (const Candidate& c : candidates) {
        result.counts.train += c.gradient_evals;
        RunRecord r;
        r.iteration = c.index;
        r.phase = "cv";
        r.lambda = c.lambda;
        r.losses = c.losses;
        r.seconds = finished[c.index];
        r.seed = settings.seed;
        r.warning = c.error;
        result.records.push_back(std::move(r));
        if (!c.failed() && (!best || key(c) < key(candidates[*best])))
            best = c.index;
    }
    if (!best)
        throw DivergenceError("cross-validation (all candidates failed)", settings.inner.iterations);
    result.best = *best;
    result.lambda = candidates[*best].lambda;
    result.weights = *candidates[*best].weights;
    result.candidates = std::move(candidates);
    return result;
}

PhiObjective hypernet_objective(const Problem& problem, const HypernetParams& phi, const std::vector<Tensor>& lambdas,
                                const Batch& batch)
{
    if (lambdas.empty())
        throw DomainError("hypernetwork objective needs at least one hyperparameter sample");
    Tape tape;
    const Var p = tape.variable(phi.flat());
    Var total;
    for (std::size_t s = 0; s < lambdas.size(); ++s) {
        const Var lam = Var::constant(lambdas[s]);
        const Var w = emit(phi.spec(), p, lam);
        const Var loss = train_loss(problem.model, problem.reg, w, lam, batch);
        total = s == 0 ? loss : total + loss;
    }
    const Var objective = scale(total, 1.0 / static_cast<double>(lambdas.size()));
    return PhiObjective{objective.value().item(), tape.backward(objective).of(p)};
}

Tensor hyper_gradient(const HypernetParams& phi, const HyperPoint& point, const ModelSpec& model, const Batch& batch)
{
    Tape tape;
    const Var lam = tape.variable(point.lambda);
    const Var w = emit(phi.spec(), Var::constant(phi.flat()), lam);
    return tape.backward(pred_loss(model, w, batch)).of(lam);
}

HyperTrainResult hypertrain_global(const Problem& problem, const GlobalSettings& settings)
{
    if (settings.prior.kind != HyperDistribution::Kind::global_gaussian)
        throw ConfigError("global hyper-training needs a global_gaussian prior");
    settings.prior.validate();
    HyperRun run(problem, settings.common);
    run.record(0, "phase1", "");
    for (std::size_t it = 1; it <= settings.phase1_iters; ++it) {
        run.phi_step(run.draw(settings.prior, settings.common.hyper_samples), "phase1", it);
        if (settings.observer)
            settings.observer(it, run.phi());
        run.maybe_record(it, "phase1");
    }
    const std::size_t offset = settings.phase1_iters;
    for (std::size_t it = 1; it <= settings.phase2_iters; ++it) {
        run.lambda_step("phase2", offset + it);
        run.maybe_record(offset + it, "phase2");
    }
    return run.finish(offset + settings.phase2_iters, settings.phase2_iters > 0 ? "phase2" : "phase1");
}

HyperTrainResult hypertrain_joint(const Problem& problem, const JointSettings& settings)
{
    const HyperDistribution local = HyperDistribution::conditional(settings.local_variance);
    local.validate();
    if (settings.k_phi == 0 || settings.k_lambda == 0)
        throw ConfigError("joint k_phi and k_lambda must be at least 1");
    HyperRun run(problem, settings.common);
    run.record(0, "joint", "");
    for (std::size_t it = 1; it <= settings.iters; ++it) {
        for (std::size_t k = 0; k < settings.k_phi; ++k)
            run.phi_step(run.draw(local, settings.common.hyper_samples), "joint-phi", it);
        for (std::size_t k = 0; k < settings.k_lambda; ++k)
            run.lambda_step("joint-lambda", it);
        run.maybe_record(it, "joint");
    }
    return run.finish(settings.iters, "joint");
}

HyperTrainResult hypertrain_simplified(const Problem& problem, const SimplifiedSettings& settings)
{
    HyperRun run(problem, settings.common);
    run.record(0, "simplified", "");
    for (std::size_t it = 1; it <= settings.iters; ++it) {
        run.phi_step({run.lambda()}, "simplified-phi", it);
        run.lambda_step("simplified-lambda", it);
        run.maybe_record(it, "simplified");
    }
    return run.finish(settings.iters, "simplified");
}

} // namespace hypertrain
