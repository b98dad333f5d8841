#include "hypertrain/experiments.hpp"

#include "hypertrain/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace hypertrain {

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names()
{
    static const std::vector<std::pair<ExperimentKind, std::string>> names = {
        {ExperimentKind::global_br, "global-br"},
        {ExperimentKind::joint, "joint"},
        {ExperimentKind::simplified, "simplified"},
        {ExperimentKind::cv_baseline, "cv-baseline"},
        {ExperimentKind::perweight, "perweight"},
        {ExperimentKind::compare_surrogates, "compare-surrogates"},
        {ExperimentKind::gradcheck, "gradcheck"},
        {ExperimentKind::sweep_curve, "sweep-curve"},
    };
    return names;
}

std::string to_string(DataSource s) { return s == DataSource::ridge ? "ridge" : "mnist"; }

DataSource parse_source(const std::string& text)
{
    if (text == "ridge")
        return DataSource::ridge;
    if (text == "mnist")
        return DataSource::mnist;
    throw ConfigError("data.source = '" + text + "' is not one of ridge, mnist");
}

SplitSizes default_splits(DataSource s) { return s == DataSource::ridge ? SplitSizes{15, 100, 100} : SplitSizes{10, 1000, 1000}; }

std::string fmt(double v) { return format_number(v); }

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw ConfigError(message);
}

// ---------------------------------------------------------------------------
// CSV

class Csv {
public:
    explicit Csv(std::vector<std::string> header) { row(header); }

    void row(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                text_ += ',';
            text_ += quote(cells[i]);
        }
        text_ += '\n';
    }

    const std::string& text() const { return text_; }

private:
    static std::string quote(const std::string& cell)
    {
        if (cell.find_first_of(",\"\n") == std::string::npos)
            return cell;
        std::string out = "\"";
        for (char c : cell) {
            if (c == '"')
                out += '"';
            out += c;
        }
        return out + "\"";
    }

    std::string text_;
};

double mean_of(const Tensor& t)
{
    double s = 0.0;
    for (double v : t.data())
        s += v;
    return t.empty() ? 0.0 : s / static_cast<double>(t.size());
}

nlohmann::json lambda_json(const Tensor& lambda)
{
    if (lambda.size() == 1)
        return lambda[0];
    return nlohmann::json(lambda.values());
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json losses_json(const Losses& l)
{
    return {{"train", number(l.train)}, {"valid", number(l.valid)}, {"test", number(l.test)}};
}

nlohmann::json lambda_stats(const Tensor& lambda)
{
    const auto [lo, hi] = std::minmax_element(lambda.data().begin(), lambda.data().end());
    return {{"dim", lambda.size()}, {"mean", mean_of(lambda)}, {"min", *lo}, {"max", *hi}};
}

std::string records_csv(const std::vector<RunRecord>& records, const std::vector<std::vector<std::string>>& extra = {})
{
    Csv csv({"iteration", "phase", "lambda_mean", "train_loss", "valid_loss", "test_loss", "warning"});
    for (const auto& r : records)
        csv.row({std::to_string(r.iteration), r.phase, fmt(mean_of(r.lambda)), fmt(r.losses.train), fmt(r.losses.valid),
                 fmt(r.losses.test), r.warning});
    for (const auto& row : extra)
        csv.row(row);
    return csv.text();
}

// ---------------------------------------------------------------------------
// Run helpers

bool has_ridge_oracle(const ExperimentConfig& c, const LoadedProblem& lp)
{
    return lp.ridge && c.hidden.empty() && c.reg == RegMode::scalar;
}

HypernetSpec hypernet_spec(const ExperimentConfig& c, const Problem& p)
{
    HypernetSpec spec{c.arch, p.hyper_dim(), param_count(p.model), c.arch == HypernetArch::linear ? 0 : c.hypernet_width};
    spec.validate();
    return spec;
}

HyperTrainSettings common_settings(const ExperimentConfig& c, const Problem& p)
{
    HyperTrainSettings s = c.train;
    s.hypernet = hypernet_spec(c, p);
    s.seed = c.seed;
    return s;
}

HypernetParams checked_checkpoint(const std::string& path, const std::string& key, const HypernetSpec& expected)
{
    HypernetParams phi = load_hypernet(path);
    if (!(phi.spec() == expected))
        throw ConfigError(key + " holds a " + phi.spec().describe() + " hypernetwork, but hypernet.arch/hypernet.width with model.reg give " +
                          expected.describe());
    return phi;
}

nlohmann::json ridge_oracle(const RidgeProblem& rp, const Tensor& lambda, const ElementaryWeights& weights)
{
    const GridOptimum opt = ridge_validation_optimum(rp);
    const ElementaryWeights best = ridge_best_response(rp.train, lambda);
    Tensor diff = weights.flat();
    for (std::size_t i = 0; i < diff.size(); ++i)
        diff[i] -= best.flat()[i];
    return {{"lambda_star", opt.lambda},
            {"valid_loss_star", opt.loss},
            {"lambda_error", lambda[0] - opt.lambda},
            {"weight_rel_error", diff.norm() / std::max(best.flat().norm(), 1e-8)}};
}

// Sup over [-2, 2] of the relative weight error and training-loss gap of the
// hypernetwork against the closed-form best response.
nlohmann::json best_response_check(const RidgeProblem& rp, const Problem& p, const HypernetParams& phi)
{
    double max_rel = 0.0, max_gap = 0.0;
    for (double l : linspace(-2.0, 2.0, 41)) {
        const Tensor lam = Tensor::vector({l});
        const ElementaryWeights w = emit(phi, HyperPoint{lam}, p.model);
        const ElementaryWeights best = ridge_best_response(rp.train, lam);
        Tensor diff = w.flat();
        for (std::size_t i = 0; i < diff.size(); ++i)
            diff[i] -= best.flat()[i];
        max_rel = std::max(max_rel, diff.norm() / std::max(best.flat().norm(), 1e-8));
        max_gap = std::max(max_gap, train_loss(w, lam, p.reg, p.train.batch()) - train_loss(best, lam, p.reg, p.train.batch()));
    }
    return {{"lo", -2.0}, {"hi", 2.0}, {"points", 41}, {"max_rel_error", max_rel}, {"max_train_gap", max_gap}};
}

nlohmann::json run_summary(const ExperimentConfig& c, const LoadedProblem& lp, const HyperTrainResult& r)
{
    nlohmann::json s;
    s["experiment"] = to_string(c.kind);
    s["seed"] = c.seed;
    s["lambda"] = lambda_json(r.lambda);
    s["lambda_stats"] = lambda_stats(r.lambda);
    s["losses"] = losses_json(evaluate(lp.problem, r.weights, r.lambda));
    s["gradient_evals"] = {{"train", r.counts.train}, {"valid", r.counts.valid}};
    s["hypernet"] = {{"spec", r.phi.spec().describe()}, {"params", param_count(r.phi.spec())}};
    std::size_t clamps = 0;
    for (const auto& rec : r.records)
        clamps += rec.warning.empty() ? 0 : 1;
    s["warnings"] = clamps;
    if (has_ridge_oracle(c, lp))
        s["oracle"] = ridge_oracle(*lp.ridge, r.lambda, r.weights);
    return s;
}

ExperimentOutput from_hypertrain(const ExperimentConfig& c, const LoadedProblem& lp, HyperTrainResult r)
{
    ExperimentOutput out;
    out.kind = c.kind;
    out.summary = run_summary(c, lp, r);
    if (c.kind == ExperimentKind::global_br && has_ridge_oracle(c, lp))
        out.summary["best_response"] = best_response_check(*lp.ridge, lp.problem, r.phi);
    out.csv = records_csv(r.records);
    out.records = std::move(r.records);
    out.hypernet = std::move(r.phi);
    return out;
}

GlobalSettings global_settings(const ExperimentConfig& c, const Problem& p)
{
    GlobalSettings g = c.global;
    g.common = common_settings(c, p);
    return g;
}

ExperimentOutput run_global(const ExperimentConfig& c, const LoadedProblem& lp)
{
    return from_hypertrain(c, lp, hypertrain_global(lp.problem, global_settings(c, lp.problem)));
}

JointSettings joint_settings(const ExperimentConfig& c, const Problem& p)
{
    JointSettings j = c.joint;
    j.common = common_settings(c, p);
    if (!c.warm_start.empty())
        j.common.warm_start = checked_checkpoint(c.warm_start, "joint.warm_start", j.common.hypernet);
    return j;
}

ExperimentOutput run_joint(const ExperimentConfig& c, const LoadedProblem& lp)
{
    return from_hypertrain(c, lp, hypertrain_joint(lp.problem, joint_settings(c, lp.problem)));
}

ExperimentOutput run_simplified(const ExperimentConfig& c, const LoadedProblem& lp)
{
    SimplifiedSettings s = c.simplified;
    s.common = common_settings(c, lp.problem);
    if (!c.warm_start.empty())
        s.common.warm_start = checked_checkpoint(c.warm_start, "joint.warm_start", s.common.hypernet);
    return from_hypertrain(c, lp, hypertrain_simplified(lp.problem, s));
}

CrossValidationSettings cv_settings(const ExperimentConfig& c)
{
    CrossValidationSettings s = c.cv;
    s.seed = c.seed;
    s.threads = c.threads;
    return s;
}

ExperimentOutput run_cv(const ExperimentConfig& c, const LoadedProblem& lp)
{
    const CrossValidationResult r = cross_validation(lp.problem, cv_settings(c));
    ExperimentOutput out;
    out.kind = c.kind;
    Csv csv({"candidate", "lambda_mean", "train_loss", "valid_loss", "test_loss", "status", "selected"});
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& cand : r.candidates) {
        csv.row({std::to_string(cand.index), fmt(mean_of(cand.lambda)), fmt(cand.losses.train), fmt(cand.losses.valid),
                 fmt(cand.losses.test), cand.failed() ? "failed" : "ok", cand.index == r.best ? "1" : "0"});
        if (cand.failed())
            failed.push_back({{"candidate", cand.index}, {"error", cand.error}});
    }
    out.csv = csv.text();
    auto& s = out.summary;
    s["experiment"] = to_string(c.kind);
    s["seed"] = c.seed;
    s["select_on"] = to_string(c.cv.select_on);
    s["search"] = to_string(c.cv.search);
    s["selected"] = r.best;
    s["lambda"] = lambda_json(r.lambda);
    s["losses"] = losses_json(r.candidates[r.best].losses);
    s["gradient_evals"] = {{"train", r.counts.train}};
    s["failed"] = failed;
    if (has_ridge_oracle(c, lp))
        s["oracle"] = ridge_oracle(*lp.ridge, r.lambda, r.weights);
    out.records = r.records;
    out.weights = r.weights;
    return out;
}

ExperimentOutput run_perweight(const ExperimentConfig& c, const LoadedProblem& lp)
{
    const JointSettings j = joint_settings(c, lp.problem);
    HyperTrainResult r = hypertrain_joint(lp.problem, j);

    // the same elementary model trained at one fixed lambda for the same step count
    const std::size_t steps = c.baseline.iterations ? c.baseline.iterations : j.iters * j.k_phi;
    const AdamConfig opt{c.baseline.step_size > 0.0 ? c.baseline.step_size : c.train.phi_optimizer.step_size,
                         c.train.phi_optimizer.beta1, c.train.phi_optimizer.beta2, c.train.phi_optimizer.epsilon};
    const Tensor fixed = Tensor::filled(Shape{lp.problem.hyper_dim()}, c.baseline.lambda);
    Rng rng = make_rng(c.seed, "baseline");
    const TrainedWeights base = train_elementary(lp.problem, fixed, ElementaryTraining{steps, opt, c.train.train_batch}, rng);
    const Losses base_losses = evaluate(lp.problem, base.weights, fixed);
    const Losses final_losses = evaluate(lp.problem, r.weights, r.lambda);

    ExperimentOutput out;
    out.kind = c.kind;
    out.summary = run_summary(c, lp, r);
    out.summary["baseline"] = {{"lambda", c.baseline.lambda}, {"iterations", steps}, {"losses", losses_json(base_losses)}};
    out.summary["beats_baseline"] = final_losses.valid < base_losses.valid;
    out.csv = records_csv(r.records, {{std::to_string(steps), "baseline", fmt(c.baseline.lambda), fmt(base_losses.train),
                                       fmt(base_losses.valid), fmt(base_losses.test), ""}});
    out.records = std::move(r.records);
    out.hypernet = std::move(r.phi);
    return out;
}

ExperimentOutput run_surrogates(const ExperimentConfig& c, const LoadedProblem& lp)
{
    SurrogateSettings s = c.surrogate;
    s.hypernet = hypernet_spec(c, lp.problem);
    s.prior = c.global.prior;
    s.hyper_optimizer = c.train.phi_optimizer;
    s.hyper_samples = c.train.hyper_samples;
    s.init_gain = c.train.init_gain;
    s.seed = c.seed;
    s.threads = c.threads;
    const ComparisonReport r = compare_surrogates(lp.problem, s);

    ExperimentOutput out;
    out.kind = c.kind;
    Csv csv({"method", "index", "inferred", "true", "error"});
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : r.methods) {
        for (std::size_t i = 0; i < m.predictions.size(); ++i) {
            const auto& p = m.predictions[i];
            csv.row({m.name, std::to_string(i), fmt(p.inferred), fmt(p.truth), fmt(p.error())});
        }
        methods.push_back({{"name", m.name}, {"mean_signed_error", m.mean_signed_error}, {"mean_abs_error", m.mean_abs_error}});
    }
    out.csv = csv.text();
    auto& sum = out.summary;
    sum["experiment"] = to_string(c.kind);
    sum["seed"] = c.seed;
    sum["budget_tuples"] = r.budget_tuples;
    sum["eval_tuples"] = r.eval_tuples;
    sum["budget_evals"] = r.budget_evals;
    sum["hypertrain_evals"] = r.hypertrain_evals;
    sum["methods"] = methods;
    sum["warnings"] = r.warnings;
    out.report = r.to_json();
    return out;
}

ExperimentOutput run_gradcheck(const ExperimentConfig& c)
{
    GradcheckSettings s = c.gradcheck;
    s.seed = c.seed;
    const GradcheckReport r = gradcheck_suite(s);
    ExperimentOutput out;
    out.kind = c.kind;
    Csv csv({"index", "kind", "description", "coordinates", "max_rel_error"});
    std::size_t failing = 0;
    for (const auto& k : r.cases) {
        csv.row({std::to_string(k.index), k.kind, k.description, std::to_string(k.coordinates), fmt(k.max_rel_error)});
        failing += k.max_rel_error < r.tolerance ? 0 : 1;
    }
    out.csv = csv.text();
    out.summary = {{"experiment", to_string(c.kind)}, {"seed", c.seed},
                   {"configs", r.cases.size()}, {"max_rel_error", r.max_rel_error},
                   {"tolerance", r.tolerance}, {"failing", failing},
                   {"passed", r.passed()}, {"seconds", r.seconds}};
    out.ok = r.passed();
    return out;
}

ExperimentOutput run_sweep(const ExperimentConfig& c, const LoadedProblem& lp)
{
    const Problem& p = lp.problem;
    ExperimentOutput out;
    out.kind = c.kind;
    HypernetParams phi;
    if (!c.sweep.params.empty()) {
        phi = checked_checkpoint(c.sweep.params, "sweep.params", hypernet_spec(c, p));
    } else {
        HyperTrainResult trained = hypertrain_global(p, global_settings(c, p));
        out.records = std::move(trained.records);
        phi = std::move(trained.phi);
    }

    Csv csv({"lambda", "train_loss", "valid_loss", "source"});
    double best_h = 0.0, best_h_loss = std::numeric_limits<double>::infinity();
    for (double l : linspace(c.sweep.lo, c.sweep.hi, c.sweep.points)) {
        const Tensor lam = Tensor::vector({l});
        const ElementaryWeights w = emit(phi, HyperPoint{lam}, p.model);
        const double tr = train_loss(w, lam, p.reg, p.train.batch());
        const double va = pred_loss(w, p.valid.batch());
        csv.row({fmt(l), fmt(tr), fmt(va), "hypernet"});
        if (va < best_h_loss) {
            best_h_loss = va;
            best_h = l;
        }
    }
    const CrossValidationResult cv = cross_validation(p, cv_settings(c));
    for (const auto& cand : cv.candidates)
        csv.row({fmt(cand.lambda[0]), fmt(cand.losses.train), fmt(cand.losses.valid), cand.failed() ? "cv-failed" : "cv"});
    for (const auto& rec : cv.records)
        out.records.push_back(rec);
    out.csv = csv.text();

    const double best_cv = cv.lambda[0];
    out.summary = {{"experiment", to_string(c.kind)},
                   {"seed", c.seed},
                   {"hypernet_argmin", {{"lambda", best_h}, {"valid_loss", best_h_loss}, {"points", c.sweep.points}}},
                   {"cv_argmin", {{"lambda", best_cv}, {"valid_loss", cv.candidates[cv.best].losses.valid},
                                  {"candidates", c.cv.candidates}}},
                   {"argmin_distance", std::abs(best_h - best_cv)}};
    out.hypernet = std::move(phi);
    return out;
}

} // namespace

std::string to_string(ExperimentKind kind)
{
    for (const auto& [k, name] : kind_names())
        if (k == kind)
            return name;
    return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& text)
{
    for (const auto& [k, name] : kind_names())
        if (name == text)
            return k;
    std::string known;
    for (const auto& [k, name] : kind_names())
        known += (known.empty() ? "" : ", ") + name;
    throw ConfigError("unknown experiment '" + text + "' (expected one of " + known + ")");
}

const std::vector<ExperimentKind>& all_experiment_kinds()
{
    static const std::vector<ExperimentKind> kinds = [] {
        std::vector<ExperimentKind> out;
        for (const auto& [k, name] : kind_names())
            out.push_back(k);
        return out;
    }();
    return kinds;
}

std::string format_number(double value)
{
    if (std::isnan(value))
        return "nan";
    if (std::isinf(value))
        return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind)
{
    ExperimentConfig c;
    c.kind = kind;
    c.data.images = "data/mnist5k-images.idx";
    c.data.labels = "data/mnist5k-labels.idx";
    c.train.record_every = 100;
    c.global.phase1_iters = 20000;
    c.global.phase2_iters = 1000;
    c.joint.iters = 1000;
    c.simplified.iters = 10000;
    c.cv.inner = ElementaryTraining{1000, AdamConfig{1e-4}, 1000};

    switch (kind) {
    case ExperimentKind::perweight:
        c.data.source = DataSource::mnist;
        c.data.splits = {50, 1000, 1000};
        c.reg = RegMode::per_weight;
        c.arch = HypernetArch::factorized;
        c.hypernet_width = 10;
        c.joint.iters = 500;
        c.train.record_every = 50;
        break;
    case ExperimentKind::sweep_curve:
        c.data.source = DataSource::mnist;
        c.data.splits = default_splits(DataSource::mnist);
        c.arch = HypernetArch::mlp;
        c.hypernet_width = 50;
        break;
    case ExperimentKind::compare_surrogates:
        c.data.ridge.feature_scale = 1.0;
        c.data.ridge.weight_scale = 1.0;
        c.data.ridge.noise = 2.0;
        c.reg = RegMode::per_weight;
        break;
    default:
        break;
    }
    return c;
}

ExperimentConfig ExperimentConfig::from(const Config& cfg, ExperimentKind kind)
{
    ExperimentConfig c = defaults(kind);
    if (const auto named = cfg.raw("experiment"); named && parse_experiment_kind(*named) != kind)
        throw ConfigError("config sets experiment = " + *named + " but the subcommand is " + to_string(kind));
    c.seed = cfg.get_u64("seed", c.seed);
    c.threads = cfg.get_size("threads", c.threads);
    c.timestamps = cfg.get_bool("timestamps", c.timestamps);

    // data
    const DataSource source = parse_source(cfg.get_string("data.source", to_string(c.data.source)));
    if (source != c.data.source)
        c.data.splits = default_splits(source);
    c.data.source = source;
    c.data.images = cfg.resolve_path(cfg.get_string("data.images", c.data.images));
    c.data.labels = cfg.resolve_path(cfg.get_string("data.labels", c.data.labels));
    c.data.splits.train = cfg.get_size("data.train", c.data.splits.train);
    c.data.splits.valid = cfg.get_size("data.valid", c.data.splits.valid);
    c.data.splits.test = cfg.get_size("data.test", c.data.splits.test);
    if (cfg.has("data.seed"))
        c.data.seed = cfg.get_u64("data.seed", 0);
    c.data.ridge.features = cfg.get_size("data.features", c.data.ridge.features);
    c.data.ridge.feature_scale = cfg.get_double("data.feature_scale", c.data.ridge.feature_scale);
    c.data.ridge.spectrum_ratio = cfg.get_double("data.spectrum_ratio", c.data.ridge.spectrum_ratio);
    c.data.ridge.weight_scale = cfg.get_double("data.weight_scale", c.data.ridge.weight_scale);
    c.data.ridge.noise = cfg.get_double("data.noise", c.data.ridge.noise);

    // model and hypernetwork
    c.hidden = cfg.get_sizes("model.hidden", c.hidden);
    c.reg = parse_reg_mode(cfg.get_string("model.reg", to_string(c.reg)));
    c.arch = parse_hypernet_arch(cfg.get_string("hypernet.arch", to_string(c.arch)));
    c.hypernet_width = cfg.get_size("hypernet.width", c.hypernet_width);
    c.train.init_gain = cfg.get_double("hypernet.init_gain", c.train.init_gain);

    // optimizers: alpha for hypernetwork weights, beta for hyperparameters
    AdamConfig adam = c.train.phi_optimizer;
    adam.beta1 = cfg.get_double("optim.beta1", adam.beta1);
    adam.beta2 = cfg.get_double("optim.beta2", adam.beta2);
    adam.epsilon = cfg.get_double("optim.eps", adam.epsilon);
    c.train.phi_optimizer = adam;
    c.train.phi_optimizer.step_size = cfg.get_double("optim.alpha", c.train.phi_optimizer.step_size);
    c.train.lambda_optimizer = adam;
    c.train.lambda_optimizer.step_size = cfg.get_double("optim.beta", c.train.lambda_optimizer.step_size);

    c.train.hyper_samples = cfg.get_size("train.hyper_samples", c.train.hyper_samples);
    c.train.train_batch = cfg.get_size("train.batch", c.train.train_batch);
    c.train.valid_batch = cfg.get_size("train.valid_batch", c.train.valid_batch);
    c.train.lambda_init = cfg.get_double("train.lambda_init", c.train.lambda_init);
    c.train.lambda_min = cfg.get_double("train.lambda_min", c.train.lambda_min);
    c.train.lambda_max = cfg.get_double("train.lambda_max", c.train.lambda_max);
    c.train.record_every = cfg.get_size("train.record_every", c.train.record_every);

    c.global.prior.mean = cfg.get_double("global.mean", c.global.prior.mean);
    c.global.prior.variance = cfg.get_double("global.variance", c.global.prior.variance);
    c.global.phase1_iters = cfg.get_size("global.phase1_iters", c.global.phase1_iters);
    c.global.phase2_iters = cfg.get_size("global.phase2_iters", c.global.phase2_iters);

    c.joint.local_variance = cfg.get_double("joint.local_variance", c.joint.local_variance);
    c.joint.iters = cfg.get_size("joint.iters", c.joint.iters);
    c.joint.k_phi = cfg.get_size("joint.k_phi", c.joint.k_phi);
    c.joint.k_lambda = cfg.get_size("joint.k_lambda", c.joint.k_lambda);
    c.warm_start = cfg.resolve_path(cfg.get_string("joint.warm_start", c.warm_start));
    c.simplified.iters = cfg.get_size("simplified.iters", c.simplified.iters);

    // cross-validation
    c.cv.search = parse_search_kind(cfg.get_string("cv.search", to_string(c.cv.search)));
    c.cv.candidates = cfg.get_size("cv.candidates", c.cv.candidates);
    c.cv.grid_lo = cfg.get_double("cv.grid_lo", c.cv.grid_lo);
    c.cv.grid_hi = cfg.get_double("cv.grid_hi", c.cv.grid_hi);
    c.cv.inner.iterations = cfg.get_size("cv.inner_iters", c.cv.inner.iterations);
    c.cv.inner.optimizer = adam;
    c.cv.inner.optimizer.step_size = cfg.get_double("cv.inner_alpha", 1e-4);
    c.cv.inner.batch_size = cfg.get_size("cv.batch", c.train.train_batch);
    c.cv.select_on = parse_select_on(cfg.get_string("cv.select_on", to_string(c.cv.select_on)));
    c.cv.prior = c.global.prior;

    c.baseline.iterations = cfg.get_size("baseline.iters", c.baseline.iterations);
    c.baseline.lambda = cfg.get_double("baseline.lambda", c.baseline.lambda);
    c.baseline.step_size = cfg.get_double("baseline.alpha", c.baseline.step_size);

    // surrogate comparison
    SurrogateSettings& s = c.surrogate;
    s.budget_tuples = cfg.get_size("surrogate.budget_tuples", s.budget_tuples);
    s.eval_tuples = cfg.get_size("surrogate.eval_tuples", s.eval_tuples);
    s.inner.iterations = cfg.get_size("surrogate.inner_iters", s.inner.iterations);
    s.inner.optimizer.step_size = cfg.get_double("surrogate.inner_alpha", s.inner.optimizer.step_size);
    s.inner.batch_size = cfg.get_size("surrogate.inner_batch", c.train.train_batch);
    const std::string gp = cfg.get_string("surrogate.gp", s.gp.hyperopt == GpHyperopt::mle ? "mle" : "fixed");
    require(gp == "mle" || gp == "fixed", "surrogate.gp = '" + gp + "' is not one of mle, fixed");
    s.gp.hyperopt = gp == "mle" ? GpHyperopt::mle : GpHyperopt::fixed;
    s.gp.hyper.length_scale = cfg.get_double("surrogate.gp_length_scale", s.gp.hyper.length_scale);
    s.gp.hyper.signal_variance = cfg.get_double("surrogate.gp_signal_variance", s.gp.hyper.signal_variance);
    s.gp.hyper.noise_variance = cfg.get_double("surrogate.gp_noise_variance", s.gp.hyper.noise_variance);
    s.gp.mle_signal = cfg.get_bool("surrogate.gp_fit_signal", s.gp.mle_signal);
    s.gp.mle_noise = cfg.get_bool("surrogate.gp_fit_noise", s.gp.mle_noise);
    s.gp.mle_starts = cfg.get_size("surrogate.gp_starts", s.gp.mle_starts);
    s.gp.standardize = cfg.get_bool("surrogate.gp_standardize", s.gp.standardize);
    s.fixed_set.iterations = cfg.get_size("surrogate.fixed_set_iters", s.fixed_set.iterations);
    s.fixed_set.optimizer = adam;
    s.fixed_set.optimizer.step_size = cfg.get_double("surrogate.fixed_set_alpha", 1e-4);
    s.histogram_bins = cfg.get_size("surrogate.histogram_bins", s.histogram_bins);

    c.sweep.lo = cfg.get_double("sweep.lo", c.sweep.lo);
    c.sweep.hi = cfg.get_double("sweep.hi", c.sweep.hi);
    c.sweep.points = cfg.get_size("sweep.points", c.sweep.points);
    c.sweep.params = cfg.resolve_path(cfg.get_string("sweep.params", c.sweep.params));

    c.gradcheck.configs = cfg.get_size("gradcheck.configs", c.gradcheck.configs);
    c.gradcheck.step = cfg.get_double("gradcheck.step", c.gradcheck.step);
    c.gradcheck.tolerance = cfg.get_double("gradcheck.tolerance", c.gradcheck.tolerance);
    c.gradcheck.floor = cfg.get_double("gradcheck.floor", c.gradcheck.floor);
    c.gradcheck.relu_margin = cfg.get_double("gradcheck.relu_margin", c.gradcheck.relu_margin);

    cfg.reject_unused();
    c.validate();
    return c;
}

void ExperimentConfig::validate() const
{
    const auto& sp = data.splits;
    require(sp.train >= 1 && sp.valid >= 1, "data.train and data.valid must both be at least 1");
    if (data.source == DataSource::mnist)
        require(!data.images.empty() && !data.labels.empty(), "data.source = mnist needs data.images and data.labels");
    else
        require(data.ridge.features >= 1, "data.features must be at least 1");
    for (std::size_t h : hidden)
        require(h >= 1, "model.hidden sizes must be at least 1");
    if (arch != HypernetArch::linear)
        require(hypernet_width >= 1, "hypernet.arch = " + to_string(arch) + " needs hypernet.width >= 1");
    require(train.init_gain >= 0.0, "hypernet.init_gain must be non-negative");

    require(train.phi_optimizer.step_size > 0.0, "optim.alpha must be positive");
    require(train.lambda_optimizer.step_size >= 0.0, "optim.beta must be non-negative");
    require(train.phi_optimizer.beta1 >= 0.0 && train.phi_optimizer.beta1 < 1.0 && train.phi_optimizer.beta2 >= 0.0 &&
                train.phi_optimizer.beta2 < 1.0 && train.phi_optimizer.epsilon > 0.0,
            "optim.beta1 and optim.beta2 must lie in [0, 1), optim.eps must be positive");
    require(train.hyper_samples >= 1, "train.hyper_samples must be at least 1");
    require(train.train_batch >= 1, "train.batch must be at least 1");
    require(train.lambda_min < train.lambda_max, "train.lambda_min must be below train.lambda_max");
    require(train.lambda_init >= train.lambda_min && train.lambda_init <= train.lambda_max,
            "train.lambda_init = " + fmt(train.lambda_init) + " lies outside [train.lambda_min, train.lambda_max] = [" +
                fmt(train.lambda_min) + ", " + fmt(train.lambda_max) + "]");

    require(global.prior.variance > 0.0, "global.variance must be positive");
    require(joint.local_variance > 0.0, "joint.local_variance must be positive");
    require(joint.k_phi >= 1 && joint.k_lambda >= 1, "joint.k_phi and joint.k_lambda must be at least 1");

    require(cv.candidates >= 1, "cv.candidates must be at least 1");
    require(cv.grid_lo <= cv.grid_hi, "cv.grid_lo must not exceed cv.grid_hi");
    require(cv.inner.batch_size >= 1, "cv.batch must be at least 1");

    switch (kind) {
    case ExperimentKind::perweight:
        require(reg == RegMode::per_weight, "perweight needs model.reg = per_weight");
        break;
    case ExperimentKind::sweep_curve:
        require(reg == RegMode::scalar, "sweep-curve needs model.reg = scalar (one lambda per grid point)");
        require(sweep.lo < sweep.hi && sweep.points >= 2, "sweep.lo must be below sweep.hi with sweep.points >= 2");
        break;
    case ExperimentKind::compare_surrogates:
        require(surrogate.budget_tuples >= 2, "surrogate.budget_tuples must be at least 2");
        require(surrogate.eval_tuples >= 1, "surrogate.eval_tuples must be at least 1");
        break;
    case ExperimentKind::cv_baseline:
        require(cv.search == SearchKind::random || reg == RegMode::scalar || cv.candidates >= 1,
                "cv.search = grid with model.reg = per_weight sets every weight to the same grid value");
        break;
    default:
        break;
    }
    if (!warm_start.empty())
        require(kind == ExperimentKind::joint || kind == ExperimentKind::simplified || kind == ExperimentKind::perweight,
                "joint.warm_start only applies to joint, simplified and perweight");
}

LoadedProblem load_problem(const ExperimentConfig& c)
{
    const std::uint64_t data_seed = c.data.seed.value_or(c.seed);
    LoadedProblem out;
    Dataset train, valid, test;
    std::size_t inputs = 0, outputs = 0;
    if (c.data.source == DataSource::ridge) {
        RidgeConfig rc = c.data.ridge;
        rc.n_train = c.data.splits.train;
        rc.n_valid = c.data.splits.valid;
        rc.n_test = c.data.splits.test;
        RidgeProblem rp = make_ridge_problem(rc, data_seed);
        train = rp.train;
        valid = rp.valid;
        test = rp.test;
        inputs = rc.features;
        outputs = 1;
        out.ridge = std::move(rp);
    } else {
        const Dataset pool = load_mnist_idx(c.data.images, c.data.labels);
        const std::size_t need = c.data.splits.train + c.data.splits.valid + c.data.splits.test;
        require(need <= pool.rows(), "data.train + data.valid + data.test = " + std::to_string(need) + " exceeds the " +
                                         std::to_string(pool.rows()) + " rows in data.images");
        Splits s = split_dataset(pool, c.data.splits, data_seed);
        train = std::move(s.train);
        valid = std::move(s.valid);
        test = std::move(s.test);
        inputs = pool.input_dim();
        outputs = pool.target_dim();
    }
    ModelSpec model;
    model.layer_sizes.push_back(inputs);
    model.layer_sizes.insert(model.layer_sizes.end(), c.hidden.begin(), c.hidden.end());
    model.layer_sizes.push_back(outputs);
    out.problem = Problem{model, RegSpec{c.reg}, std::move(train), std::move(valid), std::move(test)};
    out.problem.validate();
    return out;
}

ExperimentOutput run_experiment(const ExperimentConfig& c)
{
    c.validate();
    if (c.kind == ExperimentKind::gradcheck)
        return run_gradcheck(c);
    const LoadedProblem lp = load_problem(c);
    switch (c.kind) {
    case ExperimentKind::global_br: return run_global(c, lp);
    case ExperimentKind::joint: return run_joint(c, lp);
    case ExperimentKind::simplified: return run_simplified(c, lp);
    case ExperimentKind::cv_baseline: return run_cv(c, lp);
    case ExperimentKind::perweight: return run_perweight(c, lp);
    case ExperimentKind::compare_surrogates: return run_surrogates(c, lp);
    case ExperimentKind::sweep_curve: return run_sweep(c, lp);
    case ExperimentKind::gradcheck: break;
    }
    throw ConfigError("unhandled experiment " + to_string(c.kind));
}

std::string records_jsonl(const std::vector<RunRecord>& records, bool timestamps)
{
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["iteration"] = r.iteration;
        j["phase"] = r.phase;
        j["lambda"] = lambda_json(r.lambda);
        j["train_loss"] = number(r.losses.train);
        j["valid_loss"] = number(r.losses.valid);
        j["test_loss"] = number(r.losses.test);
        j["seed"] = r.seed;
        if (!r.warning.empty())
            j["warning"] = r.warning;
        if (timestamps)
            j["seconds"] = r.seconds;
        out += j.dump() + "\n";
    }
    return out;
}

void write_outputs(const ExperimentOutput& output, const std::string& dir, bool timestamps)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error("cannot create output directory '" + dir + "': " + ec.message());
    auto write = [&](const std::string& name, const std::string& text) {
        const fs::path path = fs::path(dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw Error("cannot write '" + path.string() + "'");
        out << text;
    };
    write("records.jsonl", records_jsonl(output.records, timestamps));
    write("summary.csv", output.csv);
    write("summary.json", output.summary.dump(2) + "\n");
    if (output.report)
        write("report.json", output.report->dump() + "\n");
    const std::string params = (fs::path(dir) / "params.bin").string();
    if (output.hypernet)
        save_hypernet(params, *output.hypernet);
    else if (output.weights)
        save_weights(params, *output.weights);
}

} // namespace hypertrain
