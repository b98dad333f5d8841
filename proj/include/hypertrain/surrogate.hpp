#pragma once

// Predicting the validation loss of optimized weights at unseen hyperparameters.
//
// Three predictors share one budget of fully trained (lambda, weights) tuples:
//   gp          GP regression on the tuples' validation losses
//   fixed_set   a hypernetwork regressed onto the tuples' weights
//   hypertrain  a hypernetwork trained by global hyper-training with no more
//               training-gradient evaluations than building the tuples took
// Hypernetwork predictions are the validation loss of the emitted weights.

#include "hypertrain/algorithms.hpp"
#include "hypertrain/gp.hpp"
#include "hypertrain/hypernet.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hypertrain {

struct EvalTuple {
    Tensor lambda;
    ElementaryWeights weights;
    double valid_loss = 0.0;
    std::size_t gradient_evals = 0;
};

/// Trains weights from scratch at `lambda` and scores them on the full validation split.
EvalTuple make_eval_tuple(const Problem& problem, const Tensor& lambda, const ElementaryTraining& inner, Rng& rng);

struct TupleSet {
    std::vector<EvalTuple> tuples;   ///< successful runs, in lambda order
    std::vector<std::string> warnings; ///< one per failed run
};

/// One tuple per lambda, trained in parallel with rng substream (seed, stream, index).
TupleSet build_eval_tuples(const Problem& problem, const std::vector<Tensor>& lambdas,
                           const ElementaryTraining& inner, std::uint64_t seed, const std::string& stream,
                           std::size_t threads = 0);

/// Stacks tuple hyperparameters as rows [n x dim].
Tensor tuple_inputs(const std::vector<EvalTuple>& tuples);

struct FixedSetTraining {
    AdamConfig optimizer{1e-4};
    std::size_t iterations = 20000;
};

/// Minimizes the mean squared difference between emit(phi, lambda_i) and w_i.
HypernetParams fit_fixed_set(const HypernetSpec& spec, const std::vector<EvalTuple>& tuples,
                             const FixedSetTraining& training, std::uint64_t seed, double init_gain = 1.0);

/// Validation loss of the weights a hypernetwork emits at `lambda`.
double inferred_loss(const Problem& problem, const HypernetParams& phi, const Tensor& lambda);

struct SurrogateSettings {
    std::size_t budget_tuples = 25;
    std::size_t eval_tuples = 200;
    /// Where both tuple sets and the hyper-training samples come from.
    HyperDistribution prior = HyperDistribution::global(0.0, 1.5);
    /// Tuples are trained to convergence, not to the cross-validation budget.
    ElementaryTraining inner{2000, AdamConfig{1e-2}, 1000};
    /// sklearn's RBF regressor: zero prior mean, unit amplitude, length scale by evidence.
    GpOptions gp{GpHyperopt::mle, {1.0, 1.0, 1e-10}, true, false, false, 5, 300, 0};
    HypernetSpec hypernet;
    FixedSetTraining fixed_set{};
    /// Hypernetwork optimizer, samples and batch for the hyper-training arm.
    AdamConfig hyper_optimizer{1e-4};
    std::size_t hyper_samples = 2;
    double init_gain = 1.0;
    std::size_t histogram_bins = 20;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

struct Prediction {
    Tensor lambda;
    double inferred = 0.0;
    double truth = 0.0;
    double error() const { return inferred - truth; }
};

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;
};

struct MethodReport {
    std::string name;
    std::vector<Prediction> predictions;
    double mean_signed_error = 0.0;
    double mean_abs_error = 0.0;
    Histogram errors;
};

struct ComparisonReport {
    std::size_t budget_tuples = 0; ///< tuples that trained successfully
    std::size_t eval_tuples = 0;
    std::size_t budget_evals = 0;  ///< training-gradient evaluations spent on the budget tuples
    std::size_t hypertrain_evals = 0;
    GpHyper gp_hyper;
    std::vector<MethodReport> methods; ///< gp, fixed_set, hypertrain
    std::vector<std::string> warnings;

    const MethodReport& method(const std::string& name) const;
    nlohmann::json to_json() const;
};

/// Summary statistics and a histogram of (inferred - true) over `predictions`.
MethodReport summarize(std::string name, std::vector<Prediction> predictions, std::size_t bins);

/// Failed inner trainings shrink the tuple sets and add a warning. Throws
/// DivergenceError if fewer than two budget tuples or no held-out tuple survive.
ComparisonReport compare_surrogates(const Problem& problem, const SurrogateSettings& settings);

} // namespace hypertrain
