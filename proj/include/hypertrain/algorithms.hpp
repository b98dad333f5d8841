#pragma once

// Hyperparameter optimization procedures.
//
//   cross_validation        re-train weights from scratch for each proposed lambda
//   hypertrain_global       fit a hypernetwork over p(lambda), then descend lambda through it
//   hypertrain_joint        alternate hypernetwork steps near lambda-hat with lambda-hat steps
//   hypertrain_simplified   one hypernetwork step at lambda-hat, one lambda-hat step
//
// Hypernetwork steps minimize the training loss of emitted weights; lambda-hat
// steps follow the validation loss gradient through the hypernetwork. All
// randomness comes from named substreams of the settings seed.

#include "hypertrain/data.hpp"
#include "hypertrain/hypernet.hpp"
#include "hypertrain/model.hpp"
#include "hypertrain/optim.hpp"
#include "hypertrain/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hypertrain {

/// An elementary model, its regularizer and the data it is tuned on. The test
/// split may be empty.
struct Problem {
    ModelSpec model;
    RegSpec reg;
    Dataset train;
    Dataset valid;
    Dataset test;

    std::size_t hyper_dim() const { return reg.hyper_dim(model); }
    /// Throws ConfigError if splits and model dimensions disagree.
    void validate() const;
};

struct HyperDistribution {
    enum class Kind { global_gaussian, conditional_gaussian };

    Kind kind = Kind::global_gaussian;
    double mean = 0.0;
    double variance = 1.5;

    static HyperDistribution global(double mean, double variance) { return {Kind::global_gaussian, mean, variance}; }
    static HyperDistribution conditional(double variance) { return {Kind::conditional_gaussian, 0.0, variance}; }

    /// Independent draw per dimension: N(mean, variance) for the global kind,
    /// N(center_i, variance) for the conditional kind. `center` fixes the dimension.
    Tensor sample(const Tensor& center, Rng& rng) const;
    void validate() const;
};

struct Losses {
    double train = 0.0; ///< training loss including the penalty
    double valid = 0.0;
    double test = 0.0;  ///< NaN without a test split
};

Losses evaluate(const Problem& problem, const ElementaryWeights& weights, const Tensor& lambda);

struct RunRecord {
    std::size_t iteration = 0;
    std::string phase;
    Tensor lambda;
    Losses losses;
    double seconds = 0.0; ///< wall time since the run started
    std::uint64_t seed = 0;
    std::string warning;
};

/// Elementary-gradient evaluations: one per (weights, minibatch) gradient of
/// the training loss. Hypernetwork steps count one per hyperparameter sample.
struct GradientCounter {
    std::size_t train = 0;
    std::size_t valid = 0;
};

// ---------------------------------------------------------------------------
// Cross-validation

enum class SearchKind { random, grid };
enum class SelectOn { train, valid };

std::string to_string(SearchKind kind);
SearchKind parse_search_kind(const std::string& text);
std::string to_string(SelectOn select);
SelectOn parse_select_on(const std::string& text);

struct ElementaryTraining {
    std::size_t iterations = 1000;
    AdamConfig optimizer{};
    std::size_t batch_size = 1000;
};

struct TrainedWeights {
    ElementaryWeights weights;
    std::size_t gradient_evals = 0;
};

/// Adam on the training loss from weights initialized with `rng`.
TrainedWeights train_elementary(const Problem& problem, const Tensor& lambda, const ElementaryTraining& training,
                                Rng& rng);

struct CrossValidationSettings {
    SearchKind search = SearchKind::grid;
    std::size_t candidates = 21;
    /// Grid range; random search draws from `prior` instead.
    double grid_lo = -6.0;
    double grid_hi = 6.0;
    HyperDistribution prior = HyperDistribution::global(0.0, 1.5);
    ElementaryTraining inner{};
    SelectOn select_on = SelectOn::valid;
    std::uint64_t seed = 0;
    /// 0 selects HYPERTRAIN_THREADS or the hardware concurrency.
    std::size_t threads = 0;
};

struct Candidate {
    std::size_t index = 0;
    Tensor lambda;
    std::optional<ElementaryWeights> weights;
    Losses losses;
    std::size_t gradient_evals = 0;
    std::string error; ///< non-empty when the inner run failed
    bool failed() const { return !error.empty(); }
};

struct CrossValidationResult {
    std::size_t best = 0;
    Tensor lambda;
    ElementaryWeights weights;
    std::vector<Candidate> candidates;
    std::vector<RunRecord> records;
    GradientCounter counts;
};

/// Throws DivergenceError if every candidate fails.
CrossValidationResult cross_validation(const Problem& problem, const CrossValidationSettings& settings);

// ---------------------------------------------------------------------------
// Hyper-training

struct HyperTrainSettings {
    HypernetSpec hypernet;
    AdamConfig phi_optimizer{1e-4};
    AdamConfig lambda_optimizer{1e-4};
    /// Hyperparameter samples per hypernetwork step.
    std::size_t hyper_samples = 2;
    std::size_t train_batch = 1000;
    /// 0 means the training batch size.
    std::size_t valid_batch = 0;
    double lambda_init = 0.0;
    double lambda_min = -10.0;
    double lambda_max = 10.0;
    /// Record losses every this many (outer) iterations and at the end; 0 records only the end.
    std::size_t record_every = 100;
    std::uint64_t seed = 0;
    /// Scale on the fan-in uniform init of the hypernetwork weight matrices.
    double init_gain = 1.0;
    std::optional<HypernetParams> warm_start;
};

struct HyperTrainResult {
    Tensor lambda;
    ElementaryWeights weights;
    HypernetParams phi;
    std::vector<RunRecord> records;
    GradientCounter counts;
};

/// Called after each hypernetwork phase-1 iteration with (iteration, phi); for checkpoints.
using PhiObserver = std::function<void(std::size_t, const HypernetParams&)>;

struct GlobalSettings {
    HyperTrainSettings common;
    HyperDistribution prior = HyperDistribution::global(0.0, 1.5);
    std::size_t phase1_iters = 1000;
    std::size_t phase2_iters = 100;
    PhiObserver observer;
};

struct JointSettings {
    HyperTrainSettings common;
    double local_variance = 1e-5;
    std::size_t iters = 100;
    std::size_t k_phi = 10;
    std::size_t k_lambda = 1;
};

struct SimplifiedSettings {
    HyperTrainSettings common;
    std::size_t iters = 100;
};

HyperTrainResult hypertrain_global(const Problem& problem, const GlobalSettings& settings);
HyperTrainResult hypertrain_joint(const Problem& problem, const JointSettings& settings);
HyperTrainResult hypertrain_simplified(const Problem& problem, const SimplifiedSettings& settings);

/// d/d lambda of the validation loss of emit(phi, lambda) on `batch`, through
/// the hypernetwork only.
Tensor hyper_gradient(const HypernetParams& phi, const HyperPoint& point, const ModelSpec& model, const Batch& batch);

/// Mean training loss of emit(phi, lambda_s) over the samples, with its
/// gradient in phi. Exposed for tests and gradient checks.
struct PhiObjective {
    double loss = 0.0;
    Tensor gradient;
};
PhiObjective hypernet_objective(const Problem& problem, const HypernetParams& phi, const std::vector<Tensor>& lambdas,
                                const Batch& batch);

} // namespace hypertrain
