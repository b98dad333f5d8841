#pragma once

// Experiment definitions behind the command-line subcommands.
//
// An ExperimentConfig is read from a Config with per-experiment defaults,
// validated against the data before any training, and run to an
// ExperimentOutput. Writing the output produces, in the output directory:
//   records.jsonl   one RunRecord per line
//   summary.csv     deterministic table (no timings), per-experiment columns
//   summary.json    final hyperparameters, losses and oracle comparisons
//   params.bin      final hypernetwork (or elementary weights for cv-baseline)
//   report.json     compare-surrogates only: per-method predictions

#include "hypertrain/algorithms.hpp"
#include "hypertrain/config.hpp"
#include "hypertrain/gradcheck.hpp"
#include "hypertrain/ridge.hpp"
#include "hypertrain/surrogate.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hypertrain {

enum class ExperimentKind { global_br, joint, simplified, cv_baseline, perweight, compare_surrogates, gradcheck, sweep_curve };

/// Command-line names: global-br, joint, simplified, cv-baseline, perweight,
/// compare-surrogates, gradcheck, sweep-curve.
std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& text);
const std::vector<ExperimentKind>& all_experiment_kinds();

enum class DataSource { ridge, mnist };

struct DataSettings {
    DataSource source = DataSource::ridge;
    std::string images;
    std::string labels;
    /// Row counts of the three splits (ridge: n_train, n_valid, n_test).
    SplitSizes splits{15, 100, 100};
    RidgeConfig ridge{};
    /// Defaults to the run seed.
    std::optional<std::uint64_t> seed;
};

struct BaselineSettings {
    /// 0 means the hypernetwork step count of the joint run (iters * k_phi).
    std::size_t iterations = 0;
    double lambda = 0.0;
    /// 0 means optim.alpha.
    double step_size = 0.0;
};

struct SweepSettings {
    double lo = -6.0;
    double hi = 6.0;
    std::size_t points = 241;
    /// Hypernetwork checkpoint to sweep; empty trains one with the global settings.
    std::string params;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::global_br;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    /// Wall-clock seconds in records.jsonl; CSV output never carries timings.
    bool timestamps = true;

    DataSettings data;
    std::vector<std::size_t> hidden;
    RegMode reg = RegMode::scalar;
    HypernetArch arch = HypernetArch::linear;
    std::size_t hypernet_width = 0;

    /// Shared by the hyper-training runs; hypernet and seed are filled at run time.
    HyperTrainSettings train;
    GlobalSettings global;
    JointSettings joint;
    SimplifiedSettings simplified;
    std::string warm_start;
    CrossValidationSettings cv;
    BaselineSettings baseline;
    SurrogateSettings surrogate;
    SweepSettings sweep;
    GradcheckSettings gradcheck;

    /// Published constants plus the per-experiment data, model and hypernetwork choices.
    static ExperimentConfig defaults(ExperimentKind kind);
    /// Reads every key over the defaults; rejects unknown keys and an
    /// `experiment` key that names a different kind.
    static ExperimentConfig from(const Config& config, ExperimentKind kind);

    /// Checks settings that need no data. Messages name the conflicting keys.
    void validate() const;
};

struct ExperimentOutput {
    ExperimentKind kind = ExperimentKind::global_br;
    std::vector<RunRecord> records;
    std::string csv;
    nlohmann::json summary;
    std::optional<nlohmann::json> report;
    std::optional<HypernetParams> hypernet;
    std::optional<ElementaryWeights> weights;
    /// False when the experiment's own check failed (gradcheck).
    bool ok = true;
};

struct LoadedProblem {
    Problem problem;
    std::optional<RidgeProblem> ridge; ///< present for ridge data
};

/// Builds the data, model and regularizer; throws ConfigError on dimension conflicts.
LoadedProblem load_problem(const ExperimentConfig& config);

ExperimentOutput run_experiment(const ExperimentConfig& config);

/// JSON-lines text of the records, with or without wall-clock seconds.
std::string records_jsonl(const std::vector<RunRecord>& records, bool timestamps);

/// Writes the artifacts listed above into `dir`, creating it if needed.
void write_outputs(const ExperimentOutput& output, const std::string& dir, bool timestamps);

/// Shortest round-trip decimal form, "nan" and "inf" spelled out.
std::string format_number(double value);

} // namespace hypertrain
