#include "doctest.h"

#include "hypertrain/errors.hpp"
#include "hypertrain/experiments.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace hypertrain;

namespace {

std::string config_error(const std::string& text, ExperimentKind kind)
{
    try {
        ExperimentConfig::from(Config::parse(text), kind);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

bool mentions(const std::string& message, std::initializer_list<const char*> keys)
{
    for (const char* k : keys)
        if (message.find(k) == std::string::npos)
            return false;
    return true;
}

std::size_t line_count(const std::string& text)
{
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

const std::string mnist_data = std::string("data.images = ") + HYPERTRAIN_SOURCE_DIR + "/data/mnist5k-images.idx\n" +
                               "data.labels = " + HYPERTRAIN_SOURCE_DIR + "/data/mnist5k-labels.idx\n";

ExperimentConfig small(ExperimentKind kind, const std::string& extra = "")
{
    return ExperimentConfig::from(Config::parse("timestamps = false\ntrain.record_every = 10\n" + extra), kind);
}

} // namespace

TEST_CASE("experiment names")
{
    CHECK(all_experiment_kinds().size() == 8);
    for (ExperimentKind k : all_experiment_kinds())
        CHECK(parse_experiment_kind(to_string(k)) == k);
    CHECK(to_string(ExperimentKind::compare_surrogates) == "compare-surrogates");
    CHECK_THROWS_AS(parse_experiment_kind("global_br"), ConfigError);
}

TEST_CASE("numbers round-trip")
{
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1e-300) == "1e-300");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("per-experiment defaults")
{
    const ExperimentConfig pw = ExperimentConfig::defaults(ExperimentKind::perweight);
    CHECK(pw.data.source == DataSource::mnist);
    CHECK(pw.reg == RegMode::per_weight);
    CHECK(pw.arch == HypernetArch::factorized);
    CHECK(pw.hypernet_width == 10);
    CHECK(pw.joint.iters == 500);

    const ExperimentConfig j = ExperimentConfig::defaults(ExperimentKind::joint);
    CHECK(j.data.source == DataSource::ridge);
    CHECK(j.joint.local_variance == 1e-5);
    CHECK(j.global.prior.variance == 1.5);
    CHECK(j.train.phi_optimizer.step_size == 1e-4);
    CHECK(j.train.hyper_samples == 2);
    CHECK(j.cv.select_on == SelectOn::valid);
}

TEST_CASE("config keys override defaults")
{
    const ExperimentConfig c = ExperimentConfig::from(
        Config::parse("seed = 4\n[optim]\nalpha = 0.01\nbeta = 0.02\n[joint]\nk_phi = 3\n[cv]\nselect_on = train\n"),
        ExperimentKind::joint);
    CHECK(c.seed == 4);
    CHECK(c.train.phi_optimizer.step_size == 0.01);
    CHECK(c.train.lambda_optimizer.step_size == 0.02);
    CHECK(c.joint.k_phi == 3);
    CHECK(c.cv.select_on == SelectOn::train);
}

TEST_CASE("inconsistent settings are rejected with both keys named")
{
    CHECK(mentions(config_error("train.lambda_init = 12\n", ExperimentKind::joint),
                   {"train.lambda_init", "train.lambda_min", "train.lambda_max"}));
    CHECK(mentions(config_error("hypernet.arch = mlp\n", ExperimentKind::joint), {"hypernet.arch", "hypernet.width"}));
    CHECK(mentions(config_error("model.reg = scalar\n", ExperimentKind::perweight), {"perweight", "model.reg"}));
    CHECK(mentions(config_error("model.reg = per_weight\n", ExperimentKind::sweep_curve), {"sweep-curve", "model.reg"}));
    CHECK(mentions(config_error("experiment = joint\n", ExperimentKind::simplified), {"experiment", "subcommand"}));
    CHECK(mentions(config_error("joint.local_variance = 0\n", ExperimentKind::joint), {"joint.local_variance"}));
    CHECK(mentions(config_error("global.variance = -1\n", ExperimentKind::global_br), {"global.variance"}));
    CHECK(mentions(config_error("optim.alpah = 1\n", ExperimentKind::joint), {"optim.alpah"}));
    CHECK(mentions(config_error("data.source = csv\n", ExperimentKind::joint), {"data.source"}));
}

TEST_CASE("dimension conflicts with the data are caught before training")
{
    const ExperimentConfig c = small(ExperimentKind::cv_baseline, mnist_data + "data.source = mnist\ndata.train = 5000\n");
    try {
        load_problem(c);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(mentions(e.what(), {"data.train", "data.images"}));
    }
}

TEST_CASE("warm start checkpoints must match the hypernetwork")
{
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "hypertrain_warm.bin";
    save_hypernet(path.string(), HypernetParams::init(HypernetSpec::linear(1, 5), 0));
    const ExperimentConfig c = small(ExperimentKind::joint, "joint.warm_start = " + path.string() + "\njoint.iters = 2\n");
    try {
        run_experiment(c);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(mentions(e.what(), {"joint.warm_start", "hypernet.arch"}));
    }
    fs::remove(path);
}

TEST_CASE("joint run output")
{
    const ExperimentConfig c = small(ExperimentKind::joint, "joint.iters = 30\noptim.beta = 0.01\n");
    const ExperimentOutput a = run_experiment(c);
    CHECK(first_line(a.csv) == "iteration,phase,lambda_mean,train_loss,valid_loss,test_loss,warning");
    CHECK(line_count(a.csv) == a.records.size() + 1);
    CHECK(a.summary.contains("oracle"));
    CHECK(a.summary["losses"]["valid"].get<double>() > 0.0);
    CHECK(a.hypernet.has_value());

    const ExperimentOutput b = run_experiment(c);
    CHECK(a.csv == b.csv);
    CHECK(records_jsonl(a.records, false) == records_jsonl(b.records, false));
    CHECK(records_jsonl(a.records, true).find("\"seconds\"") != std::string::npos);
    CHECK(records_jsonl(a.records, false).find("\"seconds\"") == std::string::npos);
}

TEST_CASE("global run reports the best-response check")
{
    const ExperimentOutput out = run_experiment(small(ExperimentKind::global_br, "global.phase1_iters = 20\nglobal.phase2_iters = 5\n"));
    const auto& br = out.summary["best_response"];
    CHECK(br["points"] == 41);
    CHECK(br["max_rel_error"].get<double>() >= 0.0);
}

TEST_CASE("cross-validation output marks one selected candidate")
{
    const ExperimentOutput out =
        run_experiment(small(ExperimentKind::cv_baseline, "cv.candidates = 5\ncv.inner_iters = 20\ncv.inner_alpha = 1e-2\n"));
    CHECK(first_line(out.csv) == "candidate,lambda_mean,train_loss,valid_loss,test_loss,status,selected");
    CHECK(line_count(out.csv) == 6);
    std::istringstream in(out.csv);
    std::string line;
    std::size_t selected = 0;
    while (std::getline(in, line))
        selected += line.ends_with(",1") ? 1 : 0;
    CHECK(selected == 1);
    CHECK(out.weights.has_value());
    CHECK_FALSE(out.hypernet.has_value());
}

TEST_CASE("sweep rows cover the grid and the candidates")
{
    const ExperimentOutput out = run_experiment(small(ExperimentKind::sweep_curve,
                                                      mnist_data + "data.train = 10\ndata.valid = 50\ndata.test = 50\n"
                                                                   "global.phase1_iters = 10\nglobal.phase2_iters = 0\n"
                                                                   "sweep.points = 7\ncv.candidates = 3\ncv.inner_iters = 5\n"));
    CHECK(first_line(out.csv) == "lambda,train_loss,valid_loss,source");
    CHECK(line_count(out.csv) == 1 + 7 + 3);
    std::istringstream in(out.csv);
    std::string line;
    std::size_t hyper = 0, cv = 0;
    while (std::getline(in, line)) {
        hyper += line.ends_with(",hypernet") ? 1 : 0;
        cv += line.ends_with(",cv") ? 1 : 0;
    }
    CHECK(hyper == 7);
    CHECK(cv == 3);
    CHECK(out.summary["argmin_distance"].get<double>() >= 0.0);
}

TEST_CASE("per-weight run compares against the fixed baseline")
{
    const ExperimentOutput out = run_experiment(small(ExperimentKind::perweight,
                                                      mnist_data + "data.train = 20\ndata.valid = 50\ndata.test = 50\n"
                                                                   "joint.iters = 3\njoint.k_phi = 2\n"));
    CHECK(out.summary["baseline"]["iterations"] == 6);
    CHECK(out.summary["lambda_stats"]["dim"] == 7850);
    CHECK(out.csv.find(",baseline,") != std::string::npos);
}

TEST_CASE("surrogate comparison rows")
{
    const ExperimentOutput out = run_experiment(small(ExperimentKind::compare_surrogates,
                                                      "surrogate.budget_tuples = 4\nsurrogate.eval_tuples = 3\n"
                                                      "surrogate.inner_iters = 20\nsurrogate.fixed_set_iters = 20\n"));
    CHECK(first_line(out.csv) == "method,index,inferred,true,error");
    CHECK(line_count(out.csv) == 1 + 3 * out.summary["methods"].size());
    CHECK(out.report.has_value());
}

TEST_CASE("gradcheck experiment")
{
    const ExperimentOutput out = run_experiment(small(ExperimentKind::gradcheck, "gradcheck.configs = 9\n"));
    CHECK(out.ok);
    CHECK(line_count(out.csv) == 10);
    CHECK(out.summary["passed"] == true);
}

TEST_CASE("outputs are written to the directory")
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "hypertrain_outputs";
    fs::remove_all(dir);
    const ExperimentOutput out = run_experiment(small(ExperimentKind::joint, "joint.iters = 5\n"));
    write_outputs(out, (dir / "nested").string(), false);
    for (const char* name : {"records.jsonl", "summary.csv", "summary.json", "params.bin"})
        CHECK(fs::exists(dir / "nested" / name));
    CHECK_FALSE(fs::exists(dir / "nested" / "report.json"));
    const HypernetParams back = load_hypernet((dir / "nested" / "params.bin").string());
    CHECK(back.flat() == out.hypernet->flat());
    fs::remove_all(dir);
}
