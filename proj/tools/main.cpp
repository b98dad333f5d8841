// Command-line harness: one subcommand per experiment.

#include "hypertrain/errors.hpp"
#include "hypertrain/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace hypertrain;

struct Options {
    std::string config;
    std::string out;
    std::string select_on;
    std::vector<std::string> overrides;
    long long seed = -1;
    bool quiet = false;
};

const char* describe(ExperimentKind kind)
{
    switch (kind) {
    case ExperimentKind::global_br: return "global best-response training";
    case ExperimentKind::joint: return "joint hypernetwork and hyperparameter training";
    case ExperimentKind::simplified: return "simplified joint training";
    case ExperimentKind::cv_baseline: return "grid or random search with full inner training";
    case ExperimentKind::perweight: return "per-weight decay with a factorized hypernetwork";
    case ExperimentKind::compare_surrogates: return "GP vs hypernetwork validation-loss prediction";
    case ExperimentKind::gradcheck: return "tape gradients against finite differences";
    case ExperimentKind::sweep_curve: return "validation loss over a lambda grid";
    }
    return "";
}

int fail(const std::string& kind, const std::string& message, int code)
{
    nlohmann::json j = {{"error", {{"kind", kind}, {"message", message}}}};
    std::cerr << j.dump() << "\n";
    return code;
}

int run(ExperimentKind kind, const Options& opt)
{
    Config cfg = opt.config.empty() ? Config{} : Config::load(opt.config);
    for (const auto& kv : opt.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opt.seed >= 0)
        cfg.set("seed", std::to_string(opt.seed));
    if (!opt.select_on.empty())
        cfg.set("cv.select_on", opt.select_on);

    const ExperimentConfig ec = ExperimentConfig::from(cfg, kind);
    const std::string dir = opt.out.empty() ? "out/" + to_string(kind) : opt.out;
    const ExperimentOutput output = run_experiment(ec);
    write_outputs(output, dir, ec.timestamps);
    if (!opt.quiet)
        std::cout << output.summary.dump(2) << "\n";
    return output.ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hyperparameter optimization through hypernetworks"};
    app.require_subcommand(1);
    Options opt;
    std::vector<std::pair<CLI::App*, ExperimentKind>> commands;
    for (ExperimentKind kind : all_experiment_kinds()) {
        CLI::App* sub = app.add_subcommand(to_string(kind), describe(kind));
        sub->add_option("--config", opt.config, "key = value config file");
        sub->add_option("--seed", opt.seed, "run seed, overrides the config")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", opt.out, "output directory (default out/<experiment>)");
        sub->add_option("--select-on", opt.select_on, "cross-validation selection split")->check(CLI::IsMember({"train", "valid"}));
        sub->add_option("--set", opt.overrides, "override one config key, key=value");
        sub->add_flag("--quiet", opt.quiet, "do not print the summary");
        commands.emplace_back(sub, kind);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        return fail("usage", e.what(), 2);
    }

    try {
        for (const auto& [sub, kind] : commands)
            if (sub->parsed())
                return run(kind, opt);
    } catch (const ConfigError& e) {
        return fail(e.kind(), e.what(), 2);
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return fail("usage", "no subcommand", 2);
}
