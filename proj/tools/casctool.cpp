// casctool: builds, evaluates and sweeps cost-aware cascades of abstaining
// models from prediction logs, and runs the theory property suites.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cascade/cli.hpp"

int main(int argc, char** argv) {
    using cascade::cli::RunConfig;
    RunConfig config;

    CLI::App app{"cascade synthesis from prediction logs"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--train-log", config.train_log_path, "training prediction log (JSONL)");
        cmd->add_option("--test-log", config.test_log_path, "held-out prediction log (JSONL)");
        cmd->add_option("--manifest", config.manifest_path, "model manifest (JSON)");
        cmd->add_option("--alpha", config.alpha, "relative accuracy floor in (0, 1]");
        cmd->add_option("--metric", config.metric, "accuracy metric (top1)");
        cmd->add_option("--reference", config.reference, "reference model id");
        cmd->add_option("--accuracy-model", config.accuracy_model,
                        "raw:<feature> | logistic | isotonic:<feature>");
        cmd->add_option("--generator", config.generator, "confident | ensemble");
        cmd->add_option("--cost", config.cost_kind, "linear | graph");
        cmd->add_option("--out", config.out_path, "output file");
        cmd->add_option("--seed", config.seed, "random seed");
        cmd->add_option("--trials", config.trials, "property suite trials");
        cmd->add_flag("--allow-train-eval", config.allow_train_eval,
                      "permit evaluating on the build log");
    };

    CLI::App* build = app.add_subcommand("build", "fit accuracy models and build a cascade");
    add_common(build);
    CLI::App* evaluate = app.add_subcommand("evaluate", "run a cascade on a test log");
    add_common(evaluate);
    evaluate->add_option("--cascade", config.cascade_path, "cascade JSON produced by build");
    CLI::App* sweep = app.add_subcommand("sweep", "build+evaluate over an alpha grid");
    add_common(sweep);
    sweep->add_option("--alpha-grid", config.alpha_grid, "alpha values (default 1.00..0.95)");
    CLI::App* curve = app.add_subcommand("abstain-curve", "accuracy vs abstention rate CSV");
    add_common(curve);
    curve->add_option("--model", config.model_id, "model to sweep");
    curve->add_option("--curve-accuracy-model", config.curve_accuracy_models,
                      "accuracy-model kinds to plot (repeatable)");
    CLI::App* oracle = app.add_subcommand("oracle", "run the seeded property suites");
    add_common(oracle);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : cascade::cli::kValidationError;
    }

    if (build->parsed()) return cascade::cli::cmd_build(config, std::cout, std::cerr);
    if (evaluate->parsed()) return cascade::cli::cmd_evaluate(config, std::cout, std::cerr);
    if (sweep->parsed()) return cascade::cli::cmd_sweep(config, std::cout, std::cerr);
    if (curve->parsed()) return cascade::cli::cmd_abstain_curve(config, std::cout, std::cerr);
    if (oracle->parsed()) return cascade::cli::cmd_oracle(config, std::cout, std::cerr);
    return cascade::cli::kValidationError;
}
