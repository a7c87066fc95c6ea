#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cascade/cascade.hpp"

namespace cascade::cli {

// Exit codes shared by all subcommands.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 2;
inline constexpr int kGreedyFailure = 3;
inline constexpr int kPropertyViolation = 4;

struct RunConfig {
    std::string train_log_path;
    std::string test_log_path;
    std::string manifest_path;
    std::string cascade_path;  // input cascade for evaluate

    double alpha = 1.0;
    std::vector<double> alpha_grid;  // sweep; empty = {1 - i/100 : 0 <= i <= 5}
    std::string metric = "top1";
    std::string reference;  // empty = always-true constraint
    std::string accuracy_model = "raw:logit_gap";
    std::vector<std::string> curve_accuracy_models;  // abstain-curve kinds
    std::string generator = "confident";
    std::string cost_kind = "linear";
    std::string model_id;  // abstain-curve target
    std::string out_path;

    std::uint64_t seed = 1;
    std::size_t trials = 1000;
    bool allow_train_eval = false;
};

// Builds a cascade on the train log and writes the cascade JSON (when
// --out is given) plus a stage table on stdout.
int cmd_build(const RunConfig& config, std::ostream& out, std::ostream& err);

// Runs a saved cascade on a test log; text report on stdout, optional CSV.
// Refuses a test log matching the build log by path or content hash unless
// allow_train_eval is set.
int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err);

// build + evaluate per alpha; CSV of (alpha, status, accuracy, mean cost).
int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err);

// Abstention/accuracy tradeoff CSV for one model: one curve per requested
// accuracy-model kind plus the perfect-oracle curve.
int cmd_abstain_curve(const RunConfig& config, std::ostream& out, std::ostream& err);

// Seeded property suites; nonzero exit on any violation.
int cmd_oracle(const RunConfig& config, std::ostream& out, std::ostream& err);

std::string format_threshold(double threshold);

}  // namespace cascade::cli
