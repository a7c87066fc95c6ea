// Acceptance gate: runs every top-level criterion and prints one PASS/FAIL
// line each. Exits nonzero if any criterion fails.
//
// Criteria:
//   1. greedy within 4x of brute-force optimum on 1000 seeded instances
//   2. single-model rate bound on every enumerated sequence (exact ints)
//   3. constraint satisfaction end-to-end on 200 synthetic logs
//   4. sum_x tau(x,S) == sum_i n_i C_i on every constructed cascade
//   5. min-sum set cover equivalence on 200 reductions
//   6. graph cost == exhaustive simple-path enumeration on 200 graphs
//   7. isotonic fit == grid-DP monotone least squares on 100 datasets
//   8. synthetic five-model pool: cheaper cascade at alpha = 1.0
//   9. CLI build/evaluate reproduce the committed golden files byte-for-byte

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cascade/cli.hpp"
#include "cascade/serialize.hpp"
#include "cascade/suites.hpp"
#include "support/test_oracles.hpp"

using namespace cascade;

namespace {

constexpr std::uint64_t kSuiteSeed = 20260810;

int failures = 0;
bool bless_golden = false;

void report(const std::string& name, bool passed, const std::string& detail) {
    std::printf("[%s] %s%s%s\n", passed ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " — ", detail.c_str());
    if (!passed) ++failures;
}

std::string ratio_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void run_suite_criterion(const std::string& name, const SuiteReport& r,
                         const std::string& extra = "") {
    std::string detail = std::to_string(r.trials) + " trials, " +
                         std::to_string(r.violations) + " violations, worst ratio " +
                         ratio_str(r.worst_ratio) + extra;
    for (const std::string& msg : r.messages) detail += "\n       " + msg;
    report(name, r.passed(), detail);
}

// ---- criterion 4: tau identity over freshly constructed cascades --------

void identity_criterion() {
    std::size_t trials = 200, violations = 0;
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng(kSuiteSeed + 7000 + trial);
        RandomInstance inst = random_instance(rng, 6, 10);
        PredictionLog log = log_from_table(inst.table);

        // alternate linear and chain-graph costs
        CostFunction cf = inst.linear_cost;
        if (trial % 2 == 1) {
            ModelManifest manifest;
            double prefix = 0.0;
            for (std::size_t m = 0; m < inst.table.model_ids.size(); ++m) {
                prefix += 0.5 + rng.uniform(0.0, 3.0);
                manifest.entries.push_back({inst.table.model_ids[m], prefix});
                if (m > 0) {
                    manifest.reuse_edges.push_back({inst.table.model_ids[m - 1],
                                                    inst.table.model_ids[m],
                                                    prefix - manifest.entries[m - 1].cost});
                }
            }
            cf = CostFunction::graph_from_manifest(manifest);
        }

        auto trace = greedy_cascade(inst.table.example_ids, AccuracyConstraint::always_true(),
                                    cf, fixed_pool_generator(inst.table), log);
        if (!trace) {
            ++violations;
            continue;
        }
        Cascade cascade =
            cascade_from_trace(*trace, AccuracyConstraint::always_true(), cf.kind());
        std::vector<double> costs = cascade_stage_costs(cascade, cf);
        double tau_sum = 0.0;
        for (const std::string& x : inst.table.example_ids) {
            tau_sum += per_example_cost(cascade, costs, log, x);
        }
        double rel = std::fabs(tau_sum - trace->total_cost) /
                     std::max(1.0, std::fabs(trace->total_cost));
        worst = std::max(worst, rel);
        if (rel > 1e-9) ++violations;
    }
    report("identity_sum_tau_equals_sum_niCi", violations == 0,
           std::to_string(trials) + " cascades, worst relative gap " + ratio_str(worst));
}

// ---- criterion 6: shortest-path oracle ----------------------------------

void shortest_path_criterion() {
    std::size_t trials = 200, violations = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng(kSuiteSeed + 11000 + trial);
        std::size_t num_models = 1 + rng.below(7);  // + source <= 8 vertices
        CostGraph g;
        std::vector<testsupport::RawEdge> raw;
        for (std::size_t m = 0; m < num_models; ++m) {
            g.add_vertex("m" + std::to_string(m));
            double w = static_cast<double>(rng.below(11));  // integer weights: exact sums
            g.add_edge(CostGraph::kSource, m + 1, w);
            raw.push_back({0, m + 1, w});
        }
        for (std::size_t from = 1; from <= num_models; ++from) {
            for (std::size_t to = 1; to <= num_models; ++to) {
                if (from != to && rng.uniform() < 0.35) {
                    double w = static_cast<double>(rng.below(11));
                    g.add_edge(from, to, w);
                    raw.push_back({from, to, w});
                }
            }
        }
        CostFunction cf = CostFunction::graph(std::move(g));
        for (std::size_t target = 0; target < num_models; ++target) {
            std::vector<std::string> already;
            std::vector<std::size_t> sources{0};
            for (std::size_t m = 0; m < num_models; ++m) {
                if (m != target && rng.uniform() < 0.4) {
                    already.push_back("m" + std::to_string(m));
                    sources.push_back(m + 1);
                }
            }
            double got = cf.cost("m" + std::to_string(target), already);
            double expected = testsupport::exhaustive_min_path(num_models + 1, raw, sources,
                                                               target + 1);
            if (got != expected) ++violations;
        }
    }
    report("shortest_path_oracle", violations == 0,
           std::to_string(trials) + " graphs, " + std::to_string(violations) + " mismatches");
}

// ---- criterion 7: isotonic oracle ----------------------------------------

void isotonic_criterion() {
    std::size_t trials = 100, violations = 0;
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng(kSuiteSeed + 13000 + trial);
        std::size_t n = 1 + rng.below(6);
        std::vector<double> xs, ys, ws(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            xs.push_back(static_cast<double>(i));
            ys.push_back(rng.uniform());
        }
        AccuracyModel fit = fit_isotonic(xs, ys, "f");
        std::vector<double> dp = testsupport::grid_monotone_fit(ys, ws, 0.0, 1.0, 2.5e-4);
        for (std::size_t i = 0; i < n; ++i) {
            double diff = std::fabs(fit.values[i] - dp[i]);
            worst = std::max(worst, diff);
            if (diff > 1e-3) ++violations;
        }
    }
    report("isotonic_oracle", violations == 0,
           std::to_string(trials) + " datasets, worst per-value gap " + ratio_str(worst));
}

// ---- criterion 8: synthetic end-to-end analogue ---------------------------

// five-model pool with nested competence: model j is correct exactly on
// difficulty <= level[j]; confidence (logit gap) grows with the margin
PredictionLog e2e_log(Rng& rng, std::size_t n, const std::vector<double>& level,
                      std::vector<std::string>* example_ids) {
    const int num_classes = 5;
    PredictionLogBuilder builder;
    for (std::size_t i = 0; i < n; ++i) {
        std::string ex = "e" + std::to_string(i);
        if (example_ids) example_ids->push_back(ex);
        int label = static_cast<int>(rng.below(num_classes));
        double difficulty = rng.uniform();
        std::map<std::string, ModelOutput> outputs;
        for (std::size_t j = 0; j < level.size(); ++j) {
            bool correct = difficulty <= level[j];
            int pred = correct ? label
                               : static_cast<int>((label + 1 + rng.below(num_classes - 1)) %
                                                  num_classes);
            double gap = correct ? 1.0 + 4.0 * (level[j] - difficulty) + rng.uniform(-0.25, 0.25)
                                 : 0.2 + 0.8 * rng.uniform();
            std::vector<double> scores(num_classes);
            for (int c = 0; c < num_classes; ++c) scores[c] = rng.uniform(0.0, 0.1);
            scores[pred] = std::max(gap, 0.15);
            ModelOutput out;
            out.prediction = pred;
            out.scores = std::move(scores);
            outputs["m" + std::to_string(j)] = std::move(out);
        }
        builder.add_example({ex, label}, std::move(outputs));
    }
    return builder.build();
}

void e2e_criterion() {
    Rng rng(kSuiteSeed);
    const std::vector<double> level{0.55, 0.70, 0.82, 0.92, 0.99};
    const std::vector<double> cost{1.0, 2.0, 3.5, 6.0, 10.0};  // 10x span
    const std::size_t n = 1500;

    std::vector<std::string> train_R;
    PredictionLog train = e2e_log(rng, n, level, &train_R);
    PredictionLog test = e2e_log(rng, n, level, nullptr);

    std::map<std::string, double> base;
    std::vector<PoolEntry> pool;
    for (std::size_t j = 0; j < level.size(); ++j) {
        std::string id = "m" + std::to_string(j);
        base[id] = cost[j];
        pool.push_back({id, make_raw_feature_model("logit_gap")});
    }
    CostFunction cf = CostFunction::linear(std::move(base));
    AccuracyConstraint ac = AccuracyConstraint::min_relative(1.0, AccuracyMetricKind::Top1, "m4");
    GeneratorFn generator = [&](const std::vector<std::string>& remaining,
                                const std::vector<GeneratedModel>&) {
        return confident_model_set(remaining, pool, ac, train);
    };
    auto trace = greedy_cascade(train_R, ac, cf, generator, train);
    if (!trace) {
        report("synthetic_end_to_end", false, "greedy FAILURE");
        return;
    }
    Cascade cascade = cascade_from_trace(*trace, ac, cf.kind());
    EvaluationReport rep = evaluate_cascade(cascade, test, AccuracyMetricKind::Top1, cf);

    double ref_accuracy = 0.0;
    for (const LabeledExample& ex : test.examples()) {
        ref_accuracy += metric_value(AccuracyMetricKind::Top1,
                                     test.output(ex.example_id, "m4").prediction, ex.label);
    }
    ref_accuracy /= static_cast<double>(test.num_examples());
    double ref_cost = cf.cost("m4", {});

    bool cost_ok = rep.mean_tau <= 0.8 * ref_cost;
    bool accuracy_ok = rep.overall_accuracy >= ref_accuracy - 0.02;
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "mean tau %.4f vs cap %.4f; accuracy %.4f vs floor %.4f (%zu stages)",
                  rep.mean_tau, 0.8 * ref_cost, rep.overall_accuracy, ref_accuracy - 0.02,
                  cascade.stages.size());
    report("synthetic_end_to_end", cost_ok && accuracy_ok, detail);
}

// ---- criterion 9: golden-file CLI ----------------------------------------

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool compare_or_bless(const std::string& actual_path, const std::string& golden_path,
                      std::string* detail) {
    if (bless_golden) {
        std::filesystem::copy_file(actual_path, golden_path,
                                   std::filesystem::copy_options::overwrite_existing);
        return true;
    }
    if (!std::filesystem::exists(golden_path)) {
        *detail += " missing golden " + golden_path + ";";
        return false;
    }
    if (read_file(actual_path) != read_file(golden_path)) {
        *detail += " mismatch vs " + std::filesystem::path(golden_path).filename().string() + ";";
        return false;
    }
    return true;
}

void golden_cli_criterion() {
    const std::string fixtures = FIXTURES_DIR;
    const std::string bin = CASCTOOL_BIN;
    std::filesystem::path tmp =
        std::filesystem::temp_directory_path() / ("casctool_golden_" + std::to_string(getpid()));
    std::filesystem::create_directories(tmp);
    std::string tmps = tmp.string();

    std::string build_cmd = "cd '" + fixtures + "' && '" + bin +
                            "' build --train-log train.jsonl --manifest manifest.json"
                            " --reference m3 --alpha 0.9 --accuracy-model raw:logit_gap"
                            " --cost linear --out '" + tmps + "/cascade.json' > '" + tmps +
                            "/build_stdout.txt'";
    std::string eval_cmd = "cd '" + fixtures + "' && '" + bin +
                           "' evaluate --cascade '" + tmps + "/cascade.json'"
                           " --test-log test.jsonl --manifest manifest.json --out '" + tmps +
                           "/eval.csv' > '" + tmps + "/eval_stdout.txt'";

    std::string detail;
    bool ok = true;
    if (std::system(build_cmd.c_str()) != 0) {
        ok = false;
        detail += " build exited nonzero;";
    } else {
        ok &= compare_or_bless(tmps + "/cascade.json", fixtures + "/golden_cascade.json", &detail);
        ok &= compare_or_bless(tmps + "/build_stdout.txt", fixtures + "/golden_build_stdout.txt",
                               &detail);
    }
    if (ok && std::system(eval_cmd.c_str()) != 0) {
        ok = false;
        detail += " evaluate exited nonzero;";
    } else if (ok) {
        ok &= compare_or_bless(tmps + "/eval.csv", fixtures + "/golden_eval.csv", &detail);
        ok &= compare_or_bless(tmps + "/eval_stdout.txt", fixtures + "/golden_eval_stdout.txt",
                               &detail);
    }
    std::filesystem::remove_all(tmp);
    report("golden_cli_build_evaluate", ok,
           detail.empty() ? (bless_golden ? "golden files refreshed" : "byte-identical") : detail);
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--bless-golden") bless_golden = true;
    }

    auto t0 = std::chrono::steady_clock::now();
    SuiteReport four = run_four_approx_suite(1000, kSuiteSeed);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char timing[64];
    std::snprintf(timing, sizeof(timing), ", %.1fs", secs);
    if (secs >= 60.0) {
        four.violations += 1;
        four.messages.push_back("runtime budget exceeded");
    }
    run_suite_criterion("four_approximation", four, timing);

    run_suite_criterion("single_model_rate_bound", run_rate_bound_suite(1000, kSuiteSeed));
    run_suite_criterion("constraint_satisfaction",
                        run_constraint_suite(200, kSuiteSeed, {0.95, 1.0}));
    identity_criterion();
    run_suite_criterion("mssc_equivalence", run_mssc_suite(200, kSuiteSeed));
    shortest_path_criterion();
    isotonic_criterion();
    e2e_criterion();
    golden_cli_criterion();

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
