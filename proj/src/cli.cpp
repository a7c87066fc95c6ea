#include "cascade/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cascade/serialize.hpp"
#include "cascade/suites.hpp"

namespace cascade::cli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_ratio(double v) { return std::isfinite(v) ? fmt(v) : "inf"; }

struct BuildInputs {
    PredictionLog train_log;
    ModelManifest manifest;
    CostFunction cost;
    AccuracyConstraint constraint;
    AccuracyModelSpec accuracy_spec;
    std::vector<PoolEntry> pool;
    AccuracyMetricKind metric = AccuracyMetricKind::Top1;
};

void validate_common(const RunConfig& config) {
    if (!(config.alpha > 0.0 && config.alpha <= 1.0)) {
        throw ValidationError("--alpha must be in (0, 1]");
    }
    if (config.generator != "confident" && config.generator != "ensemble") {
        throw ValidationError("--generator must be 'confident' or 'ensemble'");
    }
    if (config.cost_kind != "linear" && config.cost_kind != "graph") {
        throw ValidationError("--cost must be 'linear' or 'graph'");
    }
}

CostFunction cost_from_config(const RunConfig& config, const ModelManifest& manifest) {
    return config.cost_kind == "graph" ? CostFunction::graph_from_manifest(manifest)
                                       : CostFunction::linear_from_manifest(manifest);
}

BuildInputs load_build_inputs(const RunConfig& config, double alpha) {
    validate_common(config);
    if (config.train_log_path.empty()) throw ValidationError("--train-log is required");
    if (config.manifest_path.empty()) throw ValidationError("--manifest is required");

    BuildInputs inputs;
    inputs.metric = parse_metric_kind(config.metric);
    inputs.train_log = load_prediction_log(config.train_log_path);
    inputs.manifest = load_model_manifest(config.manifest_path);
    inputs.cost = cost_from_config(config, inputs.manifest);
    inputs.accuracy_spec = AccuracyModelSpec::parse(config.accuracy_model);

    for (const ManifestEntry& entry : inputs.manifest.entries) {
        if (!inputs.train_log.has_model(entry.id)) {
            throw ValidationError("manifest model '" + entry.id + "' missing from train log");
        }
    }
    if (!config.reference.empty()) {
        if (!inputs.manifest.has_model(config.reference)) {
            throw ValidationError("--reference model '" + config.reference +
                                  "' not in manifest");
        }
        inputs.constraint =
            AccuracyConstraint::min_relative(alpha, inputs.metric, config.reference);
    } else {
        inputs.constraint = AccuracyConstraint::always_true();
    }

    // one accuracy model per pool model, fitted on the train log
    for (const ManifestEntry& entry : inputs.manifest.entries) {
        PoolEntry pe;
        pe.model_id = entry.id;
        if (inputs.accuracy_spec.kind == AccuracyModelSpec::Kind::Raw) {
            pe.accuracy_model = make_raw_feature_model(inputs.accuracy_spec.feature);
        } else {
            std::vector<FeatureMap> features;
            std::vector<double> metric_values;
            features.reserve(inputs.train_log.num_examples());
            for (const LabeledExample& ex : inputs.train_log.examples()) {
                features.push_back(
                    example_features(inputs.train_log, ex.example_id, entry.id));
                metric_values.push_back(metric_value(
                    inputs.metric, inputs.train_log.output(ex.example_id, entry.id).prediction,
                    ex.label));
            }
            pe.accuracy_model =
                fit_accuracy_model(inputs.accuracy_spec, features, metric_values);
        }
        inputs.pool.push_back(std::move(pe));
    }
    return inputs;
}

GeneratorFn make_generator(const BuildInputs& inputs, const RunConfig& config) {
    if (config.generator == "ensemble") {
        return [&inputs](const std::vector<std::string>& remaining,
                         const std::vector<GeneratedModel>& prior) {
            std::vector<std::string> prior_ids;
            for (const GeneratedModel& p : prior) {
                for (std::string& id : p.computed_base_ids()) {
                    if (std::find(prior_ids.begin(), prior_ids.end(), id) == prior_ids.end()) {
                        prior_ids.push_back(std::move(id));
                    }
                }
            }
            return ensemble_generator(remaining, prior_ids, inputs.pool, inputs.constraint,
                                      inputs.train_log, inputs.accuracy_spec);
        };
    }
    return [&inputs](const std::vector<std::string>& remaining,
                     const std::vector<GeneratedModel>&) {
        return confident_model_set(remaining, inputs.pool, inputs.constraint, inputs.train_log);
    };
}

struct BuildResult {
    bool failed = false;  // greedy returned FAILURE
    Cascade cascade;
    CascadeTrace trace;
};

BuildResult run_build(const RunConfig& config, double alpha) {
    BuildInputs inputs = load_build_inputs(config, alpha);
    std::vector<std::string> R;
    R.reserve(inputs.train_log.num_examples());
    for (const LabeledExample& ex : inputs.train_log.examples()) R.push_back(ex.example_id);

    GeneratorFn generator = make_generator(inputs, config);
    auto trace =
        greedy_cascade(R, inputs.constraint, inputs.cost, generator, inputs.train_log);
    BuildResult result;
    if (!trace) {
        result.failed = true;
        return result;
    }
    result.trace = std::move(*trace);
    result.cascade = cascade_from_trace(result.trace, inputs.constraint, inputs.cost.kind());
    result.cascade.train_log_path = config.train_log_path;
    result.cascade.train_log_hash = file_content_hash(config.train_log_path);
    return result;
}

void print_stage_table(const Cascade& cascade, std::ostream& out) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%5s  %-20s  %6s  %12s  %12s  %8s  %12s\n", "stage", "model",
                  "n", "stage_cost", "threshold", "answered", "ratio");
    out << buf;
    for (std::size_t i = 0; i < cascade.stage_table.size(); ++i) {
        const StageStats& s = cascade.stage_table[i];
        std::snprintf(buf, sizeof(buf), "%5zu  %-20s  %6zu  %12s  %12s  %8zu  %12s\n", i + 1,
                      s.model_id.c_str(), s.n, fmt(s.stage_cost).c_str(),
                      format_threshold(s.threshold).c_str(), s.answered,
                      fmt_ratio(s.ratio).c_str());
        out << buf;
    }
    out << "T       = " << fmt(cascade.build_total_cost) << "\n";
    out << "C_sigma = " << fmt(cascade.build_total_stage_cost) << "\n";
}

void check_train_eval_guard(const RunConfig& config, const Cascade& cascade) {
    if (config.allow_train_eval) return;
    if (!cascade.train_log_path.empty() && config.test_log_path == cascade.train_log_path) {
        throw ValidationError("test log is the build log (same path); pass --allow-train-eval "
                              "to evaluate anyway");
    }
    if (!cascade.train_log_hash.empty() &&
        file_content_hash(config.test_log_path) == cascade.train_log_hash) {
        throw ValidationError("test log matches the build log content; pass --allow-train-eval "
                              "to evaluate anyway");
    }
}

std::string evaluation_csv(const EvaluationReport& report) {
    std::ostringstream csv;
    csv << "stage,model_id,stage_cost,threshold,fraction_classified,accuracy_on_classified\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const StageEvalRow& r = report.rows[i];
        csv << (i + 1) << "," << r.model_id << "," << fmt(r.stage_cost) << ","
            << format_threshold(r.threshold) << "," << fmt(r.fraction_classified) << ","
            << fmt(r.accuracy_on_classified) << "\n";
    }
    return csv.str();
}

void print_evaluation(const EvaluationReport& report, std::ostream& out) {
    out << "overall_accuracy = " << fmt(report.overall_accuracy) << "\n";
    out << "mean_tau         = " << fmt(report.mean_tau) << "\n";
    out << "unanswered       = " << fmt(report.unanswered_fraction) << "\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%5s  %-20s  %12s  %12s  %12s  %12s\n", "stage", "model",
                  "stage_cost", "threshold", "classified", "accuracy");
    out << buf;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const StageEvalRow& r = report.rows[i];
        std::snprintf(buf, sizeof(buf), "%5zu  %-20s  %12s  %12s  %12s  %12s\n", i + 1,
                      r.model_id.c_str(), fmt(r.stage_cost).c_str(),
                      format_threshold(r.threshold).c_str(), fmt(r.fraction_classified).c_str(),
                      fmt(r.accuracy_on_classified).c_str());
        out << buf;
    }
}

void write_out_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open '" + path + "' for writing");
    f << content;
}

EvaluationReport evaluate_against(const RunConfig& config, const Cascade& cascade) {
    if (config.test_log_path.empty()) throw ValidationError("--test-log is required");
    if (config.manifest_path.empty()) throw ValidationError("--manifest is required");
    check_train_eval_guard(config, cascade);
    PredictionLog test_log = load_prediction_log(config.test_log_path);
    ModelManifest manifest = load_model_manifest(config.manifest_path);
    CostFunction cf = cascade.cost_kind == CostFunction::Kind::Graph
                          ? CostFunction::graph_from_manifest(manifest)
                          : CostFunction::linear_from_manifest(manifest);
    // composites register synthetic vertices at build time; re-register here
    for (const GeneratedModel& stage : cascade.stages) {
        if (stage.provenance == GeneratedModel::Provenance::Composite) {
            const auto& comp = std::get<CompositeAbstainingModel>(stage.model);
            double scratch = cf.cost(comp.chain.back().model_id, {});
            cf.register_model(comp.id, scratch);
            if (cf.kind() == CostFunction::Kind::Graph) {
                for (const AbstainingModel& member : comp.chain) {
                    cf.add_reuse_edge(comp.id, member.model_id, 0.0);
                }
            }
        }
    }
    return evaluate_cascade(cascade, test_log, parse_metric_kind(config.metric), cf);
}

}  // namespace

std::string format_threshold(double threshold) {
    if (threshold == kInf) return "+inf";
    if (threshold == -kInf) return "-inf";
    return fmt(threshold);
}

int cmd_build(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        BuildResult result = run_build(config, config.alpha);
        if (result.failed) {
            err << "FAILURE: no useful candidate satisfies the accuracy constraint\n";
            return kGreedyFailure;
        }
        if (!config.out_path.empty()) save_cascade(result.cascade, config.out_path);
        print_stage_table(result.cascade, out);
        return kOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        if (config.cascade_path.empty()) throw ValidationError("--cascade is required");
        Cascade cascade = load_cascade(config.cascade_path);
        EvaluationReport report = evaluate_against(config, cascade);
        print_evaluation(report, out);
        if (!config.out_path.empty()) write_out_file(config.out_path, evaluation_csv(report));
        return kOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        std::vector<double> grid = config.alpha_grid;
        if (grid.empty()) {
            for (int i = 0; i <= 5; ++i) grid.push_back(1.0 - static_cast<double>(i) / 100.0);
        }
        for (double alpha : grid) {
            if (!(alpha > 0.0 && alpha <= 1.0)) {
                throw ValidationError("--alpha-grid values must be in (0, 1]");
            }
        }
        std::ostringstream csv;
        csv << "alpha,status,accuracy,mean_cost\n";
        for (double alpha : grid) {
            BuildResult result = run_build(config, alpha);
            if (result.failed) {
                csv << fmt(alpha) << ",FAILURE,,\n";
                continue;
            }
            EvaluationReport report = evaluate_against(config, result.cascade);
            csv << fmt(alpha) << ",OK," << fmt(report.overall_accuracy) << ","
                << fmt(report.mean_tau) << "\n";
        }
        if (!config.out_path.empty()) {
            write_out_file(config.out_path, csv.str());
        } else {
            out << csv.str();
        }
        return kOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

int cmd_abstain_curve(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        validate_common(config);
        if (config.train_log_path.empty()) throw ValidationError("--train-log is required");
        if (config.model_id.empty()) throw ValidationError("--model is required");
        PredictionLog log = load_prediction_log(config.train_log_path);
        if (!log.has_model(config.model_id)) {
            throw ValidationError("model '" + config.model_id + "' not in log");
        }
        AccuracyMetricKind metric = parse_metric_kind(config.metric);

        std::vector<std::string> kinds = config.curve_accuracy_models;
        if (kinds.empty()) kinds.push_back(config.accuracy_model);

        std::ostringstream csv;
        csv << "curve,abstention_rate,accuracy\n";
        auto emit = [&](const std::string& name, const std::vector<TradeoffPoint>& curve) {
            for (const TradeoffPoint& p : curve) {
                csv << name << "," << fmt(p.abstention_rate) << "," << fmt(p.accuracy) << "\n";
            }
        };

        for (const std::string& kind_text : kinds) {
            AccuracyModelSpec spec = AccuracyModelSpec::parse(kind_text);
            AccuracyModel am;
            if (spec.kind == AccuracyModelSpec::Kind::Raw) {
                am = make_raw_feature_model(spec.feature);
            } else {
                std::vector<FeatureMap> features;
                std::vector<double> metric_values;
                for (const LabeledExample& ex : log.examples()) {
                    features.push_back(example_features(log, ex.example_id, config.model_id));
                    metric_values.push_back(metric_value(
                        metric, log.output(ex.example_id, config.model_id).prediction,
                        ex.label));
                }
                am = fit_accuracy_model(spec, features, metric_values);
            }
            emit(kind_text, abstention_tradeoff_curve(config.model_id, am, log, metric));
        }

        // perfect-oracle curve: q-hat equals the true metric
        std::vector<double> metric_values;
        for (const LabeledExample& ex : log.examples()) {
            metric_values.push_back(metric_value(
                metric, log.output(ex.example_id, config.model_id).prediction, ex.label));
        }
        emit("oracle", abstention_tradeoff_curve_from_values(metric_values, metric_values));

        if (!config.out_path.empty()) {
            write_out_file(config.out_path, csv.str());
        } else {
            out << csv.str();
        }
        return kOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

int cmd_oracle(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        if (config.trials == 0) {
            out << "warning: trials=0, all suites vacuously pass\n";
            return kOk;
        }
        std::vector<SuiteReport> reports;
        reports.push_back(run_four_approx_suite(config.trials, config.seed));
        reports.push_back(run_rate_bound_suite(config.trials, config.seed));
        reports.push_back(run_mssc_suite(config.trials, config.seed));
        reports.push_back(run_domination_suite(config.trials, config.seed));

        bool all_passed = true;
        for (const SuiteReport& r : reports) {
            out << (r.passed() ? "PASS" : "FAIL") << "  " << r.name << "  trials=" << r.trials
                << "  violations=" << r.violations << "  worst_ratio=" << fmt(r.worst_ratio)
                << "\n";
            for (const std::string& msg : r.messages) out << "      " << msg << "\n";
            all_passed = all_passed && r.passed();
        }
        return all_passed ? kOk : kPropertyViolation;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

}  // namespace cascade::cli
