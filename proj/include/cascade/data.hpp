#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cascade {

// Thrown for malformed or inconsistent input files and bad arguments.
// The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LabeledExample {
    std::string example_id;
    int label = 0;  // integer class index >= 0

    bool operator==(const LabeledExample&) const = default;
};

// One model's logged output on one example. `scores` are raw per-class
// scores (logits); when present, prediction must equal the argmax (ties
// broken by lowest index). `features` are optional precomputed confidence
// features for pools that did not retain logits.
struct ModelOutput {
    int prediction = 0;
    std::optional<std::vector<double>> scores;
    std::map<std::string, double> features;

    bool operator==(const ModelOutput&) const = default;
};

// Immutable table of per-example, per-model outputs. Totality invariant:
// every (example, model) cell is present. Read-only after construction,
// safe for concurrent readers.
class PredictionLog {
public:
    PredictionLog() = default;
    PredictionLog(std::vector<LabeledExample> examples,
                  std::vector<std::string> model_ids,
                  std::vector<std::vector<ModelOutput>> outputs);

    const std::vector<LabeledExample>& examples() const { return examples_; }
    const std::vector<std::string>& model_ids() const { return model_ids_; }

    std::size_t num_examples() const { return examples_.size(); }
    std::size_t num_models() const { return model_ids_.size(); }

    bool has_example(std::string_view example_id) const;
    bool has_model(std::string_view model_id) const;

    std::size_t example_index(std::string_view example_id) const;
    std::size_t model_index(std::string_view model_id) const;

    int label(std::string_view example_id) const;

    const ModelOutput& output(std::string_view example_id, std::string_view model_id) const;
    const ModelOutput& output(std::size_t example_idx, std::size_t model_idx) const {
        return outputs_[example_idx][model_idx];
    }

    bool operator==(const PredictionLog& other) const {
        return examples_ == other.examples_ && model_ids_ == other.model_ids_ &&
               outputs_ == other.outputs_;
    }

private:
    std::vector<LabeledExample> examples_;
    std::vector<std::string> model_ids_;
    std::vector<std::vector<ModelOutput>> outputs_;  // [example][model]
    std::unordered_map<std::string, std::size_t> example_index_;
    std::unordered_map<std::string, std::size_t> model_index_;

    void build_indexes();
};

// Incremental construction with totality/uniqueness validation at build().
class PredictionLogBuilder {
public:
    // Model order of the resulting log = order of first appearance.
    void add_example(LabeledExample example, std::map<std::string, ModelOutput> outputs);
    PredictionLog build();

private:
    std::vector<LabeledExample> examples_;
    std::vector<std::string> model_ids_;
    std::vector<std::vector<ModelOutput>> outputs_;
};

struct ManifestEntry {
    std::string id;
    double cost = 0.0;  // from-scratch cost, user-declared units
};

// Reuse edge of the cost graph; from == nullopt means the source vertex.
struct ReuseEdge {
    std::optional<std::string> from;
    std::string to;
    double weight = 0.0;
};

struct ModelManifest {
    std::vector<ManifestEntry> entries;
    std::vector<ReuseEdge> reuse_edges;

    bool has_model(std::string_view id) const;
    double base_cost(std::string_view id) const;
};

enum class AccuracyMetricKind {
    Top1,
};

std::string to_string(AccuracyMetricKind kind);
AccuracyMetricKind parse_metric_kind(std::string_view name);

// For Top1: 1 iff prediction == label, else 0. Pure.
double metric_value(AccuracyMetricKind kind, int prediction, int label);

// JSON-lines prediction log, one object per example:
//   {"example_id": "...", "label": 0, "models": {"m": {"prediction": 1,
//    "scores": [..]?, "features": {..}?}}}
// Reports the 1-based line number on malformed records.
PredictionLog load_prediction_log(const std::string& path);
void write_prediction_log(const PredictionLog& log, const std::string& path);

// Model manifest JSON; "∅" denotes the source vertex in reuse edges.
ModelManifest load_model_manifest(const std::string& path);

}  // namespace cascade
