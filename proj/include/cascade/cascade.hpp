#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cascade/abstain.hpp"
#include "cascade/cost.hpp"
#include "cascade/data.hpp"

namespace cascade {

// Decomposable accuracy predicate over (model, labeled subset).
struct AccuracyConstraint {
    enum class Kind { AlwaysTrue, MinRelative };

    Kind kind = Kind::AlwaysTrue;
    double alpha = 1.0;  // (0, 1]
    AccuracyMetricKind metric = AccuracyMetricKind::Top1;
    std::string reference_model_id;

    static AccuracyConstraint always_true();
    static AccuracyConstraint min_relative(double alpha, AccuracyMetricKind metric,
                                           std::string reference_model_id);
};

// Weighted vote over component probability vectors: the combined score
// vector is sum_j beta_j * softmax(scores_j); prediction is its argmax
// (ties by lowest class index). Thresholding works as in AbstainingModel,
// with confidence features computed from the combined vector.
struct EnsembleAbstainingModel {
    std::string id;
    std::vector<std::string> component_model_ids;
    std::vector<double> beta;
    AccuracyModel accuracy_model;
    double threshold = -std::numeric_limits<double>::infinity();

    bool operator==(const EnsembleAbstainingModel&) const = default;
};

std::vector<double> ensemble_scores(const EnsembleAbstainingModel& model,
                                    const PredictionLog& log, std::string_view example_id);
ModelOutput ensemble_output(const EnsembleAbstainingModel& model, const PredictionLog& log,
                            std::string_view example_id);
std::optional<int> evaluate_ensemble(const EnsembleAbstainingModel& model,
                                     const PredictionLog& log, std::string_view example_id);

// One candidate stage: an abstaining model of any provenance.
struct GeneratedModel {
    enum class Provenance { Pool, Ensemble, Composite };

    std::variant<AbstainingModel, EnsembleAbstainingModel, CompositeAbstainingModel> model;
    Provenance provenance = Provenance::Pool;

    const std::string& id() const;
    double threshold() const;
    std::optional<int> evaluate(const PredictionLog& log, std::string_view example_id) const;

    // Base model ids materialized when this stage runs (feeds cost reuse).
    std::vector<std::string> computed_base_ids() const;

    static GeneratedModel pool(AbstainingModel m);
    static GeneratedModel ensemble(EnsembleAbstainingModel m);
    static GeneratedModel composite(CompositeAbstainingModel m);
};

// { x in R : m(x) != ABSTAIN }, preserving R's order.
std::vector<std::string> answered_set(const GeneratedModel& m, const std::vector<std::string>& R,
                                      const PredictionLog& log);

// MIN_RELATIVE: sum of metric over subset for m >= alpha * same for the
// reference model. Empty subsets pass. Abstentions inside the subset count
// as metric 0 (callers pass answered sets).
bool check_constraint(const AccuracyConstraint& ac, const GeneratedModel& m,
                      const std::vector<std::string>& subset, const PredictionLog& log);

struct PoolEntry {
    std::string model_id;
    AccuracyModel accuracy_model;
};

// For each pool entry, emits a thresholded model with the minimum threshold
// (over {-inf} + observed q-hat values + {+inf}) whose answered set
// satisfies the constraint. Models that only pass with an empty answered
// set are emitted with threshold +inf and dropped later by the useful-set
// filter.
std::vector<GeneratedModel> confident_model_set(const std::vector<std::string>& R,
                                                const std::vector<PoolEntry>& pool,
                                                const AccuracyConstraint& ac,
                                                const PredictionLog& log);

// Builds an accuracy model of the requested shape from per-example features
// and metric values.
struct AccuracyModelSpec {
    enum class Kind { Raw, Logistic, Isotonic };
    Kind kind = Kind::Raw;
    std::string feature = "logit_gap";  // Raw / Isotonic

    static AccuracyModelSpec parse(std::string_view text);  // e.g. "raw:logit_gap"
    std::string to_string() const;
};

AccuracyModel fit_accuracy_model(const AccuracyModelSpec& spec,
                                 const std::vector<FeatureMap>& features,
                                 const std::vector<double>& metric_values);

// For each pool model p, fits ensemble weights over (p + prior stage base
// models) by per-class least squares to one-hot labels (closed-form ridge,
// regularizer 1e-6) on R, then thresholds like confident_model_set. With no
// prior stages beta = (1). Components must have logged score vectors.
std::vector<GeneratedModel> ensemble_generator(const std::vector<std::string>& R,
                                               const std::vector<std::string>& prior_model_ids,
                                               const std::vector<PoolEntry>& pool,
                                               const AccuracyConstraint& ac,
                                               const PredictionLog& log,
                                               const AccuracyModelSpec& accuracy_spec);

using GeneratorFn = std::function<std::vector<GeneratedModel>(
    const std::vector<std::string>& R, const std::vector<GeneratedModel>& prior_stages)>;

struct StageRecord {
    GeneratedModel model;
    std::vector<std::string> answered;  // A_i
    std::size_t n_remaining = 0;        // n_i, examples left at stage start
    double stage_cost = 0.0;            // C_i = c(m_i, m_{1:i-1})
    double ratio = 0.0;                 // |A_i| / C_i, +inf on zero cost
};

struct CascadeTrace {
    std::vector<StageRecord> stages;
    double total_stage_cost = 0.0;  // C_sigma
    double total_cost = 0.0;        // T = sum n_i * C_i
};

struct CascadeOptions {
    // Flat per-component overhead added to an ensemble stage's cost.
    double ensemble_component_overhead = 0.0;
};

// Marginal cost of running `model` given already-materialized prior stages.
double stage_cost(const CostFunction& cf, const GeneratedModel& model,
                  const std::vector<GeneratedModel>& prior_stages,
                  const CascadeOptions& options = {});

// Greedy stage selection: among constraint-satisfying useful candidates,
// repeatedly picks the one answering the most remaining examples per unit
// marginal cost (ties: larger answered set, lower cost, lexicographic id).
// Returns nullopt (FAILURE) when no candidate qualifies; an empty R yields
// an empty trace.
std::optional<CascadeTrace> greedy_cascade(const std::vector<std::string>& R,
                                           const AccuracyConstraint& ac, const CostFunction& cf,
                                           const GeneratorFn& generator, const PredictionLog& log,
                                           const CascadeOptions& options = {});

// Serializable cascade artifact plus build-time statistics.
struct StageStats {
    std::string model_id;
    std::size_t n = 0;
    double stage_cost = 0.0;
    std::size_t answered = 0;
    double ratio = 0.0;
    double threshold = 0.0;
};

struct Cascade {
    std::vector<GeneratedModel> stages;
    AccuracyConstraint constraint;
    CostFunction::Kind cost_kind = CostFunction::Kind::Linear;
    double build_total_cost = 0.0;       // T on the build set
    double build_total_stage_cost = 0.0; // C_sigma
    std::vector<StageStats> stage_table;
    std::string train_log_path;
    std::string train_log_hash;
};

Cascade cascade_from_trace(const CascadeTrace& trace, const AccuracyConstraint& ac,
                           CostFunction::Kind cost_kind);

// Per-stage marginal costs C_i for an assembled cascade.
std::vector<double> cascade_stage_costs(const Cascade& cascade, const CostFunction& cf,
                                        const CascadeOptions& options = {});

// tau(x, S): sum of stage costs through the first stage that answers x;
// all stages when every stage abstains.
double per_example_cost(const Cascade& cascade, const std::vector<double>& stage_costs,
                        const PredictionLog& log, std::string_view example_id);

struct StageEvalRow {
    std::string model_id;
    double stage_cost = 0.0;
    double threshold = 0.0;
    double fraction_classified = 0.0;
    double accuracy_on_classified = 0.0;
    std::size_t classified = 0;
};

struct EvaluationReport {
    double overall_accuracy = 0.0;  // unanswered examples count as wrong
    double mean_tau = 0.0;
    double unanswered_fraction = 0.0;
    std::vector<StageEvalRow> rows;
};

EvaluationReport evaluate_cascade(const Cascade& cascade, const PredictionLog& test_log,
                                  AccuracyMetricKind metric, const CostFunction& cf,
                                  const CascadeOptions& options = {});

}  // namespace cascade
