#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade/data.hpp"

namespace cascade {

// Raised when confidence features cannot be derived (scores absent or too
// short); callers may fall back to features supplied in the log.
class FeatureError : public ValidationError {
public:
    explicit FeatureError(const std::string& msg) : ValidationError(msg) {}
};

// Confidence features derived from a raw score vector via a stabilized
// softmax. entropy is in nats; logit_gap = top score - second score.
struct ConfidenceFeatures {
    double entropy = 0.0;
    double max_prob = 0.0;
    double logit_gap = 0.0;
};

using FeatureMap = std::map<std::string, double>;

ConfidenceFeatures compute_features(const ModelOutput& output);

// Named view: entropy, max_prob, logit_gap, plus derived neg_entropy
// (higher = more confident, so it can be thresholded like the others).
FeatureMap to_feature_map(const ConfidenceFeatures& f);

// Features available for (example, model): score-derived when scores are
// usable, merged with any log-supplied features (log-supplied win on name
// clashes). Throws FeatureError when neither source is available.
FeatureMap example_features(const PredictionLog& log, std::string_view example_id,
                            std::string_view model_id);

// Accuracy model q-hat: predicts the accuracy metric of a base model from
// confidence features.
struct AccuracyModel {
    enum class Kind { RawFeature, Logistic, Isotonic };

    Kind kind = Kind::RawFeature;
    std::string feature;                     // RawFeature / Isotonic
    std::vector<std::string> feature_names;  // Logistic
    std::vector<double> weights;             // Logistic
    double bias = 0.0;                       // Logistic
    std::vector<double> breakpoints;         // Isotonic, strictly ascending
    std::vector<double> values;              // Isotonic, non-decreasing

    bool operator==(const AccuracyModel&) const = default;
};

AccuracyModel make_raw_feature_model(std::string feature);

// Deterministic full-batch fit of mean logistic loss. Parameters are
// box-capped at +/-25 so separable data has a unique capped optimum.
AccuracyModel fit_logistic(const std::vector<std::vector<double>>& features,
                           const std::vector<double>& accuracies,
                           std::vector<std::string> feature_names);

// Weighted mean logistic loss of a fitted model on raw feature vectors.
double logistic_loss(const AccuracyModel& model,
                     const std::vector<std::vector<double>>& features,
                     const std::vector<double>& accuracies);

// Pool-adjacent-violators: non-decreasing least-squares step function.
// Equal feature values are merged (weighted average) before fitting.
AccuracyModel fit_isotonic(const std::vector<double>& feature_values,
                           const std::vector<double>& accuracies,
                           std::string feature_name);

double predict_accuracy(const AccuracyModel& model, const FeatureMap& features);

// Abstaining model: answers with the base model's logged prediction when
// q-hat(x) >= threshold, else abstains. threshold -inf never abstains,
// +inf always abstains.
struct AbstainingModel {
    std::string model_id;
    AccuracyModel accuracy_model;
    double threshold = -std::numeric_limits<double>::infinity();

    bool operator==(const AbstainingModel&) const = default;
};

double predicted_accuracy(const AbstainingModel& model, const PredictionLog& log,
                          std::string_view example_id);

// nullopt = abstain. The comparison is exactly q-hat >= t.
std::optional<int> evaluate_abstaining(const AbstainingModel& model, const PredictionLog& log,
                                       std::string_view example_id);

// Prefix-composite model over a chain: answers with the prediction of the
// highest-index chain member that answers, abstains when all members do.
struct CompositeAbstainingModel {
    std::string id;
    std::vector<AbstainingModel> chain;

    bool operator==(const CompositeAbstainingModel&) const = default;
};

std::optional<int> evaluate_composite(const CompositeAbstainingModel& model,
                                      const PredictionLog& log, std::string_view example_id);

struct TradeoffPoint {
    double abstention_rate = 0.0;
    double accuracy = 0.0;
    double threshold = 0.0;
};

// Sweeps the threshold over all distinct q-hat values plus -inf; one point
// per threshold with a non-empty answered set, sorted by abstention rate.
std::vector<TradeoffPoint> abstention_tradeoff_curve(std::string_view model_id,
                                                     const AccuracyModel& accuracy_model,
                                                     const PredictionLog& log,
                                                     AccuracyMetricKind metric);

// Same sweep driven by explicit per-example q-hat values (used for the
// perfect-oracle curve, where q-hat is the true metric).
std::vector<TradeoffPoint> abstention_tradeoff_curve_from_values(
    const std::vector<double>& qhat, const std::vector<double>& metric_values);

}  // namespace cascade
