#include "cascade/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace cascade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return static_cast<int>(best);
}

std::vector<double> softmax(const std::vector<double>& scores) {
    double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - top);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

}  // namespace

AccuracyConstraint AccuracyConstraint::always_true() { return {}; }

AccuracyConstraint AccuracyConstraint::min_relative(double alpha, AccuracyMetricKind metric,
                                                    std::string reference_model_id) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ValidationError("min_relative: alpha must be in (0, 1]");
    }
    AccuracyConstraint ac;
    ac.kind = Kind::MinRelative;
    ac.alpha = alpha;
    ac.metric = metric;
    ac.reference_model_id = std::move(reference_model_id);
    return ac;
}

std::vector<double> ensemble_scores(const EnsembleAbstainingModel& model,
                                    const PredictionLog& log, std::string_view example_id) {
    if (model.component_model_ids.empty()) {
        throw ValidationError("ensemble '" + model.id + "' has no components");
    }
    std::vector<double> combined;
    for (std::size_t j = 0; j < model.component_model_ids.size(); ++j) {
        const ModelOutput& out = log.output(example_id, model.component_model_ids[j]);
        if (!out.scores) {
            throw ValidationError("ensemble '" + model.id + "': component '" +
                                  model.component_model_ids[j] + "' has no score vector");
        }
        std::vector<double> probs = softmax(*out.scores);
        if (combined.empty()) combined.assign(probs.size(), 0.0);
        if (probs.size() != combined.size()) {
            throw ValidationError("ensemble '" + model.id + "': component score lengths differ");
        }
        for (std::size_t c = 0; c < probs.size(); ++c) combined[c] += model.beta[j] * probs[c];
    }
    return combined;
}

ModelOutput ensemble_output(const EnsembleAbstainingModel& model, const PredictionLog& log,
                            std::string_view example_id) {
    ModelOutput out;
    out.scores = ensemble_scores(model, log, example_id);
    out.prediction = argmax_lowest(*out.scores);
    return out;
}

std::optional<int> evaluate_ensemble(const EnsembleAbstainingModel& model,
                                     const PredictionLog& log, std::string_view example_id) {
    if (model.threshold == kInf) return std::nullopt;
    ModelOutput out = ensemble_output(model, log, example_id);
    if (model.threshold == -kInf) return out.prediction;
    double qhat = predict_accuracy(model.accuracy_model, to_feature_map(compute_features(out)));
    if (qhat >= model.threshold) return out.prediction;
    return std::nullopt;
}

const std::string& GeneratedModel::id() const {
    return std::visit([](const auto& m) -> const std::string& {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AbstainingModel>) {
            return m.model_id;
        } else {
            return m.id;
        }
    }, model);
}

double GeneratedModel::threshold() const {
    return std::visit([](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CompositeAbstainingModel>) {
            return m.chain.back().threshold;
        } else {
            return m.threshold;
        }
    }, model);
}

std::optional<int> GeneratedModel::evaluate(const PredictionLog& log,
                                            std::string_view example_id) const {
    return std::visit([&](const auto& m) -> std::optional<int> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AbstainingModel>) {
            return evaluate_abstaining(m, log, example_id);
        } else if constexpr (std::is_same_v<T, EnsembleAbstainingModel>) {
            return evaluate_ensemble(m, log, example_id);
        } else {
            return evaluate_composite(m, log, example_id);
        }
    }, model);
}

std::vector<std::string> GeneratedModel::computed_base_ids() const {
    return std::visit([&](const auto& m) -> std::vector<std::string> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AbstainingModel>) {
            return {m.model_id};
        } else if constexpr (std::is_same_v<T, EnsembleAbstainingModel>) {
            return m.component_model_ids;
        } else {
            std::vector<std::string> ids{m.id};
            for (const AbstainingModel& stage : m.chain) ids.push_back(stage.model_id);
            return ids;
        }
    }, model);
}

GeneratedModel GeneratedModel::pool(AbstainingModel m) {
    return {std::move(m), Provenance::Pool};
}
GeneratedModel GeneratedModel::ensemble(EnsembleAbstainingModel m) {
    return {std::move(m), Provenance::Ensemble};
}
GeneratedModel GeneratedModel::composite(CompositeAbstainingModel m) {
    return {std::move(m), Provenance::Composite};
}

std::vector<std::string> answered_set(const GeneratedModel& m, const std::vector<std::string>& R,
                                      const PredictionLog& log) {
    std::vector<std::string> answered;
    for (const std::string& x : R) {
        if (m.evaluate(log, x)) answered.push_back(x);
    }
    return answered;
}

bool check_constraint(const AccuracyConstraint& ac, const GeneratedModel& m,
                      const std::vector<std::string>& subset, const PredictionLog& log) {
    if (ac.kind == AccuracyConstraint::Kind::AlwaysTrue) return true;
    if (!log.has_model(ac.reference_model_id)) {
        throw ValidationError("constraint: reference model '" + ac.reference_model_id +
                              "' not in prediction log");
    }
    double q_model = 0.0, q_ref = 0.0;
    for (const std::string& x : subset) {
        int label = log.label(x);
        if (auto pred = m.evaluate(log, x)) {
            q_model += metric_value(ac.metric, *pred, label);
        }
        q_ref += metric_value(ac.metric, log.output(x, ac.reference_model_id).prediction, label);
    }
    return q_model >= ac.alpha * q_ref;
}

namespace {

// Minimum threshold in {-inf} + {observed q-hat} + {+inf} whose answered
// set satisfies the constraint. metric_model/metric_ref are per-example
// metric values aligned with qhat; metric_ref is unused for ALWAYS_TRUE.
double min_passing_threshold(const std::vector<double>& qhat,
                             const std::vector<double>& metric_model,
                             const std::vector<double>& metric_ref,
                             const AccuracyConstraint& ac) {
    if (ac.kind == AccuracyConstraint::Kind::AlwaysTrue) return -kInf;

    const std::size_t n = qhat.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return qhat[a] > qhat[b]; });

    // prefix sums over examples sorted by descending q-hat
    std::vector<double> pre_model(n + 1, 0.0), pre_ref(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        pre_model[i + 1] = pre_model[i] + metric_model[order[i]];
        pre_ref[i + 1] = pre_ref[i] + metric_ref[order[i]];
    }
    auto passes_prefix = [&](std::size_t k) {
        return pre_model[k] >= ac.alpha * pre_ref[k];
    };

    if (passes_prefix(n)) return -kInf;

    // group boundaries of equal q-hat values, scanned in ascending threshold
    // order (shrinking prefixes); threshold = q-hat of the group's last member
    std::vector<std::size_t> group_ends;  // prefix length ending each group
    for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 == n || qhat[order[i + 1]] != qhat[order[i]]) group_ends.push_back(i + 1);
    }
    for (auto it = group_ends.rbegin(); it != group_ends.rend(); ++it) {
        std::size_t k = *it;
        if (passes_prefix(k)) return qhat[order[k - 1]];
    }
    return kInf;  // only the empty answered set passes
}

}  // namespace

std::vector<GeneratedModel> confident_model_set(const std::vector<std::string>& R,
                                                const std::vector<PoolEntry>& pool,
                                                const AccuracyConstraint& ac,
                                                const PredictionLog& log) {
    std::vector<GeneratedModel> result;
    result.reserve(pool.size());
    for (const PoolEntry& entry : pool) {
        AbstainingModel m;
        m.model_id = entry.model_id;
        m.accuracy_model = entry.accuracy_model;

        // -inf first: the full answered set needs no q-hat values, which
        // also covers models logged without confidence features (e.g. the
        // reference, which never abstains).
        m.threshold = -kInf;
        GeneratedModel candidate = GeneratedModel::pool(m);
        if (check_constraint(ac, candidate, R, log)) {
            result.push_back(std::move(candidate));
            continue;
        }

        std::vector<double> qhat, metric_model, metric_ref;
        qhat.reserve(R.size());
        for (const std::string& x : R) {
            qhat.push_back(
                predict_accuracy(entry.accuracy_model, example_features(log, x, entry.model_id)));
            int label = log.label(x);
            metric_model.push_back(
                metric_value(ac.metric, log.output(x, entry.model_id).prediction, label));
            if (ac.kind == AccuracyConstraint::Kind::MinRelative) {
                metric_ref.push_back(metric_value(
                    ac.metric, log.output(x, ac.reference_model_id).prediction, label));
            } else {
                metric_ref.push_back(0.0);
            }
        }
        m.threshold = min_passing_threshold(qhat, metric_model, metric_ref, ac);
        result.push_back(GeneratedModel::pool(std::move(m)));
    }
    return result;
}

AccuracyModelSpec AccuracyModelSpec::parse(std::string_view text) {
    AccuracyModelSpec spec;
    if (text == "logistic") {
        spec.kind = Kind::Logistic;
        return spec;
    }
    if (text.rfind("raw:", 0) == 0) {
        spec.kind = Kind::Raw;
        spec.feature = std::string(text.substr(4));
        if (spec.feature.empty()) throw ValidationError("accuracy model: raw: needs a feature");
        return spec;
    }
    if (text.rfind("isotonic:", 0) == 0) {
        spec.kind = Kind::Isotonic;
        spec.feature = std::string(text.substr(9));
        if (spec.feature.empty()) {
            throw ValidationError("accuracy model: isotonic: needs a feature");
        }
        return spec;
    }
    throw ValidationError("unknown accuracy model '" + std::string(text) +
                          "' (expected raw:<feature>, logistic, isotonic:<feature>)");
}

std::string AccuracyModelSpec::to_string() const {
    switch (kind) {
        case Kind::Raw: return "raw:" + feature;
        case Kind::Logistic: return "logistic";
        case Kind::Isotonic: return "isotonic:" + feature;
    }
    return "?";
}

namespace {

const std::vector<std::string>& logistic_feature_names() {
    static const std::vector<std::string> names{"entropy", "max_prob", "logit_gap"};
    return names;
}

}  // namespace

AccuracyModel fit_accuracy_model(const AccuracyModelSpec& spec,
                                 const std::vector<FeatureMap>& features,
                                 const std::vector<double>& metric_values) {
    switch (spec.kind) {
        case AccuracyModelSpec::Kind::Raw:
            return make_raw_feature_model(spec.feature);
        case AccuracyModelSpec::Kind::Logistic: {
            std::vector<std::vector<double>> rows;
            rows.reserve(features.size());
            for (const FeatureMap& f : features) {
                std::vector<double> row;
                for (const std::string& name : logistic_feature_names()) {
                    auto it = f.find(name);
                    if (it == f.end()) {
                        throw ValidationError("fit_accuracy_model: missing feature '" + name +
                                              "'");
                    }
                    row.push_back(it->second);
                }
                rows.push_back(std::move(row));
            }
            return fit_logistic(rows, metric_values, logistic_feature_names());
        }
        case AccuracyModelSpec::Kind::Isotonic: {
            std::vector<double> xs;
            xs.reserve(features.size());
            for (const FeatureMap& f : features) {
                auto it = f.find(spec.feature);
                if (it == f.end()) {
                    throw ValidationError("fit_accuracy_model: missing feature '" + spec.feature +
                                          "'");
                }
                xs.push_back(it->second);
            }
            return fit_isotonic(xs, metric_values, spec.feature);
        }
    }
    throw ValidationError("fit_accuracy_model: bad spec");
}

std::vector<GeneratedModel> ensemble_generator(const std::vector<std::string>& R,
                                               const std::vector<std::string>& prior_model_ids,
                                               const std::vector<PoolEntry>& pool,
                                               const AccuracyConstraint& ac,
                                               const PredictionLog& log,
                                               const AccuracyModelSpec& accuracy_spec) {
    std::vector<GeneratedModel> result;
    result.reserve(pool.size());
    for (const PoolEntry& entry : pool) {
        EnsembleAbstainingModel ens;
        ens.id = "ens:" + entry.model_id + "@" + std::to_string(prior_model_ids.size());
        ens.component_model_ids.push_back(entry.model_id);
        for (const std::string& id : prior_model_ids) ens.component_model_ids.push_back(id);
        const std::size_t J = ens.component_model_ids.size();

        if (J == 1) {
            ens.beta = {1.0};
        } else {
            // per-class least squares to one-hot labels: (G + 1e-6 I) beta = v
            std::vector<std::vector<std::vector<double>>> probs(J);
            std::size_t num_classes = 0;
            for (std::size_t j = 0; j < J; ++j) {
                for (const std::string& x : R) {
                    const ModelOutput& out = log.output(x, ens.component_model_ids[j]);
                    if (!out.scores) {
                        throw ValidationError("ensemble_generator: component '" +
                                              ens.component_model_ids[j] +
                                              "' has no score vector (ensembles require scores)");
                    }
                    std::vector<double> p = softmax(*out.scores);
                    if (num_classes == 0) num_classes = p.size();
                    if (p.size() != num_classes) {
                        throw ValidationError(
                            "ensemble_generator: component score lengths differ");
                    }
                    probs[j].push_back(std::move(p));
                }
            }
            std::vector<std::vector<double>> gram(J, std::vector<double>(J, 0.0));
            std::vector<double> target(J, 0.0);
            for (std::size_t i = 0; i < R.size(); ++i) {
                int label = log.label(R[i]);
                for (std::size_t a = 0; a < J; ++a) {
                    if (static_cast<std::size_t>(label) < num_classes) {
                        target[a] += probs[a][i][static_cast<std::size_t>(label)];
                    }
                    for (std::size_t b = 0; b < J; ++b) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < num_classes; ++c) {
                            dot += probs[a][i][c] * probs[b][i][c];
                        }
                        gram[a][b] += dot;
                    }
                }
            }
            for (std::size_t a = 0; a < J; ++a) gram[a][a] += 1e-6;
            // tiny symmetric system; plain elimination
            std::vector<std::vector<double>> A = gram;
            std::vector<double> b = target;
            for (std::size_t col = 0; col < J; ++col) {
                std::size_t piv = col;
                for (std::size_t r = col + 1; r < J; ++r) {
                    if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
                }
                std::swap(A[col], A[piv]);
                std::swap(b[col], b[piv]);
                for (std::size_t r = col + 1; r < J; ++r) {
                    double f = A[r][col] / A[col][col];
                    for (std::size_t c = col; c < J; ++c) A[r][c] -= f * A[col][c];
                    b[r] -= f * b[col];
                }
            }
            ens.beta.assign(J, 0.0);
            for (std::size_t i = J; i-- > 0;) {
                double s = b[i];
                for (std::size_t c = i + 1; c < J; ++c) s -= A[i][c] * ens.beta[c];
                ens.beta[i] = s / A[i][i];
            }
        }

        // accuracy model fitted on the ensemble's own outputs over R
        std::vector<FeatureMap> feats;
        std::vector<double> metric_model, metric_ref, qhat;
        feats.reserve(R.size());
        for (const std::string& x : R) {
            ModelOutput out = ensemble_output(ens, log, x);
            feats.push_back(to_feature_map(compute_features(out)));
            int label = log.label(x);
            metric_model.push_back(metric_value(ac.metric, out.prediction, label));
            if (ac.kind == AccuracyConstraint::Kind::MinRelative) {
                metric_ref.push_back(metric_value(
                    ac.metric, log.output(x, ac.reference_model_id).prediction, label));
            } else {
                metric_ref.push_back(0.0);
            }
        }
        ens.accuracy_model = fit_accuracy_model(accuracy_spec, feats, metric_model);
        qhat.reserve(R.size());
        for (const FeatureMap& f : feats) {
            qhat.push_back(predict_accuracy(ens.accuracy_model, f));
        }
        ens.threshold = min_passing_threshold(qhat, metric_model, metric_ref, ac);
        result.push_back(GeneratedModel::ensemble(std::move(ens)));
    }
    return result;
}

double stage_cost(const CostFunction& cf, const GeneratedModel& model,
                  const std::vector<GeneratedModel>& prior_stages,
                  const CascadeOptions& options) {
    std::vector<std::string> already;
    for (const GeneratedModel& p : prior_stages) {
        for (std::string& id : p.computed_base_ids()) already.push_back(std::move(id));
    }
    std::sort(already.begin(), already.end());
    already.erase(std::unique(already.begin(), already.end()), already.end());

    if (model.provenance == GeneratedModel::Provenance::Ensemble) {
        const auto& ens = std::get<EnsembleAbstainingModel>(model.model);
        std::set<std::string> charged;
        double total =
            options.ensemble_component_overhead * static_cast<double>(ens.component_model_ids.size());
        for (const std::string& comp : ens.component_model_ids) {
            if (std::binary_search(already.begin(), already.end(), comp)) continue;
            if (!charged.insert(comp).second) continue;
            total += cf.cost(comp, already);
        }
        return total;
    }
    return cf.cost(model.id(), already);
}

namespace {

// Greedy preference order: higher |A|/C (cross-multiplied so zero costs act
// as +inf), then larger |A|, then lower C, then lexicographic id.
bool better_candidate(std::size_t a1, double c1, const std::string& id1, std::size_t a2,
                      double c2, const std::string& id2) {
    double lhs = static_cast<double>(a1) * c2;
    double rhs = static_cast<double>(a2) * c1;
    if (lhs != rhs) return lhs > rhs;
    if (a1 != a2) return a1 > a2;
    if (c1 != c2) return c1 < c2;
    return id1 < id2;
}

}  // namespace

std::optional<CascadeTrace> greedy_cascade(const std::vector<std::string>& R,
                                           const AccuracyConstraint& ac, const CostFunction& cf,
                                           const GeneratorFn& generator, const PredictionLog& log,
                                           const CascadeOptions& options) {
    CascadeTrace trace;
    std::vector<std::string> remaining = R;
    std::vector<GeneratedModel> prior;

    while (!remaining.empty()) {
        std::vector<GeneratedModel> candidates = generator(remaining, prior);

        bool found = false;
        GeneratedModel best_model;
        std::vector<std::string> best_answered;
        double best_cost = 0.0;
        for (GeneratedModel& m : candidates) {
            std::vector<std::string> answered = answered_set(m, remaining, log);
            if (answered.empty()) continue;  // not useful
            if (!check_constraint(ac, m, answered, log)) continue;
            double c = stage_cost(cf, m, prior, options);
            if (!found || better_candidate(answered.size(), c, m.id(), best_answered.size(),
                                           best_cost, best_model.id())) {
                found = true;
                best_model = std::move(m);
                best_answered = std::move(answered);
                best_cost = c;
            }
        }
        if (!found) return std::nullopt;  // FAILURE: no useful, accurate candidate

        StageRecord record;
        record.n_remaining = remaining.size();
        record.stage_cost = best_cost;
        record.ratio = best_cost > 0.0
                           ? static_cast<double>(best_answered.size()) / best_cost
                           : kInf;
        record.model = best_model;
        record.answered = best_answered;
        trace.total_stage_cost += best_cost;
        trace.total_cost += static_cast<double>(remaining.size()) * best_cost;

        std::set<std::string> answered_ids(best_answered.begin(), best_answered.end());
        std::vector<std::string> next;
        next.reserve(remaining.size() - best_answered.size());
        for (const std::string& x : remaining) {
            if (!answered_ids.count(x)) next.push_back(x);
        }
        remaining = std::move(next);
        prior.push_back(std::move(best_model));
        trace.stages.push_back(std::move(record));
    }
    return trace;
}

Cascade cascade_from_trace(const CascadeTrace& trace, const AccuracyConstraint& ac,
                           CostFunction::Kind cost_kind) {
    Cascade cascade;
    cascade.constraint = ac;
    cascade.cost_kind = cost_kind;
    cascade.build_total_cost = trace.total_cost;
    cascade.build_total_stage_cost = trace.total_stage_cost;
    for (const StageRecord& s : trace.stages) {
        cascade.stages.push_back(s.model);
        StageStats stats;
        stats.model_id = s.model.id();
        stats.n = s.n_remaining;
        stats.stage_cost = s.stage_cost;
        stats.answered = s.answered.size();
        stats.ratio = s.ratio;
        stats.threshold = s.model.threshold();
        cascade.stage_table.push_back(std::move(stats));
    }
    return cascade;
}

std::vector<double> cascade_stage_costs(const Cascade& cascade, const CostFunction& cf,
                                        const CascadeOptions& options) {
    std::vector<double> costs;
    costs.reserve(cascade.stages.size());
    std::vector<GeneratedModel> prior;
    for (const GeneratedModel& m : cascade.stages) {
        costs.push_back(stage_cost(cf, m, prior, options));
        prior.push_back(m);
    }
    return costs;
}

double per_example_cost(const Cascade& cascade, const std::vector<double>& stage_costs,
                        const PredictionLog& log, std::string_view example_id) {
    double tau = 0.0;
    for (std::size_t i = 0; i < cascade.stages.size(); ++i) {
        tau += stage_costs[i];
        if (cascade.stages[i].evaluate(log, example_id)) break;
    }
    return tau;
}

EvaluationReport evaluate_cascade(const Cascade& cascade, const PredictionLog& test_log,
                                  AccuracyMetricKind metric, const CostFunction& cf,
                                  const CascadeOptions& options) {
    std::vector<double> costs = cascade_stage_costs(cascade, cf, options);
    EvaluationReport report;
    report.rows.resize(cascade.stages.size());
    for (std::size_t i = 0; i < cascade.stages.size(); ++i) {
        report.rows[i].model_id = cascade.stages[i].id();
        report.rows[i].stage_cost = costs[i];
        report.rows[i].threshold = cascade.stages[i].threshold();
    }

    const std::size_t n = test_log.num_examples();
    if (n == 0) return report;

    std::vector<double> stage_metric_sum(cascade.stages.size(), 0.0);
    double total_metric = 0.0, total_tau = 0.0;
    std::size_t unanswered = 0;
    for (const LabeledExample& ex : test_log.examples()) {
        bool answered = false;
        for (std::size_t i = 0; i < cascade.stages.size(); ++i) {
            total_tau += costs[i];
            if (auto pred = cascade.stages[i].evaluate(test_log, ex.example_id)) {
                double mv = metric_value(metric, *pred, ex.label);
                stage_metric_sum[i] += mv;
                total_metric += mv;
                report.rows[i].classified += 1;
                answered = true;
                break;
            }
        }
        if (!answered) ++unanswered;
    }

    for (std::size_t i = 0; i < cascade.stages.size(); ++i) {
        report.rows[i].fraction_classified =
            static_cast<double>(report.rows[i].classified) / static_cast<double>(n);
        report.rows[i].accuracy_on_classified =
            report.rows[i].classified > 0
                ? stage_metric_sum[i] / static_cast<double>(report.rows[i].classified)
                : 0.0;
    }
    report.overall_accuracy = total_metric / static_cast<double>(n);
    report.mean_tau = total_tau / static_cast<double>(n);
    report.unanswered_fraction = static_cast<double>(unanswered) / static_cast<double>(n);
    return report;
}

}  // namespace cascade
