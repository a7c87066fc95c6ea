#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cascade/cascade.hpp"
#include "cascade/oracle.hpp"
#include "cascade/suites.hpp"

using namespace cascade;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ModelOutput conf_output(int pred, double conf) {
    ModelOutput out;
    out.prediction = pred;
    out.features["conf"] = conf;
    return out;
}

GeneratedModel conf_model(std::string id, double threshold) {
    return GeneratedModel::pool({std::move(id), make_raw_feature_model("conf"), threshold});
}

// the 3-model instance: m1 answers {e1,e2}, m2 answers {e2,e3}, m3 answers
// {e1..e4}; every prediction correct (label 0)
PredictionLog three_model_log() {
    PredictionLogBuilder builder;
    auto row = [&](const std::string& ex, bool a1, bool a2, bool a3) {
        builder.add_example({ex, 0}, {{"m1", conf_output(0, a1 ? 1.0 : 0.0)},
                                      {"m2", conf_output(0, a2 ? 1.0 : 0.0)},
                                      {"m3", conf_output(0, a3 ? 1.0 : 0.0)}});
    };
    row("e1", true, false, true);
    row("e2", true, true, true);
    row("e3", false, true, true);
    row("e4", false, false, true);
    return builder.build();
}

GeneratorFn fixed_generator(std::vector<GeneratedModel> models) {
    return [models](const std::vector<std::string>&, const std::vector<GeneratedModel>&) {
        return models;
    };
}

}  // namespace

TEST_SUITE("cascade") {

TEST_CASE("answered_set honors thresholds") {
    PredictionLogBuilder builder;
    builder.add_example({"e1", 0}, {{"m", conf_output(0, 0.9)}});
    builder.add_example({"e2", 0}, {{"m", conf_output(0, 0.7)}});
    builder.add_example({"e3", 0}, {{"m", conf_output(0, 0.5)}});
    PredictionLog log = builder.build();
    std::vector<std::string> R{"e1", "e2", "e3"};

    CHECK(answered_set(conf_model("m", -kInf), R, log) == R);
    CHECK(answered_set(conf_model("m", kInf), R, log).empty());
    CHECK(answered_set(conf_model("m", 0.7), R, log) ==
          std::vector<std::string>{"e1", "e2"});
}

TEST_CASE("check_constraint MIN_RELATIVE arithmetic") {
    PredictionLogBuilder builder;
    // ref correct on all 4; m correct on 3
    for (int i = 0; i < 4; ++i) {
        builder.add_example({"e" + std::to_string(i), 0},
                            {{"m", conf_output(i == 0 ? 1 : 0, 1.0)},
                             {"ref", conf_output(0, 1.0)}});
    }
    PredictionLog log = builder.build();
    std::vector<std::string> subset{"e0", "e1", "e2", "e3"};

    AccuracyConstraint ac =
        AccuracyConstraint::min_relative(0.9, AccuracyMetricKind::Top1, "ref");
    CHECK_FALSE(check_constraint(ac, conf_model("m", -kInf), subset, log));  // 3 < 3.6
    CHECK(check_constraint(ac, conf_model("ref", -kInf), subset, log));
    CHECK(check_constraint(ac, conf_model("m", -kInf), {}, log));  // empty subset
}

TEST_CASE("check_constraint passes when the reference is wrong everywhere") {
    PredictionLogBuilder builder;
    builder.add_example({"e1", 5}, {{"m", conf_output(0, 1.0)}, {"ref", conf_output(1, 1.0)}});
    builder.add_example({"e2", 5}, {{"m", conf_output(0, 1.0)}, {"ref", conf_output(1, 1.0)}});
    PredictionLog log = builder.build();
    AccuracyConstraint ac =
        AccuracyConstraint::min_relative(1.0, AccuracyMetricKind::Top1, "ref");
    CHECK(check_constraint(ac, conf_model("m", -kInf), {"e1", "e2"}, log));
}

TEST_CASE("MIN_RELATIVE is decomposable on random disjoint splits") {
    Rng rng(5150);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 4 + rng.below(10);
        PredictionLogBuilder builder;
        std::vector<std::string> all;
        for (std::size_t i = 0; i < n; ++i) {
            std::string ex = "e" + std::to_string(i);
            all.push_back(ex);
            int label = static_cast<int>(rng.below(3));
            builder.add_example(
                {ex, label},
                {{"m", conf_output(rng.uniform() < 0.6 ? label : label + 1, 1.0)},
                 {"ref", conf_output(rng.uniform() < 0.7 ? label : label + 1, 1.0)}});
        }
        PredictionLog log = builder.build();
        AccuracyConstraint ac = AccuracyConstraint::min_relative(
            rng.uniform() < 0.5 ? 0.95 : 1.0, AccuracyMetricKind::Top1, "ref");
        std::vector<std::string> a, b;
        for (const std::string& ex : all) (rng.uniform() < 0.5 ? a : b).push_back(ex);
        GeneratedModel m = conf_model("m", -kInf);
        if (check_constraint(ac, m, a, log) && check_constraint(ac, m, b, log)) {
            std::vector<std::string> both = a;
            both.insert(both.end(), b.begin(), b.end());
            CHECK(check_constraint(ac, m, both, log));
        }
    }
}

TEST_CASE("confident_model_set: reference gets threshold -inf") {
    PredictionLog log = three_model_log();
    AccuracyConstraint ac =
        AccuracyConstraint::min_relative(1.0, AccuracyMetricKind::Top1, "m3");
    std::vector<PoolEntry> pool{{"m3", make_raw_feature_model("conf")}};
    auto models = confident_model_set({"e1", "e2", "e3", "e4"}, pool, ac, log);
    REQUIRE(models.size() == 1);
    CHECK(models[0].threshold() == -kInf);
}

TEST_CASE("confident_model_set: minimal passing threshold on the derived example") {
    // qhat [.9,.7,.5,.2], correctness [1,1,0,0], perfect reference, alpha=1
    PredictionLogBuilder builder;
    double conf[] = {0.9, 0.7, 0.5, 0.2};
    for (int i = 0; i < 4; ++i) {
        builder.add_example({"e" + std::to_string(i), 0},
                            {{"m", conf_output(i < 2 ? 0 : 1, conf[i])},
                             {"ref", conf_output(0, 1.0)}});
    }
    PredictionLog log = builder.build();
    AccuracyConstraint ac =
        AccuracyConstraint::min_relative(1.0, AccuracyMetricKind::Top1, "ref");
    std::vector<PoolEntry> pool{{"m", make_raw_feature_model("conf")}};
    std::vector<std::string> R{"e0", "e1", "e2", "e3"};
    auto models = confident_model_set(R, pool, ac, log);
    REQUIRE(models.size() == 1);
    CHECK(models[0].threshold() == doctest::Approx(0.7));

    // minimality: every candidate threshold below t_min fails the constraint
    for (double t : {-kInf, 0.2, 0.5}) {
        GeneratedModel lower = conf_model("m", t);
        CHECK_FALSE(check_constraint(ac, lower, answered_set(lower, R, log), log));
    }
    GeneratedModel at_min = conf_model("m", 0.7);
    CHECK(check_constraint(ac, at_min, answered_set(at_min, R, log), log));
}

TEST_CASE("confident_model_set: ALWAYS_TRUE yields -inf thresholds") {
    PredictionLog log = three_model_log();
    std::vector<PoolEntry> pool{{"m1", make_raw_feature_model("conf")},
                                {"m2", make_raw_feature_model("conf")}};
    auto models =
        confident_model_set({"e1", "e2"}, pool, AccuracyConstraint::always_true(), log);
    for (const GeneratedModel& m : models) CHECK(m.threshold() == -kInf);
}

TEST_CASE("t_min minimality holds on random instances") {
    Rng rng(808);
    for (int trial = 0; trial < 40; ++trial) {
        std::size_t n = 3 + rng.below(10);
        PredictionLogBuilder builder;
        std::vector<std::string> R;
        for (std::size_t i = 0; i < n; ++i) {
            std::string ex = "e" + std::to_string(i);
            R.push_back(ex);
            int label = static_cast<int>(rng.below(2));
            builder.add_example(
                {ex, label},
                {{"m", conf_output(rng.uniform() < 0.5 ? label : 1 - label,
                                   rng.uniform(0.0, 1.0))},
                 {"ref", conf_output(rng.uniform() < 0.8 ? label : 1 - label, 1.0)}});
        }
        PredictionLog log = builder.build();
        AccuracyConstraint ac =
            AccuracyConstraint::min_relative(0.95, AccuracyMetricKind::Top1, "ref");
        auto models =
            confident_model_set(R, {{"m", make_raw_feature_model("conf")}}, ac, log);
        double t_min = models[0].threshold();

        // direct scan over the candidate set via check_constraint
        std::vector<double> candidates{-kInf};
        for (const std::string& x : R) {
            candidates.push_back(
                predict_accuracy(make_raw_feature_model("conf"), example_features(log, x, "m")));
        }
        std::sort(candidates.begin(), candidates.end());
        for (double t : candidates) {
            GeneratedModel m = conf_model("m", t);
            bool ok = check_constraint(ac, m, answered_set(m, R, log), log);
            if (t < t_min) CHECK_FALSE(ok);
            if (t == t_min) CHECK(ok);
        }
    }
}

TEST_CASE("ensemble: no prior stages reduces to the base model with beta 1") {
    PredictionLogBuilder builder;
    ModelOutput out;
    out.prediction = 1;
    out.scores = std::vector<double>{0.0, 2.0, 1.0};
    builder.add_example({"e1", 1}, {{"m", out}});
    PredictionLog log = builder.build();
    auto models = ensemble_generator({"e1"}, {}, {{"m", make_raw_feature_model("logit_gap")}},
                                     AccuracyConstraint::always_true(), log,
                                     AccuracyModelSpec::parse("raw:logit_gap"));
    REQUIRE(models.size() == 1);
    const auto& ens = std::get<EnsembleAbstainingModel>(models[0].model);
    CHECK(ens.beta == std::vector<double>{1.0});
    CHECK(ensemble_output(ens, log, "e1").prediction == 1);
}

TEST_CASE("ensemble: duplicate components keep the shared argmax") {
    PredictionLogBuilder builder;
    ModelOutput out;
    out.prediction = 2;
    out.scores = std::vector<double>{0.0, 1.0, 3.0};
    builder.add_example({"e1", 2}, {{"m", out}});
    PredictionLog log = builder.build();
    EnsembleAbstainingModel ens;
    ens.id = "dup";
    ens.component_model_ids = {"m", "m"};
    ens.beta = {0.3, 0.4};
    CHECK(ensemble_output(ens, log, "e1").prediction == 2);
}

TEST_CASE("ensemble: fitted weights beat uniform weights on the proxy objective") {
    // 5 examples, 3 classes, 2 components
    PredictionLogBuilder builder;
    Rng rng(1234);
    auto scored = [&](std::vector<double> scores) {
        ModelOutput out;
        out.prediction = static_cast<int>(
            std::max_element(scores.begin(), scores.end()) - scores.begin());
        out.scores = std::move(scores);
        return out;
    };
    std::vector<std::string> R;
    for (int i = 0; i < 5; ++i) {
        std::string ex = "e" + std::to_string(i);
        R.push_back(ex);
        int label = i % 3;
        std::vector<double> good(3, 0.0), noisy(3, 0.0);
        good[label] = 2.0;
        noisy[rng.below(3)] = 1.5;
        builder.add_example({ex, label}, {{"good", scored(good)}, {"noisy", scored(noisy)}});
    }
    PredictionLog log = builder.build();
    auto models = ensemble_generator(R, {"noisy"}, {{"good", make_raw_feature_model("logit_gap")}},
                                     AccuracyConstraint::always_true(), log,
                                     AccuracyModelSpec::parse("raw:logit_gap"));
    REQUIRE(models.size() == 1);
    const auto& ens = std::get<EnsembleAbstainingModel>(models[0].model);
    REQUIRE(ens.beta.size() == 2);

    auto proxy_objective = [&](const std::vector<double>& beta) {
        double obj = 0.0;
        for (const std::string& x : R) {
            EnsembleAbstainingModel probe = ens;
            probe.beta = beta;
            std::vector<double> combined = ensemble_scores(probe, log, x);
            for (std::size_t c = 0; c < combined.size(); ++c) {
                double target = static_cast<std::size_t>(log.label(x)) == c ? 1.0 : 0.0;
                obj += (combined[c] - target) * (combined[c] - target);
            }
        }
        return obj;
    };
    CHECK(proxy_objective(ens.beta) <= proxy_objective({0.5, 0.5}) + 1e-9);
}

TEST_CASE("greedy on the derived 3-model instance") {
    PredictionLog log = three_model_log();
    std::vector<std::string> R{"e1", "e2", "e3", "e4"};
    CostFunction cf = CostFunction::linear({{"m1", 1.0}, {"m2", 1.0}, {"m3", 3.0}});
    std::vector<GeneratedModel> pool{conf_model("m1", 0.5), conf_model("m2", 0.5),
                                     conf_model("m3", 0.5)};
    auto trace = greedy_cascade(R, AccuracyConstraint::always_true(), cf,
                                fixed_generator(pool), log);
    REQUIRE(trace.has_value());
    REQUIRE(trace->stages.size() == 3);
    CHECK(trace->stages[0].model.id() == "m1");
    CHECK(trace->stages[1].model.id() == "m2");
    CHECK(trace->stages[2].model.id() == "m3");
    CHECK(trace->stages[0].n_remaining == 4);
    CHECK(trace->stages[1].n_remaining == 2);
    CHECK(trace->stages[2].n_remaining == 1);
    CHECK(trace->total_cost == doctest::Approx(9.0));
    CHECK(trace->total_stage_cost == doctest::Approx(5.0));

    // brute force agrees that 9 is optimal
    AnsweredTable table;
    table.example_ids = R;
    table.model_ids = {"m1", "m2", "m3"};
    table.answered = {0b0011, 0b0110, 0b1111};
    BruteForceResult opt = brute_force_opt(table, cf);
    CHECK(opt.opt_cost == doctest::Approx(9.0));

    // per-example costs and the two T computations
    Cascade cascade =
        cascade_from_trace(*trace, AccuracyConstraint::always_true(), cf.kind());
    std::vector<double> costs = cascade_stage_costs(cascade, cf);
    CHECK(per_example_cost(cascade, costs, log, "e1") == doctest::Approx(1.0));
    CHECK(per_example_cost(cascade, costs, log, "e3") == doctest::Approx(2.0));
    CHECK(per_example_cost(cascade, costs, log, "e4") == doctest::Approx(5.0));
    double tau_sum = 0.0;
    for (const std::string& x : R) tau_sum += per_example_cost(cascade, costs, log, x);
    CHECK(tau_sum == doctest::Approx(9.0));
}

TEST_CASE("greedy with only the reference model is a single stage") {
    PredictionLog log = three_model_log();
    std::vector<std::string> R{"e1", "e2", "e3", "e4"};
    CostFunction cf = CostFunction::linear({{"m3", 3.0}});
    auto trace = greedy_cascade(R, AccuracyConstraint::always_true(), cf,
                                fixed_generator({conf_model("m3", -kInf)}), log);
    REQUIRE(trace.has_value());
    CHECK(trace->stages.size() == 1);
    CHECK(trace->total_cost == doctest::Approx(4 * 3.0));
}

TEST_CASE("greedy fails when every candidate abstains everywhere") {
    PredictionLog log = three_model_log();
    auto trace = greedy_cascade({"e1"}, AccuracyConstraint::always_true(),
                                CostFunction::linear({{"m1", 1.0}}),
                                fixed_generator({conf_model("m1", kInf)}), log);
    CHECK_FALSE(trace.has_value());
}

TEST_CASE("greedy on an empty build set is an empty cascade") {
    PredictionLog log = three_model_log();
    auto trace = greedy_cascade({}, AccuracyConstraint::always_true(),
                                CostFunction::linear({{"m1", 1.0}}),
                                fixed_generator({conf_model("m1", -kInf)}), log);
    REQUIRE(trace.has_value());
    CHECK(trace->stages.empty());
    CHECK(trace->total_cost == 0.0);
}

TEST_CASE("greedy prefers zero-cost stages and stays deterministic") {
    PredictionLog log = three_model_log();
    std::vector<std::string> R{"e1", "e2", "e3", "e4"};
    CostFunction cf = CostFunction::linear({{"m1", 0.0}, {"m2", 1.0}, {"m3", 3.0}});
    std::vector<GeneratedModel> pool{conf_model("m1", 0.5), conf_model("m2", 0.5),
                                     conf_model("m3", 0.5)};
    auto a = greedy_cascade(R, AccuracyConstraint::always_true(), cf, fixed_generator(pool), log);
    auto b = greedy_cascade(R, AccuracyConstraint::always_true(), cf, fixed_generator(pool), log);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->stages[0].model.id() == "m1");  // ratio +inf first
    CHECK(a->stages[0].ratio == kInf);
    REQUIRE(a->stages.size() == b->stages.size());
    for (std::size_t i = 0; i < a->stages.size(); ++i) {
        CHECK(a->stages[i].model.id() == b->stages[i].model.id());
        CHECK(a->stages[i].answered == b->stages[i].answered);
    }
}

TEST_CASE("stage cost reuses prior computations through the graph") {
    ModelManifest manifest;
    manifest.entries = {{"small", 2.0}, {"big", 5.0}};
    manifest.reuse_edges = {{std::optional<std::string>("small"), "big", 3.0}};
    CostFunction cf = CostFunction::graph_from_manifest(manifest);
    GeneratedModel small = conf_model("small", 0.5);
    GeneratedModel big = conf_model("big", 0.5);
    CHECK(stage_cost(cf, big, {}) == doctest::Approx(5.0));
    CHECK(stage_cost(cf, big, {small}) == doctest::Approx(3.0));
}

TEST_CASE("ensemble stage cost charges the new component plus overhead") {
    CostFunction cf = CostFunction::linear({{"a", 2.0}, {"b", 7.0}});
    EnsembleAbstainingModel ens;
    ens.id = "ens:b";
    ens.component_model_ids = {"b", "a"};
    ens.beta = {1.0, 1.0};
    GeneratedModel prior = conf_model("a", -kInf);
    CascadeOptions options;
    CHECK(stage_cost(cf, GeneratedModel::ensemble(ens), {prior}, options) ==
          doctest::Approx(7.0));
    options.ensemble_component_overhead = 0.25;
    CHECK(stage_cost(cf, GeneratedModel::ensemble(ens), {prior}, options) ==
          doctest::Approx(7.5));
}

TEST_CASE("evaluate_cascade: single reference stage") {
    PredictionLog log = three_model_log();
    CostFunction cf = CostFunction::linear({{"m3", 3.0}});
    Cascade cascade;
    cascade.stages = {conf_model("m3", -kInf)};
    EvaluationReport report = evaluate_cascade(cascade, log, AccuracyMetricKind::Top1, cf);
    CHECK(report.overall_accuracy == doctest::Approx(1.0));
    CHECK(report.mean_tau == doctest::Approx(3.0));
    CHECK(report.rows[0].fraction_classified == doctest::Approx(1.0));
}

TEST_CASE("evaluate_cascade: last stage at -inf covers everything") {
    PredictionLog log = three_model_log();
    CostFunction cf = CostFunction::linear({{"m1", 1.0}, {"m3", 3.0}});
    Cascade cascade;
    cascade.stages = {conf_model("m1", 0.5), conf_model("m3", -kInf)};
    EvaluationReport report = evaluate_cascade(cascade, log, AccuracyMetricKind::Top1, cf);
    double covered = 0.0;
    for (const StageEvalRow& row : report.rows) covered += row.fraction_classified;
    CHECK(covered == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.unanswered_fraction == 0.0);
}

TEST_CASE("evaluate_cascade rejects cascades referencing unknown models") {
    PredictionLog log = three_model_log();
    CostFunction cf = CostFunction::linear({{"ghost", 1.0}});
    Cascade cascade;
    cascade.stages = {conf_model("ghost", -kInf)};
    CHECK_THROWS_AS(evaluate_cascade(cascade, log, AccuracyMetricKind::Top1, cf),
                    ValidationError);
}

TEST_CASE("held-out accuracy tracks the constraint up to sampling noise") {
    // seeded two-sample experiment; the exact guarantee holds on the build
    // half, the test half may dip below by O(1/sqrt(N))
    Rng rng(20260810);
    const std::size_t n = 400;
    auto make_log = [&](PredictionLogBuilder& builder, std::vector<std::string>& R) {
        for (std::size_t i = 0; i < n; ++i) {
            std::string ex = "e" + std::to_string(i);
            R.push_back(ex);
            int label = static_cast<int>(rng.below(3));
            double difficulty = rng.uniform();
            auto model_out = [&](double competence) {
                bool correct = difficulty < competence;
                return conf_output(correct ? label : (label + 1) % 3,
                                   competence - difficulty + rng.uniform(-0.05, 0.05));
            };
            builder.add_example({ex, label},
                                {{"cheap", model_out(0.6)}, {"ref", model_out(0.95)}});
        }
    };
    PredictionLogBuilder train_builder, test_builder;
    std::vector<std::string> train_R, test_R;
    make_log(train_builder, train_R);
    make_log(test_builder, test_R);
    PredictionLog train = train_builder.build();
    PredictionLog test = test_builder.build();

    AccuracyConstraint ac =
        AccuracyConstraint::min_relative(1.0, AccuracyMetricKind::Top1, "ref");
    CostFunction cf = CostFunction::linear({{"cheap", 1.0}, {"ref", 10.0}});
    std::vector<PoolEntry> pool{{"cheap", make_raw_feature_model("conf")},
                                {"ref", make_raw_feature_model("conf")}};
    GeneratorFn generator = [&](const std::vector<std::string>& remaining,
                                const std::vector<GeneratedModel>&) {
        return confident_model_set(remaining, pool, ac, train);
    };
    auto trace = greedy_cascade(train_R, ac, cf, generator, train);
    REQUIRE(trace.has_value());
    Cascade cascade = cascade_from_trace(*trace, ac, cf.kind());

    double ref_accuracy = 0.0;
    for (const std::string& x : test_R) {
        ref_accuracy += metric_value(AccuracyMetricKind::Top1,
                                     test.output(x, "ref").prediction, test.label(x));
    }
    ref_accuracy /= static_cast<double>(n);
    EvaluationReport report = evaluate_cascade(cascade, test, AccuracyMetricKind::Top1, cf);
    CHECK(report.overall_accuracy >=
          ac.alpha * ref_accuracy - 2.0 / std::sqrt(static_cast<double>(n)));
}

}  // TEST_SUITE
