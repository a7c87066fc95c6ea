#include "cascade/suites.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace cascade {

namespace {

std::size_t popcount(std::uint32_t mask) { return static_cast<std::size_t>(std::popcount(mask)); }

std::string trial_tag(std::uint64_t seed, std::size_t trial) {
    std::ostringstream os;
    os << "trial " << trial << " (seed " << seed << ")";
    return os.str();
}

}  // namespace

RandomInstance random_instance(Rng& rng, std::size_t max_models, std::size_t max_examples) {
    RandomInstance inst;
    std::size_t num_models = 1 + rng.below(max_models);
    std::size_t num_examples = 1 + rng.below(max_examples);
    for (std::size_t e = 0; e < num_examples; ++e) {
        inst.table.example_ids.push_back("e" + std::to_string(e));
    }
    std::uint32_t covered = 0;
    for (std::size_t m = 0; m < num_models; ++m) {
        inst.table.model_ids.push_back("m" + std::to_string(m));
        std::uint32_t mask = 0;
        for (std::size_t e = 0; e < num_examples; ++e) {
            if (rng.uniform() < 0.5) mask |= 1u << e;
        }
        inst.table.answered.push_back(mask);
        covered |= mask;
    }
    // force coverability so greedy terminates on every instance
    for (std::size_t e = 0; e < num_examples; ++e) {
        if (!(covered & (1u << e))) {
            inst.table.answered[rng.below(num_models)] |= 1u << e;
        }
    }
    std::map<std::string, double> base;
    for (std::size_t m = 0; m < num_models; ++m) {
        std::uint64_t tenths = 1 + rng.below(100);  // cost in [0.1, 10]
        inst.cost_tenths.push_back(tenths);
        base[inst.table.model_ids[m]] = static_cast<double>(tenths) / 10.0;
    }
    inst.linear_cost = CostFunction::linear(std::move(base));
    return inst;
}

PredictionLog log_from_table(const AnsweredTable& table) {
    PredictionLogBuilder builder;
    for (std::size_t e = 0; e < table.example_ids.size(); ++e) {
        std::map<std::string, ModelOutput> outputs;
        for (std::size_t m = 0; m < table.model_ids.size(); ++m) {
            ModelOutput out;
            out.prediction = 0;
            out.features["conf"] = (table.answered[m] & (1u << e)) ? 1.0 : 0.0;
            outputs[table.model_ids[m]] = std::move(out);
        }
        builder.add_example({table.example_ids[e], 0}, std::move(outputs));
    }
    return builder.build();
}

GeneratorFn fixed_pool_generator(const AnsweredTable& table) {
    std::vector<GeneratedModel> models;
    for (const std::string& id : table.model_ids) {
        AbstainingModel m;
        m.model_id = id;
        m.accuracy_model = make_raw_feature_model("conf");
        m.threshold = 0.5;
        models.push_back(GeneratedModel::pool(std::move(m)));
    }
    return [models](const std::vector<std::string>&, const std::vector<GeneratedModel>&) {
        return models;
    };
}

namespace {

// integer replay of a stage sequence: T in cost tenths
std::uint64_t replay_total_tenths(const RandomInstance& inst,
                                  const std::vector<std::size_t>& sequence) {
    std::uint64_t total = 0;
    std::uint32_t covered = 0;
    std::size_t n = inst.table.example_ids.size();
    for (std::size_t m : sequence) {
        total += static_cast<std::uint64_t>(n - popcount(covered)) * inst.cost_tenths[m];
        covered |= inst.table.answered[m];
    }
    return total;
}

std::size_t model_index_of(const AnsweredTable& table, const std::string& id) {
    auto it = std::find(table.model_ids.begin(), table.model_ids.end(), id);
    return static_cast<std::size_t>(it - table.model_ids.begin());
}

}  // namespace

SuiteReport run_four_approx_suite(std::size_t trials, std::uint64_t seed) {
    SuiteReport report;
    report.name = "four_approx";
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::uint64_t trial_seed = seed + trial;
        Rng rng(trial_seed);
        RandomInstance inst = random_instance(rng, 6, 10);
        PredictionLog log = log_from_table(inst.table);

        auto trace = greedy_cascade(inst.table.example_ids, AccuracyConstraint::always_true(),
                                    inst.linear_cost, fixed_pool_generator(inst.table), log);
        if (!trace) {
            ++report.violations;
            report.messages.push_back("greedy FAILURE on coverable instance, " +
                                      trial_tag(trial_seed, trial));
            continue;
        }
        BruteForceResult opt = brute_force_opt(inst.table, inst.linear_cost);

        // exact comparison in integer tenths
        std::vector<std::size_t> greedy_seq;
        for (const StageRecord& s : trace->stages) {
            greedy_seq.push_back(model_index_of(inst.table, s.model.id()));
        }
        std::uint64_t greedy_tenths = replay_total_tenths(inst, greedy_seq);
        std::uint64_t opt_tenths = replay_total_tenths(inst, opt.sequence);
        if (greedy_tenths > 4 * opt_tenths) {
            ++report.violations;
            report.messages.push_back("T(greedy) > 4*OPT: " + std::to_string(greedy_tenths) +
                                      " vs " + std::to_string(opt_tenths) + " tenths, " +
                                      trial_tag(trial_seed, trial));
        }
        if (opt_tenths > 0) {
            report.worst_ratio = std::max(
                report.worst_ratio,
                static_cast<double>(greedy_tenths) / static_cast<double>(opt_tenths));
        }

        // tau identity on the greedy trace: recompute sum_x tau(x, S) by
        // evaluating the cascade per example and compare with sum n_i C_i
        Cascade cascade = cascade_from_trace(*trace, AccuracyConstraint::always_true(),
                                             CostFunction::Kind::Linear);
        std::vector<double> costs = cascade_stage_costs(cascade, inst.linear_cost);
        double tau_sum = 0.0;
        for (const std::string& x : inst.table.example_ids) {
            tau_sum += per_example_cost(cascade, costs, log, x);
        }
        double diff = std::fabs(tau_sum - trace->total_cost);
        if (diff > 1e-9 * std::max(1.0, std::fabs(trace->total_cost))) {
            ++report.violations;
            report.messages.push_back("tau identity violated: " + std::to_string(tau_sum) +
                                      " vs " + std::to_string(trace->total_cost) + ", " +
                                      trial_tag(trial_seed, trial));
        }
    }
    return report;
}

SuiteReport run_rate_bound_suite(std::size_t trials, std::uint64_t seed) {
    SuiteReport report;
    report.name = "rate_bound";
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::uint64_t trial_seed = seed + trial;
        Rng rng(trial_seed);
        RandomInstance inst = random_instance(rng, 6, 10);
        std::uint32_t full = inst.table.full_mask();

        // arg max of |A(m,R)| / c(m,{}) by exact cross-multiplication
        std::uint64_t best_a = 0, best_k = 1;
        for (std::size_t m = 0; m < inst.table.model_ids.size(); ++m) {
            std::uint64_t a = popcount(inst.table.answered[m] & full);
            std::uint64_t k = inst.cost_tenths[m];
            if (a * best_k > best_a * k) {
                best_a = a;
                best_k = k;
            }
        }
        double r_star = max_single_model_rate(inst.table, full, inst.linear_cost);
        double r_star_exact = 10.0 * static_cast<double>(best_a) / static_cast<double>(best_k);
        if (std::fabs(r_star - r_star_exact) > 1e-9 * std::max(1.0, r_star_exact)) {
            ++report.violations;
            report.messages.push_back("max_single_model_rate mismatch, " +
                                      trial_tag(trial_seed, trial));
        }

        enumerate_sequences(
            inst.table, inst.linear_cost, always_true_stage(),
            [&](const std::vector<std::size_t>& seq, std::uint32_t covered, double, double,
                bool) {
                std::uint64_t answered = popcount(covered);
                std::uint64_t c_sigma_tenths = 0;  // linear: sum of from-scratch costs
                for (std::size_t m : seq) c_sigma_tenths += inst.cost_tenths[m];
                // |A(S,R)| <= r* C_sigma(S), exact: a*best_k <= best_a*K
                if (answered * best_k > best_a * c_sigma_tenths) {
                    ++report.violations;
                    report.messages.push_back("rate bound violated, " +
                                              trial_tag(trial_seed, trial));
                }
                if (best_a > 0 && c_sigma_tenths > 0) {
                    double ratio = static_cast<double>(answered * best_k) /
                                   static_cast<double>(best_a * c_sigma_tenths);
                    report.worst_ratio = std::max(report.worst_ratio, ratio);
                }
            });
    }
    return report;
}

namespace {

SetCoverInstance random_cover_instance(Rng& rng, std::size_t max_sets,
                                       std::size_t max_elements) {
    SetCoverInstance inst;
    std::size_t num_sets = 1 + rng.below(max_sets);
    std::size_t num_elements = 1 + rng.below(max_elements);
    for (std::size_t e = 0; e < num_elements; ++e) {
        inst.elements.push_back("x" + std::to_string(e));
    }
    std::vector<std::vector<std::string>> members(num_sets);
    std::vector<bool> covered(num_elements, false);
    for (std::size_t s = 0; s < num_sets; ++s) {
        for (std::size_t e = 0; e < num_elements; ++e) {
            if (rng.uniform() < 0.4) {
                members[s].push_back(inst.elements[e]);
                covered[e] = true;
            }
        }
    }
    for (std::size_t e = 0; e < num_elements; ++e) {
        if (!covered[e]) members[rng.below(num_sets)].push_back(inst.elements[e]);
    }
    for (std::size_t s = 0; s < num_sets; ++s) {
        inst.sets.emplace_back("z" + std::to_string(s), std::move(members[s]));
    }
    return inst;
}

// classical greedy min-sum set cover: repeatedly take the set covering the
// most uncovered elements (ties: lexicographically smaller id); value is
// the sum over elements of the 1-based stage at which they are covered
std::uint64_t classic_greedy_mssc(const SetCoverInstance& inst) {
    std::vector<bool> covered(inst.elements.size(), false);
    std::size_t num_covered = 0;
    std::uint64_t value = 0;
    std::uint64_t stage = 0;
    std::vector<bool> used(inst.sets.size(), false);
    auto element_index = [&](const std::string& e) {
        return static_cast<std::size_t>(
            std::find(inst.elements.begin(), inst.elements.end(), e) - inst.elements.begin());
    };
    while (num_covered < inst.elements.size()) {
        ++stage;
        std::size_t best = inst.sets.size();
        std::size_t best_gain = 0;
        for (std::size_t s = 0; s < inst.sets.size(); ++s) {
            if (used[s]) continue;
            std::size_t gain = 0;
            for (const std::string& e : inst.sets[s].second) {
                if (!covered[element_index(e)]) ++gain;
            }
            if (gain == 0) continue;
            if (best == inst.sets.size() || gain > best_gain ||
                (gain == best_gain && inst.sets[s].first < inst.sets[best].first)) {
                best = s;
                best_gain = gain;
            }
        }
        if (best == inst.sets.size()) break;  // uncoverable; callers pre-check
        used[best] = true;
        for (const std::string& e : inst.sets[best].second) {
            std::size_t idx = element_index(e);
            if (!covered[idx]) {
                covered[idx] = true;
                ++num_covered;
                value += stage;
            }
        }
    }
    return value;
}

// exhaustive min-sum set cover: scan all full permutations of the sets
std::uint64_t exhaustive_mssc(const SetCoverInstance& inst) {
    std::vector<std::size_t> perm(inst.sets.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::uint32_t> masks(inst.sets.size(), 0);
    for (std::size_t s = 0; s < inst.sets.size(); ++s) {
        for (const std::string& e : inst.sets[s].second) {
            std::size_t idx = static_cast<std::size_t>(
                std::find(inst.elements.begin(), inst.elements.end(), e) -
                inst.elements.begin());
            masks[s] |= 1u << idx;
        }
    }
    std::uint64_t best = ~0ULL;
    do {
        std::uint64_t value = 0;
        std::uint32_t covered = 0;
        for (std::size_t pos = 0; pos < perm.size(); ++pos) {
            std::uint32_t newly = masks[perm[pos]] & ~covered;
            value += static_cast<std::uint64_t>(popcount(newly)) * (pos + 1);
            covered |= masks[perm[pos]];
        }
        best = std::min(best, value);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

SuiteReport run_mssc_suite(std::size_t trials, std::uint64_t seed) {
    SuiteReport report;
    report.name = "mssc_equivalence";
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::uint64_t trial_seed = seed + trial;
        Rng rng(trial_seed);
        SetCoverInstance inst = random_cover_instance(rng, 5, 8);
        MsscReduction red = reduce_mssc(inst);
        PredictionLog log = log_from_table(red.table);

        auto trace = greedy_cascade(red.table.example_ids, red.constraint, red.unit_cost,
                                    fixed_pool_generator(red.table), log);
        if (!trace) {
            ++report.violations;
            report.messages.push_back("greedy FAILURE on reduction, " +
                                      trial_tag(trial_seed, trial));
            continue;
        }
        std::uint64_t greedy_value = classic_greedy_mssc(inst);
        if (std::llround(trace->total_cost) != static_cast<long long>(greedy_value)) {
            ++report.violations;
            report.messages.push_back(
                "greedy cascade != classical greedy MSSC: " + std::to_string(trace->total_cost) +
                " vs " + std::to_string(greedy_value) + ", " + trial_tag(trial_seed, trial));
        }

        BruteForceResult opt = brute_force_opt(red.table, red.unit_cost);
        std::uint64_t mssc_opt = exhaustive_mssc(inst);
        if (std::llround(opt.opt_cost) != static_cast<long long>(mssc_opt)) {
            ++report.violations;
            report.messages.push_back(
                "brute force != exhaustive MSSC: " + std::to_string(opt.opt_cost) + " vs " +
                std::to_string(mssc_opt) + ", " + trial_tag(trial_seed, trial));
        }
    }
    return report;
}

SuiteReport run_domination_suite(std::size_t trials, std::uint64_t seed) {
    SuiteReport report;
    report.name = "domination";
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::uint64_t trial_seed = seed + trial;
        Rng rng(trial_seed);
        RandomInstance inst = random_instance(rng, 6, 10);

        // random repeat-free sequence
        std::vector<std::size_t> seq(inst.table.model_ids.size());
        std::iota(seq.begin(), seq.end(), 0);
        for (std::size_t i = seq.size(); i > 1; --i) {
            std::swap(seq[i - 1], seq[rng.below(i)]);
        }
        seq.resize(1 + rng.below(seq.size()));

        if (!check_domination(seq, seq, inst.table, inst.linear_cost)) {
            ++report.violations;
            report.messages.push_back("set(S) fails to dominate repeat-free S, " +
                                      trial_tag(trial_seed, trial));
        }

        // negative control: drop a model that uniquely answers some example
        for (std::size_t drop = 0; drop < seq.size(); ++drop) {
            std::uint32_t others = 0;
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if (i != drop) others |= inst.table.answered[seq[i]];
            }
            if ((inst.table.answered[seq[drop]] & ~others) == 0) continue;
            std::vector<std::size_t> smaller;
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if (i != drop) smaller.push_back(seq[i]);
            }
            if (check_domination(smaller, seq, inst.table, inst.linear_cost)) {
                ++report.violations;
                report.messages.push_back("domination accepted a non-covering set, " +
                                          trial_tag(trial_seed, trial));
            }
            break;
        }

        // prefix composites on a random chain: {m*_j} (j = max index used)
        // dominates any sequence drawn from {m_1..m_j}
        std::size_t chain_len = 2 + rng.below(3);
        ModelManifest manifest;
        std::vector<double> edge(chain_len);
        double prefix = 0.0;
        std::vector<std::string> chain;
        for (std::size_t i = 0; i < chain_len; ++i) {
            edge[i] = 0.5 + rng.uniform(0.0, 4.5);
            prefix += edge[i];
            std::string id = "c" + std::to_string(i);
            chain.push_back(id);
            manifest.entries.push_back({id, prefix});
            if (i > 0) manifest.reuse_edges.push_back({chain[i - 1], id, edge[i]});
        }
        CostFunction cf = CostFunction::graph_from_manifest(manifest);

        AnsweredTable chain_table;
        for (std::size_t e = 0; e < 6; ++e) {
            chain_table.example_ids.push_back("e" + std::to_string(e));
        }
        chain_table.model_ids = chain;
        for (std::size_t i = 0; i < chain_len; ++i) {
            std::uint32_t mask = 0;
            for (std::size_t e = 0; e < 6; ++e) {
                if (rng.uniform() < 0.5) mask |= 1u << e;
            }
            chain_table.answered.push_back(mask);
        }
        PredictionLog chain_log = log_from_table(chain_table);
        std::map<std::string, AbstainingModel> wrappers;
        for (const std::string& id : chain) {
            wrappers[id] = AbstainingModel{id, make_raw_feature_model("conf"), 0.5};
        }
        std::vector<CompositeAbstainingModel> composites =
            make_prefix_composites(chain, cf, chain_log, wrappers);

        std::size_t sub_len = 1 + rng.below(chain_len);
        std::vector<std::size_t> indices(chain_len);
        std::iota(indices.begin(), indices.end(), 0);
        for (std::size_t i = indices.size(); i > 1; --i) {
            std::swap(indices[i - 1], indices[rng.below(i)]);
        }
        indices.resize(sub_len);
        std::size_t max_index = *std::max_element(indices.begin(), indices.end());
        std::vector<GeneratedModel> sub_sequence;
        for (std::size_t i : indices) {
            sub_sequence.push_back(GeneratedModel::pool(wrappers[chain[i]]));
        }
        std::vector<GeneratedModel> dominator{
            GeneratedModel::composite(composites[max_index])};
        if (!check_domination(dominator, sub_sequence, cf, chain_log)) {
            ++report.violations;
            report.messages.push_back("composite fails to dominate chain sequence, " +
                                      trial_tag(trial_seed, trial));
        }
    }
    return report;
}

SuiteReport run_constraint_suite(std::size_t trials, std::uint64_t seed,
                                 const std::vector<double>& alphas) {
    SuiteReport report;
    report.name = "constraint_satisfaction";
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::uint64_t trial_seed = seed + trial;
        Rng rng(trial_seed);
        double alpha = alphas[trial % alphas.size()];

        // synthetic log: per-model accuracy level, confidence loosely
        // correlated with correctness, supplied as a log feature
        std::size_t n = 8 + rng.below(23);
        std::size_t num_models = 2 + rng.below(4);
        int num_classes = 2 + static_cast<int>(rng.below(3));
        std::vector<std::string> model_ids;
        std::vector<double> level(num_models);
        for (std::size_t m = 0; m < num_models; ++m) {
            model_ids.push_back("m" + std::to_string(m));
            level[m] = rng.uniform(0.3, 0.95);
        }
        PredictionLogBuilder builder;
        std::vector<std::string> R;
        for (std::size_t i = 0; i < n; ++i) {
            std::string ex = "e" + std::to_string(i);
            R.push_back(ex);
            int label = static_cast<int>(rng.below(num_classes));
            std::map<std::string, ModelOutput> outputs;
            for (std::size_t m = 0; m < num_models; ++m) {
                bool correct = rng.uniform() < level[m];
                ModelOutput out;
                out.prediction = correct
                                     ? label
                                     : static_cast<int>((label + 1 + rng.below(num_classes - 1)) %
                                                        num_classes);
                out.features["conf"] =
                    correct ? rng.uniform(0.3, 1.0) : rng.uniform(0.0, 0.7);
                outputs[model_ids[m]] = std::move(out);
            }
            builder.add_example({ex, label}, std::move(outputs));
        }
        PredictionLog log = builder.build();

        std::string reference = model_ids.back();
        AccuracyConstraint ac =
            AccuracyConstraint::min_relative(alpha, AccuracyMetricKind::Top1, reference);
        std::vector<PoolEntry> pool;
        for (const std::string& id : model_ids) {
            pool.push_back({id, make_raw_feature_model("conf")});
        }
        std::map<std::string, double> base;
        for (std::size_t m = 0; m < num_models; ++m) {
            base[model_ids[m]] = rng.uniform(0.1, 10.0);
        }
        CostFunction cf = CostFunction::linear(std::move(base));
        GeneratorFn generator = [&](const std::vector<std::string>& remaining,
                                    const std::vector<GeneratedModel>&) {
            return confident_model_set(remaining, pool, ac, log);
        };

        auto trace = greedy_cascade(R, ac, cf, generator, log);
        if (!trace) {
            ++report.violations;
            report.messages.push_back("greedy FAILURE with satisfiable constraint, " +
                                      trial_tag(trial_seed, trial));
            continue;
        }

        // partition: disjoint answered sets covering R
        std::set<std::string> seen;
        bool disjoint = true;
        for (const StageRecord& s : trace->stages) {
            for (const std::string& x : s.answered) {
                if (!seen.insert(x).second) disjoint = false;
            }
        }
        if (!disjoint || seen.size() != R.size()) {
            ++report.violations;
            report.messages.push_back("answered sets do not partition R, " +
                                      trial_tag(trial_seed, trial));
        }

        // exact build-set guarantee: Q(cascade) >= alpha * Q(ref)
        double q_cascade = 0.0, q_ref = 0.0;
        for (const StageRecord& s : trace->stages) {
            for (const std::string& x : s.answered) {
                auto pred = s.model.evaluate(log, x);
                if (pred) {
                    q_cascade += metric_value(ac.metric, *pred, log.label(x));
                }
            }
        }
        for (const std::string& x : R) {
            q_ref += metric_value(ac.metric, log.output(x, reference).prediction, log.label(x));
        }
        if (q_cascade < alpha * q_ref) {
            ++report.violations;
            report.messages.push_back("build-set constraint violated: " +
                                      std::to_string(q_cascade) + " < " +
                                      std::to_string(alpha * q_ref) + ", " +
                                      trial_tag(trial_seed, trial));
        }
        if (q_ref > 0) {
            report.worst_ratio = std::max(report.worst_ratio, alpha * q_ref / std::max(q_cascade, 1e-12));
        }

        // tau identity
        Cascade cascade = cascade_from_trace(*trace, ac, CostFunction::Kind::Linear);
        std::vector<double> costs = cascade_stage_costs(cascade, cf);
        double tau_sum = 0.0;
        for (const std::string& x : R) tau_sum += per_example_cost(cascade, costs, log, x);
        if (std::fabs(tau_sum - trace->total_cost) >
            1e-9 * std::max(1.0, std::fabs(trace->total_cost))) {
            ++report.violations;
            report.messages.push_back("tau identity violated, " + trial_tag(trial_seed, trial));
        }
    }
    return report;
}

}  // namespace cascade
