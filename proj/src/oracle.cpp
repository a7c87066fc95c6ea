#include "cascade/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace cascade {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t popcount(std::uint32_t mask) { return static_cast<std::size_t>(std::popcount(mask)); }

// cost inequality with slack for float summation order
bool cost_leq(double lhs, double rhs) {
    return lhs <= rhs + 1e-9 * std::max(1.0, std::fabs(rhs));
}
}  // namespace

StagePredicate always_true_stage() {
    return [](std::size_t, std::uint32_t) { return true; };
}

namespace {

struct SequenceEnumerator {
    const AnsweredTable& table;
    const CostFunction& cf;
    const StagePredicate& stage_ok;
    const SequenceVisitor& visit;

    std::vector<std::size_t> sequence;
    std::vector<std::string> already;  // model ids of chosen prefix

    void recurse(std::uint32_t covered, double total, double c_sigma) {
        const std::size_t remaining = table.example_ids.size() - popcount(covered);
        bool terminal = true;
        for (std::size_t m = 0; m < table.model_ids.size(); ++m) {
            if (std::find(sequence.begin(), sequence.end(), m) != sequence.end()) continue;
            std::uint32_t newly = table.answered[m] & ~covered;
            if (newly == 0) continue;  // unproductive
            if (!stage_ok(m, newly)) continue;
            terminal = false;

            double c = cf.cost(table.model_ids[m], already);
            double next_total = total + static_cast<double>(remaining) * c;
            sequence.push_back(m);
            already.push_back(table.model_ids[m]);
            recurse(covered | table.answered[m], next_total, c_sigma + c);
            already.pop_back();
            sequence.pop_back();
        }
        visit(sequence, covered, total, c_sigma, terminal);
    }
};

}  // namespace

void enumerate_sequences(const AnsweredTable& table, const CostFunction& cf,
                         const StagePredicate& stage_ok, const SequenceVisitor& visit) {
    if (table.example_ids.size() > 32) {
        throw ValidationError("answered table: more than 32 examples");
    }
    if (table.answered.size() != table.model_ids.size()) {
        throw ValidationError("answered table: mask count != model count");
    }
    SequenceEnumerator e{table, cf, stage_ok, visit, {}, {}};
    e.recurse(0u, 0.0, 0.0);
}

BruteForceResult brute_force_opt(const AnsweredTable& table, const CostFunction& cf,
                                 const StagePredicate& stage_ok) {
    if (table.model_ids.size() > 8 || table.example_ids.size() > 12) {
        throw ValidationError("brute_force_opt: instance too large (max 8 models, 12 examples)");
    }
    BruteForceResult best;
    best.opt_cost = kInf;
    enumerate_sequences(table, cf, stage_ok,
                        [&](const std::vector<std::size_t>& seq, std::uint32_t, double total,
                            double, bool terminal) {
                            if (terminal && total < best.opt_cost) {
                                best.opt_cost = total;
                                best.sequence = seq;
                            }
                        });
    return best;
}

double max_single_model_rate(const AnsweredTable& table, std::uint32_t r_mask,
                             const CostFunction& cf) {
    if (table.model_ids.empty()) throw ValidationError("max_single_model_rate: no models");
    double best = 0.0;
    for (std::size_t m = 0; m < table.model_ids.size(); ++m) {
        double c = cf.cost(table.model_ids[m], {});
        double a = static_cast<double>(popcount(table.answered[m] & r_mask));
        if (a == 0.0) continue;  // ratio 0
        double rate = c > 0.0 ? a / c : kInf;
        best = std::max(best, rate);
    }
    return best;
}

bool check_domination(const std::vector<std::size_t>& candidate_set,
                      const std::vector<std::size_t>& sequence, const AnsweredTable& table,
                      const CostFunction& cf) {
    double set_cost = 0.0;
    std::uint32_t set_answers = 0;
    for (std::size_t m : candidate_set) {
        set_cost += cf.cost(table.model_ids[m], {});
        set_answers |= table.answered[m];
    }
    double seq_cost = 0.0;
    std::uint32_t seq_answers = 0;
    std::vector<std::string> already;
    for (std::size_t m : sequence) {
        seq_cost += cf.cost(table.model_ids[m], already);
        already.push_back(table.model_ids[m]);
        seq_answers |= table.answered[m];
    }
    return cost_leq(set_cost, seq_cost) && (seq_answers & ~set_answers) == 0;
}

bool check_domination(const std::vector<GeneratedModel>& candidate_set,
                      const std::vector<GeneratedModel>& sequence, const CostFunction& cf,
                      const PredictionLog& log) {
    double set_cost = 0.0;
    for (const GeneratedModel& m : candidate_set) set_cost += stage_cost(cf, m, {});
    double seq_cost = 0.0;
    std::vector<GeneratedModel> prior;
    for (const GeneratedModel& m : sequence) {
        seq_cost += stage_cost(cf, m, prior);
        prior.push_back(m);
    }
    if (!cost_leq(set_cost, seq_cost)) return false;

    for (const LabeledExample& ex : log.examples()) {
        bool seq_answers = std::any_of(sequence.begin(), sequence.end(), [&](const auto& m) {
            return m.evaluate(log, ex.example_id).has_value();
        });
        if (!seq_answers) continue;
        bool set_answers =
            std::any_of(candidate_set.begin(), candidate_set.end(), [&](const auto& m) {
                return m.evaluate(log, ex.example_id).has_value();
            });
        if (!set_answers) return false;
    }
    return true;
}

MsscReduction reduce_mssc(const SetCoverInstance& instance) {
    if (instance.elements.size() > 32) {
        throw ValidationError("reduce_mssc: more than 32 elements");
    }
    MsscReduction red;
    red.table.example_ids = instance.elements;
    std::uint32_t covered = 0;
    std::map<std::string, double> unit_costs;
    for (const auto& [set_id, members] : instance.sets) {
        std::uint32_t mask = 0;
        for (const std::string& e : members) {
            auto it = std::find(instance.elements.begin(), instance.elements.end(), e);
            if (it == instance.elements.end()) {
                throw ValidationError("reduce_mssc: set '" + set_id + "' has unknown element '" +
                                      e + "'");
            }
            mask |= 1u << (it - instance.elements.begin());
        }
        red.table.model_ids.push_back(set_id);
        red.table.answered.push_back(mask);
        covered |= mask;
        unit_costs[set_id] = 1.0;
    }
    for (std::size_t e = 0; e < instance.elements.size(); ++e) {
        if (!(covered & (1u << e))) {
            throw ValidationError("reduce_mssc: element '" + instance.elements[e] +
                                  "' is uncoverable");
        }
    }
    red.unit_cost = CostFunction::linear(std::move(unit_costs));
    red.constraint = AccuracyConstraint::always_true();
    return red;
}

}  // namespace cascade
