#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cascade/cascade.hpp"
#include "cascade/cost.hpp"

namespace cascade {

// Abstaining models reduced to fixed answered sets over a small example
// universe (bit e of answered[m] = model m answers example e). Theory
// checks quantify over abstaining models abstractly, so the oracle is
// decoupled from accuracy-model details.
struct AnsweredTable {
    std::vector<std::string> example_ids;  // <= 32
    std::vector<std::string> model_ids;
    std::vector<std::uint32_t> answered;

    std::uint32_t full_mask() const {
        return example_ids.size() >= 32 ? ~0u
                                        : ((1u << example_ids.size()) - 1u);
    }
};

// Per-stage accuracy gate for enumeration: (model index, newly answered
// slice) -> acceptable. Defaults to always-true (the hardness setting).
using StagePredicate = std::function<bool(std::size_t, std::uint32_t)>;

StagePredicate always_true_stage();

// Visits every sequence of distinct models in which each stage answers at
// least one new example and passes the predicate. Arguments: sequence,
// covered mask, T = sum n_i * C_i so far, C_sigma so far, and whether the
// sequence is terminal (no productive passing extension exists).
using SequenceVisitor = std::function<void(const std::vector<std::size_t>&, std::uint32_t,
                                           double, double, bool)>;

void enumerate_sequences(const AnsweredTable& table, const CostFunction& cf,
                         const StagePredicate& stage_ok, const SequenceVisitor& visit);

struct BruteForceResult {
    std::vector<std::size_t> sequence;  // model indices
    double opt_cost = 0.0;              // minimum T over terminal sequences
};

// Exhaustive minimum of T = sum_x tau(x, S) over sequences of distinct
// productive models, scored once no productive extension remains (examples
// no model answers accrue the full sequence cost). Restricting to distinct
// productive models is exact here: answered sets are fixed and
// c(m, S) <= c(m, {}) means a repeated or unproductive stage only adds
// cost. Hard-capped at 8 models / 12 examples.
BruteForceResult brute_force_opt(const AnsweredTable& table, const CostFunction& cf,
                                 const StagePredicate& stage_ok = always_true_stage());

// r* = max_m |A(m, R)| / c(m, {}) over the masked example set.
double max_single_model_rate(const AnsweredTable& table, std::uint32_t r_mask,
                             const CostFunction& cf);

// Domination of a sequence by a set: (1) the set's from-scratch costs sum
// to at most C_sigma(sequence); (2) every example answered by the sequence
// is answered by the set. The cost comparison allows 1e-9 relative slack
// for float summation order.
bool check_domination(const std::vector<std::size_t>& candidate_set,
                      const std::vector<std::size_t>& sequence, const AnsweredTable& table,
                      const CostFunction& cf);

// Log-backed variant over whole-log answered sets; stage costs follow the
// cascade's reuse accounting.
bool check_domination(const std::vector<GeneratedModel>& candidate_set,
                      const std::vector<GeneratedModel>& sequence, const CostFunction& cf,
                      const PredictionLog& log);

struct SetCoverInstance {
    std::vector<std::string> elements;
    std::vector<std::pair<std::string, std::vector<std::string>>> sets;
};

struct MsscReduction {
    AnsweredTable table;
    CostFunction unit_cost;  // LINEAR, every model costs 1
    AccuracyConstraint constraint;  // always true
};

// One example per element, one model per set answering exactly its members,
// unit costs, constraint always satisfied. Cascade cost on the reduction
// equals the min-sum set cover objective. Errors on uncoverable elements.
MsscReduction reduce_mssc(const SetCoverInstance& instance);

}  // namespace cascade
