#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/oracle.hpp"

namespace cascade {

// Deterministic splitmix64 stream; kept self-contained so suite results are
// identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    std::uint64_t below(std::uint64_t n) { return next() % n; }
    int range(int lo, int hi) { return lo + static_cast<int>(below(hi - lo + 1)); }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

struct SuiteReport {
    std::string name;
    std::size_t trials = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;  // suite-specific worst observed statistic
    std::vector<std::string> messages;

    bool passed() const { return violations == 0; }
};

// Random abstaining-model instance with coverable answered sets and linear
// costs in [0.1, 10] held as integer tenths for exact arithmetic.
struct RandomInstance {
    AnsweredTable table;
    std::vector<std::uint64_t> cost_tenths;
    CostFunction linear_cost;
};

RandomInstance random_instance(Rng& rng, std::size_t max_models, std::size_t max_examples);

// Materializes an answered table as a prediction log (label 0, prediction
// 0, feature "conf" 1/0) so the real greedy path can run on it.
PredictionLog log_from_table(const AnsweredTable& table);

// Generator returning the table's models (raw "conf" feature, threshold
// 0.5) at every iteration; the fixed-pool setting of the guarantees.
GeneratorFn fixed_pool_generator(const AnsweredTable& table);

// T(greedy) <= 4 * OPT on seeded random instances; also checks the
// tau/stage-cost identity on every greedy trace. worst_ratio = max
// T(greedy)/OPT.
SuiteReport run_four_approx_suite(std::size_t trials, std::uint64_t seed);

// |A(S, R)| <= r* .C_sigma(S) for every enumerated sequence, compared in
// exact integer arithmetic. worst_ratio = max |A(S,R)| / (r* C_sigma(S)).
SuiteReport run_rate_bound_suite(std::size_t trials, std::uint64_t seed);

// Greedy cascade on the min-sum set cover reduction equals classical greedy
// MSSC; brute force equals the exhaustive MSSC optimum.
SuiteReport run_mssc_suite(std::size_t trials, std::uint64_t seed);

// check_domination(set(S), S) for repeat-free sequences under linear costs,
// a negative control, and the prefix-composite construction on chains.
SuiteReport run_domination_suite(std::size_t trials, std::uint64_t seed);

// End-to-end constraint guarantee on seeded synthetic logs: greedy with
// the confident-model generator (reference included) never fails, the
// answered sets partition R, Q(cascade) >= alpha * Q(ref) on the build
// set, and the tau identity holds.
SuiteReport run_constraint_suite(std::size_t trials, std::uint64_t seed,
                                 const std::vector<double>& alphas);

}  // namespace cascade
