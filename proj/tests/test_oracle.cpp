#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cascade/oracle.hpp"
#include "cascade/suites.hpp"

using namespace cascade;

TEST_SUITE("oracle") {

TEST_CASE("brute force: single model answering everything") {
    AnsweredTable table;
    table.example_ids = {"a", "b", "c"};
    table.model_ids = {"m"};
    table.answered = {0b111};
    CostFunction cf = CostFunction::linear({{"m", 2.5}});
    BruteForceResult r = brute_force_opt(table, cf);
    CHECK(r.opt_cost == doctest::Approx(3 * 2.5));
    CHECK(r.sequence == std::vector<std::size_t>{0});
}

TEST_CASE("brute force: duplicated models leave OPT unchanged") {
    AnsweredTable table;
    table.example_ids = {"a", "b"};
    table.model_ids = {"m", "m_copy"};
    table.answered = {0b01, 0b01};  // neither covers b
    CostFunction cf = CostFunction::linear({{"m", 1.0}, {"m_copy", 1.0}});
    BruteForceResult both = brute_force_opt(table, cf);

    AnsweredTable dedup;
    dedup.example_ids = table.example_ids;
    dedup.model_ids = {"m"};
    dedup.answered = {0b01};
    BruteForceResult one = brute_force_opt(dedup, CostFunction::linear({{"m", 1.0}}));
    CHECK(both.opt_cost == doctest::Approx(one.opt_cost));
}

TEST_CASE("brute force refuses oversized instances") {
    AnsweredTable table;
    for (int m = 0; m < 9; ++m) {
        table.model_ids.push_back("m" + std::to_string(m));
        table.answered.push_back(1);
    }
    table.example_ids = {"a"};
    CostFunction cf = CostFunction::linear({});
    CHECK_THROWS_WITH_AS(brute_force_opt(table, cf), doctest::Contains("too large"),
                         ValidationError);
}

TEST_CASE("max_single_model_rate") {
    AnsweredTable table;
    table.example_ids = {"a", "b", "c", "d"};
    table.model_ids = {"m"};
    table.answered = {0b1111};
    CHECK(max_single_model_rate(table, table.full_mask(),
                                CostFunction::linear({{"m", 2.0}})) == doctest::Approx(2.0));

    AnsweredTable three;
    three.example_ids = {"a", "b", "c", "d"};
    three.model_ids = {"m1", "m2", "m3"};
    three.answered = {0b0011, 0b0110, 0b1111};
    CostFunction cf = CostFunction::linear({{"m1", 1.0}, {"m2", 1.0}, {"m3", 3.0}});
    CHECK(max_single_model_rate(three, three.full_mask(), cf) == doctest::Approx(2.0));

    AnsweredTable empty;
    empty.example_ids = {"a"};
    empty.model_ids = {"m"};
    empty.answered = {0};
    CHECK(max_single_model_rate(empty, empty.full_mask(),
                                CostFunction::linear({{"m", 1.0}})) == 0.0);
}

TEST_CASE("check_domination basics") {
    AnsweredTable table;
    table.example_ids = {"a", "b", "c"};
    table.model_ids = {"m1", "m2"};
    table.answered = {0b011, 0b100};
    CostFunction cf = CostFunction::linear({{"m1", 1.0}, {"m2", 2.0}});
    CHECK(check_domination({0, 1}, {0, 1}, table, cf));
    CHECK(check_domination({1, 0}, {0, 1}, table, cf));
    // m2 uniquely answers c; a set without it cannot dominate
    CHECK_FALSE(check_domination({0}, {0, 1}, table, cf));
}

TEST_CASE("linear cost: a repeat-free sequence costs exactly its underlying set") {
    Rng rng(404);
    for (int trial = 0; trial < 30; ++trial) {
        RandomInstance inst = random_instance(rng, 6, 8);
        std::vector<std::size_t> seq(inst.table.model_ids.size());
        std::iota(seq.begin(), seq.end(), 0);
        for (std::size_t i = seq.size(); i > 1; --i) std::swap(seq[i - 1], seq[rng.below(i)]);
        seq.resize(1 + rng.below(seq.size()));

        double set_cost = 0.0, seq_cost = 0.0;
        std::vector<std::string> already;
        for (std::size_t m : seq) {
            set_cost += inst.linear_cost.cost(inst.table.model_ids[m], {});
            seq_cost += inst.linear_cost.cost(inst.table.model_ids[m], already);
            already.push_back(inst.table.model_ids[m]);
        }
        CHECK(set_cost == seq_cost);
        CHECK(check_domination(seq, seq, inst.table, inst.linear_cost));
    }
}

TEST_CASE("reduce_mssc on the worked instance") {
    SetCoverInstance inst;
    inst.elements = {"a", "b", "c"};
    inst.sets = {{"z1", {"a", "b"}}, {"z2", {"b", "c"}}};
    MsscReduction red = reduce_mssc(inst);
    PredictionLog log = log_from_table(red.table);
    auto trace = greedy_cascade(red.table.example_ids, red.constraint, red.unit_cost,
                                fixed_pool_generator(red.table), log);
    REQUIRE(trace.has_value());
    REQUIRE(trace->stages.size() == 2);
    CHECK(trace->stages[0].model.id() == "z1");
    CHECK(trace->stages[1].model.id() == "z2");
    CHECK(trace->total_cost == doctest::Approx(4.0));  // 3*1 + 1*1

    BruteForceResult opt = brute_force_opt(red.table, red.unit_cost);
    CHECK(opt.opt_cost == doctest::Approx(4.0));
}

TEST_CASE("reduce_mssc: one covering set") {
    SetCoverInstance inst;
    inst.elements = {"a", "b", "c", "d"};
    inst.sets = {{"z", {"a", "b", "c", "d"}}};
    MsscReduction red = reduce_mssc(inst);
    BruteForceResult opt = brute_force_opt(red.table, red.unit_cost);
    CHECK(opt.opt_cost == doctest::Approx(4.0));  // |U|
}

TEST_CASE("reduce_mssc: disjoint singletons cost n(n+1)/2 in any order") {
    SetCoverInstance inst;
    const std::size_t n = 4;
    for (std::size_t i = 0; i < n; ++i) {
        std::string e = "x" + std::to_string(i);
        inst.elements.push_back(e);
        inst.sets.push_back({"z" + std::to_string(i), {e}});
    }
    MsscReduction red = reduce_mssc(inst);
    double expected = static_cast<double>(n * (n + 1)) / 2.0;
    BruteForceResult opt = brute_force_opt(red.table, red.unit_cost);
    CHECK(opt.opt_cost == doctest::Approx(expected));
    // every terminal order has the same value; check via enumeration
    enumerate_sequences(red.table, red.unit_cost, always_true_stage(),
                        [&](const std::vector<std::size_t>&, std::uint32_t, double total,
                            double, bool terminal) {
                            if (terminal) CHECK(total == doctest::Approx(expected));
                        });
}

TEST_CASE("reduce_mssc rejects uncoverable elements") {
    SetCoverInstance inst;
    inst.elements = {"a", "b"};
    inst.sets = {{"z", {"a"}}};
    CHECK_THROWS_WITH_AS(reduce_mssc(inst), doctest::Contains("uncoverable"), ValidationError);
}

TEST_CASE("seeded suites pass at reduced trial counts") {
    CHECK(run_four_approx_suite(60, 7).passed());
    CHECK(run_rate_bound_suite(60, 7).passed());
    CHECK(run_mssc_suite(60, 7).passed());
    CHECK(run_domination_suite(60, 7).passed());
    CHECK(run_constraint_suite(30, 7, {0.95, 1.0}).passed());
}

TEST_CASE("suite reports are reproducible for a fixed seed") {
    SuiteReport a = run_four_approx_suite(25, 99);
    SuiteReport b = run_four_approx_suite(25, 99);
    CHECK(a.violations == b.violations);
    CHECK(a.worst_ratio == b.worst_ratio);
}

}  // TEST_SUITE
