// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <hplan/mc_eval.hpp>
#include <hplan/synthetic.hpp>

#include <cmath>

using namespace hplan;

namespace
{

QTable table(std::map<Cell, double> q)
{
    auto out = QTable { .taskId = "t", .K = 1, .q = std::move(q), .counts = {} };
    for (auto const& [cell, value]: out.q)
        out.counts[cell] = 1;
    return out;
}

/// Exhaustive lexicographic scan: larger Q, then smaller m, then smaller n.
std::pair<Cell, int> bruteForce(QTable const& t, double tolerance = 1e-9)
{
    auto best = t.q.begin()->first;
    auto bestQ = t.q.begin()->second;
    for (auto const& [cell, value]: t.q)
    {
        if (value > bestQ + tolerance)
        {
            best = cell;
            bestQ = value;
        }
    }
    auto ties = 0;
    for (auto const& [cell, value]: t.q)
    {
        if (std::abs(value - bestQ) > tolerance)
            continue;
        ++ties;
        auto const [n, m] = cell;
        if (m < best.second || (m == best.second && n < best.first))
            best = cell;
    }
    return { best, ties };
}

QTable randomTable(std::mt19937_64& rng)
{
    auto const N = 1 + static_cast<int>(uniformBelow(rng, 6));
    auto const M = 1 + static_cast<int>(uniformBelow(rng, 4));
    auto q = std::map<Cell, double> {};
    for (auto n = 1; n <= N; ++n)
    {
        for (auto m = 1; m <= M; ++m)
            q[{ n, m }] = static_cast<double>(uniformBelow(rng, 4)) / 3.0;
    }
    return table(q);
}

std::vector<HierarchicalPlan> suitePlans(SyntheticSuite const& suite, TaskInstance const& task, int N)
{
    auto out = std::vector<HierarchicalPlan> {};
    for (auto const& text: suite.fixture.at(task.id).at(PlanPurpose::Fixed))
    {
        try
        {
            auto plan = parsePlan(text, task.id, static_cast<int>(out.size()) + 1).plan;
            out.push_back(std::move(plan));
        }
        catch (ParseError const&)
        {
        }
        if (static_cast<int>(out.size()) == N)
            break;
    }
    return out;
}

HierarchicalPlan singleLevelPlan(TaskInstance const& task)
{
    return parsePlan(scriptedPlanText(expertActions(task), 1, 0), task.id, 1).plan;
}

} // namespace

TEST_CASE("selection on the worked table")
{
    auto const t = table({ { { 1, 1 }, 0.2 }, { { 1, 2 }, 0.8 }, { { 1, 3 }, 0.8 }, { { 2, 1 }, 0.1 }, { { 2, 2 }, 0.6 }, { { 2, 3 }, 0.8 } });
    auto const choice = selectCell(t);
    CHECK(choice.n == 1);
    CHECK(choice.m == 2);
    CHECK(choice.q == 0.8);
    CHECK(choice.tieCount == 3);

    auto const literal = selectCell(t, { .tolerance = 1e-9, .literalFormula = true });
    CHECK(literal.m == 1);
    CHECK(literal.n == 1);
}

TEST_CASE("selection tie-breaks and edge cases")
{
    auto const flat = table({ { { 1, 1 }, 0.5 }, { { 1, 2 }, 0.5 }, { { 2, 1 }, 0.5 }, { { 2, 2 }, 0.5 } });
    CHECK(selectCell(flat).n == 1);
    CHECK(selectCell(flat).m == 1);
    CHECK(selectCell(flat).tieCount == 4);

    auto const single = table({ { { 1, 1 }, 0.3 } });
    auto const plan = makePlan("t", 1, { { "a" } });
    auto const result = selectBest(single, { plan });
    CHECK(result.pBest == plan);
    CHECK(result.bestQ == 0.3);

    CHECK(selectCell(table({ { { 1, 1 }, 0.5 }, { { 1, 2 }, 0.5 + 1e-12 } })).m == 1);
    CHECK_THROWS_AS((void)selectCell(QTable {}), EmptyTable);
}

TEST_CASE("selection matches the brute-force scan on random tables")
{
    auto rng = std::mt19937_64 { 42 };
    for (auto i = 0; i < 500; ++i)
    {
        auto const t = randomTable(rng);
        auto const [cell, ties] = bruteForce(t);
        auto const choice = selectCell(t);
        CHECK(Cell { choice.n, choice.m } == cell);
        CHECK(choice.tieCount == ties);

        auto scaled = t;
        for (auto& [c, value]: scaled.q)
            value *= 2.5;
        auto const again = selectCell(scaled);
        CHECK(Cell { again.n, again.m } == cell);
    }
}

TEST_CASE("selectBest returns the prefix of the chosen plan")
{
    auto rng = std::mt19937_64 { 1 };
    auto plans = std::vector<HierarchicalPlan> {};
    for (auto n = 1; n <= 2; ++n)
    {
        auto plan = test::randomPlan(rng, 3);
        while (plan.depth() != 3)
            plan = test::randomPlan(rng, 3);
        plans.push_back(plan.withSourceIndex(n));
    }
    auto const t = table({ { { 1, 1 }, 0.2 }, { { 1, 2 }, 0.8 }, { { 1, 3 }, 0.8 }, { { 2, 1 }, 0.1 }, { { 2, 2 }, 0.6 }, { { 2, 3 }, 0.8 } });
    auto const result = selectBest(t, plans);
    CHECK(result.pBest == prefix(plans[0], 2));
    CHECK(selectionFromJson(toJson(result)).pBest == result.pBest);
}

TEST_CASE("aggregate means per cell")
{
    auto records = std::vector<RolloutRecord> {};
    for (auto k = 3; k >= 1; --k)
        records.push_back({ .taskId = "t", .n = 1, .m = 1, .k = k, .seed = 0, .reward = k == 2 ? 1.0 : 0.0, .trajectoryRef = "" });
    auto const q = aggregate("t", 3, records);
    CHECK(q.q.at({ 1, 1 }) == doctest::Approx(1.0 / 3.0));
    CHECK(q.counts.at({ 1, 1 }) == 3);
    CHECK(q.complete());
    CHECK(qtableFromJson(toJson(q)).q == q.q);
    CHECK(rolloutFromJson(toJson(records[0])) == records[0]);

    records.pop_back();
    CHECK_FALSE(aggregate("t", 3, records).complete());
}

TEST_CASE("five three-level plans with K=3 give 45 records over 15 cells")
{
    auto const suite = makeSyntheticSuite({ .tasks = 3, .maxLevels = 3, .plansPerTask = 5, .seed = 0, .markUnseen = false });
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 20.0, .seed = 0, .reactStyle = false } };
    for (auto const& task: suite.tasks)
    {
        auto const plans = suitePlans(suite, task, 5);
        REQUIRE(plans.size() == 5);
        auto const result = evaluatePrefixes(task, plans, 3, { .env = EnvironmentSpec::gridHouse(), .actor = &actor });
        CHECK(result.records.size() == 45);
        CHECK(result.table.q.size() == 15);
        CHECK(result.table.complete());
        for (auto const& [cell, value]: result.table.q)
        {
            if (cell.second >= *task.difficulty)
                CHECK(value == 1.0);
        }
        CHECK(selectCell(result.table).m == *task.difficulty);
    }
}

TEST_CASE("Bernoulli cell estimate lies within the binomial interval")
{
    auto task = makeSyntheticSuite({ .tasks = 3, .maxLevels = 3, .plansPerTask = 1, .seed = 0, .markUnseen = false }).tasks[2];
    REQUIRE(task.difficulty == 3);
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = std::log(2.0), .seed = 0, .reactStyle = false } };
    auto const plans = std::vector { singleLevelPlan(task) };
    constexpr auto K = 1000;
    auto const bound = 3 * std::sqrt(0.25 * 0.75 / K);
    for (std::uint64_t trial = 0; trial < 5; ++trial)
    {
        auto const result = evaluatePrefixes(task, plans, K, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .masterSeed = trial });
        CAPTURE(trial);
        CHECK(std::abs(result.table.q.at({ 1, 1 }) - 0.25) <= bound);
    }
}

TEST_CASE("worker count and cache do not change Q")
{
    auto const suite = makeSyntheticSuite({ .tasks = 3, .maxLevels = 3, .plansPerTask = 3, .seed = 4, .markUnseen = false });
    auto const task = suite.tasks[2];
    auto const plans = suitePlans(suite, task, 3);
    auto const actor = ScriptedActor { { .baseSuccess = 0.8, .granularityDecay = 0.7, .seed = 2, .reactStyle = false } };

    auto const serial = evaluatePrefixes(task, plans, 20, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .masterSeed = 9, .workers = 1 });
    auto const parallel = evaluatePrefixes(task, plans, 20, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .masterSeed = 9, .workers = 4 });
    CHECK(serial.table.q == parallel.table.q);
    CHECK(serial.records == parallel.records);

    auto const dir = test::TempDir { "mc" };
    {
        auto cache = RolloutCache { dir / "cache.jsonl" };
        auto const cold = evaluatePrefixes(task, plans, 20, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .masterSeed = 9, .workers = 2, .cache = &cache });
        CHECK(cold.cacheHits == 0);
        CHECK(cold.table.q == serial.table.q);
        CHECK(cache.size() == 180);
    }
    {
        auto cache = RolloutCache { dir / "cache.jsonl" };
        CHECK(cache.size() == 180);
        auto const warm = evaluatePrefixes(task, plans, 20, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .masterSeed = 9, .workers = 2, .cache = &cache });
        CHECK(warm.cacheHits == 180);
        CHECK(warm.table.q == serial.table.q);
        CHECK(cache.hits() == 180);

        auto const other = evaluatePrefixes(task, plans, 20, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .masterSeed = 10, .workers = 2, .cache = &cache });
        CHECK(other.cacheHits == 0);
    }

    {
        auto out = std::ofstream { dir / "cache.jsonl", std::ios::app };
        out << "{\"key\":\"trunc";
    }
    CHECK(RolloutCache { dir / "cache.jsonl" }.size() == 360);
}

TEST_CASE("whole-plan evaluation shares seeds across plans")
{
    auto const suite = makeSyntheticSuite({ .tasks = 3, .maxLevels = 3, .plansPerTask = 2, .seed = 0, .markUnseen = false });
    auto const task = suite.tasks[1];
    auto const actor = ScriptedActor { { .baseSuccess = 0.6, .granularityDecay = 0.0, .seed = 1, .reactStyle = false } };
    auto const plans = suitePlans(suite, task, 2);
    REQUIRE(plans.size() == 2);
    auto const result = evaluatePlans(task, plans, 3, { .env = EnvironmentSpec::gridHouse(), .actor = &actor });
    CHECK(result.records.size() == 6);
    CHECK(result.q.size() == 2);
    CHECK(result.m == 3);

    auto twin = plans[0].withSourceIndex(2);
    auto const same = evaluatePlans(task, { plans[0], twin }, 50, { .env = EnvironmentSpec::gridHouse(), .actor = &actor });
    CHECK(same.q.at(1) == same.q.at(2));

    auto const json = toJson(result);
    CHECK(json["K"] == 3);
    CHECK(json["q"].size() == 2);
}

TEST_CASE("whole-plan Q tracks the true success rate")
{
    auto task = makeSyntheticSuite({ .tasks = 3, .maxLevels = 3, .plansPerTask = 1, .seed = 0, .markUnseen = false }).tasks[1];
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = std::log(2.0), .seed = 5, .reactStyle = false } };
    auto const result = evaluatePlans(task, { singleLevelPlan(task) }, 2000, { .env = EnvironmentSpec::gridHouse(), .actor = &actor, .workers = 2 });
    CHECK(std::abs(result.q.at(1) - 0.5) <= 3 * std::sqrt(0.25 / 2000));
}

TEST_CASE("evaluation input errors")
{
    auto const task = test::gridTask("g", 1);
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 0.0, .seed = 0, .reactStyle = false } };
    auto const ctx = EvalContext { .env = EnvironmentSpec::gridHouse(), .actor = &actor };
    auto const a = makePlan("g", 1, { { "go to countertop 1" } });
    auto const b = makePlan("g", 2, { { "go to countertop 1" }, { "go to countertop 1" } });
    CHECK_THROWS_AS((void)evaluatePrefixes(task, {}, 3, ctx), BadConfig);
    CHECK_THROWS_AS((void)evaluatePrefixes(task, { a }, 0, ctx), BadConfig);
    CHECK_THROWS_AS((void)evaluatePrefixes(task, { a, b }, 1, ctx), BadConfig);
    CHECK_THROWS_AS((void)evaluatePrefixes(task, { a, a }, 1, ctx), BadConfig);
    CHECK_THROWS_AS((void)evaluatePrefixes(task, { a }, 1, EvalContext { .env = EnvironmentSpec::gridHouse() }), BadConfig);

    auto const wordy = makePlan("g", 1, { { "ponder" } });
    try
    {
        (void)evaluatePrefixes(task, { wordy }, 2, ctx);
        FAIL("expected PartialEvaluation");
    }
    catch (PartialEvaluation const& e)
    {
        CHECK(e.missing().size() == 2);
    }
}

TEST_CASE("seed derivation is positional")
{
    CHECK(prefixRolloutSeed(0, "t", 1, 2, 3) == prefixRolloutSeed(0, "t", 1, 2, 3));
    CHECK(prefixRolloutSeed(0, "t", 1, 2, 3) != prefixRolloutSeed(0, "t", 2, 1, 3));
    CHECK(planRolloutSeed(0, "t", 2, 1) != planRolloutSeed(1, "t", 2, 1));
}
