// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <hplan/plan.hpp>

using namespace hplan;

namespace
{

HierarchicalPlan threeLevel()
{
    return makePlan("t1", 2, { { "a" }, { "a", "b" }, { "a", "b", "c" } });
}

std::vector<int> stepCounts(HierarchicalPlan const& plan)
{
    auto out = std::vector<int> {};
    for (auto const& level: plan.levels)
        out.push_back(static_cast<int>(level.steps.size()));
    return out;
}

/// Independent re-check of every validation rule.
std::map<Violation::Rule, std::size_t> expectedViolations(HierarchicalPlan const& plan, bool strict, std::optional<int> maxLevels)
{
    auto out = std::map<Violation::Rule, std::size_t> {};
    if (plan.levels.empty())
        ++out[Violation::Rule::NoLevels];
    if (maxLevels && plan.depth() > *maxLevels)
        ++out[Violation::Rule::TooManyLevels];
    for (std::size_t i = 0; i < plan.levels.size(); ++i)
    {
        auto const& level = plan.levels[i];
        if (level.level != static_cast<int>(i) + 1)
            ++out[Violation::Rule::NonContiguousLevels];
        if (level.steps.empty())
            ++out[Violation::Rule::EmptyLevel];
        for (std::size_t s = 0; s < level.steps.size(); ++s)
        {
            auto const& step = level.steps[s];
            if (step.index != static_cast<int>(s) + 1)
                ++out[Violation::Rule::NonContiguousSteps];
            if (step.text.empty())
                ++out[Violation::Rule::EmptyStepText];
            if (step.text.find("<plan") != std::string::npos || step.text.find("</plan") != std::string::npos)
                ++out[Violation::Rule::TagMarkerInStep];
        }
        if (strict && i > 0 && level.steps.size() < plan.levels[i - 1].steps.size())
            ++out[Violation::Rule::DecreasingStepCount];
    }
    return out;
}

} // namespace

TEST_CASE("prefix keeps the first m levels and the identity")
{
    auto const plan = threeLevel();
    CHECK(prefix(plan, 3) == plan);
    auto const p1 = prefix(plan, 1);
    CHECK(p1.depth() == 1);
    CHECK(p1.taskId == "t1");
    CHECK(p1.sourceIndex == 2);
    CHECK(p1.levels.front() == plan.levels.front());
    CHECK_THROWS_AS((void)prefix(plan, 0), OutOfRange);
    CHECK_THROWS_AS((void)prefix(plan, 4), OutOfRange);
}

TEST_CASE("five three-level plans decompose into fifteen prefixes")
{
    auto count = 0;
    for (auto n = 1; n <= 5; ++n)
    {
        auto const plan = threeLevel().withSourceIndex(n);
        for (auto m = 1; m <= 3; ++m)
        {
            CHECK(prefix(plan, m).depth() == m);
            ++count;
        }
    }
    CHECK(count == 15);
}

TEST_CASE("prefix composes")
{
    auto rng = std::mt19937_64 { 11 };
    for (auto i = 0; i < 100; ++i)
    {
        auto const plan = test::randomPlan(rng);
        for (auto a = 1; a <= plan.depth(); ++a)
        {
            for (auto b = 1; b <= a; ++b)
                CHECK(prefix(prefix(plan, a), b) == prefix(plan, b));
        }
    }
}

TEST_CASE("render emits ascending tagged blocks")
{
    auto const plan = makePlan("t", 1, { { "find it" }, { "find it", "take it\n- Action: take x" } });
    CHECK(render(plan) ==
          "<plan 1>\nStep 1: find it\n</plan 1>\n"
          "<plan 2>\nStep 1: find it\nStep 2: take it\n  - Action: take x\n</plan 2>\n");
    CHECK(render(plan, RenderMode::LastLevel) == "<plan 2>\nStep 1: find it\nStep 2: take it\n  - Action: take x\n</plan 2>\n");

    auto const single = makePlan("t", 1, { { "only" } });
    CHECK(render(single) == render(single, RenderMode::LastLevel));
}

TEST_CASE("a shallower prefix renders as a literal string prefix")
{
    auto rng = std::mt19937_64 { 5 };
    for (auto i = 0; i < 100; ++i)
    {
        auto const plan = test::randomPlan(rng);
        for (auto m = 1; m < plan.depth(); ++m)
            CHECK(render(plan).starts_with(render(prefix(plan, m))));
    }
}

TEST_CASE("case-study plans parse to three levels")
{
    auto const apple = parsePlan(readText(test::dataDir() / "apple_plan.txt"));
    CHECK(apple.plan.depth() == 3);
    CHECK(stepCounts(apple.plan) == std::vector { 3, 4, 10 });
    CHECK(apple.plan.levels[1].steps[0].text.find("likely locations") != std::string::npos);
    CHECK(validate(apple.plan, { .strictMonotone = true, .maxLevels = {} }).ok());

    auto const paint = parsePlan(readText(test::dataDir() / "green_paint_plan.txt"));
    CHECK(paint.plan.depth() == 3);
    CHECK(stepCounts(paint.plan) == std::vector { 4, 7, 7 });
    CHECK(paint.plan.levels[2].steps[2].text == "Identify the blue and yellow paints as the necessary ingredients to make green paint.\n"
                                                 "- Possible Action: examine blue paint\n"
                                                 "- Possible Action: examine yellow paint");
}

TEST_CASE("minimal block")
{
    auto const parsed = parsePlan("<plan 1>\nStep 1: do it\n</plan 1>");
    CHECK(parsed.plan.depth() == 1);
    CHECK(parsed.plan.levels[0].steps.size() == 1);
    CHECK(parsed.plan.levels[0].steps[0].text == "do it");
    CHECK(parsed.report.warnings.empty());
}

TEST_CASE("parse tolerates case, blank lines and trailing space")
{
    auto const parsed = parsePlan("noise\n<PLAN 1>  \n\nstep 1:  go   \n\n</Plan 1>\ntrailing");
    CHECK(parsed.plan.levels[0].steps[0].text == "go");
}

TEST_CASE("parse renumbers levels and records the warning")
{
    auto const parsed = parsePlan("<plan 3>\nStep 1: b\nStep 2: c\n</plan 3>\n<plan 1>\nStep 1: a\n</plan 1>");
    CHECK(parsed.plan.depth() == 2);
    CHECK(parsed.plan.levels[0].steps[0].text == "a");
    CHECK(parsed.plan.levels[1].level == 2);
    CHECK(parsed.report.writtenLevels == std::vector { 1, 3 });
    CHECK(parsed.report.deepestWrittenLevel() == 3);
    CHECK(parsed.report.hasWarning(ParseWarning::Kind::NonContiguousLevels));
}

TEST_CASE("parse errors carry a position")
{
    SUBCASE("no block")
    {
        CHECK_THROWS_AS((void)parsePlan("Step 1: nothing tagged"), ParseError);
    }
    SUBCASE("unterminated")
    {
        try
        {
            (void)parsePlan("ok\n<plan 1>\nStep 1: a\n");
            FAIL("expected ParseError");
        }
        catch (ParseError const& e)
        {
            CHECK(e.position() == 3);
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("no steps")
    {
        CHECK_THROWS_AS((void)parsePlan("<plan 1>\njust words\n</plan 1>"), ParseError);
    }
    SUBCASE("duplicate level")
    {
        CHECK_THROWS_AS((void)parsePlan("<plan 1>\nStep 1: a\n</plan 1><plan 1>\nStep 1: a\n</plan 1>"), ParseError);
    }
}

TEST_CASE("render then parse is the identity on random plans")
{
    auto rng = std::mt19937_64 { 2024 };
    for (auto i = 0; i < 200; ++i)
    {
        auto const plan = test::randomPlan(rng);
        auto const back = parsePlan(render(plan), plan.taskId, plan.sourceIndex).plan;
        REQUIRE(back == plan);
    }
}

TEST_CASE("validate")
{
    CHECK(validate(makePlan("t", 1, { { "a", "b", "c" }, { "1", "2", "3", "4" }, { "x", "x", "x", "x", "x", "x", "x", "x", "x", "x" } })).ok());

    auto const shrinking = makePlan("t", 1, { { "a", "b", "c", "d", "e" }, { "x", "y", "z" } });
    CHECK(validate(shrinking).ok());
    auto const strict = validate(shrinking, { .strictMonotone = true, .maxLevels = {} });
    CHECK(strict.violations.size() == 1);
    CHECK(strict.count(Violation::Rule::DecreasingStepCount) == 1);

    auto const equal = makePlan("t", 1, { { "a", "b" }, { "c", "d" } });
    CHECK(validate(equal, { .strictMonotone = true, .maxLevels = {} }).ok());

    CHECK(validate(threeLevel(), { .maxLevels = 2 }).count(Violation::Rule::TooManyLevels) == 1);
    CHECK(validate(HierarchicalPlan {}).count(Violation::Rule::NoLevels) == 1);
}

TEST_CASE("validate agrees with an independent rule check on fuzzed plans")
{
    auto rng = std::mt19937_64 { 99 };
    for (auto i = 0; i < 300; ++i)
    {
        auto plan = test::randomPlan(rng, 4, 5);
        auto const mutation = uniformBelow(rng, 6);
        auto& level = plan.levels[uniformBelow(rng, plan.levels.size())];
        if (mutation == 0)
            level.steps.clear();
        else if (mutation == 1)
            level.level += 1;
        else if (mutation == 2)
            level.steps.front().index = 7;
        else if (mutation == 3)
            level.steps.back().text = "see <plan 2>";
        else if (mutation == 4)
            level.steps.front().text.clear();

        auto const strict = uniformBelow(rng, 2) == 1;
        auto const maxLevels = uniformBelow(rng, 2) == 1 ? std::optional { 3 } : std::nullopt;
        auto const original = plan;
        auto const report = validate(plan, { .strictMonotone = strict, .maxLevels = maxLevels });
        CHECK(plan == original);

        auto const expected = expectedViolations(plan, strict, maxLevels);
        auto total = std::size_t { 0 };
        for (auto const& [rule, count]: expected)
        {
            CHECK(report.count(rule) == count);
            total += count;
        }
        CHECK(report.violations.size() == total);
    }
}

TEST_CASE("generated monotone plans never fail validation")
{
    auto rng = std::mt19937_64 { 3 };
    for (auto i = 0; i < 200; ++i)
        CHECK(validate(test::randomPlan(rng, 4, 6, true), { .strictMonotone = true, .maxLevels = 4 }).ok());
}

TEST_CASE("plan file round trip")
{
    auto const dir = test::TempDir { "plan" };
    auto rng = std::mt19937_64 { 8 };
    auto plans = std::vector<HierarchicalPlan> {};
    for (auto i = 0; i < 10; ++i)
        plans.push_back(test::randomPlan(rng));
    writePlanFile(dir / "plans.jsonl", plans);
    CHECK(readPlanFile(dir / "plans.jsonl") == plans);
    CHECK(planFromJson(toJson(plans[0])) == plans[0]);

    writeTextAtomic(dir / "raw.txt", render(plans[1]));
    auto const raw = readPlanFile(dir / "raw.txt");
    REQUIRE(raw.size() == 1);
    CHECK(raw[0].levels == plans[1].levels);
}

TEST_CASE("render mode names")
{
    CHECK(renderModeFromString("hierarchical") == RenderMode::Hierarchical);
    CHECK(renderModeFromString("last-level") == RenderMode::LastLevel);
    CHECK_THROWS_AS((void)renderModeFromString("sideways"), BadConfig);
}
