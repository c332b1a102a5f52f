// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chat_stub.hpp"
#include "support.hpp"

#include <hplan/planner.hpp>

using namespace hplan;

namespace
{

std::string tagged(std::vector<int> const& stepsPerLevel)
{
    auto levels = std::vector<std::vector<std::string>> {};
    for (auto steps: stepsPerLevel)
    {
        auto level = std::vector<std::string> {};
        for (auto s = 1; s <= steps; ++s)
            level.push_back(fmt::format("step {} of {}", s, steps));
        levels.push_back(level);
    }
    return render(makePlan("t", 1, levels));
}

StubPlanSource stub(std::string const& taskId, PlanPurpose purpose, std::vector<std::string> texts)
{
    return StubPlanSource { { { taskId, { { purpose, std::move(texts) } } } } };
}

} // namespace

TEST_CASE("fixed generation accepts exact-depth plans in order")
{
    auto const task = test::gridTask("t");
    auto const source = stub("t", PlanPurpose::Fixed, { tagged({ 1, 2, 3 }), tagged({ 2, 2, 2 }), tagged({ 1, 1, 1 }) });
    auto const batch = generateFixed(source, task, std::nullopt, 3, 3);
    REQUIRE(batch.plans.size() == 3);
    CHECK(batch.attempts == 3);
    CHECK(batch.rejections.empty());
    for (auto i = 0; i < 3; ++i)
    {
        CHECK(batch.plans[i].sourceIndex == i + 1);
        CHECK(batch.plans[i].taskId == "t");
        CHECK(batch.plans[i].depth() == 3);
    }
}

TEST_CASE("fixed generation skips bad outputs and reports them")
{
    auto const task = test::gridTask("t");
    auto const source = stub("t", PlanPurpose::Fixed, { "no tags here", tagged({ 1, 2 }), tagged({ 1, 2, 3 }), tagged({ 3, 1, 4 }), tagged({ 2, 3, 3 }) });

    auto const lax = generateFixed(source, task, std::nullopt, 3, 2);
    CHECK(lax.plans.size() == 2);
    CHECK(lax.attempts == 4);
    CHECK(lax.rejections.size() == 2);
    CHECK(lax.rejections[0].reason.starts_with("parse:"));
    CHECK(lax.rejections[1].reason == "expected 3 levels, got 2");
    CHECK(lax.plans[1].sourceIndex == 2);

    auto options = PlannerOptions {};
    options.strictMonotone = true;
    auto const strict = generateFixed(source, task, std::nullopt, 3, 2, options);
    CHECK(strict.attempts == 5);
    CHECK(strict.rejections.size() == 3);
    CHECK(strict.rejections[2].reason.starts_with("invalid:"));
}

TEST_CASE("exhaustion after the retry pool reports valid count and rejections")
{
    auto const task = test::gridTask("t");
    auto texts = std::vector<std::string> {};
    for (auto i = 0; i < 20; ++i)
        texts.push_back(i % 4 == 0 ? tagged({ 1, 2, 3 }) : tagged({ 1 }));
    auto const source = stub("t", PlanPurpose::Fixed, texts);
    auto options = PlannerOptions {};
    options.retryBudget = 1;
    try
    {
        (void)generateFixed(source, task, std::nullopt, 3, 5, options);
        FAIL("expected GenerationExhausted");
    }
    catch (GenerationExhausted const& e)
    {
        // Pool of 5 * (1 + 1) = 10 attempts; indices 0, 4, 8 are valid.
        CHECK(e.validCount() == 3);
        CHECK(e.rejections().size() == 7);
    }
}

TEST_CASE("a short fixture stops early")
{
    auto const task = test::gridTask("t");
    auto const source = stub("t", PlanPurpose::Fixed, { tagged({ 1, 1, 1 }) });
    try
    {
        (void)generateFixed(source, task, std::nullopt, 3, 2);
        FAIL("expected GenerationExhausted");
    }
    catch (GenerationExhausted const& e)
    {
        CHECK(e.validCount() == 1);
        REQUIRE(e.rejections().size() == 1);
        CHECK(e.rejections()[0].reason.find("no fixed plan #2") != std::string::npos);
    }
    CHECK_THROWS_AS((void)generateFixed(source, task, std::nullopt, 4, 1), BadConfig);
    CHECK_THROWS_AS((void)generateFixed(source, task, std::nullopt, 3, 0), BadConfig);
}

TEST_CASE("adaptive generation")
{
    auto const task = test::gridTask("t");
    auto const ok = stub("t", PlanPurpose::Adaptive, { tagged({ 1, 1, 1, 1 }), tagged({ 2, 4 }) });
    CHECK(generateAdaptive(ok, task).depth() == 2);

    auto const garbled = std::string { "<plan 1>\nStep 1: start\n" };
    auto const bad = stub("t", PlanPurpose::Adaptive, { garbled, garbled, garbled, garbled });
    try
    {
        (void)generateAdaptive(bad, task);
        FAIL("expected ParseError");
    }
    catch (ParseError const& e)
    {
        CHECK(e.rawText() == garbled);
    }

    auto const deep = stub("t", PlanPurpose::Adaptive, { tagged({ 1, 1, 1, 1 }) });
    CHECK_THROWS_AS((void)generateAdaptive(deep, task), GenerationExhausted);
}

TEST_CASE("sampling and base generation")
{
    auto const task = test::gridTask("t");
    auto fixture = StubPlanSource::Fixture {};
    fixture["t"][PlanPurpose::Sample] = { tagged({ 1, 2 }), tagged({ 3 }), tagged({ 1, 1 }) };
    fixture["t"][PlanPurpose::Base] = { tagged({ 4 }) };
    auto const source = StubPlanSource { fixture };

    CHECK(samplePlans(source, task, 2, 2, 1.0).plans.size() == 2);
    auto const free = sampleFree(source, task, 3, 1.0);
    CHECK(free.plans.size() == 3);
    CHECK(free.plans[1].depth() == 1);
    CHECK(generateBase(source, task).levels[0].steps.size() == 4);
}

TEST_CASE("stub fixture file round trip")
{
    auto const dir = test::TempDir { "planner" };
    auto fixture = StubPlanSource::Fixture {};
    fixture["a"][PlanPurpose::Fixed] = { tagged({ 1 }), tagged({ 2 }) };
    fixture["b"][PlanPurpose::Adaptive] = { tagged({ 1, 3 }) };
    writeStubFixture(dir / "fixture.jsonl", fixture);
    auto const loaded = StubPlanSource::fromFile(dir / "fixture.jsonl");
    CHECK(loaded.fixture() == fixture);
    CHECK(loaded.fingerprint() == StubPlanSource { fixture }.fingerprint());

    writeTextAtomic(dir / "legacy.jsonl", R"({"task_id":"c","plans":["x"]})" "\n");
    CHECK(StubPlanSource::fromFile(dir / "legacy.jsonl").fixture().at("c").contains(PlanPurpose::Fixed));
}

TEST_CASE("remote planner prompts and retries through the endpoint")
{
    auto replies = std::vector<std::string> { "sorry, no plan", tagged({ 1, 2, 2 }), tagged({ 2, 2, 3 }) };
    auto served = std::size_t { 0 };
    auto server = test::ChatStub { [&](json const&) { return test::ChatStub::Reply { 200, replies[served++ % replies.size()] }; } };
    auto const endpoint = ChatEndpoint { .url = server.url(), .model = "planner", .apiKeyEnv = "HPLAN_UNSET_KEY", .maxRetries = 0, .timeoutSeconds = 5, .backoffSeconds = 0, .maxInFlight = 1 };
    auto const source = RemotePlanSource { { .endpoint = endpoint, .domain = "household", .maxLevels = 3 } };

    auto const task = test::gridTask("t");
    auto const batch = generateFixed(source, task, std::string { "> go to countertop 1" }, 3, 2);
    CHECK(batch.plans.size() == 2);
    CHECK(batch.attempts == 3);

    auto const requests = server.requests();
    REQUIRE(requests.size() == 3);
    auto const content = requests[0]["messages"][0]["content"].get<std::string>();
    CHECK(content.find(task.instruction) != std::string::npos);
    CHECK(content.find("> go to countertop 1") != std::string::npos);
    CHECK(requests[0]["temperature"] == 0.7);

    auto const request = PlanRequest { .purpose = PlanPurpose::Adaptive, .task = task, .trajectoryHint = {}, .levels = 3, .temperature = 0, .attempt = 0 };
    CHECK(source.prompt(request).find("3") != std::string::npos);
    CHECK_THROWS_AS(RemotePlanSource({ .endpoint = endpoint, .domain = "astrology", .maxLevels = 3 }), BadConfig);
}

TEST_CASE("transport failures count as rejected attempts")
{
    auto const endpoint = ChatEndpoint {
        .url = fmt::format("http://127.0.0.1:{}/v1", test::closedPort()), .model = "m", .apiKeyEnv = "HPLAN_UNSET_KEY", .maxRetries = 0, .timeoutSeconds = 1, .backoffSeconds = 0, .maxInFlight = 1
    };
    auto const source = RemotePlanSource { { .endpoint = endpoint, .domain = "generic", .maxLevels = 3 } };
    auto options = PlannerOptions {};
    options.retryBudget = 2;
    try
    {
        (void)generateFixed(source, test::gridTask("t"), std::nullopt, 3, 1, options);
        FAIL("expected GenerationExhausted");
    }
    catch (GenerationExhausted const& e)
    {
        CHECK(e.validCount() == 0);
        CHECK(e.rejections().size() == 3);
    }
}

TEST_CASE("purpose names")
{
    for (auto purpose: { PlanPurpose::Fixed, PlanPurpose::Adaptive, PlanPurpose::Sample, PlanPurpose::Base })
        CHECK(planPurposeFromString(toString(purpose)) == purpose);
    CHECK_THROWS_AS((void)planPurposeFromString("dream"), BadConfig);
}
