// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chat_stub.hpp"
#include "support.hpp"

#include <hplan/actor.hpp>
#include <hplan/episode.hpp>
#include <hplan/prompts.hpp>

#include <cmath>
#include <cstdlib>

using namespace hplan;

namespace
{

std::vector<std::string> const kSolution = { "go to countertop 1", "take apple 1 from countertop 1", "go to sidetable 1", "put apple 1 in/on sidetable 1" };

/// m-level plan whose deepest level spells out the solution.
HierarchicalPlan solvingPlan(int m)
{
    auto levels = std::vector<std::vector<std::string>> {};
    for (auto l = 1; l < m; ++l)
        levels.push_back({ fmt::format("coarse step {}", l) });
    auto last = std::vector<std::string> {};
    for (auto const& action: kSolution)
        last.push_back(fmt::format("Do it.\n- Action: {}", action));
    levels.push_back(last);
    return makePlan("g", 1, levels);
}

double successRate(ScriptedActor const& actor, TaskInstance const& task, std::string const& rendered, int episodes, std::uint64_t base)
{
    auto successes = 0;
    for (auto i = 0; i < episodes; ++i)
        successes += runEpisode(EnvironmentSpec::gridHouse(), task, actor, rendered, deriveSeed(base, "episode", { i })).reward > 0.5 ? 1 : 0;
    return static_cast<double>(successes) / episodes;
}

} // namespace

TEST_CASE("extractAction")
{
    CHECK(extractAction("open fridge 1") == "open fridge 1");
    CHECK(extractAction("Think: the apple is probably cold.\nAction: open fridge 1") == "open fridge 1");
    CHECK(extractAction("  action :  go to desk 1  \n\n") == "go to desk 1");
    CHECK_THROWS_AS((void)extractAction("   \n\n"), EmptyCompletion);
    CHECK_THROWS_AS((void)extractAction("Action:"), EmptyCompletion);
}

TEST_CASE("planActions reads annotations and verb-led steps")
{
    auto const paint = parsePlan(readText(test::dataDir() / "green_paint_plan.txt")).plan;
    auto const actions = planActions(paint);
    REQUIRE_FALSE(actions.empty());
    CHECK(std::ranges::find(actions, "examine blue paint") != actions.end());

    auto const plain = makePlan("t", 1, { { "Go to fridge 1.", "think hard", "Take apple 1 from fridge 1" } });
    CHECK(planActions(plain) == std::vector<std::string> { "go to fridge 1", "take apple 1 from fridge 1" });
    CHECK(planActions(HierarchicalPlan {}).empty());
}

TEST_CASE("scripted success probability")
{
    auto const actor = ScriptedActor { { .baseSuccess = 0.8, .granularityDecay = std::log(2.0), .seed = 0, .reactStyle = false } };
    CHECK(actor.successProbability(3, 3) == doctest::Approx(0.8));
    CHECK(actor.successProbability(2, 3) == doctest::Approx(0.8));
    CHECK(actor.successProbability(3, 2) == doctest::Approx(0.4));
    CHECK(actor.successProbability(3, 1) == doctest::Approx(0.2));
    CHECK_THROWS_AS(ScriptedActor({ .baseSuccess = 1.5, .granularityDecay = 0.0, .seed = 0, .reactStyle = false }), BadConfig);
    CHECK_THROWS_AS(ScriptedActor({ .baseSuccess = 0.5, .granularityDecay = -1.0, .seed = 0, .reactStyle = false }), BadConfig);
}

TEST_CASE("scripted actor follows an adequate plan")
{
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = std::log(2.0), .seed = 1, .reactStyle = false } };
    auto const task = test::gridTask("g", 2);
    auto const t = runEpisode(EnvironmentSpec::gridHouse(), task, actor, render(solvingPlan(2)), 5);
    CHECK(t.reward == 1.0);
    REQUIRE(t.turns.size() == kSolution.size());
    for (std::size_t i = 0; i < kSolution.size(); ++i)
        CHECK(t.turns[i].action == kSolution[i]);
}

TEST_CASE("scripted Monte Carlo rate matches q exp(-lambda gap)")
{
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = std::log(2.0), .seed = 3, .reactStyle = false } };
    auto const task = test::gridTask("g", 3);
    constexpr auto episodes = 10000;
    for (auto m = 1; m <= 3; ++m)
    {
        auto const expected = actor.successProbability(3, m);
        auto const rate = successRate(actor, task, render(solvingPlan(m)), episodes, 17);
        auto const sigma = std::sqrt(expected * (1 - expected) / episodes);
        CAPTURE(m);
        CHECK(std::abs(rate - expected) <= 3 * sigma + 1e-12);
    }
}

TEST_CASE("last-level rendering keeps the written depth")
{
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 50.0, .seed = 0, .reactStyle = false } };
    auto const task = test::gridTask("g", 3);
    CHECK(successRate(actor, task, render(solvingPlan(3), RenderMode::LastLevel), 50, 1) == 1.0);
}

TEST_CASE("scripted episodes are reproducible and seed dependent")
{
    auto const actor = ScriptedActor { { .baseSuccess = 0.5, .granularityDecay = 0.0, .seed = 9, .reactStyle = false } };
    auto const task = test::gridTask("g", 1);
    auto const plan = render(solvingPlan(1));
    auto rewards = std::vector<double> {};
    for (auto seed = 0; seed < 40; ++seed)
    {
        auto const a = runEpisode(EnvironmentSpec::gridHouse(), task, actor, plan, seed);
        auto const b = runEpisode(EnvironmentSpec::gridHouse(), task, actor, plan, seed);
        CHECK(a.turns == b.turns);
        CHECK(a.reward == b.reward);
        rewards.push_back(a.reward);
    }
    CHECK(std::ranges::count(rewards, 1.0) > 0);
    CHECK(std::ranges::count(rewards, 0.0) > 0);
}

TEST_CASE("react-style output carries reasoning that never reaches the world")
{
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 0.0, .seed = 0, .reactStyle = true } };
    auto const task = test::gridTask("g", 1);
    auto const plan = render(solvingPlan(1));
    auto const raw = actor.nextAction({ .task = task, .initialObservation = "", .history = {}, .renderedPlan = plan, .episodeSeed = 0 });
    CHECK(raw.starts_with("Think:"));
    CHECK(extractAction(raw) == kSolution[0]);
    CHECK(runEpisode(EnvironmentSpec::gridHouse(), task, actor, plan, 0).turns.front().action == kSolution[0]);
}

TEST_CASE("scripted actor without a plan and with unusable plans")
{
    auto const actor = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 0.0, .seed = 0, .reactStyle = false } };
    auto const task = test::gridTask("g", 1);
    auto const t = runEpisode(EnvironmentSpec::gridHouse(6), task, actor, "", 0);
    CHECK(t.reward == 0.0);
    CHECK(t.truncated);
    CHECK(t.turns.size() == 6);

    auto const wordy = render(makePlan("g", 1, { { "ponder the meaning of apples" } }));
    CHECK_THROWS_AS((void)runEpisode(EnvironmentSpec::gridHouse(), task, actor, wordy, 0), EpisodeError);

    auto unlabeled = task;
    unlabeled.difficulty.reset();
    CHECK_THROWS_AS((void)runEpisode(EnvironmentSpec::gridHouse(), unlabeled, actor, render(solvingPlan(1)), 0), EpisodeError);
}

TEST_CASE("fingerprints follow configuration")
{
    auto const a = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 0.5, .seed = 0, .reactStyle = false } };
    auto const b = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 0.5, .seed = 0, .reactStyle = false } };
    auto const c = ScriptedActor { { .baseSuccess = 1.0, .granularityDecay = 0.6, .seed = 0, .reactStyle = false } };
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("actor prompt layout")
{
    auto const task = test::gridTask("g", 1);
    auto const history = std::vector<Turn> { { "look", "You are in the middle of a room." } };
    auto const messages = renderActorPrompt("actor-household-v1",
                                            { .task = task, .initialObservation = "start", .history = history, .renderedPlan = "<plan 1>\nStep 1: x\n</plan 1>", .episodeSeed = 0 });
    REQUIRE(messages.size() == 4);
    CHECK(messages[0].role == "system");
    CHECK(messages[0].content.find(task.instruction) != std::string::npos);
    CHECK(messages[0].content.find("<plan 1>") != std::string::npos);
    CHECK(messages[1] == ChatMessage { "user", "start" });
    CHECK(messages[2] == ChatMessage { "assistant", "look" });
    CHECK(messages[3].role == "user");

    auto const bare = renderActorPrompt("actor-generic-v1", { .task = task, .initialObservation = "start", .history = {}, .renderedPlan = "", .episodeSeed = 0 });
    CHECK(bare[0].content.find("<plan") == std::string::npos);
    CHECK_THROWS_AS((void)renderActorPrompt("actor-nope", { .task = task, .initialObservation = "", .history = {}, .renderedPlan = "", .episodeSeed = 0 }), BadConfig);
}

TEST_CASE("fillTemplate")
{
    CHECK(fillTemplate("a {x} {{b}}", { { "x", "1" } }) == "a 1 {b}");
    CHECK_THROWS_AS((void)fillTemplate("{missing}", {}), BadConfig);
    for (auto const& id: promptTemplateIds())
        CHECK_FALSE(promptTemplate(id).empty());
}

TEST_CASE("remote actor plays through a chat endpoint")
{
    auto step = 0;
    auto stub = test::ChatStub { [&](json const&) {
        auto const action = kSolution[static_cast<std::size_t>(step++) % kSolution.size()];
        return test::ChatStub::Reply { 200, "Think: next.\nAction: " + action };
    } };
    ::setenv("HPLAN_TEST_KEY", "secret", 1);
    auto endpoint = ChatEndpoint { .url = stub.url(), .model = "m", .apiKeyEnv = "HPLAN_TEST_KEY", .maxRetries = 0, .timeoutSeconds = 5, .backoffSeconds = 0, .maxInFlight = 2 };
    auto const actor = RemoteActor { { .endpoint = endpoint, .temperature = 0.0, .promptTemplate = "actor-household-v1" } };
    auto const t = runEpisode(EnvironmentSpec::gridHouse(), test::gridTask("g"), actor, "", 0);
    CHECK(t.reward == 1.0);

    auto const requests = stub.requests();
    REQUIRE(requests.size() == 4);
    CHECK(requests[0]["model"] == "m");
    CHECK(requests[0]["temperature"] == 0.0);
    CHECK(requests[0]["messages"].size() == 2);
    CHECK(requests[3]["messages"].size() == 8);
    CHECK(stub.authorization()[0] == "Bearer secret");
    ::unsetenv("HPLAN_TEST_KEY");
}

TEST_CASE("chat client retries 5xx and gives up on 4xx")
{
    auto calls = 0;
    auto stub = test::ChatStub { [&](json const&) {
        ++calls;
        return calls < 3 ? test::ChatStub::Reply { 503, "busy" } : test::ChatStub::Reply { 200, "ok" };
    } };
    auto endpoint = ChatEndpoint { .url = stub.url(), .model = "m", .apiKeyEnv = "HPLAN_UNSET_KEY", .maxRetries = 3, .timeoutSeconds = 5, .backoffSeconds = 0.01, .maxInFlight = 1 };
    auto const messages = std::vector<ChatMessage> { { "user", "hi" } };
    CHECK(ChatClient { endpoint }.complete(messages, 0.0) == "ok");
    CHECK(calls == 3);
    CHECK(stub.authorization()[0].empty());

    auto rejecting = test::ChatStub { [](json const&) { return test::ChatStub::Reply { 400, "bad" }; } };
    endpoint.url = rejecting.url();
    try
    {
        (void)ChatClient { endpoint }.complete(messages, 0.0);
        FAIL("expected TransportError");
    }
    catch (TransportError const& e)
    {
        CHECK(e.attempts() == 1);
    }

    auto blank = test::ChatStub { [](json const&) { return test::ChatStub::Reply { 200, "  " }; } };
    endpoint.url = blank.url();
    CHECK_THROWS_AS((void)ChatClient { endpoint }.complete(messages, 0.0), EmptyCompletion);
}

TEST_CASE("an unreachable endpoint raises TransportError after every attempt")
{
    auto const endpoint = ChatEndpoint {
        .url = fmt::format("http://127.0.0.1:{}/v1", test::closedPort()), .model = "m", .apiKeyEnv = "HPLAN_UNSET_KEY", .maxRetries = 2, .timeoutSeconds = 1, .backoffSeconds = 0.01, .maxInFlight = 1
    };
    auto const messages = std::vector<ChatMessage> { { "user", "hi" } };
    try
    {
        (void)ChatClient { endpoint }.complete(messages, 0.0);
        FAIL("expected TransportError");
    }
    catch (TransportError const& e)
    {
        CHECK(e.attempts() == 3);
    }

    auto const actor = RemoteActor { { .endpoint = endpoint, .temperature = 0.0, .promptTemplate = "actor-generic-v1" } };
    try
    {
        (void)runEpisode(EnvironmentSpec::gridHouse(), test::gridTask("g"), actor, "", 0);
        FAIL("expected EpisodeError");
    }
    catch (EpisodeError const& e)
    {
        CHECK(e.partial().turns.empty());
    }
}

TEST_CASE("chat request body and completion text")
{
    auto const messages = std::vector<ChatMessage> { { "system", "s" }, { "user", "u" } };
    auto const body = chatRequestBody("m", messages, 0.7);
    CHECK(body["model"] == "m");
    CHECK(body["messages"][1]["content"] == "u");
    CHECK(body["temperature"] == 0.7);
    CHECK(completionText(json::parse(R"({"choices":[{"message":{"content":"hi"}}]})")) == "hi");
    CHECK_THROWS_AS((void)completionText(json::parse(R"({"choices":[]})")), EmptyCompletion);
    CHECK_THROWS_AS(ChatClient(ChatEndpoint { .url = "localhost:1", .model = "m" }), BadConfig);
}
