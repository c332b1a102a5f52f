// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <hplan/env.hpp>

using namespace hplan;

namespace
{

std::vector<StepOutcome> play(Session& session, std::vector<std::string> const& actions)
{
    auto out = std::vector<StepOutcome> {};
    for (auto const& action: actions)
        out.push_back(session.step(action));
    return out;
}

TaskInstance labTask()
{
    auto task = TaskInstance {};
    task.id = "lab-1";
    task.instruction = "make green paint.";
    task.params = {
        { "rooms", "hallway,art studio" },
        { "objects", "art studio:blue paint,yellow paint,cup" },
        { "subgoals", "teleport to art studio|pour blue paint into cup|pour yellow paint into cup|mix cup=>green paint" },
    };
    return task;
}

std::string const kPickPlace[] = { "go to countertop 1", "take apple 1 from countertop 1", "go to sidetable 1", "put apple 1 in/on sidetable 1" };

} // namespace

TEST_CASE("normalizeAction")
{
    CHECK(normalizeAction("  Go   To  Fridge 1. ") == "go to fridge 1");
    CHECK(normalizeAction("look") == "look");
    CHECK(normalizeAction("") == "");
}

TEST_CASE("gridhouse solves pick and place")
{
    auto const task = test::gridTask("g1");
    auto session = reset(EnvironmentSpec::gridHouse(), task, 7);
    CHECK(session->initialObservation().text.starts_with("You are in the middle of a room. Looking quickly around you, you see a cabinet 1, "));
    CHECK(session->initialObservation().text.ends_with("\nYour task is to: put an apple in/on sidetable 1."));

    auto const outcomes = play(*session, { std::begin(kPickPlace), std::end(kPickPlace) });
    CHECK(outcomes[0].observation.text.starts_with("You arrive at countertop 1. On the countertop 1, you see "));
    CHECK(outcomes[0].observation.text.find("a apple 1") != std::string::npos);
    CHECK(outcomes[1].observation.text == "You pick up the apple 1 from the countertop 1.");
    CHECK(outcomes[3].observation.text == "You put the apple 1 in/on the sidetable 1.");
    for (std::size_t i = 0; i < 3; ++i)
    {
        CHECK_FALSE(outcomes[i].done);
        CHECK_FALSE(outcomes[i].reward.has_value());
        CHECK(outcomes[i].observation.stepIndex == static_cast<int>(i) + 1);
    }
    CHECK(outcomes[3].done);
    CHECK(outcomes[3].reward == 1.0);
    CHECK_FALSE(outcomes[3].truncated);
    CHECK(session->terminated());
    CHECK(session->stepsTaken() == 4);
    CHECK_THROWS_AS(session->step("look"), SessionTerminated);
}

TEST_CASE("gridhouse openable receptacles and invalid actions")
{
    auto task = test::gridTask("g2");
    task.params["source"] = "fridge 1";
    auto session = reset(EnvironmentSpec::gridHouse(), task, 1);
    CHECK(session->step("go to fridge 1").observation.text == "You arrive at fridge 1. The fridge 1 is closed.");
    CHECK(session->step("take apple 1 from fridge 1").observation.text == "Nothing happens.");
    CHECK(session->step("open fridge 1").observation.text.starts_with("You open the fridge 1. The fridge 1 is open. In it, you see "));
    CHECK(session->step("take apple 1 from fridge 1").observation.text == "You pick up the apple 1 from the fridge 1.");
    CHECK(session->step("fly to the moon").observation.text == "Nothing happens.");
    CHECK(session->step("inventory").observation.text == "You are carrying: a apple 1.");
}

TEST_CASE("gridhouse transformation goals")
{
    auto task = test::gridTask("g3");
    task.params["type"] = "pick_heat_then_place";
    auto session = reset(EnvironmentSpec::gridHouse(), task, 2);
    auto const outcomes = play(*session,
                               { "go to countertop 1",
                                 "take apple 1 from countertop 1",
                                 "go to sidetable 1",
                                 "put apple 1 in/on sidetable 1",
                                 "take apple 1 from sidetable 1",
                                 "go to microwave 1",
                                 "heat apple 1 with microwave 1",
                                 "go to sidetable 1",
                                 "put apple 1 in/on sidetable 1" });
    CHECK_FALSE(outcomes[3].done);
    CHECK(outcomes[6].observation.text == "You heat the apple 1 using the microwave 1.");
    CHECK(outcomes.back().done);
    CHECK(outcomes.back().reward == 1.0);
}

TEST_CASE("gridhouse look in light")
{
    auto task = test::gridTask("g4");
    task.params = { { "type", "look_at_obj_in_light" }, { "object", "book" }, { "source", "shelf 1" } };
    auto session = reset(EnvironmentSpec::gridHouse(), task, 3);
    auto const outcomes = play(*session, { "go to shelf 1", "take book 1 from shelf 1", "go to desk 1", "use desklamp 1" });
    CHECK(outcomes.back().observation.text == "You turn on the desklamp 1.");
    CHECK(outcomes.back().reward == 1.0);
}

TEST_CASE("gridhouse rejects tasks that do not fit")
{
    auto task = test::gridTask("bad");
    task.params["type"] = "juggle";
    CHECK_THROWS_AS((void)reset(EnvironmentSpec::gridHouse(), task, 0), UnknownTask);
    task = test::gridTask("bad");
    task.params["target"] = "garage 9";
    CHECK_THROWS_AS((void)reset(EnvironmentSpec::gridHouse(), task, 0), UnknownTask);
    CHECK_THROWS_AS((void)reset(EnvironmentSpec::gridHouse(0), test::gridTask("x"), 0), BadConfig);
}

TEST_CASE("identical seeds replay identically")
{
    auto const task = test::gridTask("g5");
    auto const script = std::vector<std::string> { "go to countertop 1", "go to drawer 1", "open drawer 1", "go to shelf 1", "look" };
    auto a = reset(EnvironmentSpec::gridHouse(), task, 42);
    auto b = reset(EnvironmentSpec::gridHouse(), task, 42);
    CHECK(a->initialObservation().text == b->initialObservation().text);
    auto const ra = play(*a, script);
    auto const rb = play(*b, script);
    for (std::size_t i = 0; i < script.size(); ++i)
        CHECK(ra[i].observation.text == rb[i].observation.text);

    auto differs = false;
    for (std::uint64_t seed = 0; seed < 20 && !differs; ++seed)
    {
        auto c = reset(EnvironmentSpec::gridHouse(), task, seed);
        auto const rc = play(*c, script);
        for (std::size_t i = 0; i < script.size(); ++i)
            differs = differs || rc[i].observation.text != ra[i].observation.text;
    }
    CHECK(differs);
}

TEST_CASE("step cap truncates with zero binary reward")
{
    auto session = reset(EnvironmentSpec::gridHouse(3), test::gridTask("g6"), 0);
    CHECK_FALSE(session->step("look").done);
    CHECK_FALSE(session->step("look").done);
    auto const last = session->step("look");
    CHECK(last.done);
    CHECK(last.truncated);
    CHECK(last.reward == 0.0);
}

TEST_CASE("subgoallab transcript")
{
    auto session = reset(EnvironmentSpec::subgoalLab(), labTask(), 0);
    CHECK(session->initialObservation().text == "This room is called the hallway. In it, you see: nothing of interest.\nYour task is to make green paint.");
    auto const outcomes = play(*session,
                               { "teleport to art studio",
                                 "look around",
                                 "pour yellow paint into cup",
                                 "pour blue paint into cup",
                                 "pour yellow paint into cup",
                                 "dance",
                                 "mix cup" });
    CHECK(outcomes[0].observation.text == "You teleport to the art studio.");
    CHECK(outcomes[1].observation.text == "This room is called the art studio. In it, you see: a blue paint, a yellow paint, a cup.");
    CHECK(outcomes[5].observation.text == "No known action matches that input.");
    CHECK(outcomes[6].observation.text == "You mix the contents of the cup. This produces green paint.");
    CHECK(outcomes[6].done);
    CHECK(outcomes[6].reward == 1.0);
}

TEST_CASE("subgoallab dense reward is the completed fraction")
{
    auto spec = EnvironmentSpec::subgoalLab(4);
    spec.rewardKind = RewardKind::Dense;
    auto session = reset(spec, labTask(), 0);
    auto const outcomes = play(*session, { "teleport to art studio", "pour blue paint into cup", "look around", "wait" });
    CHECK(outcomes.back().done);
    CHECK(outcomes.back().truncated);
    CHECK(outcomes.back().reward == doctest::Approx(0.5));

    spec.rewardKind = RewardKind::Binary;
    session = reset(spec, labTask(), 0);
    CHECK(play(*session, { "teleport to art studio", "pour blue paint into cup", "look around", "wait" }).back().reward == 0.0);
}

TEST_CASE("subgoallab order matters")
{
    auto session = reset(EnvironmentSpec::subgoalLab(), labTask(), 0);
    auto const outcomes = play(*session, { "teleport to art studio", "mix cup", "pour blue paint into cup", "pour yellow paint into cup", "mix cup" });
    CHECK(outcomes[1].observation.text == "You mix the contents of the cup.");
    CHECK(outcomes.back().done);
}

TEST_CASE("task suite round trip")
{
    auto const dir = test::TempDir { "env" };
    auto a = test::gridTask("a", 2);
    auto b = labTask();
    b.split = Split::Unseen;
    writeTaskSuite(dir / "tasks.jsonl", { a, b });
    auto const back = readTaskSuite(dir / "tasks.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].difficulty == 2);
    CHECK(back[0].params == a.params);
    CHECK(back[1].split == Split::Unseen);
    CHECK_FALSE(back[1].difficulty.has_value());
}

TEST_CASE("trajectory json round trip")
{
    auto t = Trajectory {};
    t.task = test::gridTask("t");
    t.initialObservation = "start";
    t.turns = { { "look", "You are in the middle of a room." } };
    t.reward = 1.0;
    t.seed = 99;
    auto const back = trajectoryFromJson(toJson(t));
    CHECK(back.turns == t.turns);
    CHECK(back.reward == 1.0);
    CHECK(back.seed == 99);
    CHECK(back.task.id == "t");
}

TEST_CASE("external engine matches the built-in world")
{
    auto const spec = EnvironmentSpec::external(fmt::format("'{}' serve-env --world gridhouse", HPLAN_CLI), RewardKind::Binary, 10);
    auto const task = test::gridTask("ext");
    auto remote = reset(spec, task, 5);
    auto local = reset(EnvironmentSpec::gridHouse(10), task, 5);
    CHECK(remote->initialObservation().text == local->initialObservation().text);
    for (auto const& action: kPickPlace)
    {
        auto const r = remote->step(action);
        auto const l = local->step(action);
        CHECK(r.observation.text == l.observation.text);
        CHECK(r.done == l.done);
        CHECK(r.reward == l.reward);
    }
    CHECK(remote->terminated());
}

TEST_CASE("external engine failures surface")
{
    auto const spec = EnvironmentSpec::external("exit 3", RewardKind::Binary);
    CHECK_THROWS_AS((void)reset(spec, test::gridTask("x"), 0), Error);
    CHECK_THROWS_AS((void)reset(EnvironmentSpec::external("", RewardKind::Binary), test::gridTask("x"), 0), BadConfig);
}
