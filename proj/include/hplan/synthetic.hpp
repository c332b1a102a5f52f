// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/env.hpp>
#include <hplan/planner.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hplan
{

/// Task suite for the GridHouse world whose difficulty labels are built into the task types:
/// 1 = move an object between open surfaces; 2 = fetch from a closed receptacle, or examine an
/// object under the lamp; 3 = clean, heat or cool the object before placing it.
struct SuiteOptions
{
    int tasks = 30;
    int maxLevels = 3;
    /// Plans per task in the "fixed" fixture.
    int plansPerTask = 5;
    std::uint64_t seed = 0;
    /// Every task whose 0-based index is congruent to 3 mod 4 is marked unseen.
    bool markUnseen = true;
};

struct SyntheticSuite
{
    std::vector<TaskInstance> tasks;
    StubPlanSource::Fixture fixture;
};

/// Optimal action sequence for a difficulty-labelled GridHouse task.
[[nodiscard]] std::vector<std::string> expertActions(TaskInstance const& task);

/// Tagged plan text whose level i splits `actions` into about |actions| * i / levels steps.
/// Every step carries its actions as "- Action:" lines; `variant` changes only the prose.
[[nodiscard]] std::string scriptedPlanText(std::vector<std::string> const& actions, int levels, int variant);

/// Tasks with difficulties cycling 1..maxLevels, plus a stub fixture holding for each task:
/// fixed: plansPerTask maxLevels-level plans (some tasks also get one malformed entry to retry past);
/// adaptive: a plan with exactly d levels first;
/// sample: [d levels, a different level count, d levels with one wrong action];
/// base: one single-level plan.
[[nodiscard]] SyntheticSuite makeSyntheticSuite(SuiteOptions const& options = {});

} // namespace hplan
