// SPDX-License-Identifier: Apache-2.0
#include <hplan/errors.hpp>
#include <hplan/prompts.hpp>

#include <fmt/format.h>

#include <array>
#include <utility>

namespace hplan
{

namespace
{

constexpr auto kPlanFormat = R"(<plan 1>
Step 1: ...
Step 2: ...
</plan 1>
...
<plan N>
Step 1: ...
Step 2: ...
</plan N>)";

constexpr auto kHouseholdActions = R"(go to RECEPTACLE
take OBJECT from RECEPTACLE
put OBJECT in/on RECEPTACLE
open RECEPTACLE
close RECEPTACLE
toggle OBJECT RECEPTACLE
clean OBJECT with RECEPTACLE
heat OBJECT with RECEPTACLE
cool OBJECT with RECEPTACLE)";

constexpr auto kScienceActions = R"(teleport to ROOM
look around
pick up OBJ
open OBJ / close OBJ
activate OBJ / deactivate OBJ
connect OBJ to OBJ / disconnect OBJ
move OBJ to OBJ
pour OBJ into OBJ
mix OBJ
use OBJ [on OBJ]
focus on OBJ
examine OBJ
wait / wait1)";

constexpr auto kActorGeneric = R"(You act in a text environment. Each turn you receive an observation and reply with exactly one action.
Put the action on the last line of your reply, optionally prefixed with "Action:".

Task: {instruction}
{plan_section})";

constexpr auto kActorHousehold = R"(You act in a household text environment. Each turn you receive an observation and reply with exactly one action.
Valid action templates:
{actions}
Put the action on the last line of your reply, optionally prefixed with "Action:".

Task: {instruction}
{plan_section})";

constexpr auto kActorScience = R"(You act in a text-based science laboratory spread over several rooms. Each turn you receive an observation and reply with exactly one action.
Valid action templates:
{actions}
Put the action on the last line of your reply, optionally prefixed with "Action:".

Task: {instruction}
{plan_section})";

constexpr auto kPlanFixed = R"(Write a hierarchical plan with exactly {levels} levels for the task below.
Level 1 is a short overview. Each following level restates the whole plan in finer detail and has at least as many steps as the level before it.
{domain_notes}
<task>
{instruction}
</task>

A successful action sequence for this task, for reference:
<trajectory>
{trajectory}
</trajectory>

Use this format:
{format}

Example:
{example_plan}

Your plan:)";

constexpr auto kPlanAdaptive = R"(Write a hierarchical plan for the task below. Choose the number of levels from how hard the task is:
1 level for a simple task, 2 levels for a moderate one, up to {max_levels} levels for a hard one.
Level 1 is a short overview. Each following level restates the whole plan in finer detail and has at least as many steps as the level before it.
{domain_notes}
<task>
{instruction}
</task>

Use this format, where N is the number of levels you chose:
{format}

Your plan:)";

constexpr auto kPlanSample = R"(Write a hierarchical plan with exactly {levels} levels for the task below.
Level 1 is a short overview. Each following level restates the whole plan in finer detail and has at least as many steps as the level before it.
{domain_notes}
<task>
{instruction}
</task>

Use this format:
{format}

Your plan:)";

constexpr auto kPlanBase = R"(Write a step-by-step plan for the task below.
{domain_notes}
<task>
{instruction}
</task>

Use this format:
<plan 1>
Step 1: ...
Step 2: ...
</plan 1>

Your plan:)";

constexpr auto kHouseholdNotes = R"(The deepest level may name concrete actions using these templates:
)";

constexpr auto kScienceNotes = R"(The laboratory has these rooms: art studio, bathroom, bedroom, foundry, greenhouse, hallway, kitchen, living room, outside, workshop.
The deepest level may name concrete actions using these templates:
)";

constexpr auto kExamplePlan = R"(<plan 1>
Step 1: Get the mug.
Step 2: Put it in the cabinet.
</plan 1>
<plan 2>
Step 1: Find the mug on the countertop.
Step 2: Pick up the mug.
Step 3: Put the mug in the cabinet.
</plan 2>)";

std::string withActions(std::string_view notes, std::string_view actions)
{
    return fmt::format("{}{}\n", notes, actions);
}

std::map<std::string, std::string, std::less<>> const& registry()
{
    static auto const templates = [] {
        auto t = std::map<std::string, std::string, std::less<>> {};
        auto const household = withActions(kHouseholdNotes, kHouseholdActions);
        auto const science = withActions(kScienceNotes, kScienceActions);
        auto const domain = std::array<std::pair<std::string, std::string>, 3> { {
            { "generic", "" },
            { "household", household },
            { "science", science },
        } };

        t["actor-generic-v1"] = kActorGeneric;
        t["actor-household-v1"] = fillTemplate(kActorHousehold,
                                               { { "actions", kHouseholdActions },
                                                 { "instruction", "{instruction}" },
                                                 { "plan_section", "{plan_section}" } });
        t["actor-science-v1"] = fillTemplate(kActorScience,
                                             { { "actions", kScienceActions },
                                               { "instruction", "{instruction}" },
                                               { "plan_section", "{plan_section}" } });

        for (auto const& [name, notes]: domain)
        {
            auto const keep = std::map<std::string, std::string> {
                { "domain_notes", notes },
                { "format", kPlanFormat },
                { "example_plan", kExamplePlan },
                { "instruction", "{instruction}" },
                { "trajectory", "{trajectory}" },
                { "levels", "{levels}" },
                { "max_levels", "{max_levels}" },
            };
            t[fmt::format("plan-fixed-{}-v1", name)] = fillTemplate(kPlanFixed, keep);
            t[fmt::format("plan-adaptive-{}-v1", name)] = fillTemplate(kPlanAdaptive, keep);
            t[fmt::format("plan-sample-{}-v1", name)] = fillTemplate(kPlanSample, keep);
            t[fmt::format("plan-base-{}-v1", name)] = fillTemplate(kPlanBase, keep);
        }
        return t;
    }();
    return templates;
}

} // namespace

std::string_view promptTemplate(std::string_view id)
{
    auto const& t = registry();
    auto const it = t.find(id);
    if (it == t.end())
        throw BadConfig(fmt::format("unknown prompt template '{}'", id));
    return it->second;
}

std::vector<std::string> promptTemplateIds()
{
    auto ids = std::vector<std::string> {};
    for (auto const& [id, _]: registry())
        ids.push_back(id);
    return ids;
}

std::string fillTemplate(std::string_view tmpl, std::map<std::string, std::string> const& vars)
{
    auto out = std::string {};
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i)
    {
        auto const c = tmpl[i];
        if ((c == '{' || c == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == c)
        {
            out += c;
            ++i;
            continue;
        }
        if (c != '{')
        {
            out += c;
            continue;
        }
        auto const close = tmpl.find('}', i);
        if (close == std::string_view::npos)
            throw BadConfig("unterminated placeholder in prompt template");
        auto const name = std::string { tmpl.substr(i + 1, close - i - 1) };
        auto const it = vars.find(name);
        if (it == vars.end())
            throw BadConfig(fmt::format("prompt template placeholder '{{{}}}' has no value", name));
        out += it->second;
        i = close;
    }
    return out;
}

} // namespace hplan
