// SPDX-License-Identifier: Apache-2.0
#include <hplan/hashing.hpp>
#include <hplan/synthetic.hpp>

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <random>

namespace hplan
{

namespace
{

constexpr auto kObjects = std::array { "apple", "potato", "egg", "lettuce", "cup", "soapbar", "cloth", "vase", "pencil", "watch", "creditcard", "statue" };
constexpr auto kOpenSurfaces = std::array { "countertop 1", "diningtable 1", "shelf 1", "sidetable 1" };
constexpr auto kClosed = std::array { "drawer 1", "cabinet 1", "cabinet 2" };
constexpr auto kVariants = 5;

template <typename Pool>
std::string pick(std::mt19937_64& rng, Pool const& pool)
{
    return pool[uniformBelow(rng, pool.size())];
}

template <typename Pool>
std::string pickOther(std::mt19937_64& rng, Pool const& pool, std::string const& avoid)
{
    for (;;)
    {
        auto choice = pick(rng, pool);
        if (choice != avoid)
            return choice;
    }
}

std::string strip(std::string_view action, std::string_view verb)
{
    return std::string { action.substr(verb.size()) };
}

/// Splits "a with b", "a from b", "a in/on b".
std::pair<std::string, std::string> around(std::string const& args, std::string_view sep)
{
    auto const pos = args.find(sep);
    return { args.substr(0, pos), args.substr(pos + sep.size()) };
}

std::string phrase(std::string const& action, int variant)
{
    auto const v = static_cast<std::size_t>(variant % kVariants);
    auto starts = [&](std::string_view p) { return action.rfind(p, 0) == 0; };

    if (starts("go to "))
    {
        constexpr auto forms = std::array { "go to the {}", "walk over to the {}", "head to the {}", "make your way to the {}", "move to the {}" };
        return fmt::format(fmt::runtime(forms[v]), strip(action, "go to "));
    }
    if (starts("take "))
    {
        auto const [object, from] = around(strip(action, "take "), " from ");
        constexpr auto forms = std::array { "pick up the {} from the {}", "take the {} from the {}", "grab the {} off the {}", "collect the {} from the {}", "retrieve the {} from the {}" };
        return fmt::format(fmt::runtime(forms[v]), object, from);
    }
    if (starts("put "))
    {
        auto const [object, to] = around(strip(action, "put "), " in/on ");
        constexpr auto forms = std::array { "put the {} in/on the {}", "place the {} in/on the {}", "set the {} down in/on the {}", "leave the {} in/on the {}", "drop the {} off in/on the {}" };
        return fmt::format(fmt::runtime(forms[v]), object, to);
    }
    if (starts("open "))
    {
        constexpr auto forms = std::array { "open the {}", "pull the {} open", "open up the {}", "get the {} open", "swing the {} open" };
        return fmt::format(fmt::runtime(forms[v]), strip(action, "open "));
    }
    if (starts("toggle "))
    {
        constexpr auto forms = std::array { "switch on the {}", "turn on the {}", "flip the {} on", "light the {}", "power on the {}" };
        return fmt::format(fmt::runtime(forms[v]), strip(action, "toggle "));
    }
    for (auto const* verb: { "clean ", "heat ", "cool " })
    {
        if (starts(verb))
        {
            auto const [object, with] = around(strip(action, verb), " with ");
            auto const word = std::string_view { verb }.substr(0, std::string_view { verb }.size() - 1);
            constexpr auto forms = std::array { "{} the {} with the {}", "{} the {} using the {}", "{} the {} at the {}", "use the {2} to {0} the {1}", "{} the {} in the {}" };
            return fmt::format(fmt::runtime(forms[v]), word, object, with);
        }
    }
    return action;
}

std::string sentence(std::vector<std::string> const& actions, std::size_t first, std::size_t last, int variant)
{
    auto text = std::string {};
    for (auto i = first; i < last; ++i)
    {
        if (i > first)
            text += i + 1 == last ? ", then " : ", ";
        text += phrase(actions[i], variant);
    }
    text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    text += ".";
    for (auto extra = variant / kVariants; extra > 0; --extra)
        text += " Double-check before moving on.";
    return text;
}

/// "put apple 1 in/on shelf 1" -> "put apple 1 in/on shelf 2": names a receptacle that does not exist.
std::string corrupt(std::string action)
{
    auto const last = action.find_last_not_of("0123456789");
    auto const number = std::stoi(action.substr(last + 1));
    return action.substr(0, last + 1) + std::to_string(number + 1);
}

std::string instanceName(std::string const& object)
{
    return object + " 1";
}

} // namespace

std::vector<std::string> expertActions(TaskInstance const& task)
{
    auto const type = task.param("type");
    auto const object = instanceName(task.param("object"));
    auto const source = task.param("source");
    auto const target = task.param("target");

    auto actions = std::vector<std::string> { fmt::format("go to {}", source) };
    if (task.param("closed") == "true")
        actions.push_back(fmt::format("open {}", source));
    actions.push_back(fmt::format("take {} from {}", object, source));

    if (type == "look_at_obj_in_light")
    {
        actions.push_back(fmt::format("go to {}", task.param("lamp_at", "desk 1")));
        actions.push_back(fmt::format("toggle {}", task.param("lamp", "desklamp 1")));
        return actions;
    }

    auto const transform = std::map<std::string, std::pair<std::string, std::string>> {
        { "pick_clean_then_place", { "clean", "sinkbasin 1" } },
        { "pick_heat_then_place", { "heat", "microwave 1" } },
        { "pick_cool_then_place", { "cool", "fridge 1" } },
    };
    if (auto const it = transform.find(type); it != transform.end())
    {
        auto const& [verb, appliance] = it->second;
        actions.push_back(fmt::format("go to {}", appliance));
        actions.push_back(fmt::format("{} {} with {}", verb, object, appliance));
    }
    actions.push_back(fmt::format("go to {}", target));
    actions.push_back(fmt::format("put {} in/on {}", object, target));
    return actions;
}

std::string scriptedPlanText(std::vector<std::string> const& actions, int levels, int variant)
{
    if (actions.empty() || levels < 1)
        throw BadConfig("scripted plan needs actions and at least one level");

    auto const total = static_cast<double>(actions.size());
    auto previous = std::size_t { 0 };
    auto text = std::string {};
    for (auto level = 1; level <= levels; ++level)
    {
        auto steps = static_cast<std::size_t>(std::lround(total * level / levels));
        steps = std::clamp(steps, std::max<std::size_t>(1, previous), actions.size());
        if (level == levels)
            steps = actions.size();
        previous = steps;

        text += fmt::format("<plan {}>\n", level);
        for (std::size_t s = 0; s < steps; ++s)
        {
            auto const first = s * actions.size() / steps;
            auto const last = (s + 1) * actions.size() / steps;
            text += fmt::format("Step {}: {}\n", s + 1, sentence(actions, first, last, variant));
            for (auto i = first; i < last; ++i)
                text += fmt::format("  - Action: {}\n", actions[i]);
        }
        text += fmt::format("</plan {}>\n", level);
    }
    return text;
}

SyntheticSuite makeSyntheticSuite(SuiteOptions const& options)
{
    if (options.tasks < 1 || options.maxLevels < 1 || options.plansPerTask < 1)
        throw BadConfig("synthetic suite needs positive task, level and plan counts");

    auto suite = SyntheticSuite {};
    auto const M = options.maxLevels;
    for (auto i = 0; i < options.tasks; ++i)
    {
        auto rng = std::mt19937_64 { deriveSeed(options.seed, "synthetic-task", { i }) };
        auto const d = 1 + i % M;
        auto task = TaskInstance {};
        task.id = fmt::format("syn-{:03d}", i + 1);
        task.split = options.markUnseen && i % 4 == 3 ? Split::Unseen : Split::Seen;
        task.difficulty = d;

        auto const object = pick(rng, kObjects);
        task.params["object"] = object;
        if (d == 1)
        {
            task.params["type"] = "pick_and_place";
            task.params["source"] = pick(rng, kOpenSurfaces);
            task.params["target"] = pickOther(rng, kOpenSurfaces, task.params["source"]);
            task.instruction = fmt::format("put a {} in/on {}.", object, task.params["target"]);
        }
        else if (d == 2 && i % 2 == 0)
        {
            task.params["type"] = "pick_and_place";
            task.params["source"] = pick(rng, kClosed);
            task.params["closed"] = "true";
            task.params["target"] = pick(rng, kOpenSurfaces);
            task.instruction = fmt::format("put a {} in/on {}.", object, task.params["target"]);
        }
        else if (d == 2)
        {
            task.params["type"] = "look_at_obj_in_light";
            task.params["source"] = pick(rng, kOpenSurfaces);
            task.instruction = fmt::format("examine the {} with the desklamp.", object);
        }
        else
        {
            constexpr auto types = std::array { "pick_clean_then_place", "pick_heat_then_place", "pick_cool_then_place" };
            constexpr auto adjectives = std::array { "clean", "hot", "cool" };
            auto const which = uniformBelow(rng, types.size());
            task.params["type"] = types[which];
            task.params["source"] = pick(rng, kOpenSurfaces);
            task.params["target"] = pickOther(rng, kOpenSurfaces, task.params["source"]);
            task.instruction = fmt::format("put a {} {} in/on {}.", adjectives[which], object, task.params["target"]);
        }

        auto const actions = expertActions(task);
        auto expert = std::string {};
        for (auto const& a: actions)
            expert += (expert.empty() ? "" : "\n") + a;
        task.params["expert_trajectory"] = expert;

        auto const other = d % M + 1;
        auto& byPurpose = suite.fixture[task.id];

        auto& fixed = byPurpose[PlanPurpose::Fixed];
        for (auto n = 0; n < options.plansPerTask; ++n)
        {
            fixed.push_back(scriptedPlanText(actions, M, n));
            if (n == 0 && M > 1 && i % 7 == 5)
                fixed.push_back(scriptedPlanText(actions, M - 1, n + 1));
        }

        byPurpose[PlanPurpose::Adaptive] = { scriptedPlanText(actions, d, 0), scriptedPlanText(actions, d, 1), scriptedPlanText(actions, other, 2) };

        auto broken = actions;
        broken.back() = corrupt(broken.back());
        byPurpose[PlanPurpose::Sample] = { scriptedPlanText(actions, d, 1), scriptedPlanText(actions, other, 2), scriptedPlanText(broken, d, 3) };

        byPurpose[PlanPurpose::Base] = { scriptedPlanText(actions, 1, 0) };

        suite.tasks.push_back(std::move(task));
    }
    return suite;
}

} // namespace hplan
