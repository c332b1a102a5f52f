// SPDX-License-Identifier: Apache-2.0
#include <hplan/actor.hpp>
#include <hplan/hashing.hpp>
#include <hplan/prompts.hpp>

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <cmath>
#include <random>
#include <regex>

namespace hplan
{

namespace
{

/// Emitted once a failed episode goes off-script. A no-op in both built-in worlds.
constexpr auto kOffScript = "wait";
constexpr auto kNoPlanAction = "look";

constexpr auto kActionVerbs = std::array {
    "go to ", "take ",  "put ",      "open ",    "close ",    "toggle ",   "clean ",      "heat ",    "cool ",
    "use ",   "teleport to ", "pick up ", "pour ", "move ",  "connect ", "disconnect ", "mix ", "focus on ",
    "activate ", "deactivate ", "examine ", "read ", "look at ",
};

std::string_view trim(std::string_view s)
{
    auto const first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    auto const last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> lines(std::string_view text)
{
    auto out = std::vector<std::string_view> {};
    while (!text.empty())
    {
        auto const nl = text.find('\n');
        out.push_back(text.substr(0, nl));
        if (nl == std::string_view::npos)
            break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

std::optional<std::string> verbAction(std::string_view line)
{
    auto const candidate = normalizeAction(line);
    for (auto const* verb: kActionVerbs)
    {
        if (candidate.rfind(verb, 0) == 0)
            return candidate;
    }
    if (candidate == "look around" || candidate == "look" || candidate == "inventory")
        return candidate;
    return std::nullopt;
}

} // namespace

std::string extractAction(std::string_view completion)
{
    static auto const prefix = std::regex { R"(^\s*action\s*:\s*)", std::regex::icase };

    auto const all = lines(completion);
    for (auto it = all.rbegin(); it != all.rend(); ++it)
    {
        auto const line = trim(*it);
        if (line.empty())
            continue;
        auto const stripped = std::string { trim(std::regex_replace(std::string { line }, prefix, "", std::regex_constants::format_first_only)) };
        if (stripped.empty())
            break;
        return stripped;
    }
    throw EmptyCompletion("completion contains no action");
}

std::vector<std::string> planActions(HierarchicalPlan const& plan)
{
    static auto const annotation = std::regex { R"(^\s*(?:[-*]\s*)?(?:possible\s+)?action\s*:\s*(.*\S)\s*$)", std::regex::icase };

    auto actions = std::vector<std::string> {};
    if (plan.levels.empty())
        return actions;
    for (auto const& step: plan.levels.back().steps)
    {
        auto const stepLines = lines(step.text);
        auto annotated = false;
        for (auto const line: stepLines)
        {
            auto match = std::match_results<std::string_view::const_iterator> {};
            if (std::regex_match(line.begin(), line.end(), match, annotation))
            {
                actions.push_back(normalizeAction(std::string_view { &*match[1].first, static_cast<std::size_t>(match[1].length()) }));
                annotated = true;
            }
        }
        if (!annotated && !stepLines.empty())
        {
            if (auto action = verbAction(stepLines.front()))
                actions.push_back(std::move(*action));
        }
    }
    return actions;
}

ScriptedActor::ScriptedActor(ScriptedActorConfig config): _config(config)
{
    if (!(_config.baseSuccess >= 0.0 && _config.baseSuccess <= 1.0))
        throw BadConfig(fmt::format("scripted actor base success {} outside [0, 1]", _config.baseSuccess));
    if (!(_config.granularityDecay >= 0.0) || !std::isfinite(_config.granularityDecay))
        throw BadConfig(fmt::format("scripted actor granularity decay {} must be finite and >= 0", _config.granularityDecay));
}

double ScriptedActor::successProbability(int difficulty, int levels) const
{
    auto const gap = std::max(0, difficulty - levels);
    if (gap == 0)
        return _config.baseSuccess;
    return _config.baseSuccess * std::exp(-_config.granularityDecay * static_cast<double>(gap));
}

std::string ScriptedActor::nextAction(ActorInput const& input) const
{
    auto const step = input.history.size();
    auto action = std::string {};

    if (trim(input.renderedPlan).empty())
    {
        action = kNoPlanAction;
    }
    else
    {
        if (!input.task.difficulty)
            throw BadConfig(fmt::format("scripted actor needs a difficulty label on task {}", input.task.id));

        // Episodes step through one plan many times; keep the last parse per thread.
        thread_local auto cachedText = std::string {};
        thread_local auto cachedTask = std::string {};
        thread_local auto script = std::vector<std::string> {};
        thread_local auto levels = 0;
        if (cachedText != input.renderedPlan || cachedTask != input.task.id)
        {
            auto parsed = ParsedPlan {};
            try
            {
                parsed = parsePlan(input.renderedPlan, input.task.id);
            }
            catch (ParseError const& e)
            {
                throw PlanUnusable(fmt::format("task {}: plan does not parse: {}", input.task.id, e.what()));
            }
            auto actions = planActions(parsed.plan);
            if (actions.empty())
                throw PlanUnusable(fmt::format("task {}: plan names no executable actions", input.task.id));
            // Tag numbers as written, so a LastLevel rendering of a deep plan still counts as deep.
            levels = parsed.report.deepestWrittenLevel();
            script = std::move(actions);
            cachedText = input.renderedPlan;
            cachedTask = input.task.id;
        }

        auto const p = successProbability(*input.task.difficulty, levels);

        auto rng = std::mt19937_64 { deriveSeed(_config.seed, "scripted-actor:" + input.task.id, { static_cast<std::int64_t>(input.episodeSeed) }) };
        auto const succeeds = uniform01(rng) < p;
        auto const failStep = uniformBelow(rng, script.size());

        if (step >= script.size() || (!succeeds && step >= failStep))
            action = kOffScript;
        else
            action = script[step];
    }

    if (_config.reactStyle)
        return fmt::format("Think: step {} of the plan.\nAction: {}", step + 1, action);
    return action;
}

std::string ScriptedActor::fingerprint() const
{
    return fmt::format("scripted-{}",
                       hex64(fnv1a64(fmt::format("q={:.17g};lambda={:.17g};seed={};react={}",
                                                 _config.baseSuccess,
                                                 _config.granularityDecay,
                                                 _config.seed,
                                                 _config.reactStyle))));
}

std::vector<ChatMessage> renderActorPrompt(std::string const& templateId, ActorInput const& input)
{
    auto const planSection = trim(input.renderedPlan).empty()
                                 ? std::string {}
                                 : fmt::format("\nFollow this plan:\n{}\n", trim(input.renderedPlan));
    auto messages = std::vector<ChatMessage> {};
    messages.push_back({ "system", fillTemplate(promptTemplate(templateId), { { "instruction", input.task.instruction }, { "plan_section", planSection } }) });
    messages.push_back({ "user", std::string { input.initialObservation } });
    for (auto const& turn: input.history)
    {
        messages.push_back({ "assistant", turn.action });
        messages.push_back({ "user", turn.observation });
    }
    return messages;
}

RemoteActor::RemoteActor(RemoteActorConfig config): _config(std::move(config)), _client(_config.endpoint)
{
    if (!(_config.temperature >= 0.0))
        throw BadConfig(fmt::format("actor temperature {} must be >= 0", _config.temperature));
    static_cast<void>(promptTemplate(_config.promptTemplate));
}

std::string RemoteActor::nextAction(ActorInput const& input) const
{
    auto const messages = renderActorPrompt(_config.promptTemplate, input);
    return extractAction(_client.complete(messages, _config.temperature));
}

std::string RemoteActor::fingerprint() const
{
    return fmt::format("remote-{}",
                       hex64(fnv1a64(fmt::format("url={};model={};temperature={:.17g};template={}",
                                                 _config.endpoint.url,
                                                 _config.endpoint.model,
                                                 _config.temperature,
                                                 _config.promptTemplate))));
}

} // namespace hplan
