// SPDX-License-Identifier: Apache-2.0
#include "worlds.hpp"

#include <hplan/hashing.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace hplan
{

std::string_view toString(Split split)
{
    return split == Split::Seen ? "seen" : "unseen";
}

Split splitFromString(std::string_view text)
{
    if (text == "seen")
        return Split::Seen;
    if (text == "unseen")
        return Split::Unseen;
    throw BadConfig(fmt::format("unknown split '{}'", text));
}

std::string TaskInstance::param(std::string const& key, std::string fallback) const
{
    auto const it = params.find(key);
    return it == params.end() ? std::move(fallback) : it->second;
}

json toJson(TaskInstance const& task)
{
    auto record = json { { "id", task.id }, { "instruction", task.instruction }, { "split", toString(task.split) }, { "params", task.params } };
    if (task.difficulty)
        record["difficulty"] = *task.difficulty;
    return record;
}

TaskInstance taskFromJson(json const& record)
{
    try
    {
        auto task = TaskInstance {};
        task.id = record.at("id").get<std::string>();
        task.instruction = record.at("instruction").get<std::string>();
        task.split = splitFromString(record.value("split", std::string { "seen" }));
        if (record.contains("difficulty") && !record["difficulty"].is_null())
            task.difficulty = record["difficulty"].get<int>();
        if (record.contains("params"))
        {
            for (auto const& [key, value]: record["params"].items())
                task.params[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
        if (task.instruction.empty())
            throw BadConfig(fmt::format("task {} has an empty instruction", task.id));
        return task;
    }
    catch (json::exception const& e)
    {
        throw BadConfig(fmt::format("malformed task record: {}", e.what()));
    }
}

std::vector<TaskInstance> readTaskSuite(std::filesystem::path const& path)
{
    auto tasks = std::vector<TaskInstance> {};
    for (auto const& record: readJsonl(path))
        tasks.push_back(taskFromJson(record));
    return tasks;
}

void writeTaskSuite(std::filesystem::path const& path, std::vector<TaskInstance> const& tasks)
{
    auto records = std::vector<json> {};
    for (auto const& task: tasks)
        records.push_back(toJson(task));
    writeJsonlAtomic(path, records);
}

json toJson(Trajectory const& trajectory)
{
    auto events = json::array();
    for (auto const& turn: trajectory.turns)
    {
        events.push_back({ { "type", "action" }, { "text", turn.action } });
        events.push_back({ { "type", "observation" }, { "text", turn.observation } });
    }
    return {
        { "task", toJson(trajectory.task) },
        { "initial_observation", trajectory.initialObservation },
        { "events", std::move(events) },
        { "reward", trajectory.reward },
        { "truncated", trajectory.truncated },
        { "seed", trajectory.seed },
    };
}

Trajectory trajectoryFromJson(json const& record)
{
    auto t = Trajectory {};
    t.task = taskFromJson(record.at("task"));
    t.initialObservation = record.value("initial_observation", std::string {});
    auto const& events = record.at("events");
    for (std::size_t i = 0; i + 1 < events.size(); i += 2)
        t.turns.push_back(Turn { events[i].at("text").get<std::string>(), events[i + 1].at("text").get<std::string>() });
    t.reward = record.at("reward").get<double>();
    t.truncated = record.value("truncated", false);
    t.seed = record.value("seed", std::uint64_t { 0 });
    return t;
}

std::string_view toString(EnvKind kind)
{
    switch (kind)
    {
        case EnvKind::GridHouse: return "gridhouse";
        case EnvKind::SubgoalLab: return "subgoallab";
        case EnvKind::External: return "external";
    }
    return "gridhouse";
}

EnvKind envKindFromString(std::string_view text)
{
    if (text == "gridhouse")
        return EnvKind::GridHouse;
    if (text == "subgoallab")
        return EnvKind::SubgoalLab;
    if (text == "external")
        return EnvKind::External;
    throw BadConfig(fmt::format("unknown environment kind '{}'", text));
}

std::string_view toString(RewardKind kind)
{
    return kind == RewardKind::Binary ? "binary" : "dense";
}

EnvironmentSpec EnvironmentSpec::gridHouse(int maxSteps)
{
    return EnvironmentSpec { .kind = EnvKind::GridHouse, .maxSteps = maxSteps, .rewardKind = RewardKind::Binary, .config = {} };
}

EnvironmentSpec EnvironmentSpec::subgoalLab(int maxSteps)
{
    return EnvironmentSpec { .kind = EnvKind::SubgoalLab, .maxSteps = maxSteps, .rewardKind = RewardKind::Dense, .config = {} };
}

EnvironmentSpec EnvironmentSpec::external(std::string command, RewardKind reward, int maxSteps)
{
    return EnvironmentSpec {
        .kind = EnvKind::External,
        .maxSteps = maxSteps,
        .rewardKind = reward,
        .config = { { "command", std::move(command) } },
    };
}

std::string EnvironmentSpec::fingerprint() const
{
    auto canonical = fmt::format("{}|H={}|{}", toString(kind), maxSteps, toString(rewardKind));
    for (auto const& [key, value]: config)
        canonical += fmt::format("|{}={}", key, value);
    return hex64(fnv1a64(canonical));
}

std::string normalizeAction(std::string_view action)
{
    auto out = std::string {};
    out.reserve(action.size());
    auto pendingSpace = false;
    for (unsigned char c: action)
    {
        if (std::isspace(c))
        {
            pendingSpace = !out.empty();
            continue;
        }
        if (pendingSpace)
            out += ' ';
        pendingSpace = false;
        out += static_cast<char>(std::tolower(c));
    }
    while (!out.empty() && (out.back() == '.' || out.back() == ' '))
        out.pop_back();
    return out;
}

std::unique_ptr<Session> reset(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed)
{
    if (spec.maxSteps < 1)
        throw BadConfig(fmt::format("max_steps must be >= 1, got {}", spec.maxSteps));

    switch (spec.kind)
    {
        case EnvKind::GridHouse: return detail::makeGridHouse(spec, task, seed);
        case EnvKind::SubgoalLab: return detail::makeSubgoalLab(spec, task, seed);
        case EnvKind::External: return detail::makeExternal(spec, task, seed);
    }
    throw BadConfig("unknown environment kind");
}

namespace detail
{

WorldSession::WorldSession(int maxSteps, RewardKind rewardKind): _maxSteps(maxSteps), _rewardKind(rewardKind)
{
}

StepOutcome WorldSession::step(std::string_view action)
{
    if (_terminated)
        throw SessionTerminated(fmt::format("step after episode end (after {} steps)", _steps));

    ++_steps;
    auto outcome = StepOutcome {};
    outcome.observation = Observation { apply(normalizeAction(action)), _steps };

    auto const goal = goalReached();
    if (goal || _steps >= _maxSteps)
    {
        _terminated = true;
        outcome.done = true;
        outcome.truncated = !goal;
        outcome.reward = _rewardKind == RewardKind::Binary ? (goal ? 1.0 : 0.0) : progress();
    }
    return outcome;
}

std::vector<std::string> splitList(std::string const& text, char separator)
{
    auto out = std::vector<std::string> {};
    auto start = std::size_t { 0 };
    while (start <= text.size())
    {
        auto end = text.find(separator, start);
        if (end == std::string::npos)
            end = text.size();
        auto item = text.substr(start, end - start);
        auto const b = item.find_first_not_of(' ');
        auto const e = item.find_last_not_of(' ');
        if (b != std::string::npos)
            out.push_back(item.substr(b, e - b + 1));
        start = end + 1;
    }
    return out;
}

} // namespace detail

} // namespace hplan
