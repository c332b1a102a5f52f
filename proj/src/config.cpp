// SPDX-License-Identifier: Apache-2.0
#include <hplan/pipeline.hpp>

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

namespace hplan
{

namespace
{

std::string trim(std::string_view s)
{
    auto const first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    auto const last = s.find_last_not_of(" \t\r");
    return std::string { s.substr(first, last - first + 1) };
}

template <typename T>
T number(std::string const& key, std::string const& value)
{
    auto out = T {};
    auto const* end = value.data() + value.size();
    auto const [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc {} || ptr != end)
        throw BadConfig(fmt::format("{}: '{}' is not a valid number", key, value));
    return out;
}

bool flag(std::string const& key, std::string const& value)
{
    if (value == "true" || value == "1" || value == "yes" || value == "on")
        return true;
    if (value == "false" || value == "0" || value == "no" || value == "off")
        return false;
    throw BadConfig(fmt::format("{}: '{}' is not a boolean", key, value));
}

std::string boolText(bool value)
{
    return value ? "true" : "false";
}

std::string realText(double value)
{
    return fmt::format("{}", value);
}

std::filesystem::path resolve(PipelineConfig const& config, std::string const& value)
{
    auto path = std::filesystem::path { value };
    if (path.is_relative() && !config.baseDir.empty() && !value.empty())
        return config.baseDir / path;
    return path;
}

struct Field
{
    std::function<void(PipelineConfig&, std::string const&, std::string const&)> set;
    std::function<std::string(PipelineConfig const&)> get;
};

template <typename T>
Field intField(T PipelineConfig::*member)
{
    return {
        [member](PipelineConfig& c, std::string const& k, std::string const& v) { c.*member = number<T>(k, v); },
        [member](PipelineConfig const& c) { return std::to_string(c.*member); },
    };
}

Field realField(double PipelineConfig::*member)
{
    return {
        [member](PipelineConfig& c, std::string const& k, std::string const& v) { c.*member = number<double>(k, v); },
        [member](PipelineConfig const& c) { return realText(c.*member); },
    };
}

std::map<std::string, Field> const& fields()
{
    static auto const table = std::map<std::string, Field> {
        { "env.kind",
          { [](auto& c, auto const&, auto const& v) { c.env.kind = envKindFromString(v); },
            [](auto const& c) { return std::string { toString(c.env.kind) }; } } },
        { "env.max_steps",
          { [](auto& c, auto const& k, auto const& v) { c.env.maxSteps = number<int>(k, v); },
            [](auto const& c) { return std::to_string(c.env.maxSteps); } } },
        { "env.reward",
          { [](auto& c, auto const& k, auto const& v) {
               if (v != "binary" && v != "dense")
                   throw BadConfig(fmt::format("{}: expected binary or dense, got '{}'", k, v));
               c.env.rewardKind = v == "dense" ? RewardKind::Dense : RewardKind::Binary;
           },
            [](auto const& c) { return std::string { toString(c.env.rewardKind) }; } } },
        { "env.command",
          { [](auto& c, auto const&, auto const& v) { c.env.config["command"] = v; },
            [](auto const& c) { return c.env.config.contains("command") ? c.env.config.at("command") : std::string {}; } } },
        { "suite",
          { [](auto& c, auto const&, auto const& v) { c.suite = resolve(c, v); },
            [](auto const& c) { return c.suite.string(); } } },

        { "actor.kind",
          { [](auto& c, auto const& k, auto const& v) {
               if (v != "scripted" && v != "remote")
                   throw BadConfig(fmt::format("{}: expected scripted or remote, got '{}'", k, v));
               c.actorKind = v == "remote" ? ActorKind::Remote : ActorKind::Scripted;
           },
            [](auto const& c) { return std::string { c.actorKind == ActorKind::Remote ? "remote" : "scripted" }; } } },
        { "actor.q",
          { [](auto& c, auto const& k, auto const& v) {
               c.scripted.baseSuccess = number<double>(k, v);
               if (c.scripted.baseSuccess < 0.0 || c.scripted.baseSuccess > 1.0)
                   throw BadConfig(fmt::format("{}: must lie in [0, 1], got {}", k, v));
           },
            [](auto const& c) { return realText(c.scripted.baseSuccess); } } },
        { "actor.lambda",
          { [](auto& c, auto const& k, auto const& v) { c.scripted.granularityDecay = v == "ln2" ? std::log(2.0) : number<double>(k, v); },
            [](auto const& c) { return realText(c.scripted.granularityDecay); } } },
        { "actor.seed",
          { [](auto& c, auto const& k, auto const& v) { c.scripted.seed = number<std::uint64_t>(k, v); },
            [](auto const& c) { return std::to_string(c.scripted.seed); } } },
        { "actor.react",
          { [](auto& c, auto const& k, auto const& v) { c.scripted.reactStyle = flag(k, v); },
            [](auto const& c) { return boolText(c.scripted.reactStyle); } } },
        { "actor.url",
          { [](auto& c, auto const&, auto const& v) { c.remoteActor.endpoint.url = v; },
            [](auto const& c) { return c.remoteActor.endpoint.url; } } },
        { "actor.model",
          { [](auto& c, auto const&, auto const& v) { c.remoteActor.endpoint.model = v; },
            [](auto const& c) { return c.remoteActor.endpoint.model; } } },
        { "actor.api_key_env",
          { [](auto& c, auto const&, auto const& v) { c.remoteActor.endpoint.apiKeyEnv = v; },
            [](auto const& c) { return c.remoteActor.endpoint.apiKeyEnv; } } },
        { "actor.temperature",
          { [](auto& c, auto const& k, auto const& v) { c.remoteActor.temperature = number<double>(k, v); },
            [](auto const& c) { return realText(c.remoteActor.temperature); } } },
        { "actor.template",
          { [](auto& c, auto const&, auto const& v) { c.remoteActor.promptTemplate = v; },
            [](auto const& c) { return c.remoteActor.promptTemplate; } } },
        { "actor.max_retries",
          { [](auto& c, auto const& k, auto const& v) { c.remoteActor.endpoint.maxRetries = number<int>(k, v); },
            [](auto const& c) { return std::to_string(c.remoteActor.endpoint.maxRetries); } } },
        { "actor.timeout",
          { [](auto& c, auto const& k, auto const& v) { c.remoteActor.endpoint.timeoutSeconds = number<double>(k, v); },
            [](auto const& c) { return realText(c.remoteActor.endpoint.timeoutSeconds); } } },
        { "actor.max_in_flight",
          { [](auto& c, auto const& k, auto const& v) { c.remoteActor.endpoint.maxInFlight = number<int>(k, v); },
            [](auto const& c) { return std::to_string(c.remoteActor.endpoint.maxInFlight); } } },

        { "planner.kind",
          { [](auto& c, auto const& k, auto const& v) {
               if (v != "stub" && v != "remote")
                   throw BadConfig(fmt::format("{}: expected stub or remote, got '{}'", k, v));
               c.plannerKind = v == "remote" ? PlannerKind::Remote : PlannerKind::Stub;
           },
            [](auto const& c) { return std::string { c.plannerKind == PlannerKind::Remote ? "remote" : "stub" }; } } },
        { "planner.fixture",
          { [](auto& c, auto const&, auto const& v) { c.plannerFixture = resolve(c, v); },
            [](auto const& c) { return c.plannerFixture.string(); } } },
        { "planner.url",
          { [](auto& c, auto const&, auto const& v) { c.remotePlanner.endpoint.url = v; },
            [](auto const& c) { return c.remotePlanner.endpoint.url; } } },
        { "planner.model",
          { [](auto& c, auto const&, auto const& v) { c.remotePlanner.endpoint.model = v; },
            [](auto const& c) { return c.remotePlanner.endpoint.model; } } },
        { "planner.api_key_env",
          { [](auto& c, auto const&, auto const& v) { c.remotePlanner.endpoint.apiKeyEnv = v; },
            [](auto const& c) { return c.remotePlanner.endpoint.apiKeyEnv; } } },
        { "planner.domain",
          { [](auto& c, auto const&, auto const& v) { c.remotePlanner.domain = v; },
            [](auto const& c) { return c.remotePlanner.domain; } } },
        { "planner.max_retries",
          { [](auto& c, auto const& k, auto const& v) { c.remotePlanner.endpoint.maxRetries = number<int>(k, v); },
            [](auto const& c) { return std::to_string(c.remotePlanner.endpoint.maxRetries); } } },
        { "planner.timeout",
          { [](auto& c, auto const& k, auto const& v) { c.remotePlanner.endpoint.timeoutSeconds = number<double>(k, v); },
            [](auto const& c) { return realText(c.remotePlanner.endpoint.timeoutSeconds); } } },
        { "planner.max_in_flight",
          { [](auto& c, auto const& k, auto const& v) { c.remotePlanner.endpoint.maxInFlight = number<int>(k, v); },
            [](auto const& c) { return std::to_string(c.remotePlanner.endpoint.maxInFlight); } } },
        { "planner.temperature",
          { [](auto& c, auto const& k, auto const& v) { c.planner.temperature = number<double>(k, v); },
            [](auto const& c) { return realText(c.planner.temperature); } } },
        { "planner.retry_budget",
          { [](auto& c, auto const& k, auto const& v) { c.planner.retryBudget = number<int>(k, v); },
            [](auto const& c) { return std::to_string(c.planner.retryBudget); } } },
        { "planner.strict_monotone",
          { [](auto& c, auto const& k, auto const& v) { c.planner.strictMonotone = flag(k, v); },
            [](auto const& c) { return boolText(c.planner.strictMonotone); } } },

        { "M", intField(&PipelineConfig::M) },
        { "N", intField(&PipelineConfig::N) },
        { "K", intField(&PipelineConfig::K) },
        { "seed", intField(&PipelineConfig::seed) },
        { "margin", realField(&PipelineConfig::margin) },
        { "intra_strategy",
          { [](auto& c, auto const&, auto const& v) { c.intraStrategy = intraStrategyFromString(v); },
            [](auto const& c) { return std::string { toString(c.intraStrategy) }; } } },
        { "ablation",
          { [](auto& c, auto const&, auto const& v) { c.ablation = ablationFromString(v); },
            [](auto const& c) { return std::string { toString(c.ablation) }; } } },
        { "render_mode",
          { [](auto& c, auto const&, auto const& v) { c.renderMode = renderModeFromString(v); },
            [](auto const& c) { return std::string { toString(c.renderMode) }; } } },
        { "literal_selection",
          { [](auto& c, auto const& k, auto const& v) { c.literalSelection = flag(k, v); },
            [](auto const& c) { return boolText(c.literalSelection); } } },

        { "stage2.sampling",
          { [](auto& c, auto const& k, auto const& v) {
               if (v != "free" && v != "targeted")
                   throw BadConfig(fmt::format("{}: expected free or targeted, got '{}'", k, v));
               c.sampling = v == "targeted" ? StageSampling::Targeted : StageSampling::Free;
           },
            [](auto const& c) { return std::string { c.sampling == StageSampling::Targeted ? "targeted" : "free" }; } } },
        { "stage2.samples", intField(&PipelineConfig::samples) },
        { "stage2.temperature", realField(&PipelineConfig::sampleTemperature) },

        { "eval.mode",
          { [](auto& c, auto const&, auto const& v) { c.evalMode = v; },
            [](auto const& c) { return c.evalMode; } } },
        { "eval.split",
          { [](auto& c, auto const& k, auto const& v) {
               if (v != "all" && v != "seen" && v != "unseen")
                   throw BadConfig(fmt::format("{}: expected all, seen or unseen, got '{}'", k, v));
               c.evalSplit = v;
           },
            [](auto const& c) { return c.evalSplit; } } },
        { "eval.repetitions", intField(&PipelineConfig::repetitions) },

        { "workers", intField(&PipelineConfig::workers) },
        { "rollout_workers", intField(&PipelineConfig::rolloutWorkers) },
        { "quarantine", realField(&PipelineConfig::quarantineFraction) },
        { "log_trajectories",
          { [](auto& c, auto const& k, auto const& v) { c.logTrajectories = flag(k, v); },
            [](auto const& c) { return boolText(c.logTrajectories); } } },
        { "output_dir",
          { [](auto& c, auto const&, auto const& v) { c.outputDir = resolve(c, v); },
            [](auto const& c) { return c.outputDir.string(); } } },
    };
    return table;
}

} // namespace

void applySetting(PipelineConfig& config, std::string const& key, std::string const& value)
{
    auto const it = fields().find(key);
    if (it == fields().end())
        throw BadConfig(fmt::format("unknown setting '{}'", key));
    it->second.set(config, key, value);
}

PipelineConfig parseConfig(std::string const& text, std::filesystem::path const& baseDir)
{
    auto config = PipelineConfig {};
    config.baseDir = baseDir;
    auto stream = std::istringstream { text };
    auto line = std::string {};
    for (auto number = 1; std::getline(stream, line); ++number)
    {
        if (auto const hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        auto const content = trim(line);
        if (content.empty())
            continue;
        auto const eq = content.find('=');
        if (eq == std::string::npos)
            throw BadConfig(fmt::format("config line {}: expected 'key = value'", number));
        try
        {
            applySetting(config, trim(content.substr(0, eq)), trim(content.substr(eq + 1)));
        }
        catch (BadConfig const& e)
        {
            throw BadConfig(fmt::format("config line {}: {}", number, e.what()));
        }
    }
    if (config.outputDir.is_relative() && !baseDir.empty())
        config.outputDir = baseDir / config.outputDir;
    return config;
}

PipelineConfig loadConfig(std::filesystem::path const& path)
{
    return parseConfig(readText(path), path.parent_path());
}

std::string dumpConfig(PipelineConfig const& config)
{
    auto out = std::string {};
    for (auto const& [key, field]: fields())
        out += fmt::format("{} = {}\n", key, field.get(config));
    return out;
}

void validateConfig(PipelineConfig const& config)
{
    auto require = [](bool ok, std::string const& message) {
        if (!ok)
            throw BadConfig(message);
    };
    require(config.M >= 1, fmt::format("M must be >= 1, got {}", config.M));
    require(config.N >= 1, fmt::format("N must be >= 1, got {}", config.N));
    require(config.K >= 1, fmt::format("K must be >= 1, got {}", config.K));
    require(config.env.maxSteps >= 1, fmt::format("env.max_steps must be >= 1, got {}", config.env.maxSteps));
    require(config.samples >= 1, fmt::format("stage2.samples must be >= 1, got {}", config.samples));
    require(config.repetitions >= 1, fmt::format("eval.repetitions must be >= 1, got {}", config.repetitions));
    require(config.margin >= 0.0, fmt::format("margin must be >= 0, got {}", config.margin));
    require(config.quarantineFraction >= 0.0 && config.quarantineFraction <= 1.0, "quarantine must lie in [0, 1]");
    require(!config.suite.empty(), "no task suite configured (suite = path)");
    require(std::filesystem::exists(config.suite), fmt::format("task suite {} does not exist", config.suite.string()));
    if (config.env.kind == EnvKind::External)
        require(config.env.config.contains("command") && !config.env.config.at("command").empty(), "env.command is required for the external world");
    if (config.plannerKind == PlannerKind::Stub)
        require(std::filesystem::exists(config.plannerFixture), fmt::format("planner fixture '{}' does not exist", config.plannerFixture.string()));
    else
        require(!config.remotePlanner.endpoint.url.empty(), "planner.url is required for the remote planner");
    if (config.actorKind == ActorKind::Remote)
        require(!config.remoteActor.endpoint.url.empty(), "actor.url is required for the remote actor");
}

std::unique_ptr<ActorPolicy> makeActor(PipelineConfig const& config)
{
    if (config.actorKind == ActorKind::Remote)
        return std::make_unique<RemoteActor>(config.remoteActor);
    return std::make_unique<ScriptedActor>(config.scripted);
}

std::unique_ptr<PlanTextSource> makePlanner(PipelineConfig const& config)
{
    if (config.plannerKind == PlannerKind::Remote)
    {
        auto remote = config.remotePlanner;
        remote.maxLevels = config.M;
        return std::make_unique<RemotePlanSource>(remote);
    }
    return std::make_unique<StubPlanSource>(StubPlanSource::fromFile(config.plannerFixture));
}

} // namespace hplan
