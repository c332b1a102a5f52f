// SPDX-License-Identifier: Apache-2.0
#include <hplan/hashing.hpp>
#include <hplan/planner.hpp>
#include <hplan/prompts.hpp>

#include <fmt/format.h>

#include <functional>

namespace hplan
{

std::string_view toString(PlanPurpose purpose)
{
    switch (purpose)
    {
        case PlanPurpose::Fixed: return "fixed";
        case PlanPurpose::Adaptive: return "adaptive";
        case PlanPurpose::Sample: return "sample";
        case PlanPurpose::Base: return "base";
    }
    return "fixed";
}

PlanPurpose planPurposeFromString(std::string_view text)
{
    for (auto p: { PlanPurpose::Fixed, PlanPurpose::Adaptive, PlanPurpose::Sample, PlanPurpose::Base })
    {
        if (toString(p) == text)
            return p;
    }
    throw BadConfig(fmt::format("unknown plan purpose '{}'", text));
}

StubPlanSource::StubPlanSource(Fixture fixture): _fixture(std::move(fixture))
{
    _fingerprint = fmt::format("stub-{}", hex64(fnv1a64(toJson(_fixture).dump())));
}

StubPlanSource StubPlanSource::fromFile(std::filesystem::path const& path)
{
    auto fixture = Fixture {};
    for (auto const& record: readJsonl(path))
    {
        if (!record.contains("task_id") || !record.contains("plans") || !record["plans"].is_array())
            throw BadConfig(fmt::format("{}: stub fixture lines need task_id and plans", path.string()));
        auto const purpose = planPurposeFromString(record.value("purpose", std::string { "fixed" }));
        auto& texts = fixture[record["task_id"].get<std::string>()][purpose];
        for (auto const& text: record["plans"])
            texts.push_back(text.get<std::string>());
    }
    return StubPlanSource { std::move(fixture) };
}

std::string StubPlanSource::generate(PlanRequest const& request) const
{
    auto const task = _fixture.find(request.task.id);
    if (task != _fixture.end())
    {
        auto const texts = task->second.find(request.purpose);
        if (texts != task->second.end() && request.attempt >= 0 && static_cast<std::size_t>(request.attempt) < texts->second.size())
            return texts->second[static_cast<std::size_t>(request.attempt)];
    }
    throw StubExhausted(fmt::format("stub fixture has no {} plan #{} for task {}", toString(request.purpose), request.attempt + 1, request.task.id));
}

std::string StubPlanSource::fingerprint() const
{
    return _fingerprint;
}

json toJson(StubPlanSource::Fixture const& fixture)
{
    auto out = json::array();
    for (auto const& [taskId, byPurpose]: fixture)
    {
        for (auto const& [purpose, texts]: byPurpose)
            out.push_back({ { "task_id", taskId }, { "purpose", toString(purpose) }, { "plans", texts } });
    }
    return out;
}

void writeStubFixture(std::filesystem::path const& path, StubPlanSource::Fixture const& fixture)
{
    auto records = std::vector<json> {};
    for (auto const& record: toJson(fixture))
        records.push_back(record);
    writeJsonlAtomic(path, records);
}

RemotePlanSource::RemotePlanSource(RemotePlanConfig config): _config(std::move(config)), _client(_config.endpoint)
{
    static_cast<void>(promptTemplate(fmt::format("plan-fixed-{}-v1", _config.domain)));
}

std::string RemotePlanSource::prompt(PlanRequest const& request) const
{
    auto const free = request.purpose == PlanPurpose::Sample && request.levels == 0;
    auto const id = fmt::format("plan-{}-{}-v1", free ? "adaptive" : toString(request.purpose), _config.domain);
    auto const levels = std::to_string(free ? _config.maxLevels : request.levels);
    return fillTemplate(promptTemplate(id),
                        {
                            { "instruction", request.task.instruction },
                            { "trajectory", request.trajectoryHint.value_or("(not available)") },
                            { "levels", levels },
                            { "max_levels", levels },
                        });
}

std::string RemotePlanSource::generate(PlanRequest const& request) const
{
    auto const messages = std::vector<ChatMessage> { { "user", prompt(request) } };
    return _client.complete(messages, request.temperature);
}

std::string RemotePlanSource::fingerprint() const
{
    return fmt::format("remote-{}", hex64(fnv1a64(fmt::format("{};{};{}", _config.endpoint.url, _config.endpoint.model, _config.domain))));
}

namespace
{

/// Returns an empty string when `depth` is acceptable, else the rejection reason.
using DepthRule = std::function<std::string(int depth)>;

struct Collected
{
    PlanBatch batch;
    std::optional<ParseError> lastParseError;
};

Collected collect(PlanTextSource const& source,
                  PlanRequest const& base,
                  int needed,
                  DepthRule const& depthRule,
                  PlannerOptions const& options)
{
    if (needed < 1)
        throw BadConfig(fmt::format("task {}: {} plans requested", base.task.id, needed));

    auto out = Collected {};
    auto& batch = out.batch;
    auto const maxAttempts = needed * (1 + std::max(0, options.retryBudget));
    auto const validation = ValidationOptions { .strictMonotone = options.strictMonotone, .maxLevels = options.maxLevels };

    for (auto attempt = 0; attempt < maxAttempts && static_cast<int>(batch.plans.size()) < needed; ++attempt)
    {
        ++batch.attempts;
        auto request = PlanRequest { base.purpose, base.task, base.trajectoryHint, base.levels, base.temperature, attempt };

        auto text = std::string {};
        try
        {
            text = source.generate(request);
        }
        catch (StubExhausted const& e)
        {
            batch.rejections.push_back({ attempt, e.what() });
            break;
        }
        catch (Error const& e)
        {
            batch.rejections.push_back({ attempt, e.what() });
            continue;
        }

        auto plan = HierarchicalPlan {};
        try
        {
            plan = parsePlan(text, base.task.id, static_cast<int>(batch.plans.size()) + 1).plan;
        }
        catch (ParseError& e)
        {
            e.attachRawText(text);
            batch.rejections.push_back({ attempt, fmt::format("parse: {}", e.what()) });
            out.lastParseError = e;
            continue;
        }

        if (auto reason = depthRule(plan.depth()); !reason.empty())
        {
            batch.rejections.push_back({ attempt, std::move(reason) });
            continue;
        }
        if (auto const report = validate(plan, validation); !report.ok())
        {
            batch.rejections.push_back({ attempt, fmt::format("invalid: {}", report.summary()) });
            continue;
        }
        batch.plans.push_back(std::move(plan));
    }
    return out;
}

[[noreturn]] void exhausted(TaskInstance const& task, PlanPurpose purpose, int needed, PlanBatch batch)
{
    auto const valid = static_cast<int>(batch.plans.size());
    auto message = fmt::format("task {}: {} generation produced {} of {} valid plans in {} attempts", task.id, toString(purpose), valid, needed, batch.attempts);
    if (!batch.rejections.empty())
        message += fmt::format("; last rejection: {}", batch.rejections.back().reason);
    throw GenerationExhausted(message, valid, std::move(batch.rejections));
}

DepthRule exactly(int levels)
{
    return [levels](int depth) {
        return depth == levels ? std::string {} : fmt::format("expected {} levels, got {}", levels, depth);
    };
}

} // namespace

PlanBatch generateFixed(PlanTextSource const& source,
                        TaskInstance const& task,
                        std::optional<std::string> const& trajectoryHint,
                        int M,
                        int N,
                        PlannerOptions const& options)
{
    if (M < 1 || M > options.maxLevels)
        throw BadConfig(fmt::format("fixed generation needs 1 <= M <= {}, got {}", options.maxLevels, M));
    auto const request = PlanRequest { PlanPurpose::Fixed, task, trajectoryHint, M, options.temperature, 0 };
    auto result = collect(source, request, N, exactly(M), options);
    if (static_cast<int>(result.batch.plans.size()) < N)
        exhausted(task, PlanPurpose::Fixed, N, std::move(result.batch));
    return std::move(result.batch);
}

HierarchicalPlan generateAdaptive(PlanTextSource const& source, TaskInstance const& task, PlannerOptions const& options)
{
    auto const request = PlanRequest { PlanPurpose::Adaptive, task, std::nullopt, options.maxLevels, options.temperature, 0 };
    auto const limit = options.maxLevels;
    auto result = collect(source, request, 1, [limit](int depth) {
        return depth <= limit ? std::string {} : fmt::format("expected at most {} levels, got {}", limit, depth);
    }, options);
    if (result.batch.plans.empty())
    {
        if (result.lastParseError)
            throw *result.lastParseError;
        exhausted(task, PlanPurpose::Adaptive, 1, std::move(result.batch));
    }
    return std::move(result.batch.plans.front());
}

PlanBatch samplePlans(PlanTextSource const& source, TaskInstance const& task, int m, int N, double temperature, PlannerOptions const& options)
{
    if (m < 1 || m > options.maxLevels)
        throw BadConfig(fmt::format("sampling needs 1 <= m <= {}, got {}", options.maxLevels, m));
    auto const request = PlanRequest { PlanPurpose::Sample, task, std::nullopt, m, temperature, 0 };
    auto result = collect(source, request, N, exactly(m), options);
    if (static_cast<int>(result.batch.plans.size()) < N)
        exhausted(task, PlanPurpose::Sample, N, std::move(result.batch));
    return std::move(result.batch);
}

PlanBatch sampleFree(PlanTextSource const& source, TaskInstance const& task, int count, double temperature, PlannerOptions const& options)
{
    auto const request = PlanRequest { PlanPurpose::Sample, task, std::nullopt, 0, temperature, 0 };
    auto const limit = options.maxLevels;
    auto result = collect(source, request, count, [limit](int depth) {
        return depth <= limit ? std::string {} : fmt::format("expected at most {} levels, got {}", limit, depth);
    }, options);
    if (static_cast<int>(result.batch.plans.size()) < count)
        exhausted(task, PlanPurpose::Sample, count, std::move(result.batch));
    return std::move(result.batch);
}

HierarchicalPlan generateBase(PlanTextSource const& source, TaskInstance const& task, PlannerOptions const& options)
{
    auto const request = PlanRequest { PlanPurpose::Base, task, std::nullopt, 1, options.temperature, 0 };
    auto result = collect(source, request, 1, exactly(1), options);
    if (result.batch.plans.empty())
        exhausted(task, PlanPurpose::Base, 1, std::move(result.batch));
    return std::move(result.batch.plans.front());
}

} // namespace hplan
