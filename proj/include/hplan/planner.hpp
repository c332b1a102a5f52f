// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/chat_client.hpp>
#include <hplan/env.hpp>
#include <hplan/plan.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hplan
{

enum class PlanPurpose
{
    Fixed,
    Adaptive,
    Sample,
    Base,
};

[[nodiscard]] std::string_view toString(PlanPurpose purpose);
[[nodiscard]] PlanPurpose planPurposeFromString(std::string_view text);

struct PlanRequest
{
    PlanPurpose purpose = PlanPurpose::Fixed;
    TaskInstance const& task;
    std::optional<std::string> trajectoryHint;
    /// Exact level count for Fixed and Sample; the upper bound for Adaptive. Zero for a Sample
    /// request lets the source choose, as in adaptive generation.
    int levels = 3;
    double temperature = 0.0;
    /// 0-based count of earlier requests with the same task and purpose in this call.
    int attempt = 0;
};

/// Produces raw tagged plan text.
class PlanTextSource
{
  public:
    virtual ~PlanTextSource() = default;

    [[nodiscard]] virtual std::string generate(PlanRequest const& request) const = 0;
    [[nodiscard]] virtual std::string fingerprint() const = 0;
};

/// Fixture-backed source. Attempt i for (task, purpose) returns the i-th listed text;
/// attempts past the end throw StubExhausted.
class StubPlanSource final: public PlanTextSource
{
  public:
    using Fixture = std::map<std::string, std::map<PlanPurpose, std::vector<std::string>>>;

    explicit StubPlanSource(Fixture fixture);
    /// JSON-Lines of {task_id, purpose?, plans: [text]}; purpose defaults to "fixed".
    [[nodiscard]] static StubPlanSource fromFile(std::filesystem::path const& path);

    [[nodiscard]] std::string generate(PlanRequest const& request) const override;
    [[nodiscard]] std::string fingerprint() const override;

    [[nodiscard]] Fixture const& fixture() const noexcept { return _fixture; }

  private:
    Fixture _fixture;
    std::string _fingerprint;
};

[[nodiscard]] json toJson(StubPlanSource::Fixture const& fixture);
void writeStubFixture(std::filesystem::path const& path, StubPlanSource::Fixture const& fixture);

class StubExhausted: public Error
{
  public:
    using Error::Error;
};

struct RemotePlanConfig
{
    ChatEndpoint endpoint;
    /// Selects the prompt family: "generic", "household" or "science".
    std::string domain = "generic";
    /// Level bound named in prompts that leave the depth to the model.
    int maxLevels = 3;
};

class RemotePlanSource final: public PlanTextSource
{
  public:
    explicit RemotePlanSource(RemotePlanConfig config);

    [[nodiscard]] std::string generate(PlanRequest const& request) const override;
    [[nodiscard]] std::string fingerprint() const override;

    /// The user message sent for `request`.
    [[nodiscard]] std::string prompt(PlanRequest const& request) const;

  private:
    RemotePlanConfig _config;
    ChatClient _client;
};

struct PlannerOptions
{
    /// Extra attempts allowed per needed plan.
    int retryBudget = 3;
    int maxLevels = 3;
    bool strictMonotone = false;
    double temperature = 0.7;
};

struct Rejection
{
    int attempt = 0;
    std::string reason;
};

struct PlanBatch
{
    std::vector<HierarchicalPlan> plans;
    std::vector<Rejection> rejections;
    int attempts = 0;
};

class GenerationExhausted: public Error
{
  public:
    GenerationExhausted(std::string const& message, int validCount, std::vector<Rejection> rejections):
        Error(message), _validCount(validCount), _rejections(std::move(rejections))
    {
    }

    [[nodiscard]] int validCount() const noexcept { return _validCount; }
    [[nodiscard]] std::vector<Rejection> const& rejections() const noexcept { return _rejections; }

  private:
    int _validCount;
    std::vector<Rejection> _rejections;
};

/// N plans with exactly M levels each, numbered 1..N in acceptance order.
[[nodiscard]] PlanBatch generateFixed(PlanTextSource const& source,
                                      TaskInstance const& task,
                                      std::optional<std::string> const& trajectoryHint,
                                      int M,
                                      int N,
                                      PlannerOptions const& options = {});

/// One plan whose level count the source chooses, within 1..options.maxLevels.
/// When every attempt fails and at least one failed to parse, the last ParseError is rethrown
/// with the offending raw text attached; otherwise GenerationExhausted.
[[nodiscard]] HierarchicalPlan generateAdaptive(PlanTextSource const& source, TaskInstance const& task, PlannerOptions const& options = {});

/// N plans with exactly m levels each.
[[nodiscard]] PlanBatch samplePlans(PlanTextSource const& source,
                                    TaskInstance const& task,
                                    int m,
                                    int N,
                                    double temperature,
                                    PlannerOptions const& options = {});

/// `count` plans whose level counts the source chooses, within 1..options.maxLevels, for the
/// mode-of-levels filter.
[[nodiscard]] PlanBatch sampleFree(PlanTextSource const& source, TaskInstance const& task, int count, double temperature, PlannerOptions const& options = {});

/// One single-level plan from the plain step-by-step prompt.
[[nodiscard]] HierarchicalPlan generateBase(PlanTextSource const& source, TaskInstance const& task, PlannerOptions const& options = {});

} // namespace hplan
