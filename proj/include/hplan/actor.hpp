// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/chat_client.hpp>
#include <hplan/env.hpp>
#include <hplan/plan.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hplan
{

/// Everything an actor may condition on when choosing the next action.
struct ActorInput
{
    TaskInstance const& task;
    std::string_view initialObservation;
    std::span<Turn const> history;
    /// Rendered plan text; empty when the episode runs without a plan.
    std::string_view renderedPlan;
    /// Per-episode seed handed down by the episode runner.
    std::uint64_t episodeSeed = 0;
};

class ActorPolicy
{
  public:
    virtual ~ActorPolicy() = default;

    [[nodiscard]] virtual std::string nextAction(ActorInput const& input) const = 0;
    /// Deterministic over configuration; part of every rollout cache key.
    [[nodiscard]] virtual std::string fingerprint() const = 0;
};

class PlanUnusable: public Error
{
  public:
    using Error::Error;
};

/// Last non-empty line of `completion`, without an optional "Action:" prefix.
/// Throws EmptyCompletion when nothing remains.
[[nodiscard]] std::string extractAction(std::string_view completion);

/// Environment actions named by a plan's deepest level. Each step contributes its "Action:" or
/// "Possible Action:" annotation lines, or its own text when it starts with a known action verb.
[[nodiscard]] std::vector<std::string> planActions(HierarchicalPlan const& plan);

struct ScriptedActorConfig
{
    double baseSuccess = 1.0;
    double granularityDecay = 0.0;
    std::uint64_t seed = 0;
    bool reactStyle = false;
};

/// Follows the deepest plan level's actions. An episode succeeds with probability
/// q * exp(-lambda * max(0, d - m)); a failed episode switches to a no-op action at a seeded step.
class ScriptedActor final: public ActorPolicy
{
  public:
    /// Throws BadConfig unless q is in [0, 1] and lambda >= 0.
    explicit ScriptedActor(ScriptedActorConfig config);

    [[nodiscard]] std::string nextAction(ActorInput const& input) const override;
    [[nodiscard]] std::string fingerprint() const override;

    [[nodiscard]] double successProbability(int difficulty, int levels) const;
    [[nodiscard]] ScriptedActorConfig const& config() const noexcept { return _config; }

  private:
    ScriptedActorConfig _config;
};

struct RemoteActorConfig
{
    ChatEndpoint endpoint;
    double temperature = 0.0;
    std::string promptTemplate = "actor-generic-v1";
};

/// Chat messages for one actor turn: the system prompt carries the task and plan block, then the
/// initial observation and the alternating action/observation history.
[[nodiscard]] std::vector<ChatMessage> renderActorPrompt(std::string const& templateId, ActorInput const& input);

class RemoteActor final: public ActorPolicy
{
  public:
    /// Throws BadConfig for a negative temperature or an unknown template.
    explicit RemoteActor(RemoteActorConfig config);

    [[nodiscard]] std::string nextAction(ActorInput const& input) const override;
    [[nodiscard]] std::string fingerprint() const override;

  private:
    RemoteActorConfig _config;
    ChatClient _client;
};

} // namespace hplan
