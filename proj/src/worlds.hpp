// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/env.hpp>

#include <memory>
#include <string>
#include <vector>

namespace hplan::detail
{

/// Step-cap and terminal-reward bookkeeping shared by the built-in worlds.
class WorldSession: public Session
{
  public:
    WorldSession(int maxSteps, RewardKind rewardKind);

    [[nodiscard]] Observation const& initialObservation() const override { return _initial; }
    StepOutcome step(std::string_view action) final;
    [[nodiscard]] bool terminated() const override { return _terminated; }
    [[nodiscard]] int stepsTaken() const override { return _steps; }

  protected:
    void setInitialObservation(std::string text) { _initial = Observation { std::move(text), 0 }; }

    /// Applies a normalized action and returns the observation text.
    virtual std::string apply(std::string const& action) = 0;
    [[nodiscard]] virtual bool goalReached() const = 0;
    /// Completed fraction of the task in [0, 1].
    [[nodiscard]] virtual double progress() const = 0;

  private:
    int _maxSteps;
    RewardKind _rewardKind;
    int _steps = 0;
    bool _terminated = false;
    Observation _initial;
};

[[nodiscard]] std::unique_ptr<Session> makeGridHouse(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed);
[[nodiscard]] std::unique_ptr<Session> makeSubgoalLab(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed);
[[nodiscard]] std::unique_ptr<Session> makeExternal(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed);

[[nodiscard]] std::vector<std::string> splitList(std::string const& text, char separator);

} // namespace hplan::detail
