// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/errors.hpp>
#include <hplan/jsonl.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hplan
{

enum class Split
{
    Seen,
    Unseen,
};

[[nodiscard]] std::string_view toString(Split split);
[[nodiscard]] Split splitFromString(std::string_view text);

struct TaskInstance
{
    std::string id;
    std::string instruction;
    Split split = Split::Seen;
    /// Generator-time label in 1..M; present only for synthetic suites.
    std::optional<int> difficulty;
    std::map<std::string, std::string> params;

    [[nodiscard]] std::string param(std::string const& key, std::string fallback = {}) const;
};

[[nodiscard]] json toJson(TaskInstance const& task);
[[nodiscard]] TaskInstance taskFromJson(json const& record);
[[nodiscard]] std::vector<TaskInstance> readTaskSuite(std::filesystem::path const& path);
void writeTaskSuite(std::filesystem::path const& path, std::vector<TaskInstance> const& tasks);

struct Observation
{
    std::string text;
    int stepIndex = 0;
};

struct StepOutcome
{
    Observation observation;
    bool done = false;
    /// Set only when done.
    std::optional<double> reward;
    /// Done because the step cap was reached without the goal.
    bool truncated = false;
};

struct Turn
{
    std::string action;
    std::string observation;

    bool operator==(Turn const&) const = default;
};

struct Trajectory
{
    TaskInstance task;
    std::string initialObservation;
    std::vector<Turn> turns;
    double reward = 0.0;
    bool truncated = false;
    std::uint64_t seed = 0;
};

[[nodiscard]] json toJson(Trajectory const& trajectory);
[[nodiscard]] Trajectory trajectoryFromJson(json const& record);

enum class EnvKind
{
    GridHouse,
    SubgoalLab,
    External,
};

enum class RewardKind
{
    Binary,
    Dense,
};

[[nodiscard]] std::string_view toString(EnvKind kind);
[[nodiscard]] EnvKind envKindFromString(std::string_view text);
[[nodiscard]] std::string_view toString(RewardKind kind);

struct EnvironmentSpec
{
    EnvKind kind = EnvKind::GridHouse;
    int maxSteps = 40;
    RewardKind rewardKind = RewardKind::Binary;
    /// World configuration. The external kind reads "command".
    std::map<std::string, std::string> config;

    [[nodiscard]] static EnvironmentSpec gridHouse(int maxSteps = 40);
    [[nodiscard]] static EnvironmentSpec subgoalLab(int maxSteps = 40);
    [[nodiscard]] static EnvironmentSpec external(std::string command, RewardKind reward, int maxSteps = 40);

    [[nodiscard]] std::string fingerprint() const;
};

class UnknownTask: public Error
{
  public:
    using Error::Error;
};

class SessionTerminated: public Error
{
  public:
    using Error::Error;
};

/// One episode's hidden state. Exclusive to a single episode; not thread-safe.
class Session
{
  public:
    virtual ~Session() = default;

    [[nodiscard]] virtual Observation const& initialObservation() const = 0;
    /// Throws SessionTerminated once the episode is done.
    virtual StepOutcome step(std::string_view action) = 0;
    [[nodiscard]] virtual bool terminated() const = 0;
    [[nodiscard]] virtual int stepsTaken() const = 0;
};

/// Fresh session for `task`. Identical (spec, task, seed) yields identical behavior.
/// Throws UnknownTask when the task does not fit the world, BadConfig on an invalid spec.
[[nodiscard]] std::unique_ptr<Session> reset(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed);

/// Lowercases, collapses internal whitespace and strips a trailing period.
[[nodiscard]] std::string normalizeAction(std::string_view action);

} // namespace hplan
