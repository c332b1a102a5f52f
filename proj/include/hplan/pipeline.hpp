// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/actor.hpp>
#include <hplan/env.hpp>
#include <hplan/jsonl.hpp>
#include <hplan/planner.hpp>
#include <hplan/pref_data.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hplan
{

enum class ActorKind
{
    Scripted,
    Remote,
};

enum class PlannerKind
{
    Stub,
    Remote,
};

enum class StageSampling
{
    /// Free-depth generations, then the mode-of-levels filter.
    Free,
    /// Generations requested at the task's stage-1 best level.
    Targeted,
};

struct PipelineConfig
{
    EnvironmentSpec env;
    std::filesystem::path suite;

    ActorKind actorKind = ActorKind::Scripted;
    ScriptedActorConfig scripted;
    RemoteActorConfig remoteActor;

    PlannerKind plannerKind = PlannerKind::Stub;
    std::filesystem::path plannerFixture;
    RemotePlanConfig remotePlanner;
    PlannerOptions planner;

    int M = 3;
    int N = 5;
    int K = 3;
    std::uint64_t seed = 0;
    double margin = 0.0;
    IntraStrategy intraStrategy = IntraStrategy::Hardest;
    Ablation ablation = Ablation::Full;
    RenderMode renderMode = RenderMode::Hierarchical;
    bool literalSelection = false;

    StageSampling sampling = StageSampling::Free;
    int samples = 3;
    double sampleTemperature = 0.7;

    std::string evalMode = "adaptive";
    std::string evalSplit = "all";
    int repetitions = 1;

    int workers = 1;
    int rolloutWorkers = 1;
    double quarantineFraction = 0.1;
    bool logTrajectories = false;
    std::filesystem::path outputDir = "out";

    /// Relative paths in the file resolve against this directory.
    std::filesystem::path baseDir;
};

/// Applies one "key = value" setting. Throws BadConfig for unknown keys or bad values.
void applySetting(PipelineConfig& config, std::string const& key, std::string const& value);

/// "key = value" lines; '#' starts a comment; blank lines are ignored.
[[nodiscard]] PipelineConfig loadConfig(std::filesystem::path const& path);
[[nodiscard]] PipelineConfig parseConfig(std::string const& text, std::filesystem::path const& baseDir = {});

/// Every setting as "key = value" lines, in the format loadConfig reads.
[[nodiscard]] std::string dumpConfig(PipelineConfig const& config);

/// Throws BadConfig when a referenced file is missing or a value is out of range.
void validateConfig(PipelineConfig const& config);

[[nodiscard]] std::unique_ptr<ActorPolicy> makeActor(PipelineConfig const& config);
[[nodiscard]] std::unique_ptr<PlanTextSource> makePlanner(PipelineConfig const& config);

struct RunLimits
{
    /// Stop after this many newly computed tasks without writing final artifacts, as if killed.
    std::optional<int> maxNewTasks;
};

struct StageReport
{
    std::string stage;
    /// Hash of every setting that affects the stage's per-task records.
    std::string fingerprint;
    std::size_t tasks = 0;
    std::size_t succeeded = 0;
    std::vector<std::string> failed;
    /// Tasks served from an earlier run's journal.
    std::size_t resumed = 0;
    bool complete = true;
    json metrics = json::object();
    double wallClockSeconds = 0.0;
    std::size_t cacheHits = 0;
    std::size_t cacheLookups = 0;
};

[[nodiscard]] json toJson(StageReport const& report);

/// Raised after the report is written when more than the quarantine fraction of tasks failed.
class StageFailed: public Error
{
  public:
    StageFailed(std::string const& message, StageReport report): Error(message), _report(std::move(report)) {}
    [[nodiscard]] StageReport const& report() const noexcept { return _report; }

  private:
    StageReport _report;
};

/// Generate, evaluate every prefix, select the best plan and build the SFT example for each task.
/// Writes <out>/stage1/{journal,rollouts}.jsonl while running, then plans, qtables, selections,
/// sft and report.json.
StageReport runStage1(PipelineConfig const& config, RunLimits limits = {});

/// Intra pairs from the stage-1 tables; inter pairs from sampled plans. Writes
/// <out>/stage2/{journal,rollouts}.jsonl, then <out>/dataset/{sft,dpo}.jsonl and manifest.json.
StageReport runStage2(PipelineConfig const& config, RunLimits limits = {});

/// Runs every task of config.evalSplit config.repetitions times with config.evalMode as the plan
/// source: "adaptive", "fix-<j>", "none" or "base". Writes <out>/eval/<mode>-<split>/.
StageReport runEval(PipelineConfig const& config, RunLimits limits = {});

[[nodiscard]] std::filesystem::path evalDirectory(PipelineConfig const& config);

struct AuditResult
{
    bool ok = true;
    std::vector<std::string> problems;
    json recomputed = json::object();
};

/// Re-derives every aggregate under `dir` (a stage or eval directory) from its persisted records
/// and compares against report.json.
[[nodiscard]] AuditResult auditReport(std::filesystem::path const& dir);

/// Re-checks the constraints of every line of an exported DPO file from the file alone.
[[nodiscard]] AuditResult auditPairs(std::filesystem::path const& dpoFile, double margin);

} // namespace hplan
