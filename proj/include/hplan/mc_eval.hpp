// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/actor.hpp>
#include <hplan/env.hpp>
#include <hplan/jsonl.hpp>
#include <hplan/plan.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hplan
{

/// (n, m): plan index and prefix level, both 1-based.
using Cell = std::pair<int, int>;

struct RolloutRecord
{
    std::string taskId;
    int n = 1;
    int m = 1;
    int k = 1;
    std::uint64_t seed = 0;
    double reward = 0.0;
    std::string trajectoryRef;

    bool operator==(RolloutRecord const&) const = default;
};

[[nodiscard]] json toJson(RolloutRecord const& record);
[[nodiscard]] RolloutRecord rolloutFromJson(json const& record);

struct QTable
{
    std::string taskId;
    int K = 0;
    std::map<Cell, double> q;
    std::map<Cell, int> counts;

    [[nodiscard]] bool complete() const;
    [[nodiscard]] int planCount() const;
    [[nodiscard]] int levelCount() const;
};

[[nodiscard]] json toJson(QTable const& table);
[[nodiscard]] QTable qtableFromJson(json const& record);

/// Per-cell means over `records`, summed in (n, m, k) order.
[[nodiscard]] QTable aggregate(std::string const& taskId, int K, std::vector<RolloutRecord> records);

struct SelectionResult
{
    std::string taskId;
    int bestN = 1;
    int bestM = 1;
    HierarchicalPlan pBest;
    double bestQ = 0.0;
    int tieCount = 1;
};

[[nodiscard]] json toJson(SelectionResult const& selection);
[[nodiscard]] SelectionResult selectionFromJson(json const& record);

struct SelectionOptions
{
    double tolerance = 1e-9;
    /// argmin over m of max over n of Q, then the best n at that m. Off by default.
    bool literalFormula = false;
};

struct CellChoice
{
    int n = 1;
    int m = 1;
    double q = 0.0;
    int tieCount = 1;
};

class EmptyTable: public Error
{
  public:
    using Error::Error;
};

/// Maximize Q, then minimal m, then minimal n. Throws EmptyTable.
[[nodiscard]] CellChoice selectCell(QTable const& table, SelectionOptions const& options = {});
[[nodiscard]] SelectionResult selectBest(QTable const& table, std::vector<HierarchicalPlan> const& plans, SelectionOptions const& options = {});

/// Append-only rollout cache backed by a JSON-Lines file. Safe for concurrent use.
class RolloutCache
{
  public:
    /// In-memory only.
    RolloutCache() = default;
    /// Loads existing records from `path` (a truncated last line is ignored) and appends new ones.
    explicit RolloutCache(std::filesystem::path const& path);

    [[nodiscard]] std::optional<RolloutRecord> lookup(std::string const& key) const;
    void store(std::string const& key, RolloutRecord const& record);

    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t hits() const;
    [[nodiscard]] std::size_t misses() const;

  private:
    mutable std::shared_mutex _mutex;
    std::unordered_map<std::string, RolloutRecord> _records;
    std::unique_ptr<JsonlAppender> _file;
    mutable std::size_t _hits = 0;
    mutable std::size_t _misses = 0;
};

struct EvalContext
{
    EnvironmentSpec env;
    ActorPolicy const* actor = nullptr;
    std::uint64_t masterSeed = 0;
    RenderMode renderMode = RenderMode::Hierarchical;
    int workers = 1;
    RolloutCache* cache = nullptr;
    /// Optional sink for full trajectories, one JSON object per rollout.
    JsonlAppender* trajectoryLog = nullptr;
};

/// Rollouts that did not complete. Completed ones are already in the cache.
class PartialEvaluation: public Error
{
  public:
    struct Missing
    {
        int n;
        int m;
        int k;
        std::string reason;
    };

    PartialEvaluation(std::string const& message, std::vector<Missing> missing): Error(message), _missing(std::move(missing)) {}

    [[nodiscard]] std::vector<Missing> const& missing() const noexcept { return _missing; }

  private:
    std::vector<Missing> _missing;
};

struct PrefixEvaluation
{
    QTable table;
    std::vector<RolloutRecord> records;
    std::size_t cacheHits = 0;
};

/// Seed for rollout k of prefix (n, m).
[[nodiscard]] std::uint64_t prefixRolloutSeed(std::uint64_t master, std::string const& taskId, int n, int m, int k);
/// Seed for rollout k of a whole plan at level m. Shared by every plan n (common random numbers).
[[nodiscard]] std::uint64_t planRolloutSeed(std::uint64_t master, std::string const& taskId, int m, int k);

/// K rollouts of every prefix(plan_n, m). All plans must share the same depth M.
[[nodiscard]] PrefixEvaluation evaluatePrefixes(TaskInstance const& task,
                                                std::vector<HierarchicalPlan> const& plans,
                                                int K,
                                                EvalContext const& ctx);

struct PlanEvaluation
{
    std::string taskId;
    int K = 0;
    int m = 0;
    /// Q by plan index n.
    std::map<int, double> q;
    std::vector<RolloutRecord> records;
    std::size_t cacheHits = 0;
};

[[nodiscard]] json toJson(PlanEvaluation const& evaluation);

/// K rollouts of each whole plan. All plans must have the same depth.
[[nodiscard]] PlanEvaluation evaluatePlans(TaskInstance const& task,
                                           std::vector<HierarchicalPlan> const& plans,
                                           int K,
                                           EvalContext const& ctx);

} // namespace hplan
