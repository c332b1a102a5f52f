// SPDX-License-Identifier: Apache-2.0
#include <hplan/concurrency.hpp>
#include <hplan/episode.hpp>
#include <hplan/hashing.hpp>
#include <hplan/mc_eval.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace hplan
{

json toJson(RolloutRecord const& r)
{
    return {
        { "task_id", r.taskId }, { "n", r.n }, { "m", r.m }, { "k", r.k },
        { "seed", r.seed }, { "reward", r.reward }, { "trajectory_ref", r.trajectoryRef },
    };
}

RolloutRecord rolloutFromJson(json const& j)
{
    return RolloutRecord {
        .taskId = j.at("task_id").get<std::string>(),
        .n = j.at("n").get<int>(),
        .m = j.at("m").get<int>(),
        .k = j.at("k").get<int>(),
        .seed = j.at("seed").get<std::uint64_t>(),
        .reward = j.at("reward").get<double>(),
        .trajectoryRef = j.value("trajectory_ref", std::string {}),
    };
}

bool QTable::complete() const
{
    if (q.empty() || K < 1)
        return false;
    return std::ranges::all_of(counts, [this](auto const& c) { return c.second == K; }) && counts.size() == q.size()
           && q.size() == static_cast<std::size_t>(planCount() * levelCount());
}

int QTable::planCount() const
{
    auto top = 0;
    for (auto const& [cell, _]: q)
        top = std::max(top, cell.first);
    return top;
}

int QTable::levelCount() const
{
    auto top = 0;
    for (auto const& [cell, _]: q)
        top = std::max(top, cell.second);
    return top;
}

json toJson(QTable const& t)
{
    auto cells = json::array();
    for (auto const& [cell, value]: t.q)
    {
        auto const count = t.counts.contains(cell) ? t.counts.at(cell) : 0;
        cells.push_back({ { "n", cell.first }, { "m", cell.second }, { "q", value }, { "count", count } });
    }
    return { { "task_id", t.taskId }, { "K", t.K }, { "cells", std::move(cells) } };
}

QTable qtableFromJson(json const& j)
{
    auto t = QTable { .taskId = j.at("task_id").get<std::string>(), .K = j.at("K").get<int>(), .q = {}, .counts = {} };
    for (auto const& c: j.at("cells"))
    {
        auto const cell = Cell { c.at("n").get<int>(), c.at("m").get<int>() };
        t.q[cell] = c.at("q").get<double>();
        t.counts[cell] = c.at("count").get<int>();
    }
    return t;
}

QTable aggregate(std::string const& taskId, int K, std::vector<RolloutRecord> records)
{
    std::ranges::sort(records, {}, [](RolloutRecord const& r) { return std::tuple { r.n, r.m, r.k }; });
    auto sums = std::map<Cell, double> {};
    auto table = QTable { .taskId = taskId, .K = K, .q = {}, .counts = {} };
    for (auto const& r: records)
    {
        sums[{ r.n, r.m }] += r.reward;
        ++table.counts[{ r.n, r.m }];
    }
    for (auto const& [cell, sum]: sums)
        table.q[cell] = sum / static_cast<double>(table.counts[cell]);
    return table;
}

json toJson(SelectionResult const& s)
{
    return {
        { "task_id", s.taskId }, { "best_n", s.bestN }, { "best_m", s.bestM },
        { "best_q", s.bestQ },   { "tie_count", s.tieCount }, { "p_best", toJson(s.pBest) },
    };
}

SelectionResult selectionFromJson(json const& j)
{
    return SelectionResult {
        .taskId = j.at("task_id").get<std::string>(),
        .bestN = j.at("best_n").get<int>(),
        .bestM = j.at("best_m").get<int>(),
        .pBest = planFromJson(j.at("p_best")),
        .bestQ = j.at("best_q").get<double>(),
        .tieCount = j.at("tie_count").get<int>(),
    };
}

CellChoice selectCell(QTable const& table, SelectionOptions const& options)
{
    if (table.q.empty())
        throw EmptyTable(fmt::format("task {}: empty Q table", table.taskId));

    if (options.literalFormula)
    {
        auto bestPerLevel = std::map<int, double> {};
        for (auto const& [cell, value]: table.q)
        {
            auto const [it, inserted] = bestPerLevel.emplace(cell.second, value);
            if (!inserted)
                it->second = std::max(it->second, value);
        }
        auto choice = CellChoice {};
        choice.q = std::numeric_limits<double>::infinity();
        for (auto const& [m, value]: bestPerLevel)
        {
            if (value < choice.q - options.tolerance)
            {
                choice.m = m;
                choice.q = value;
            }
        }
        auto first = true;
        choice.tieCount = 0;
        for (auto const& [cell, value]: table.q)
        {
            if (cell.second == choice.m && std::abs(value - choice.q) <= options.tolerance)
            {
                if (first)
                    choice.n = cell.first;
                first = false;
                ++choice.tieCount;
            }
        }
        choice.q = table.q.at({ choice.n, choice.m });
        return choice;
    }

    auto maxQ = -std::numeric_limits<double>::infinity();
    for (auto const& [_, value]: table.q)
        maxQ = std::max(maxQ, value);

    auto choice = CellChoice {};
    choice.tieCount = 0;
    auto found = false;
    for (auto const& [cell, value]: table.q)
    {
        if (value < maxQ - options.tolerance)
            continue;
        ++choice.tieCount;
        auto const better = !found || cell.second < choice.m || (cell.second == choice.m && cell.first < choice.n);
        if (better)
        {
            choice.n = cell.first;
            choice.m = cell.second;
            choice.q = value;
            found = true;
        }
    }
    return choice;
}

SelectionResult selectBest(QTable const& table, std::vector<HierarchicalPlan> const& plans, SelectionOptions const& options)
{
    if (!table.q.empty() && !table.complete())
        throw Error(fmt::format("task {}: Q table is incomplete", table.taskId));
    auto const choice = selectCell(table, options);
    auto const plan = std::ranges::find(plans, choice.n, &HierarchicalPlan::sourceIndex);
    if (plan == plans.end())
        throw OutOfRange(fmt::format("task {}: no plan with index {}", table.taskId, choice.n));
    return SelectionResult {
        .taskId = table.taskId,
        .bestN = choice.n,
        .bestM = choice.m,
        .pBest = prefix(*plan, choice.m),
        .bestQ = choice.q,
        .tieCount = choice.tieCount,
    };
}

RolloutCache::RolloutCache(std::filesystem::path const& path)
{
    if (std::filesystem::exists(path))
    {
        for (auto const& line: readJsonl(path, { .tolerateTruncatedTail = true }))
            _records.insert_or_assign(line.at("key").get<std::string>(), rolloutFromJson(line));
    }
    _file = std::make_unique<JsonlAppender>(path);
}

std::optional<RolloutRecord> RolloutCache::lookup(std::string const& key) const
{
    auto lock = std::unique_lock { _mutex };
    auto const it = _records.find(key);
    if (it == _records.end())
    {
        ++_misses;
        return std::nullopt;
    }
    ++_hits;
    return it->second;
}

void RolloutCache::store(std::string const& key, RolloutRecord const& record)
{
    auto lock = std::unique_lock { _mutex };
    if (!_records.emplace(key, record).second)
        return;
    if (_file)
    {
        auto line = toJson(record);
        line["key"] = key;
        _file->append(line);
    }
}

std::size_t RolloutCache::size() const
{
    auto lock = std::shared_lock { _mutex };
    return _records.size();
}

std::size_t RolloutCache::hits() const
{
    auto lock = std::shared_lock { _mutex };
    return _hits;
}

std::size_t RolloutCache::misses() const
{
    auto lock = std::shared_lock { _mutex };
    return _misses;
}

std::uint64_t prefixRolloutSeed(std::uint64_t master, std::string const& taskId, int n, int m, int k)
{
    return deriveSeed(master, taskId + ":prefix", { n, m, k });
}

std::uint64_t planRolloutSeed(std::uint64_t master, std::string const& taskId, int m, int k)
{
    return deriveSeed(master, taskId + ":plan", { m, k });
}

namespace
{

struct Job
{
    int n;
    int m;
    int k;
    std::uint64_t seed;
    std::size_t text;
};

struct JobResults
{
    std::vector<RolloutRecord> records;
    std::size_t hits = 0;
};

JobResults runJobs(TaskInstance const& task,
                   std::string_view tag,
                   std::vector<std::string> const& texts,
                   std::vector<Job> const& jobs,
                   EvalContext const& ctx)
{
    if (!ctx.actor)
        throw BadConfig("evaluation context has no actor");

    auto const actorFp = ctx.actor->fingerprint();
    auto const envFp = ctx.env.fingerprint();
    auto textHashes = std::vector<std::string> {};
    for (auto const& text: texts)
        textHashes.push_back(hex64(fnv1a64(text)));

    auto slots = std::vector<std::optional<RolloutRecord>>(jobs.size());
    auto failures = std::vector<std::string>(jobs.size());
    auto fromCache = std::vector<char>(jobs.size(), 0);

    parallelFor(jobs.size(), ctx.workers, [&](std::size_t i) {
        auto const& job = jobs[i];
        auto const key = fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}", task.id, actorFp, envFp, textHashes[job.text], tag, job.n, job.m, job.k, job.seed);
        if (ctx.cache)
        {
            if (auto hit = ctx.cache->lookup(key))
            {
                slots[i] = std::move(*hit);
                fromCache[i] = 1;
                return;
            }
        }
        try
        {
            auto const trajectory = runEpisode(ctx.env, task, *ctx.actor, texts[job.text], job.seed);
            auto record = RolloutRecord {
                .taskId = task.id,
                .n = job.n,
                .m = job.m,
                .k = job.k,
                .seed = job.seed,
                .reward = trajectory.reward,
                .trajectoryRef = fmt::format("{}/{}/{}/{}/{}", task.id, tag, job.n, job.m, job.k),
            };
            if (ctx.trajectoryLog)
            {
                auto line = toJson(trajectory);
                line["ref"] = record.trajectoryRef;
                ctx.trajectoryLog->append(line);
            }
            if (ctx.cache)
                ctx.cache->store(key, record);
            slots[i] = std::move(record);
        }
        catch (std::exception const& e)
        {
            failures[i] = e.what();
        }
    });

    auto out = JobResults {};
    auto missing = std::vector<PartialEvaluation::Missing> {};
    for (std::size_t i = 0; i < jobs.size(); ++i)
    {
        if (slots[i])
        {
            out.records.push_back(std::move(*slots[i]));
            out.hits += static_cast<std::size_t>(fromCache[i]);
        }
        else
        {
            missing.push_back({ jobs[i].n, jobs[i].m, jobs[i].k, failures[i] });
        }
    }
    if (!missing.empty())
    {
        auto message = fmt::format("task {}: {} of {} rollouts failed; first (n={}, m={}, k={}): {}",
                                   task.id,
                                   missing.size(),
                                   jobs.size(),
                                   missing.front().n,
                                   missing.front().m,
                                   missing.front().k,
                                   missing.front().reason);
        throw PartialEvaluation(message, std::move(missing));
    }
    return out;
}

void requireUniformDepth(TaskInstance const& task, std::vector<HierarchicalPlan> const& plans, int K)
{
    if (plans.empty())
        throw BadConfig(fmt::format("task {}: no plans to evaluate", task.id));
    if (K < 1)
        throw BadConfig(fmt::format("task {}: K must be >= 1, got {}", task.id, K));
    auto indices = std::set<int> {};
    for (auto const& plan: plans)
    {
        if (plan.depth() != plans.front().depth())
            throw BadConfig(fmt::format("task {}: plans have differing depths ({} vs {})", task.id, plan.depth(), plans.front().depth()));
        if (!indices.insert(plan.sourceIndex).second)
            throw BadConfig(fmt::format("task {}: duplicate plan index {}", task.id, plan.sourceIndex));
    }
}

} // namespace

PrefixEvaluation evaluatePrefixes(TaskInstance const& task, std::vector<HierarchicalPlan> const& plans, int K, EvalContext const& ctx)
{
    requireUniformDepth(task, plans, K);
    auto const M = plans.front().depth();

    auto texts = std::vector<std::string> {};
    auto jobs = std::vector<Job> {};
    for (auto const& plan: plans)
    {
        for (auto m = 1; m <= M; ++m)
        {
            texts.push_back(render(prefix(plan, m), ctx.renderMode));
            for (auto k = 1; k <= K; ++k)
                jobs.push_back({ plan.sourceIndex, m, k, prefixRolloutSeed(ctx.masterSeed, task.id, plan.sourceIndex, m, k), texts.size() - 1 });
        }
    }

    auto results = runJobs(task, "prefix", texts, jobs, ctx);
    auto table = aggregate(task.id, K, results.records);
    return PrefixEvaluation { std::move(table), std::move(results.records), results.hits };
}

json toJson(PlanEvaluation const& e)
{
    auto q = json::array();
    for (auto const& [n, value]: e.q)
        q.push_back({ { "n", n }, { "q", value } });
    return { { "task_id", e.taskId }, { "K", e.K }, { "m", e.m }, { "q", std::move(q) } };
}

PlanEvaluation evaluatePlans(TaskInstance const& task, std::vector<HierarchicalPlan> const& plans, int K, EvalContext const& ctx)
{
    requireUniformDepth(task, plans, K);
    auto const m = plans.front().depth();

    auto texts = std::vector<std::string> {};
    auto jobs = std::vector<Job> {};
    for (auto const& plan: plans)
    {
        texts.push_back(render(plan, ctx.renderMode));
        for (auto k = 1; k <= K; ++k)
            jobs.push_back({ plan.sourceIndex, m, k, planRolloutSeed(ctx.masterSeed, task.id, m, k), texts.size() - 1 });
    }

    auto results = runJobs(task, "plan", texts, jobs, ctx);
    auto const table = aggregate(task.id, K, results.records);
    auto out = PlanEvaluation { .taskId = task.id, .K = K, .m = m, .q = {}, .records = std::move(results.records), .cacheHits = results.hits };
    for (auto const& [cell, value]: table.q)
        out.q[cell.first] = value;
    return out;
}

} // namespace hplan
