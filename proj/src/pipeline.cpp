// SPDX-License-Identifier: Apache-2.0
#include <hplan/concurrency.hpp>
#include <hplan/episode.hpp>
#include <hplan/hashing.hpp>
#include <hplan/mc_eval.hpp>
#include <hplan/pipeline.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <chrono>
#include <functional>
#include <numeric>
#include <set>

namespace hplan
{

json toJson(StageReport const& report)
{
    auto const rate = report.cacheLookups == 0 ? 0.0 : static_cast<double>(report.cacheHits) / static_cast<double>(report.cacheLookups);
    return {
        { "stage", report.stage },
        { "fingerprint", report.fingerprint },
        { "tasks", report.tasks },
        { "succeeded", report.succeeded },
        { "failed", report.failed },
        { "resumed", report.resumed },
        { "complete", report.complete },
        { "metrics", report.metrics },
        { "wall_clock_seconds", report.wallClockSeconds },
        { "cache_hits", report.cacheHits },
        { "cache_lookups", report.cacheLookups },
        { "cache_hit_rate", rate },
    };
}

namespace
{

using Clock = std::chrono::steady_clock;

PlannerOptions plannerOptions(PipelineConfig const& config)
{
    auto options = config.planner;
    options.maxLevels = config.M;
    return options;
}

std::string fingerprintOf(json const& settings)
{
    return hex64(fnv1a64(settings.dump()));
}

std::string stage1Fingerprint(PipelineConfig const& config, ActorPolicy const& actor, PlanTextSource const& planner)
{
    return fingerprintOf({
        { "stage", "stage1" },
        { "suite", hex64(fnv1a64(readText(config.suite))) },
        { "env", config.env.fingerprint() },
        { "actor", actor.fingerprint() },
        { "planner", planner.fingerprint() },
        { "M", config.M },
        { "N", config.N },
        { "K", config.K },
        { "seed", config.seed },
        { "render", toString(config.renderMode) },
        { "literal", config.literalSelection },
        { "strict", config.planner.strictMonotone },
        { "retry_budget", config.planner.retryBudget },
        { "temperature", config.planner.temperature },
    });
}

std::string levelKey(int m)
{
    return std::to_string(m);
}

std::vector<TaskInstance> selectSplit(std::vector<TaskInstance> tasks, std::string const& split)
{
    if (split == "all")
        return tasks;
    auto const wanted = splitFromString(split);
    std::erase_if(tasks, [wanted](TaskInstance const& t) { return t.split != wanted; });
    return tasks;
}

struct TaskOutcome
{
    /// Null when the task was not reached (run limit).
    json record;
    bool resumed = false;
};

/// Runs `compute` for every task without an "ok" journal record under `fingerprint`.
/// Records are appended to the journal as tasks finish; outcomes come back in task order.
std::vector<TaskOutcome> runTasks(std::vector<TaskInstance> const& tasks,
                                  std::filesystem::path const& journalPath,
                                  std::string const& fingerprint,
                                  int workers,
                                  RunLimits const& limits,
                                  bool& complete,
                                  std::function<json(TaskInstance const&)> const& compute)
{
    auto previous = std::map<std::string, json> {};
    if (std::filesystem::exists(journalPath))
    {
        for (auto& record: readJsonl(journalPath, { .tolerateTruncatedTail = true }))
        {
            if (record.value("fingerprint", "") != fingerprint || record.value("status", "") != "ok")
                continue;
            auto id = record.at("task_id").get<std::string>();
            previous[std::move(id)] = std::move(record);
        }
    }

    auto outcomes = std::vector<TaskOutcome>(tasks.size());
    auto pending = std::vector<std::size_t> {};
    for (std::size_t i = 0; i < tasks.size(); ++i)
    {
        if (auto const it = previous.find(tasks[i].id); it != previous.end())
            outcomes[i] = { it->second, true };
        else
            pending.push_back(i);
    }

    complete = true;
    if (limits.maxNewTasks && static_cast<std::size_t>(std::max(0, *limits.maxNewTasks)) < pending.size())
    {
        pending.resize(static_cast<std::size_t>(std::max(0, *limits.maxNewTasks)));
        complete = false;
    }

    auto journal = JsonlAppender { journalPath };
    parallelFor(pending.size(), workers, [&](std::size_t p) {
        auto const& task = tasks[pending[p]];
        auto record = json {};
        try
        {
            record = compute(task);
            record["status"] = "ok";
        }
        catch (std::exception const& e)
        {
            record = { { "status", "failed" }, { "error", e.what() } };
        }
        record["task_id"] = task.id;
        record["fingerprint"] = fingerprint;
        journal.append(record);
        outcomes[pending[p]] = { std::move(record), false };
    });
    return outcomes;
}

void tally(StageReport& report, std::vector<TaskOutcome> const& outcomes)
{
    report.tasks = outcomes.size();
    for (auto const& outcome: outcomes)
    {
        if (outcome.record.is_null())
            continue;
        if (outcome.resumed)
            ++report.resumed;
        if (outcome.record["status"] == "ok")
            ++report.succeeded;
        else
            report.failed.push_back(outcome.record["task_id"].get<std::string>());
    }
}

/// Writes report.json, then throws StageFailed if the failure share exceeds the quarantine limit.
void finish(StageReport& report, Clock::time_point started, std::filesystem::path const& dir, double quarantine)
{
    report.wallClockSeconds = std::chrono::duration<double>(Clock::now() - started).count();
    writeTextAtomic(dir / "report.json", toJson(report).dump(2) + "\n");
    auto const share = report.tasks == 0 ? 0.0 : static_cast<double>(report.failed.size()) / static_cast<double>(report.tasks);
    if (share > quarantine)
        throw StageFailed(fmt::format("{}: {} of {} tasks failed (limit {:.0f}%)", report.stage, report.failed.size(), report.tasks, quarantine * 100.0), report);
}

double mean(std::vector<double> const& values)
{
    if (values.empty())
        return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

json meansByKey(std::map<std::string, std::vector<double>> const& groups)
{
    auto out = json::object();
    for (auto const& [key, values]: groups)
        out[key] = mean(values);
    return out;
}

json histogram(std::map<std::string, int> const& counts)
{
    auto out = json::object();
    for (auto const& [key, count]: counts)
        out[key] = count;
    return out;
}

template <typename Sort>
std::vector<json> collectSorted(std::vector<TaskOutcome> const& outcomes, std::string const& field, Sort sort)
{
    auto out = std::vector<json> {};
    for (auto const& outcome: outcomes)
    {
        if (outcome.record.is_null() || outcome.record["status"] != "ok" || !outcome.record.contains(field))
            continue;
        auto const& value = outcome.record[field];
        if (value.is_null())
            continue;
        if (value.is_array())
            out.insert(out.end(), value.begin(), value.end());
        else
            out.push_back(value);
    }
    std::stable_sort(out.begin(), out.end(), sort);
    return out;
}

bool byTask(json const& a, json const& b)
{
    return a["task_id"].get<std::string>() < b["task_id"].get<std::string>();
}

bool byTaskThenN(json const& a, json const& b)
{
    auto const ka = std::tuple { a["task_id"].get<std::string>(), a.value("source_index", a.value("n", 0)), a.value("m", 0), a.value("k", 0) };
    auto const kb = std::tuple { b["task_id"].get<std::string>(), b.value("source_index", b.value("n", 0)), b.value("m", 0), b.value("k", 0) };
    return ka < kb;
}

/// Stage-1 aggregate metrics from its per-task outcome lines.
json stage1Metrics(std::vector<json> const& outcomes)
{
    auto bestM = std::map<std::string, int> {};
    auto difficulty = std::map<std::string, int> {};
    auto qBySplit = std::map<std::string, std::vector<double>> {};
    auto allQ = std::vector<double> {};
    auto matches = 0;
    auto labelled = 0;
    auto recovered = 0;
    auto cells = 0;
    auto rollouts = 0;
    for (auto const& o: outcomes)
    {
        if (o["status"] != "ok")
            continue;
        auto const m = o["best_m"].get<int>();
        ++bestM[levelKey(m)];
        if (!o["difficulty"].is_null())
        {
            auto const d = o["difficulty"].get<int>();
            ++difficulty[levelKey(d)];
            ++labelled;
            matches += static_cast<int>(d == m);
        }
        qBySplit[o["split"].get<std::string>()].push_back(o["best_q"].get<double>());
        allQ.push_back(o["best_q"].get<double>());
        recovered += static_cast<int>(o["rejections"].get<int>() > 0);
        cells += o["prefix_cells"].get<int>();
        rollouts += o["rollouts"].get<int>();
    }
    return {
        { "sft_examples", allQ.size() },
        { "best_m_histogram", histogram(bestM) },
        { "difficulty_histogram", histogram(difficulty) },
        { "best_m_matches_difficulty", matches },
        { "labelled_tasks", labelled },
        { "mean_best_q", mean(allQ) },
        { "mean_best_q_by_split", meansByKey(qBySplit) },
        { "tasks_with_rejected_generations", recovered },
        { "prefix_evaluations", cells },
        { "rollouts", rollouts },
    };
}

json stage2Metrics(std::vector<json> const& outcomes, DatasetManifest const* manifest)
{
    auto intra = 0;
    auto inter = 0;
    auto skipped = 0;
    auto discarded = 0;
    auto withInter = 0;
    auto modes = std::map<std::string, int> {};
    for (auto const& o: outcomes)
    {
        if (o["status"] != "ok")
            continue;
        intra += o["intra_pairs"].get<int>();
        inter += o["inter_pairs"].get<int>();
        skipped += static_cast<int>(!o["intra_skip"].is_null());
        discarded += o["discarded"].get<int>();
        withInter += static_cast<int>(o["inter_pairs"].get<int>() > 0);
        ++modes[levelKey(o["mode"].get<int>())];
    }
    auto out = json {
        { "intra_pairs", intra },
        { "inter_pairs", inter },
        { "tasks_with_inter_pairs", withInter },
        { "tasks_without_intra_pairs", skipped },
        { "mode_histogram", histogram(modes) },
        { "discarded_samples", discarded },
    };
    if (manifest)
        out["dpo_pairs"] = manifest->intra + manifest->inter;
    return out;
}

json evalMetrics(std::vector<json> const& results)
{
    auto rewards = std::vector<double> {};
    auto bySplit = std::map<std::string, std::vector<double>> {};
    auto levels = std::map<std::string, int> {};
    auto chars = std::int64_t { 0 };
    auto tokens = std::int64_t { 0 };
    auto planned = 0;
    for (auto const& r: results)
    {
        if (r["status"] != "ok")
            continue;
        for (auto const& reward: r["rewards"])
        {
            rewards.push_back(reward.get<double>());
            bySplit[r["split"].get<std::string>()].push_back(reward.get<double>());
        }
        ++levels[levelKey(r["levels"].get<int>())];
        chars += r["plan_chars"].get<std::int64_t>();
        tokens += r["plan_tokens"].get<std::int64_t>();
        planned += 1;
    }
    return {
        { "episodes", rewards.size() },
        { "mean_reward", mean(rewards) },
        { "mean_reward_by_split", meansByKey(bySplit) },
        { "levels_histogram", histogram(levels) },
        { "total_plan_chars", chars },
        { "total_plan_tokens", tokens },
        { "mean_plan_tokens", planned == 0 ? 0.0 : static_cast<double>(tokens) / planned },
    };
}

} // namespace

StageReport runStage1(PipelineConfig const& config, RunLimits limits)
{
    validateConfig(config);
    auto const started = Clock::now();
    auto const dir = config.outputDir / "stage1";
    std::filesystem::create_directories(dir);

    auto const tasks = readTaskSuite(config.suite);
    auto const actor = makeActor(config);
    auto const planner = makePlanner(config);
    auto const options = plannerOptions(config);

    auto report = StageReport {};
    report.stage = "stage1";
    report.fingerprint = stage1Fingerprint(config, *actor, *planner);

    auto cache = RolloutCache { dir / "rollouts.jsonl" };
    auto trajectories = std::unique_ptr<JsonlAppender> {};
    if (config.logTrajectories)
        trajectories = std::make_unique<JsonlAppender>(dir / "trajectories.jsonl");
    auto const ctx = EvalContext {
        .env = config.env,
        .actor = actor.get(),
        .masterSeed = config.seed,
        .renderMode = config.renderMode,
        .workers = config.rolloutWorkers,
        .cache = &cache,
        .trajectoryLog = trajectories.get(),
    };
    auto const selection = SelectionOptions { .literalFormula = config.literalSelection };

    auto const outcomes = runTasks(tasks, dir / "journal.jsonl", report.fingerprint, config.workers, limits, report.complete, [&](TaskInstance const& task) {
        auto const hint = task.params.contains("expert_trajectory") ? std::optional { task.param("expert_trajectory") } : std::nullopt;
        auto const batch = generateFixed(*planner, task, hint, config.M, config.N, options);
        auto const evaluation = evaluatePrefixes(task, batch.plans, config.K, ctx);
        auto const best = selectBest(evaluation.table, batch.plans, selection);
        auto const sft = buildSft(std::span { &task, 1 }, std::span { &best, 1 }).front();

        auto plans = json::array();
        for (auto const& plan: batch.plans)
            plans.push_back(toJson(plan));
        auto rejections = json::array();
        for (auto const& r: batch.rejections)
            rejections.push_back({ { "attempt", r.attempt }, { "reason", r.reason } });
        auto rollouts = json::array();
        for (auto const& r: evaluation.records)
            rollouts.push_back(toJson(r));

        return json {
            { "outcome",
              {
                  { "task_id", task.id },
                  { "status", "ok" },
                  { "split", toString(task.split) },
                  { "difficulty", task.difficulty ? json(*task.difficulty) : json(nullptr) },
                  { "best_n", best.bestN },
                  { "best_m", best.bestM },
                  { "best_q", best.bestQ },
                  { "tie_count", best.tieCount },
                  { "attempts", batch.attempts },
                  { "rejections", batch.rejections.size() },
                  { "prefix_cells", evaluation.table.q.size() },
                  { "rollouts", evaluation.records.size() },
              } },
            { "plans", plans },
            { "rejections", rejections },
            { "qtable", toJson(evaluation.table) },
            { "records", rollouts },
            { "selection", toJson(best) },
            { "sft", toJson(sft) },
            { "cache_hits", evaluation.cacheHits },
        };
    });

    tally(report, outcomes);
    report.cacheHits = cache.hits();
    report.cacheLookups = cache.hits() + cache.misses();
    if (!report.complete)
        return report;

    auto outcomeLines = std::vector<json> {};
    for (std::size_t i = 0; i < outcomes.size(); ++i)
    {
        auto const& record = outcomes[i].record;
        if (record["status"] == "ok")
            outcomeLines.push_back(record["outcome"]);
        else
            outcomeLines.push_back({ { "task_id", tasks[i].id }, { "status", "failed" }, { "error", record["error"] } });
    }
    std::stable_sort(outcomeLines.begin(), outcomeLines.end(), byTask);

    writeJsonlAtomic(dir / "outcomes.jsonl", outcomeLines);
    writeJsonlAtomic(dir / "plans.jsonl", collectSorted(outcomes, "plans", byTaskThenN));
    writeJsonlAtomic(dir / "qtables.jsonl", collectSorted(outcomes, "qtable", byTask));
    writeJsonlAtomic(dir / "records.jsonl", collectSorted(outcomes, "records", byTaskThenN));
    writeJsonlAtomic(dir / "selections.jsonl", collectSorted(outcomes, "selection", byTask));
    writeJsonlAtomic(dir / "sft.jsonl", collectSorted(outcomes, "sft", byTask));

    report.metrics = stage1Metrics(outcomeLines);
    finish(report, started, dir, config.quarantineFraction);
    return report;
}

namespace
{

struct Stage1Artifacts
{
    std::string fingerprint;
    std::map<std::string, QTable> tables;
    std::map<std::string, SelectionResult> selections;
    std::map<std::string, std::vector<HierarchicalPlan>> plans;
    std::vector<SftExample> sft;
};

Stage1Artifacts loadStage1(std::filesystem::path const& dir)
{
    for (auto const* name: { "report.json", "qtables.jsonl", "selections.jsonl", "plans.jsonl", "sft.jsonl" })
    {
        if (!std::filesystem::exists(dir / name))
            throw BadConfig(fmt::format("{} is missing; run stage1 first", (dir / name).string()));
    }
    auto out = Stage1Artifacts {};
    out.fingerprint = json::parse(readText(dir / "report.json")).value("fingerprint", "");
    for (auto const& r: readJsonl(dir / "qtables.jsonl"))
    {
        auto table = qtableFromJson(r);
        out.tables.emplace(table.taskId, std::move(table));
    }
    for (auto const& r: readJsonl(dir / "selections.jsonl"))
    {
        auto selection = selectionFromJson(r);
        out.selections.emplace(selection.taskId, std::move(selection));
    }
    for (auto const& r: readJsonl(dir / "plans.jsonl"))
    {
        auto plan = planFromJson(r);
        out.plans[plan.taskId].push_back(std::move(plan));
    }
    for (auto const& r: readJsonl(dir / "sft.jsonl"))
        out.sft.push_back(sftFromJson(r));
    return out;
}

std::vector<PreferencePair> pairsFrom(std::vector<TaskOutcome> const& outcomes, std::string const& field)
{
    auto out = std::vector<PreferencePair> {};
    for (auto const& outcome: outcomes)
    {
        if (outcome.record.is_null() || outcome.record["status"] != "ok")
            continue;
        for (auto const& pair: outcome.record[field])
            out.push_back(pairFromJson(pair));
    }
    std::stable_sort(out.begin(), out.end(), [](PreferencePair const& a, PreferencePair const& b) { return a.taskId < b.taskId; });
    return out;
}

} // namespace

StageReport runStage2(PipelineConfig const& config, RunLimits limits)
{
    validateConfig(config);
    auto const started = Clock::now();
    auto const stage1 = loadStage1(config.outputDir / "stage1");
    auto const dir = config.outputDir / "stage2";
    std::filesystem::create_directories(dir);

    auto const tasks = readTaskSuite(config.suite);
    auto const actor = makeActor(config);
    auto const planner = makePlanner(config);
    auto const options = plannerOptions(config);

    auto report = StageReport {};
    report.stage = "stage2";
    report.fingerprint = fingerprintOf({
        { "stage", "stage2" },
        { "stage1", stage1.fingerprint },
        { "env", config.env.fingerprint() },
        { "actor", actor->fingerprint() },
        { "planner", planner->fingerprint() },
        { "K", config.K },
        { "seed", config.seed },
        { "render", toString(config.renderMode) },
        { "margin", config.margin },
        { "intra_strategy", toString(config.intraStrategy) },
        { "sampling", config.sampling == StageSampling::Targeted ? "targeted" : "free" },
        { "samples", config.samples },
        { "temperature", config.sampleTemperature },
    });

    auto cache = RolloutCache { dir / "rollouts.jsonl" };
    auto trajectories = std::unique_ptr<JsonlAppender> {};
    if (config.logTrajectories)
        trajectories = std::make_unique<JsonlAppender>(dir / "trajectories.jsonl");
    auto const ctx = EvalContext {
        .env = config.env,
        .actor = actor.get(),
        .masterSeed = config.seed,
        .renderMode = config.renderMode,
        .workers = config.rolloutWorkers,
        .cache = &cache,
        .trajectoryLog = trajectories.get(),
    };

    auto const outcomes = runTasks(tasks, dir / "journal.jsonl", report.fingerprint, config.workers, limits, report.complete, [&](TaskInstance const& task) {
        auto const table = stage1.tables.find(task.id);
        auto const selection = stage1.selections.find(task.id);
        auto const plans = stage1.plans.find(task.id);
        if (table == stage1.tables.end() || selection == stage1.selections.end() || plans == stage1.plans.end())
            throw Error(fmt::format("task {} has no stage-1 result", task.id));

        auto const intra = buildIntra(task, table->second, selection->second, plans->second, config.intraStrategy, config.seed);

        auto const sampled = config.sampling == StageSampling::Targeted
            ? samplePlans(*planner, task, selection->second.bestM, config.samples, config.sampleTemperature, options)
            : sampleFree(*planner, task, config.samples, config.sampleTemperature, options);
        auto const filtered = modeFilter(sampled.plans);

        auto inter = std::vector<PreferencePair> {};
        auto evaluation = json(nullptr);
        if (filtered.kept.size() >= 2)
        {
            auto const pe = evaluatePlans(task, filtered.kept, config.K, ctx);
            inter = buildInter(task, pe, filtered.kept, config.margin);
            evaluation = toJson(pe);
        }

        auto intraJson = json::array();
        for (auto const& p: intra.pairs)
            intraJson.push_back(toJson(p));
        auto interJson = json::array();
        for (auto const& p: inter)
            interJson.push_back(toJson(p));
        auto samples = json::array();
        for (auto const& p: sampled.plans)
            samples.push_back(toJson(p));

        return json {
            { "outcome",
              {
                  { "task_id", task.id },
                  { "status", "ok" },
                  { "intra_pairs", intra.pairs.size() },
                  { "intra_skip", intra.skip ? json(intra.skip->reason) : json(nullptr) },
                  { "sampled", sampled.plans.size() },
                  { "mode", filtered.mode },
                  { "kept", filtered.kept.size() },
                  { "discarded", filtered.discarded.size() },
                  { "inter_pairs", inter.size() },
              } },
            { "intra", intraJson },
            { "inter", interJson },
            { "samples", samples },
            { "evaluation", evaluation },
        };
    });

    tally(report, outcomes);
    report.cacheHits = cache.hits();
    report.cacheLookups = cache.hits() + cache.misses();
    if (!report.complete)
        return report;

    auto outcomeLines = std::vector<json> {};
    for (std::size_t i = 0; i < outcomes.size(); ++i)
    {
        auto const& record = outcomes[i].record;
        if (record["status"] == "ok")
            outcomeLines.push_back(record["outcome"]);
        else
            outcomeLines.push_back({ { "task_id", tasks[i].id }, { "status", "failed" }, { "error", record["error"] } });
    }
    std::stable_sort(outcomeLines.begin(), outcomeLines.end(), byTask);

    auto intra = pairsFrom(outcomes, "intra");
    auto inter = pairsFrom(outcomes, "inter");
    auto lines = [](std::vector<PreferencePair> const& pairs) {
        auto out = std::vector<json> {};
        for (auto const& p: pairs)
            out.push_back(toJson(p));
        return out;
    };
    auto const intraLines = lines(intra);
    auto const interLines = lines(inter);

    writeJsonlAtomic(dir / "outcomes.jsonl", outcomeLines);
    writeJsonlAtomic(dir / "intra.jsonl", intraLines);
    writeJsonlAtomic(dir / "inter.jsonl", interLines);
    writeJsonlAtomic(dir / "evaluations.jsonl", collectSorted(outcomes, "evaluation", byTask));

    auto exportOptions = ExportOptions {
        .ablation = config.ablation,
        .margin = config.margin,
        .seed = config.seed,
        .sources = { { "stage1", stage1.fingerprint }, { "stage2", report.fingerprint } },
    };
    auto const manifest = mergeAndExport(config.outputDir / "dataset", stage1.sft, std::move(intra), std::move(inter), exportOptions);

    report.metrics = stage2Metrics(outcomeLines, &manifest);
    finish(report, started, dir, config.quarantineFraction);
    return report;
}

std::filesystem::path evalDirectory(PipelineConfig const& config)
{
    auto const suffix = config.renderMode == RenderMode::LastLevel ? "-last-level" : "";
    return config.outputDir / "eval" / fmt::format("{}-{}{}", config.evalMode, config.evalSplit, suffix);
}

namespace
{

struct EvalMode
{
    enum class Kind
    {
        Adaptive,
        Fixed,
        None,
        Base,
    } kind;
    int levels = 0;
};

EvalMode parseEvalMode(std::string const& text, int M)
{
    if (text == "adaptive")
        return { EvalMode::Kind::Adaptive };
    if (text == "none")
        return { EvalMode::Kind::None };
    if (text == "base")
        return { EvalMode::Kind::Base };
    if (text.rfind("fix-", 0) == 0)
    {
        auto levels = 0;
        auto const digits = text.substr(4);
        auto const* end = digits.data() + digits.size();
        auto const [ptr, ec] = std::from_chars(digits.data(), end, levels);
        if (ec == std::errc {} && ptr == end && levels >= 1 && levels <= M)
            return { EvalMode::Kind::Fixed, levels };
        throw BadConfig(fmt::format("eval mode '{}' needs a level between 1 and M = {}", text, M));
    }
    throw BadConfig(fmt::format("unknown eval mode '{}' (adaptive, fix-<j>, none, base)", text));
}

std::size_t tokenCount(std::string const& text)
{
    auto count = std::size_t { 0 };
    auto inWord = false;
    for (auto const c: text)
    {
        auto const space = std::isspace(static_cast<unsigned char>(c)) != 0;
        count += static_cast<std::size_t>(!space && !inWord);
        inWord = !space;
    }
    return count;
}

} // namespace

StageReport runEval(PipelineConfig const& config, RunLimits limits)
{
    validateConfig(config);
    auto const mode = parseEvalMode(config.evalMode, config.M);
    auto const started = Clock::now();
    auto const dir = evalDirectory(config);
    std::filesystem::create_directories(dir);

    auto const tasks = selectSplit(readTaskSuite(config.suite), config.evalSplit);
    auto const actor = makeActor(config);
    auto const planner = makePlanner(config);
    auto const options = plannerOptions(config);

    auto report = StageReport {};
    report.stage = "eval";
    report.fingerprint = fingerprintOf({
        { "stage", "eval" },
        { "suite", hex64(fnv1a64(readText(config.suite))) },
        { "env", config.env.fingerprint() },
        { "actor", actor->fingerprint() },
        { "planner", planner->fingerprint() },
        { "M", config.M },
        { "seed", config.seed },
        { "mode", config.evalMode },
        { "split", config.evalSplit },
        { "repetitions", config.repetitions },
        { "render", toString(config.renderMode) },
    });

    auto trajectories = std::unique_ptr<JsonlAppender> {};
    if (config.logTrajectories)
        trajectories = std::make_unique<JsonlAppender>(dir / "trajectories.jsonl");

    auto const outcomes = runTasks(tasks, dir / "journal.jsonl", report.fingerprint, config.workers, limits, report.complete, [&](TaskInstance const& task) {
        auto plan = std::optional<HierarchicalPlan> {};
        switch (mode.kind)
        {
            case EvalMode::Kind::Adaptive: plan = generateAdaptive(*planner, task, options); break;
            case EvalMode::Kind::Base: plan = generateBase(*planner, task, options); break;
            case EvalMode::Kind::Fixed:
            {
                auto const hint = task.params.contains("expert_trajectory") ? std::optional { task.param("expert_trajectory") } : std::nullopt;
                plan = prefix(generateFixed(*planner, task, hint, config.M, 1, options).plans.front(), mode.levels);
                break;
            }
            case EvalMode::Kind::None: break;
        }
        auto const rendered = plan ? render(*plan, config.renderMode) : std::string {};

        auto rewards = json::array();
        auto seeds = json::array();
        auto values = std::vector<double> {};
        for (auto rep = 0; rep < config.repetitions; ++rep)
        {
            auto const seed = deriveSeed(config.seed, task.id + ":eval", { rep });
            auto const trajectory = runEpisode(config.env, task, *actor, rendered, seed);
            if (trajectories)
                trajectories->append(toJson(trajectory));
            rewards.push_back(trajectory.reward);
            seeds.push_back(seed);
            values.push_back(trajectory.reward);
        }

        return json {
            { "result",
              {
                  { "task_id", task.id },
                  { "status", "ok" },
                  { "split", toString(task.split) },
                  { "difficulty", task.difficulty ? json(*task.difficulty) : json(nullptr) },
                  { "mode", config.evalMode },
                  { "levels", plan ? plan->depth() : 0 },
                  { "plan_chars", rendered.size() },
                  { "plan_tokens", tokenCount(rendered) },
                  { "plan", plan ? toJson(*plan) : json(nullptr) },
                  { "rewards", rewards },
                  { "seeds", seeds },
                  { "mean_reward", mean(values) },
              } },
        };
    });

    tally(report, outcomes);
    if (!report.complete)
        return report;

    auto results = std::vector<json> {};
    for (std::size_t i = 0; i < outcomes.size(); ++i)
    {
        auto const& record = outcomes[i].record;
        if (record["status"] == "ok")
            results.push_back(record["result"]);
        else
            results.push_back({ { "task_id", tasks[i].id }, { "status", "failed" }, { "error", record["error"] } });
    }
    std::stable_sort(results.begin(), results.end(), byTask);
    writeJsonlAtomic(dir / "results.jsonl", results);

    report.metrics = evalMetrics(results);
    finish(report, started, dir, config.quarantineFraction);
    return report;
}

namespace
{

void compareMetrics(AuditResult& audit, json const& expected, json const& actual, std::string const& path = "metrics")
{
    if (expected.is_object() && actual.is_object())
    {
        auto keys = std::set<std::string> {};
        for (auto const& [k, v]: expected.items())
            keys.insert(k);
        for (auto const& [k, v]: actual.items())
            keys.insert(k);
        for (auto const& k: keys)
        {
            if (!expected.contains(k) || !actual.contains(k))
            {
                audit.problems.push_back(fmt::format("{}.{} present on one side only", path, k));
                continue;
            }
            compareMetrics(audit, expected[k], actual[k], path + "." + k);
        }
        return;
    }
    if (expected.is_number() && actual.is_number())
    {
        auto const a = expected.get<double>();
        auto const b = actual.get<double>();
        if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(a)))
            audit.problems.push_back(fmt::format("{}: report says {}, records give {}", path, a, b));
        return;
    }
    if (expected != actual)
        audit.problems.push_back(fmt::format("{}: report says {}, records give {}", path, expected.dump(), actual.dump()));
}

std::size_t lineCount(std::filesystem::path const& path)
{
    return std::filesystem::exists(path) ? readJsonl(path).size() : 0;
}

void auditStage1(AuditResult& audit, std::filesystem::path const& dir)
{
    auto recordsByTask = std::map<std::string, std::vector<RolloutRecord>> {};
    for (auto const& r: readJsonl(dir / "records.jsonl"))
    {
        auto record = rolloutFromJson(r);
        recordsByTask[record.taskId].push_back(std::move(record));
    }
    auto outcomes = std::map<std::string, json> {};
    auto outcomeLines = readJsonl(dir / "outcomes.jsonl");
    for (auto const& o: outcomeLines)
        outcomes[o["task_id"].get<std::string>()] = o;

    for (auto const& r: readJsonl(dir / "qtables.jsonl"))
    {
        auto const stored = qtableFromJson(r);
        auto const recomputed = aggregate(stored.taskId, stored.K, recordsByTask[stored.taskId]);
        for (auto const& [cell, q]: stored.q)
        {
            auto const it = recomputed.q.find(cell);
            if (it == recomputed.q.end() || std::abs(it->second - q) > 1e-12)
                audit.problems.push_back(fmt::format("task {}: Q({}, {}) = {} does not match its rollout records", stored.taskId, cell.first, cell.second, q));
        }
        if (recomputed.q.size() != stored.q.size())
            audit.problems.push_back(fmt::format("task {}: {} cells stored, {} recomputed", stored.taskId, stored.q.size(), recomputed.q.size()));

        auto const choice = selectCell(recomputed);
        auto const& o = outcomes[stored.taskId];
        if (o.is_null() || o["best_n"] != choice.n || o["best_m"] != choice.m)
            audit.problems.push_back(fmt::format("task {}: recorded selection differs from the best cell ({}, {})", stored.taskId, choice.n, choice.m));
    }

    for (auto const& r: readJsonl(dir / "selections.jsonl"))
    {
        auto const s = selectionFromJson(r);
        auto const& o = outcomes[s.taskId];
        if (o.is_null() || o["best_n"] != s.bestN || o["best_m"] != s.bestM || s.pBest.depth() != s.bestM)
            audit.problems.push_back(fmt::format("task {}: selection file disagrees with outcomes", s.taskId));
    }
    auto const sft = lineCount(dir / "sft.jsonl");
    audit.recomputed = stage1Metrics(outcomeLines);
    if (audit.recomputed["sft_examples"].get<std::size_t>() != sft)
        audit.problems.push_back(fmt::format("sft.jsonl has {} lines, outcomes give {}", sft, audit.recomputed["sft_examples"].get<std::size_t>()));
}

void auditStage2(AuditResult& audit, std::filesystem::path const& dir)
{
    auto const outcomeLines = readJsonl(dir / "outcomes.jsonl");
    auto const datasetDir = dir.parent_path() / "dataset";
    auto const manifestJson = json::parse(readText(datasetDir / "manifest.json"));

    auto manifest = DatasetManifest {};
    manifest.intra = manifestJson["counts"]["intra"].get<std::size_t>();
    manifest.inter = manifestJson["counts"]["inter"].get<std::size_t>();
    audit.recomputed = stage2Metrics(outcomeLines, &manifest);

    auto const intra = lineCount(dir / "intra.jsonl");
    auto const inter = lineCount(dir / "inter.jsonl");
    if (audit.recomputed["intra_pairs"].get<std::size_t>() != intra)
        audit.problems.push_back(fmt::format("intra.jsonl has {} lines, outcomes give {}", intra, audit.recomputed["intra_pairs"].get<std::size_t>()));
    if (audit.recomputed["inter_pairs"].get<std::size_t>() != inter)
        audit.problems.push_back(fmt::format("inter.jsonl has {} lines, outcomes give {}", inter, audit.recomputed["inter_pairs"].get<std::size_t>()));

    auto const ablation = ablationFromString(manifestJson["ablation"].get<std::string>());
    auto const expectIntra = ablation == Ablation::NoIntra ? 0 : intra;
    auto const expectInter = ablation == Ablation::NoInter ? 0 : inter;
    if (manifest.intra != expectIntra || manifest.inter != expectInter)
        audit.problems.push_back(fmt::format("manifest counts {}/{} differ from stage files {}/{} under {}", manifest.intra, manifest.inter, expectIntra, expectInter, toString(ablation)));

    auto const pairs = auditPairs(datasetDir / "dpo.jsonl", manifestJson["margin"].get<double>());
    audit.problems.insert(audit.problems.end(), pairs.problems.begin(), pairs.problems.end());
    audit.recomputed["dpo_audit"] = pairs.recomputed;

    for (auto const& [name, hash]: manifestJson["files"].items())
    {
        if (hex64(fnv1a64(readText(datasetDir / name))) != hash.get<std::string>())
            audit.problems.push_back(fmt::format("dataset file {} does not match its manifest hash", name));
    }
}

void auditEval(AuditResult& audit, std::filesystem::path const& dir)
{
    auto const results = readJsonl(dir / "results.jsonl");
    for (auto const& r: results)
    {
        if (r["status"] != "ok")
            continue;
        auto values = std::vector<double> {};
        for (auto const& v: r["rewards"])
            values.push_back(v.get<double>());
        if (std::abs(mean(values) - r["mean_reward"].get<double>()) > 1e-12)
            audit.problems.push_back(fmt::format("task {}: mean_reward differs from its rewards", r["task_id"].get<std::string>()));
        auto const levels = r["plan"].is_null() ? 0 : planFromJson(r["plan"]).depth();
        if (levels != r["levels"].get<int>())
            audit.problems.push_back(fmt::format("task {}: level count differs from its plan", r["task_id"].get<std::string>()));
    }
    audit.recomputed = evalMetrics(results);
}

} // namespace

AuditResult auditReport(std::filesystem::path const& dir)
{
    auto audit = AuditResult {};
    try
    {
        auto const report = json::parse(readText(dir / "report.json"));
        auto const stage = report["stage"].get<std::string>();
        if (stage == "stage1")
            auditStage1(audit, dir);
        else if (stage == "stage2")
            auditStage2(audit, dir);
        else if (stage == "eval")
            auditEval(audit, dir);
        else
            audit.problems.push_back(fmt::format("unknown stage '{}'", stage));
        if (audit.problems.empty() || !audit.recomputed.empty())
        {
            auto recomputed = audit.recomputed;
            recomputed.erase("dpo_audit");
            compareMetrics(audit, report["metrics"], recomputed);
        }
        auto const outcomes = readJsonl(dir / (stage == "eval" ? "results.jsonl" : "outcomes.jsonl"));
        auto failed = std::size_t { 0 };
        for (auto const& o: outcomes)
            failed += static_cast<std::size_t>(o["status"] != "ok");
        if (report["tasks"].get<std::size_t>() != outcomes.size() || report["failed"].size() != failed)
            audit.problems.push_back("task or failure counts differ from the per-task records");
    }
    catch (std::exception const& e)
    {
        audit.problems.push_back(e.what());
    }
    audit.ok = audit.problems.empty();
    return audit;
}

AuditResult auditPairs(std::filesystem::path const& dpoFile, double margin)
{
    auto audit = AuditResult {};
    auto intra = 0;
    auto inter = 0;
    auto line = 0;
    try
    {
        for (auto const& record: readJsonl(dpoFile))
        {
            ++line;
            auto const pair = pairFromDpoRecord(record);
            auto const chosen = parsePlan(pair.chosen).plan;
            auto const rejected = parsePlan(pair.rejected).plan;
            auto problem = [&](std::string const& what) { audit.problems.push_back(fmt::format("{} line {}: {}", dpoFile.filename().string(), line, what)); };

            if (chosen.depth() != pair.chosenCoords.second || rejected.depth() != pair.rejectedCoords.second)
                problem("level counts disagree with the recorded coordinates");
            if (pair.kind == PairKind::Intra)
            {
                ++intra;
                if (chosen.depth() == rejected.depth())
                    problem("intra pair with equal level counts");
                if (pair.chosenCoords.first == pair.rejectedCoords.first)
                    problem("intra pair drawn from the same source plan");
                if (pair.chosen.starts_with(pair.rejected) || pair.rejected.starts_with(pair.chosen))
                    problem("intra pair where one plan is a prefix of the other");
            }
            else
            {
                ++inter;
                if (chosen.depth() != rejected.depth())
                    problem("inter pair with different level counts");
                if (pair.chosenCoords.first == pair.rejectedCoords.first)
                    problem("inter pair drawn from the same plan");
                if (!(pair.qChosen > pair.qRejected + margin))
                    problem(fmt::format("inter pair gap {} does not exceed margin {}", pair.qChosen - pair.qRejected, margin));
            }
        }
    }
    catch (std::exception const& e)
    {
        audit.problems.push_back(e.what());
    }
    audit.recomputed = { { "intra", intra }, { "inter", inter }, { "lines", line } };
    audit.ok = audit.problems.empty();
    return audit;
}

} // namespace hplan
