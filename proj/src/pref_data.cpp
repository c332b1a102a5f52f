// SPDX-License-Identifier: Apache-2.0
#include <hplan/hashing.hpp>
#include <hplan/pref_data.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <random>

namespace hplan
{

namespace
{

json coordsJson(Cell cell, double q)
{
    return { { "n", cell.first }, { "m", cell.second }, { "q", q } };
}

Cell coordsFrom(json const& j)
{
    return { j.at("n").get<int>(), j.at("m").get<int>() };
}

bool startsWith(std::string const& s, std::string const& p)
{
    return s.size() >= p.size() && std::equal(p.begin(), p.end(), s.begin());
}

/// Identical texts, or one a literal prefix of the other.
bool sharesPrefix(std::string const& a, std::string const& b)
{
    return startsWith(a, b) || startsWith(b, a);
}

HierarchicalPlan const& planByIndex(std::vector<HierarchicalPlan> const& plans, int n, std::string const& taskId)
{
    auto const it = std::ranges::find(plans, n, &HierarchicalPlan::sourceIndex);
    if (it == plans.end())
        throw OutOfRange(fmt::format("task {}: no plan with index {}", taskId, n));
    return *it;
}

auto pairOrder(PreferencePair const& p)
{
    return std::tuple { p.taskId, static_cast<int>(p.kind), p.chosenCoords, p.rejectedCoords };
}

} // namespace

json toJson(SftExample const& e)
{
    return { { "task_id", e.taskId }, { "instruction", e.instruction }, { "output", e.target }, { "best_m", e.bestM } };
}

SftExample sftFromJson(json const& j)
{
    return SftExample {
        .taskId = j.value("task_id", std::string {}),
        .instruction = j.at("instruction").get<std::string>(),
        .target = j.at("output").get<std::string>(),
        .bestM = j.value("best_m", 0),
    };
}

std::string_view toString(PairKind kind)
{
    return kind == PairKind::Intra ? "intra" : "inter";
}

PairKind pairKindFromString(std::string_view text)
{
    if (text == "intra")
        return PairKind::Intra;
    if (text == "inter")
        return PairKind::Inter;
    throw BadConfig(fmt::format("unknown pair kind '{}'", text));
}

json toJson(PreferencePair const& p)
{
    return toDpoRecord(p);
}

PreferencePair pairFromJson(json const& j)
{
    return pairFromDpoRecord(j);
}

json toDpoRecord(PreferencePair const& p)
{
    return {
        { "prompt", p.instruction },
        { "chosen", p.chosen },
        { "rejected", p.rejected },
        { "kind", toString(p.kind) },
        { "meta", { { "task_id", p.taskId }, { "chosen", coordsJson(p.chosenCoords, p.qChosen) }, { "rejected", coordsJson(p.rejectedCoords, p.qRejected) } } },
    };
}

PreferencePair pairFromDpoRecord(json const& j)
{
    auto const& meta = j.at("meta");
    return PreferencePair {
        .taskId = meta.at("task_id").get<std::string>(),
        .instruction = j.at("prompt").get<std::string>(),
        .chosen = j.at("chosen").get<std::string>(),
        .rejected = j.at("rejected").get<std::string>(),
        .kind = pairKindFromString(j.at("kind").get<std::string>()),
        .chosenCoords = coordsFrom(meta.at("chosen")),
        .rejectedCoords = coordsFrom(meta.at("rejected")),
        .qChosen = meta.at("chosen").at("q").get<double>(),
        .qRejected = meta.at("rejected").at("q").get<double>(),
    };
}

std::vector<SftExample> buildSft(std::span<TaskInstance const> tasks, std::span<SelectionResult const> selections)
{
    auto out = std::vector<SftExample> {};
    out.reserve(selections.size());
    for (auto const& s: selections)
    {
        auto const task = std::ranges::find(tasks, s.taskId, &TaskInstance::id);
        if (task == tasks.end())
            throw UnknownTask(fmt::format("selection for unknown task {}", s.taskId));
        out.push_back({ s.taskId, task->instruction, render(s.pBest, RenderMode::Hierarchical), s.bestM });
    }
    return out;
}

std::string_view toString(IntraStrategy strategy)
{
    switch (strategy)
    {
        case IntraStrategy::All: return "all";
        case IntraStrategy::Hardest: return "hardest";
        case IntraStrategy::RandomOne: return "random-one";
    }
    return "hardest";
}

IntraStrategy intraStrategyFromString(std::string_view text)
{
    for (auto s: { IntraStrategy::All, IntraStrategy::Hardest, IntraStrategy::RandomOne })
    {
        if (toString(s) == text)
            return s;
    }
    throw BadConfig(fmt::format("unknown intra strategy '{}'", text));
}

IntraResult buildIntra(TaskInstance const& task,
                       QTable const& table,
                       SelectionResult const& selection,
                       std::vector<HierarchicalPlan> const& plans,
                       IntraStrategy strategy,
                       std::uint64_t seed)
{
    auto const n = selection.bestN;
    auto const m = selection.bestM;
    auto const chosen = render(selection.pBest, RenderMode::Hierarchical);

    auto candidates = std::vector<PreferencePair> {};
    for (auto const& [cell, q]: table.q)
    {
        auto const [n2, m2] = cell;
        if (n2 == n || m2 == m)
            continue;
        auto rejected = render(prefix(planByIndex(plans, n2, task.id), m2), RenderMode::Hierarchical);
        if (sharesPrefix(chosen, rejected))
            continue;
        candidates.push_back(PreferencePair {
            .taskId = task.id,
            .instruction = task.instruction,
            .chosen = chosen,
            .rejected = std::move(rejected),
            .kind = PairKind::Intra,
            .chosenCoords = { n, m },
            .rejectedCoords = cell,
            .qChosen = selection.bestQ,
            .qRejected = q,
        });
    }

    auto result = IntraResult {};
    if (candidates.empty())
    {
        auto const reason = table.planCount() < 2 ? "no plan index other than the chosen one" : "every candidate shares a rendered prefix with the chosen plan";
        result.skip = SkipReport { task.id, reason };
        return result;
    }

    switch (strategy)
    {
        case IntraStrategy::All:
            result.pairs = std::move(candidates);
            break;
        case IntraStrategy::Hardest:
        {
            // Candidates arrive in (n', m') order, so the first maximum per m' has the lowest n'.
            auto best = std::map<int, PreferencePair const*> {};
            for (auto const& c: candidates)
            {
                auto& slot = best[c.rejectedCoords.second];
                if (!slot || c.qRejected > slot->qRejected)
                    slot = &c;
            }
            for (auto const& [_, c]: best)
                result.pairs.push_back(*c);
            break;
        }
        case IntraStrategy::RandomOne:
        {
            auto rng = std::mt19937_64 { deriveSeed(seed, "intra:" + task.id) };
            result.pairs.push_back(candidates[uniformBelow(rng, candidates.size())]);
            break;
        }
    }
    return result;
}

ModeFilterResult modeFilter(std::vector<HierarchicalPlan> const& plans)
{
    if (plans.empty())
        throw BadConfig("mode filter needs at least one plan");
    auto counts = std::map<int, int> {};
    for (auto const& plan: plans)
        ++counts[plan.depth()];

    auto result = ModeFilterResult {};
    auto bestCount = 0;
    for (auto const& [depth, count]: counts)
    {
        if (count > bestCount)
        {
            result.mode = depth;
            bestCount = count;
        }
    }
    for (auto const& plan: plans)
        (plan.depth() == result.mode ? result.kept : result.discarded).push_back(plan);
    return result;
}

std::vector<PreferencePair> buildInter(TaskInstance const& task,
                                       PlanEvaluation const& evaluation,
                                       std::vector<HierarchicalPlan> const& plans,
                                       double margin)
{
    auto out = std::vector<PreferencePair> {};
    for (auto const& [n, q]: evaluation.q)
    {
        for (auto const& [n2, q2]: evaluation.q)
        {
            if (n == n2 || !(q > q2 + margin))
                continue;
            auto const& a = planByIndex(plans, n, task.id);
            auto const& b = planByIndex(plans, n2, task.id);
            if (a.depth() != b.depth())
                throw BadConfig(fmt::format("task {}: inter pair across depths {} and {}", task.id, a.depth(), b.depth()));
            auto chosen = render(a, RenderMode::Hierarchical);
            auto rejected = render(b, RenderMode::Hierarchical);
            if (chosen == rejected)
                continue;
            out.push_back(PreferencePair {
                .taskId = task.id,
                .instruction = task.instruction,
                .chosen = std::move(chosen),
                .rejected = std::move(rejected),
                .kind = PairKind::Inter,
                .chosenCoords = { n, a.depth() },
                .rejectedCoords = { n2, b.depth() },
                .qChosen = q,
                .qRejected = q2,
            });
        }
    }
    return out;
}

std::string_view toString(Ablation ablation)
{
    switch (ablation)
    {
        case Ablation::Full: return "full";
        case Ablation::NoIntra: return "no_intra";
        case Ablation::NoInter: return "no_inter";
    }
    return "full";
}

Ablation ablationFromString(std::string_view text)
{
    for (auto a: { Ablation::Full, Ablation::NoIntra, Ablation::NoInter })
    {
        if (toString(a) == text)
            return a;
    }
    throw BadConfig(fmt::format("unknown ablation '{}'", text));
}

json toJson(DatasetManifest const& m)
{
    return {
        { "counts", { { "sft", m.sft }, { "intra", m.intra }, { "inter", m.inter }, { "dpo", m.intra + m.inter } } },
        { "ablation", toString(m.ablation) },
        { "margin", m.margin },
        { "seed", m.seed },
        { "sources", m.sources },
        { "files", m.files },
    };
}

DatasetManifest mergeAndExport(std::filesystem::path const& dir,
                               std::vector<SftExample> const& sft,
                               std::vector<PreferencePair> intra,
                               std::vector<PreferencePair> inter,
                               ExportOptions const& options)
{
    if (options.ablation == Ablation::NoIntra)
        intra.clear();
    if (options.ablation == Ablation::NoInter)
        inter.clear();

    for (auto const& p: intra)
    {
        if (p.kind != PairKind::Intra || p.chosenCoords.first == p.rejectedCoords.first || p.chosenCoords.second == p.rejectedCoords.second
            || sharesPrefix(p.chosen, p.rejected))
            throw Error(fmt::format("task {}: intra pair violates the level-preference constraint", p.taskId));
    }
    for (auto const& p: inter)
    {
        if (p.kind != PairKind::Inter || p.chosenCoords.second != p.rejectedCoords.second || p.chosenCoords.first == p.rejectedCoords.first
            || !(p.qChosen > p.qRejected + options.margin) || p.chosen == p.rejected)
            throw Error(fmt::format("task {}: inter pair violates the quality-preference constraint", p.taskId));
    }

    auto sortedSft = sft;
    std::ranges::sort(sortedSft, {}, &SftExample::taskId);

    auto dpo = std::vector<PreferencePair> {};
    dpo.reserve(intra.size() + inter.size());
    dpo.insert(dpo.end(), intra.begin(), intra.end());
    dpo.insert(dpo.end(), inter.begin(), inter.end());
    std::ranges::sort(dpo, {}, pairOrder);

    // Fisher-Yates on our own uniform draw; std::shuffle's output differs between standard libraries.
    auto rng = std::mt19937_64 { deriveSeed(options.seed, "dpo-shuffle") };
    for (auto i = dpo.size(); i > 1; --i)
        std::swap(dpo[i - 1], dpo[uniformBelow(rng, i)]);

    auto sftText = std::string {};
    for (auto const& e: sortedSft)
        sftText += json { { "instruction", e.instruction }, { "output", e.target } }.dump() + "\n";
    auto dpoText = std::string {};
    for (auto const& p: dpo)
        dpoText += toDpoRecord(p).dump() + "\n";

    auto manifest = DatasetManifest {
        .sft = sortedSft.size(),
        .intra = intra.size(),
        .inter = inter.size(),
        .ablation = options.ablation,
        .margin = options.margin,
        .seed = options.seed,
        .sources = options.sources,
        .files = {
            { options.sftFile, hex64(fnv1a64(sftText)) },
            { options.dpoFile, hex64(fnv1a64(dpoText)) },
        },
    };

    auto written = std::vector<std::filesystem::path> {};
    try
    {
        std::filesystem::create_directories(dir);
        for (auto const& [name, text]: { std::pair { options.sftFile, &sftText }, { options.dpoFile, &dpoText } })
        {
            writeTextAtomic(dir / name, *text);
            written.push_back(dir / name);
        }
        writeTextAtomic(dir / options.manifestFile, toJson(manifest).dump(2) + "\n");
    }
    catch (std::exception const& e)
    {
        for (auto const& path: written)
        {
            auto ec = std::error_code {};
            std::filesystem::remove(path, ec);
        }
        throw IoError(fmt::format("dataset export to {} failed: {}", dir.string(), e.what()));
    }
    return manifest;
}

} // namespace hplan
