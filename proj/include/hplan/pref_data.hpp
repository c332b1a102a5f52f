// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/env.hpp>
#include <hplan/mc_eval.hpp>
#include <hplan/plan.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hplan
{

struct SftExample
{
    std::string taskId;
    std::string instruction;
    /// Hierarchical rendering of p_best.
    std::string target;
    int bestM = 1;

    bool operator==(SftExample const&) const = default;
};

[[nodiscard]] json toJson(SftExample const& example);
[[nodiscard]] SftExample sftFromJson(json const& record);

enum class PairKind
{
    Intra,
    Inter,
};

[[nodiscard]] std::string_view toString(PairKind kind);
[[nodiscard]] PairKind pairKindFromString(std::string_view text);

struct PreferencePair
{
    std::string taskId;
    std::string instruction;
    std::string chosen;
    std::string rejected;
    PairKind kind = PairKind::Intra;
    Cell chosenCoords;
    Cell rejectedCoords;
    double qChosen = 0.0;
    double qRejected = 0.0;

    bool operator==(PreferencePair const&) const = default;
};

/// Internal record form, with every field.
[[nodiscard]] json toJson(PreferencePair const& pair);
[[nodiscard]] PreferencePair pairFromJson(json const& record);

/// DPO export line: {prompt, chosen, rejected, kind, meta}.
[[nodiscard]] json toDpoRecord(PreferencePair const& pair);
[[nodiscard]] PreferencePair pairFromDpoRecord(json const& record);

struct SkipReport
{
    std::string taskId;
    std::string reason;
};

/// One example per selection, in selection order. Throws UnknownTask for a selection without a task.
[[nodiscard]] std::vector<SftExample> buildSft(std::span<TaskInstance const> tasks, std::span<SelectionResult const> selections);

enum class IntraStrategy
{
    All,
    Hardest,
    RandomOne,
};

[[nodiscard]] std::string_view toString(IntraStrategy strategy);
[[nodiscard]] IntraStrategy intraStrategyFromString(std::string_view text);

struct IntraResult
{
    std::vector<PreferencePair> pairs;
    /// Set when no valid rejected plan exists (N = 1, or every candidate shares a rendered prefix).
    std::optional<SkipReport> skip;
};

/// Chosen is p_best = (n, m); rejected candidates are (n', m') with m' != m and n' != n.
/// Hardest keeps one candidate per m', the highest-Q n' (lowest n' on ties). RandomOne keeps
/// one candidate for the task, drawn with `seed`.
[[nodiscard]] IntraResult buildIntra(TaskInstance const& task,
                                     QTable const& table,
                                     SelectionResult const& selection,
                                     std::vector<HierarchicalPlan> const& plans,
                                     IntraStrategy strategy = IntraStrategy::Hardest,
                                     std::uint64_t seed = 0);

struct ModeFilterResult
{
    int mode = 0;
    std::vector<HierarchicalPlan> kept;
    std::vector<HierarchicalPlan> discarded;
};

/// Modal level count, ties toward the smaller count. Throws BadConfig on an empty list.
[[nodiscard]] ModeFilterResult modeFilter(std::vector<HierarchicalPlan> const& plans);

/// Every ordered (n, n') with Q(n) > Q(n') + margin.
[[nodiscard]] std::vector<PreferencePair> buildInter(TaskInstance const& task,
                                                     PlanEvaluation const& evaluation,
                                                     std::vector<HierarchicalPlan> const& plans,
                                                     double margin = 0.0);

enum class Ablation
{
    Full,
    NoIntra,
    NoInter,
};

[[nodiscard]] std::string_view toString(Ablation ablation);
[[nodiscard]] Ablation ablationFromString(std::string_view text);

struct ExportOptions
{
    Ablation ablation = Ablation::Full;
    double margin = 0.0;
    std::uint64_t seed = 0;
    /// Named fingerprints of the stages that produced the inputs.
    std::map<std::string, std::string> sources;
    std::string sftFile = "sft.jsonl";
    std::string dpoFile = "dpo.jsonl";
    std::string manifestFile = "manifest.json";
};

struct DatasetManifest
{
    std::size_t sft = 0;
    std::size_t intra = 0;
    std::size_t inter = 0;
    Ablation ablation = Ablation::Full;
    double margin = 0.0;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> sources;
    /// File name to FNV-1a hash of its bytes.
    std::map<std::string, std::string> files;
};

[[nodiscard]] json toJson(DatasetManifest const& manifest);

/// Writes the SFT file, the DPO file and the manifest under `dir`. Pairs are sorted canonically
/// and the DPO list is shuffled with `options.seed`, so equal inputs give equal bytes. On an IO
/// error, files written by this call are removed and IoError is rethrown.
DatasetManifest mergeAndExport(std::filesystem::path const& dir,
                               std::vector<SftExample> const& sft,
                               std::vector<PreferencePair> intra,
                               std::vector<PreferencePair> inter,
                               ExportOptions const& options = {});

} // namespace hplan
