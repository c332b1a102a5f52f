// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/jsonl.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hplan
{

/// One "Step k: ..." line. Annotation sub-bullets live inside `text`, one per extra line.
struct PlanStep
{
    int index = 1;
    std::string text;

    bool operator==(PlanStep const&) const = default;
};

/// Level 1 is the coarsest restatement of the plan.
struct PlanLevel
{
    int level = 1;
    std::vector<PlanStep> steps;

    bool operator==(PlanLevel const&) const = default;
};

struct HierarchicalPlan
{
    std::string taskId;
    int sourceIndex = 1;
    std::vector<PlanLevel> levels;

    [[nodiscard]] int depth() const noexcept { return static_cast<int>(levels.size()); }
    [[nodiscard]] HierarchicalPlan withSourceIndex(int index) const;

    bool operator==(HierarchicalPlan const&) const = default;
};

enum class RenderMode
{
    Hierarchical,
    LastLevel,
};

[[nodiscard]] std::string_view toString(RenderMode mode);
[[nodiscard]] RenderMode renderModeFromString(std::string_view text);

/// Builds a plan with dense level and step numbering from raw step texts.
[[nodiscard]] HierarchicalPlan makePlan(std::string taskId, int sourceIndex, std::vector<std::vector<std::string>> const& levels);

/// Levels 1..m of `plan`. Throws OutOfRange unless 1 <= m <= depth.
[[nodiscard]] HierarchicalPlan prefix(HierarchicalPlan const& plan, int m);

/// Tagged text, ascending level order. LastLevel emits only the deepest block.
[[nodiscard]] std::string render(HierarchicalPlan const& plan, RenderMode mode = RenderMode::Hierarchical);

struct ParseWarning
{
    enum class Kind
    {
        NonContiguousLevels,
        StepRenumbered,
        TextOutsideStep,
    };

    Kind kind;
    std::size_t position = 0;
    std::string message;
};

struct ParseReport
{
    /// Tag numbers as written, in ascending order, before dense renumbering.
    std::vector<int> writtenLevels;
    std::vector<ParseWarning> warnings;

    [[nodiscard]] bool hasWarning(ParseWarning::Kind kind) const;
    [[nodiscard]] int deepestWrittenLevel() const { return writtenLevels.empty() ? 0 : writtenLevels.back(); }
};

struct ParsedPlan
{
    HierarchicalPlan plan;
    ParseReport report;
};

/// Extracts every <plan i>...</plan i> block. Tags are case-insensitive; blocks are sorted by tag
/// number and renumbered densely. Lines that are not "Step k:" lines fold into the preceding step.
/// Throws ParseError when no block exists, a block is unterminated, or a block has no steps.
[[nodiscard]] ParsedPlan parsePlan(std::string_view text, std::string taskId = {}, int sourceIndex = 1);

struct Violation
{
    enum class Rule
    {
        NoLevels,
        EmptyLevel,
        NonContiguousLevels,
        NonContiguousSteps,
        EmptyStepText,
        TagMarkerInStep,
        TooManyLevels,
        DecreasingStepCount,
    };

    Rule rule;
    int level = 0;
    std::string message;
};

[[nodiscard]] std::string_view toString(Violation::Rule rule);

struct ValidationOptions
{
    /// Flag a level that has fewer steps than the level above it.
    bool strictMonotone = false;
    std::optional<int> maxLevels;
};

struct ValidationReport
{
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
    [[nodiscard]] std::size_t count(Violation::Rule rule) const;
    [[nodiscard]] std::string summary() const;
};

[[nodiscard]] ValidationReport validate(HierarchicalPlan const& plan, ValidationOptions const& options = {});

/// Canonical record: {task_id, source_index, levels: [{level, steps: [string]}]}.
[[nodiscard]] json toJson(HierarchicalPlan const& plan);
[[nodiscard]] HierarchicalPlan planFromJson(json const& record);

/// Reads a canonical JSON-Lines plan file, or a raw tagged text file when the content does not
/// start with '{'.
[[nodiscard]] std::vector<HierarchicalPlan> readPlanFile(std::filesystem::path const& path);
void writePlanFile(std::filesystem::path const& path, std::vector<HierarchicalPlan> const& plans);

} // namespace hplan
