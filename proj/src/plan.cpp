// SPDX-License-Identifier: Apache-2.0
#include <hplan/errors.hpp>
#include <hplan/plan.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <regex>

namespace hplan
{

namespace
{

std::string_view trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s)
{
    auto out = std::string { s };
    std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::size_t lineOf(std::string_view text, std::size_t position)
{
    auto const end = std::min(position, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
}

std::regex const& tagPattern()
{
    static auto const re = std::regex(R"(<\s*(/?)\s*plan\s*(\d+)\s*>)", std::regex::icase | std::regex::ECMAScript);
    return re;
}

std::regex const& stepPattern()
{
    static auto const re = std::regex(R"(^\s*(?:[-*]\s*)?step\s*(\d+)\s*[:.]\s*(.*)$)", std::regex::icase | std::regex::ECMAScript);
    return re;
}

struct Tag
{
    bool closing;
    int number;
    std::size_t begin;
    std::size_t end;
};

std::vector<Tag> scanTags(std::string_view text)
{
    auto tags = std::vector<Tag> {};
    auto const* first = text.data();
    auto const* last = text.data() + text.size();
    for (auto it = std::cregex_iterator(first, last, tagPattern()); it != std::cregex_iterator(); ++it)
    {
        auto const& m = *it;
        auto const begin = static_cast<std::size_t>(m.position(0));
        tags.push_back(Tag {
            .closing = m.length(1) > 0,
            .number = std::stoi(m.str(2)),
            .begin = begin,
            .end = begin + static_cast<std::size_t>(m.length(0)),
        });
    }
    return tags;
}

struct RawBlock
{
    int number;
    std::size_t position;
    std::vector<PlanStep> steps;
};

RawBlock parseBlock(std::string_view whole, std::size_t bodyBegin, std::size_t bodyEnd, Tag const& open, ParseReport& report)
{
    auto block = RawBlock { .number = open.number, .position = open.begin, .steps = {} };

    auto cursor = bodyBegin;
    while (cursor < bodyEnd)
    {
        auto newline = whole.find('\n', cursor);
        if (newline == std::string_view::npos || newline > bodyEnd)
            newline = bodyEnd;
        auto const rawLine = whole.substr(cursor, newline - cursor);
        auto const linePosition = cursor;
        cursor = newline + 1;

        auto const line = trim(rawLine);
        if (line.empty())
            continue;

        auto match = std::cmatch {};
        if (std::regex_match(line.data(), line.data() + line.size(), match, stepPattern()))
        {
            auto const written = std::stoi(match.str(1));
            auto const index = static_cast<int>(block.steps.size()) + 1;
            if (written != index)
            {
                report.warnings.push_back({ ParseWarning::Kind::StepRenumbered,
                                            linePosition,
                                            fmt::format("level tag {}: step {} renumbered to {}", open.number, written, index) });
            }
            block.steps.push_back(PlanStep { .index = index, .text = std::string { trim(match.str(2)) } });
            continue;
        }

        if (block.steps.empty())
        {
            report.warnings.push_back({ ParseWarning::Kind::TextOutsideStep,
                                        linePosition,
                                        fmt::format("level tag {}: text before the first step ignored", open.number) });
            continue;
        }

        auto& text = block.steps.back().text;
        if (!text.empty())
            text += '\n';
        text += line;
    }

    if (block.steps.empty())
    {
        throw ParseError(fmt::format("plan block <plan {}> contains no step lines", open.number),
                         open.begin,
                         lineOf(whole, open.begin));
    }

    for (auto const& step: block.steps)
    {
        if (step.text.empty())
        {
            throw ParseError(fmt::format("plan block <plan {}> has an empty step {}", open.number, step.index),
                             open.begin,
                             lineOf(whole, open.begin));
        }
    }
    return block;
}

bool containsTagMarker(std::string_view text)
{
    auto const l = lower(text);
    return l.find("<plan") != std::string::npos || l.find("</plan") != std::string::npos;
}

} // namespace

HierarchicalPlan HierarchicalPlan::withSourceIndex(int index) const
{
    auto copy = *this;
    copy.sourceIndex = index;
    return copy;
}

std::string_view toString(RenderMode mode)
{
    switch (mode)
    {
        case RenderMode::Hierarchical: return "hierarchical";
        case RenderMode::LastLevel: return "last-level";
    }
    return "hierarchical";
}

RenderMode renderModeFromString(std::string_view text)
{
    auto const l = lower(text);
    if (l == "hierarchical")
        return RenderMode::Hierarchical;
    if (l == "last-level" || l == "lastlevel" || l == "last_level")
        return RenderMode::LastLevel;
    throw BadConfig(fmt::format("unknown render mode '{}'", text));
}

HierarchicalPlan makePlan(std::string taskId, int sourceIndex, std::vector<std::vector<std::string>> const& levels)
{
    auto plan = HierarchicalPlan { .taskId = std::move(taskId), .sourceIndex = sourceIndex, .levels = {} };
    plan.levels.reserve(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i)
    {
        auto level = PlanLevel { .level = static_cast<int>(i) + 1, .steps = {} };
        for (std::size_t k = 0; k < levels[i].size(); ++k)
            level.steps.push_back(PlanStep { .index = static_cast<int>(k) + 1, .text = levels[i][k] });
        plan.levels.push_back(std::move(level));
    }
    return plan;
}

HierarchicalPlan prefix(HierarchicalPlan const& plan, int m)
{
    if (m < 1 || m > plan.depth())
        throw OutOfRange(fmt::format("prefix level {} outside 1..{}", m, plan.depth()));

    auto out = HierarchicalPlan { .taskId = plan.taskId, .sourceIndex = plan.sourceIndex, .levels = {} };
    out.levels.assign(plan.levels.begin(), plan.levels.begin() + m);
    return out;
}

std::string render(HierarchicalPlan const& plan, RenderMode mode)
{
    auto out = std::string {};
    auto const first = mode == RenderMode::LastLevel && !plan.levels.empty() ? plan.levels.size() - 1 : 0;
    for (auto i = first; i < plan.levels.size(); ++i)
    {
        auto const& level = plan.levels[i];
        out += fmt::format("<plan {}>\n", level.level);
        for (auto const& step: level.steps)
        {
            auto const& text = step.text;
            auto const firstBreak = text.find('\n');
            out += fmt::format("Step {}: {}\n", step.index, std::string_view(text).substr(0, firstBreak));
            for (auto pos = firstBreak; pos != std::string::npos;)
            {
                auto const next = text.find('\n', pos + 1);
                out += "  ";
                out += std::string_view(text).substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
                out += '\n';
                pos = next;
            }
        }
        out += fmt::format("</plan {}>\n", level.level);
    }
    return out;
}

bool ParseReport::hasWarning(ParseWarning::Kind kind) const
{
    return std::ranges::any_of(warnings, [kind](auto const& w) { return w.kind == kind; });
}

ParsedPlan parsePlan(std::string_view text, std::string taskId, int sourceIndex)
{
    auto result = ParsedPlan {};
    auto& report = result.report;
    auto const tags = scanTags(text);

    auto blocks = std::vector<RawBlock> {};
    for (std::size_t i = 0; i < tags.size(); ++i)
    {
        auto const& open = tags[i];
        if (open.closing)
        {
            throw ParseError(fmt::format("closing tag </plan {}> without a matching opening tag", open.number),
                             open.begin,
                             lineOf(text, open.begin));
        }
        if (i + 1 >= tags.size() || tags[i + 1].closing == false || tags[i + 1].number != open.number)
        {
            throw ParseError(fmt::format("plan block <plan {}> is not terminated", open.number), open.begin, lineOf(text, open.begin));
        }
        blocks.push_back(parseBlock(text, open.end, tags[i + 1].begin, open, report));
        ++i;
    }

    if (blocks.empty())
        throw ParseError("no <plan i> block found", 0, 1);

    std::ranges::stable_sort(blocks, {}, &RawBlock::number);
    for (std::size_t i = 1; i < blocks.size(); ++i)
    {
        if (blocks[i].number == blocks[i - 1].number)
        {
            throw ParseError(fmt::format("duplicate plan block <plan {}>", blocks[i].number),
                             blocks[i].position,
                             lineOf(text, blocks[i].position));
        }
    }

    result.plan.taskId = std::move(taskId);
    result.plan.sourceIndex = sourceIndex;
    for (std::size_t i = 0; i < blocks.size(); ++i)
    {
        auto const dense = static_cast<int>(i) + 1;
        report.writtenLevels.push_back(blocks[i].number);
        if (blocks[i].number != dense)
        {
            report.warnings.push_back({ ParseWarning::Kind::NonContiguousLevels,
                                        blocks[i].position,
                                        fmt::format("level tag {} renumbered to {}", blocks[i].number, dense) });
        }
        result.plan.levels.push_back(PlanLevel { .level = dense, .steps = std::move(blocks[i].steps) });
    }
    return result;
}

std::string_view toString(Violation::Rule rule)
{
    switch (rule)
    {
        case Violation::Rule::NoLevels: return "no-levels";
        case Violation::Rule::EmptyLevel: return "empty-level";
        case Violation::Rule::NonContiguousLevels: return "non-contiguous-levels";
        case Violation::Rule::NonContiguousSteps: return "non-contiguous-steps";
        case Violation::Rule::EmptyStepText: return "empty-step-text";
        case Violation::Rule::TagMarkerInStep: return "tag-marker-in-step";
        case Violation::Rule::TooManyLevels: return "too-many-levels";
        case Violation::Rule::DecreasingStepCount: return "decreasing-step-count";
    }
    return "unknown";
}

std::size_t ValidationReport::count(Violation::Rule rule) const
{
    return static_cast<std::size_t>(std::ranges::count(violations, rule, &Violation::rule));
}

std::string ValidationReport::summary() const
{
    auto out = std::string {};
    for (auto const& v: violations)
    {
        if (!out.empty())
            out += "; ";
        out += v.message;
    }
    return out;
}

ValidationReport validate(HierarchicalPlan const& plan, ValidationOptions const& options)
{
    auto report = ValidationReport {};
    auto add = [&](Violation::Rule rule, int level, std::string message) {
        report.violations.push_back(Violation { .rule = rule, .level = level, .message = std::move(message) });
    };

    if (plan.levels.empty())
    {
        add(Violation::Rule::NoLevels, 0, "plan has no levels");
        return report;
    }

    if (options.maxLevels && plan.depth() > *options.maxLevels)
        add(Violation::Rule::TooManyLevels, plan.depth(), fmt::format("{} levels exceed the maximum {}", plan.depth(), *options.maxLevels));

    for (std::size_t i = 0; i < plan.levels.size(); ++i)
    {
        auto const& level = plan.levels[i];
        auto const expected = static_cast<int>(i) + 1;
        if (level.level != expected)
            add(Violation::Rule::NonContiguousLevels, level.level, fmt::format("level at position {} is numbered {}", expected, level.level));

        if (level.steps.empty())
            add(Violation::Rule::EmptyLevel, level.level, fmt::format("level {} has no steps", level.level));

        for (std::size_t k = 0; k < level.steps.size(); ++k)
        {
            auto const& step = level.steps[k];
            if (step.index != static_cast<int>(k) + 1)
            {
                add(Violation::Rule::NonContiguousSteps,
                    level.level,
                    fmt::format("level {} step at position {} is numbered {}", level.level, k + 1, step.index));
            }
            if (trim(step.text).empty())
                add(Violation::Rule::EmptyStepText, level.level, fmt::format("level {} step {} is empty", level.level, step.index));
            if (containsTagMarker(step.text))
                add(Violation::Rule::TagMarkerInStep, level.level, fmt::format("level {} step {} contains a plan tag", level.level, step.index));
        }

        if (options.strictMonotone && i > 0 && level.steps.size() < plan.levels[i - 1].steps.size())
        {
            add(Violation::Rule::DecreasingStepCount,
                level.level,
                fmt::format("level {} has {} steps, fewer than level {} with {}",
                            level.level,
                            level.steps.size(),
                            plan.levels[i - 1].level,
                            plan.levels[i - 1].steps.size()));
        }
    }
    return report;
}

json toJson(HierarchicalPlan const& plan)
{
    auto levels = json::array();
    for (auto const& level: plan.levels)
    {
        auto steps = json::array();
        for (auto const& step: level.steps)
            steps.push_back(step.text);
        levels.push_back({ { "level", level.level }, { "steps", std::move(steps) } });
    }
    return { { "task_id", plan.taskId }, { "source_index", plan.sourceIndex }, { "levels", std::move(levels) } };
}

HierarchicalPlan planFromJson(json const& record)
{
    try
    {
        auto plan = HierarchicalPlan {};
        plan.taskId = record.at("task_id").get<std::string>();
        plan.sourceIndex = record.value("source_index", 1);
        for (auto const& level: record.at("levels"))
        {
            auto pl = PlanLevel { .level = level.at("level").get<int>(), .steps = {} };
            auto index = 1;
            for (auto const& step: level.at("steps"))
                pl.steps.push_back(PlanStep { .index = index++, .text = step.get<std::string>() });
            plan.levels.push_back(std::move(pl));
        }
        return plan;
    }
    catch (json::exception const& e)
    {
        throw BadConfig(fmt::format("malformed plan record: {}", e.what()));
    }
}

std::vector<HierarchicalPlan> readPlanFile(std::filesystem::path const& path)
{
    auto const content = readText(path);
    auto const body = trim(content);
    if (body.empty())
        return {};

    if (body.front() != '{')
        return { parsePlan(content, path.stem().string()).plan };

    auto plans = std::vector<HierarchicalPlan> {};
    for (auto const& record: readJsonl(path))
        plans.push_back(planFromJson(record));
    return plans;
}

void writePlanFile(std::filesystem::path const& path, std::vector<HierarchicalPlan> const& plans)
{
    auto records = std::vector<json> {};
    records.reserve(plans.size());
    for (auto const& plan: plans)
        records.push_back(toJson(plan));
    writeJsonlAtomic(path, records);
}

} // namespace hplan
