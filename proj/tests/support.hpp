// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/env.hpp>
#include <hplan/hashing.hpp>
#include <hplan/jsonl.hpp>
#include <hplan/plan.hpp>

#include <fmt/format.h>

#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace hplan::test
{

inline std::filesystem::path dataDir()
{
    return HPLAN_TEST_DATA;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
  public:
    explicit TempDir(std::string const& tag)
    {
        auto rng = std::random_device {};
        _path = std::filesystem::temp_directory_path() / fmt::format("hplan-{}-{:x}", tag, rng());
        std::filesystem::remove_all(_path);
        std::filesystem::create_directories(_path);
    }
    ~TempDir() { std::filesystem::remove_all(_path); }
    TempDir(TempDir const&) = delete;
    TempDir& operator=(TempDir const&) = delete;

    [[nodiscard]] std::filesystem::path const& path() const noexcept { return _path; }
    [[nodiscard]] std::filesystem::path operator/(std::string const& name) const { return _path / name; }

  private:
    std::filesystem::path _path;
};

inline std::string randomSentence(std::mt19937_64& rng)
{
    constexpr auto words = std::array { "go", "to", "the", "fridge", "apple", "open", "drawer", "check", "table", "carefully", "then", "blue", "paint", "(maybe)", "in/on", "1", "2", "sink," };
    auto const count = 1 + uniformBelow(rng, 8);
    auto out = std::string {};
    for (std::uint64_t i = 0; i < count; ++i)
    {
        if (i > 0)
            out += ' ';
        out += words[uniformBelow(rng, words.size())];
    }
    return out;
}

/// Valid plan with 1..maxLevels levels; steps may carry indented annotation lines.
/// With `monotone`, step counts never decrease from one level to the next.
inline HierarchicalPlan randomPlan(std::mt19937_64& rng, int maxLevels = 4, int maxSteps = 6, bool monotone = false)
{
    auto const depth = 1 + static_cast<int>(uniformBelow(rng, static_cast<std::uint64_t>(maxLevels)));
    auto levels = std::vector<std::vector<std::string>> {};
    auto previous = 1;
    for (auto l = 0; l < depth; ++l)
    {
        auto const low = monotone ? previous : 1;
        auto const steps = low + static_cast<int>(uniformBelow(rng, static_cast<std::uint64_t>(std::max(1, maxSteps - low + 1))));
        previous = steps;
        auto level = std::vector<std::string> {};
        for (auto s = 0; s < steps; ++s)
        {
            auto text = randomSentence(rng);
            for (auto extra = uniformBelow(rng, 3); extra > 0 && uniformBelow(rng, 2) == 0; --extra)
                text += "\n- Action: " + randomSentence(rng);
            level.push_back(std::move(text));
        }
        levels.push_back(std::move(level));
    }
    return makePlan("t", 1 + static_cast<int>(uniformBelow(rng, 5)), levels);
}

inline TaskInstance gridTask(std::string id, int difficulty = 1)
{
    auto task = TaskInstance {};
    task.id = std::move(id);
    task.instruction = "put an apple in/on sidetable 1.";
    task.difficulty = difficulty;
    task.params = { { "type", "pick_and_place" }, { "object", "apple" }, { "source", "countertop 1" }, { "target", "sidetable 1" } };
    return task;
}

} // namespace hplan::test
