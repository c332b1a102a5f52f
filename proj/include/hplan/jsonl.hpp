// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

namespace hplan
{

using json = nlohmann::json;

struct JsonlReadOptions
{
    /// Skip an unparseable final line (a write interrupted mid-line).
    bool tolerateTruncatedTail = false;
};

/// Reads one JSON value per non-empty line. Throws IoError on open failure or on a malformed line.
[[nodiscard]] std::vector<json> readJsonl(std::filesystem::path const& path, JsonlReadOptions options = {});

/// Serializes records one per line and writes them atomically (temp file + rename).
/// On failure the temp file is removed and IoError is thrown.
void writeJsonlAtomic(std::filesystem::path const& path, std::vector<json> const& records);
void writeTextAtomic(std::filesystem::path const& path, std::string const& content);

[[nodiscard]] std::string readText(std::filesystem::path const& path);

/// Append-only JSON-Lines writer, safe for concurrent callers. Every record is flushed.
class JsonlAppender
{
  public:
    JsonlAppender() = default;
    explicit JsonlAppender(std::filesystem::path path);

    void append(json const& record);
    [[nodiscard]] bool isOpen() const noexcept { return _out.is_open(); }
    [[nodiscard]] std::filesystem::path const& path() const noexcept { return _path; }

  private:
    std::filesystem::path _path;
    std::ofstream _out;
    std::mutex _mutex;
};

} // namespace hplan
