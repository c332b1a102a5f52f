// SPDX-License-Identifier: Apache-2.0
#include <hplan/errors.hpp>
#include <hplan/jsonl.hpp>

#include <fmt/format.h>

#include <sstream>

namespace hplan
{

namespace fs = std::filesystem;

std::vector<json> readJsonl(fs::path const& path, JsonlReadOptions options)
{
    auto in = std::ifstream { path };
    if (!in)
        throw IoError(fmt::format("cannot open {}", path.string()));

    auto lines = std::vector<std::string> {};
    for (std::string line; std::getline(in, line);)
    {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            lines.push_back(std::move(line));
    }

    auto records = std::vector<json> {};
    records.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i)
    {
        try
        {
            records.push_back(json::parse(lines[i]));
        }
        catch (json::parse_error const& e)
        {
            if (options.tolerateTruncatedTail && i + 1 == lines.size())
                break;
            throw IoError(fmt::format("{}: malformed JSON on record {}: {}", path.string(), i + 1, e.what()));
        }
    }
    return records;
}

void writeTextAtomic(fs::path const& path, std::string const& content)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());

    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = std::ofstream { tmp, std::ios::binary | std::ios::trunc };
        if (out)
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
        {
            auto ec = std::error_code {};
            fs::remove(tmp, ec);
            throw IoError(fmt::format("failed writing {}", path.string()));
        }
    }

    auto ec = std::error_code {};
    fs::rename(tmp, path, ec);
    if (ec)
    {
        fs::remove(tmp, ec);
        throw IoError(fmt::format("failed to move {} into place: {}", path.string(), ec.message()));
    }
}

void writeJsonlAtomic(fs::path const& path, std::vector<json> const& records)
{
    auto buffer = std::string {};
    for (auto const& record: records)
    {
        buffer += record.dump();
        buffer += '\n';
    }
    writeTextAtomic(path, buffer);
}

std::string readText(fs::path const& path)
{
    auto in = std::ifstream { path, std::ios::binary };
    if (!in)
        throw IoError(fmt::format("cannot open {}", path.string()));
    auto ss = std::ostringstream {};
    ss << in.rdbuf();
    return ss.str();
}

JsonlAppender::JsonlAppender(fs::path path): _path(std::move(path))
{
    if (_path.has_parent_path())
        fs::create_directories(_path.parent_path());

    // A previous run may have died mid-line; drop the partial record.
    if (fs::exists(_path) && fs::file_size(_path) > 0)
    {
        auto const content = readText(_path);
        auto const lastNewline = content.rfind('\n');
        auto const keep = lastNewline == std::string::npos ? 0 : lastNewline + 1;
        if (keep != content.size())
            fs::resize_file(_path, keep);
    }

    _out.open(_path, std::ios::binary | std::ios::app);
    if (!_out)
        throw IoError(fmt::format("cannot open {} for append", _path.string()));
}

void JsonlAppender::append(json const& record)
{
    auto const line = record.dump();
    auto lock = std::lock_guard { _mutex };
    _out << line << '\n';
    _out.flush();
    if (!_out)
        throw IoError(fmt::format("append to {} failed", _path.string()));
}

} // namespace hplan
