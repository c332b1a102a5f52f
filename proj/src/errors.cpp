// SPDX-License-Identifier: Apache-2.0
#include <hplan/errors.hpp>

#include <fmt/format.h>

namespace hplan
{

ParseError::ParseError(std::string const& message, std::size_t position, std::size_t line, std::string rawText):
    Error(fmt::format("{} (line {}, offset {})", message, line, position)),
    _position(position),
    _line(line),
    _rawText(std::move(rawText))
{
}

} // namespace hplan
