// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hplan
{

/// Root of every error thrown by the library.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class OutOfRange: public Error
{
  public:
    using Error::Error;
};

class BadConfig: public Error
{
  public:
    using Error::Error;
};

class IoError: public Error
{
  public:
    using Error::Error;
};

/// Malformed tagged plan text. `position` is a byte offset into the input.
class ParseError: public Error
{
  public:
    ParseError(std::string const& message, std::size_t position, std::size_t line, std::string rawText = {});

    [[nodiscard]] std::size_t position() const noexcept { return _position; }
    [[nodiscard]] std::size_t line() const noexcept { return _line; }
    [[nodiscard]] std::string const& rawText() const noexcept { return _rawText; }

    void attachRawText(std::string text) { _rawText = std::move(text); }

  private:
    std::size_t _position;
    std::size_t _line;
    std::string _rawText;
};

} // namespace hplan
