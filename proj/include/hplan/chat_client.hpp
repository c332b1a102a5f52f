// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/errors.hpp>
#include <hplan/jsonl.hpp>

#include <span>
#include <string>
#include <vector>

namespace hplan
{

struct ChatMessage
{
    std::string role;
    std::string content;

    bool operator==(ChatMessage const&) const = default;
};

/// An OpenAI-compatible chat-completions endpoint.
struct ChatEndpoint
{
    /// Base URL, e.g. "http://localhost:8000/v1"; requests go to <url>/chat/completions.
    std::string url;
    std::string model;
    /// Name of the environment variable holding the API key. Unset or empty sends no Authorization header.
    std::string apiKeyEnv = "OPENAI_API_KEY";
    int maxRetries = 3;
    double timeoutSeconds = 60.0;
    double backoffSeconds = 0.5;
    /// Concurrent requests allowed per URL, shared by every client of that URL.
    int maxInFlight = 4;
};

class TransportError: public Error
{
  public:
    TransportError(std::string const& message, int attempts): Error(message), _attempts(attempts) {}
    [[nodiscard]] int attempts() const noexcept { return _attempts; }

  private:
    int _attempts;
};

class EmptyCompletion: public Error
{
  public:
    using Error::Error;
};

/// {model, messages, temperature}
[[nodiscard]] json chatRequestBody(std::string const& model, std::span<ChatMessage const> messages, double temperature);

/// choices[0].message.content. Throws EmptyCompletion when absent or blank.
[[nodiscard]] std::string completionText(json const& response);

class ChatClient
{
  public:
    explicit ChatClient(ChatEndpoint endpoint);

    /// Retries connection failures, HTTP 429 and 5xx with exponential backoff; throws TransportError
    /// after the last attempt or on any other non-2xx status.
    [[nodiscard]] std::string complete(std::span<ChatMessage const> messages, double temperature) const;

    [[nodiscard]] ChatEndpoint const& endpoint() const noexcept { return _endpoint; }

  private:
    ChatEndpoint _endpoint;
    std::string _origin;
    std::string _path;
};

} // namespace hplan
