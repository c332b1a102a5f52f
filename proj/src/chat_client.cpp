// SPDX-License-Identifier: Apache-2.0
#include <hplan/chat_client.hpp>
#include <hplan/concurrency.hpp>

#include <fmt/format.h>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace hplan
{

namespace
{

Semaphore& inFlightLimit(std::string const& url, int limit)
{
    static auto mutex = std::mutex {};
    static auto limits = std::map<std::string, std::unique_ptr<Semaphore>> {};
    auto lock = std::lock_guard { mutex };
    auto& slot = limits[url];
    if (!slot)
        slot = std::make_unique<Semaphore>(limit);
    return *slot;
}

bool retryable(int status)
{
    return status == 429 || status >= 500;
}

} // namespace

json chatRequestBody(std::string const& model, std::span<ChatMessage const> messages, double temperature)
{
    auto list = json::array();
    for (auto const& m: messages)
        list.push_back({ { "role", m.role }, { "content", m.content } });
    return { { "model", model }, { "messages", std::move(list) }, { "temperature", temperature } };
}

std::string completionText(json const& response)
{
    auto const* content = static_cast<json const*>(nullptr);
    if (response.contains("choices") && response["choices"].is_array() && !response["choices"].empty())
    {
        auto const& choice = response["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content") && choice["message"]["content"].is_string())
            content = &choice["message"]["content"];
    }
    if (!content || content->get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos)
        throw EmptyCompletion("chat completion returned no content");
    return content->get<std::string>();
}

ChatClient::ChatClient(ChatEndpoint endpoint): _endpoint(std::move(endpoint))
{
    auto const schemeEnd = _endpoint.url.find("://");
    if (schemeEnd == std::string::npos)
        throw BadConfig(fmt::format("endpoint URL '{}' has no scheme", _endpoint.url));
    auto const pathStart = _endpoint.url.find('/', schemeEnd + 3);
    _origin = _endpoint.url.substr(0, pathStart);
    _path = pathStart == std::string::npos ? std::string {} : _endpoint.url.substr(pathStart);
    while (!_path.empty() && _path.back() == '/')
        _path.pop_back();
    _path += "/chat/completions";
}

std::string ChatClient::complete(std::span<ChatMessage const> messages, double temperature) const
{
    auto const body = chatRequestBody(_endpoint.model, messages, temperature).dump();

    auto headers = httplib::Headers {};
    if (auto const* key = std::getenv(_endpoint.apiKeyEnv.c_str()); key && *key)
        headers.emplace("Authorization", fmt::format("Bearer {}", key));

    auto& limit = inFlightLimit(_endpoint.url, _endpoint.maxInFlight);
    auto const attempts = 1 + std::max(0, _endpoint.maxRetries);
    auto lastError = std::string {};

    for (auto attempt = 1; attempt <= attempts; ++attempt)
    {
        if (attempt > 1)
        {
            auto const delay = _endpoint.backoffSeconds * static_cast<double>(1 << std::min(attempt - 2, 10));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }

        auto client = httplib::Client(_origin);
        auto const timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(_endpoint.timeoutSeconds));
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(), timeout.count() % 1'000'000);
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(), timeout.count() % 1'000'000);

        auto result = [&] {
            auto guard = SemaphoreGuard { limit };
            return client.Post(_path, headers, body, "application/json");
        }();

        if (!result)
        {
            lastError = fmt::format("request to {}{} failed: {}", _origin, _path, httplib::to_string(result.error()));
            continue;
        }
        if (result->status >= 200 && result->status < 300)
        {
            try
            {
                return completionText(json::parse(result->body));
            }
            catch (json::parse_error const& e)
            {
                throw TransportError(fmt::format("malformed completion body: {}", e.what()), attempt);
            }
        }

        lastError = fmt::format("{}{} returned HTTP {}", _origin, _path, result->status);
        if (!retryable(result->status))
            throw TransportError(lastError, attempt);
    }
    throw TransportError(fmt::format("{} (after {} attempts)", lastError, attempts), attempts);
}

} // namespace hplan
