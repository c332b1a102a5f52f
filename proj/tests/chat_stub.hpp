// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/jsonl.hpp>

#include <httplib.h>

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hplan::test
{

/// Local chat-completions server. The handler maps a request body to (status, reply text).
class ChatStub
{
  public:
    struct Reply
    {
        int status = 200;
        std::string content;
    };
    using Handler = std::function<Reply(json const& request)>;

    explicit ChatStub(Handler handler): _handler(std::move(handler))
    {
        _server.Post("/v1/chat/completions", [this](httplib::Request const& req, httplib::Response& res) {
            auto const body = json::parse(req.body);
            auto reply = Reply {};
            {
                auto lock = std::scoped_lock { _mutex };
                _requests.push_back(body);
                _authorization.push_back(req.get_header_value("Authorization"));
                reply = _handler(body);
            }
            res.status = reply.status;
            if (reply.status == 200)
            {
                auto const payload = json { { "choices", json::array({ { { "message", { { "role", "assistant" }, { "content", reply.content } } } } }) } };
                res.set_content(payload.dump(), "application/json");
            }
            else
            {
                res.set_content(reply.content, "text/plain");
            }
        });
        _port = _server.bind_to_any_port("127.0.0.1");
        _thread = std::thread { [this] { _server.listen_after_bind(); } };
        _server.wait_until_ready();
    }

    ~ChatStub()
    {
        _server.stop();
        _thread.join();
    }

    ChatStub(ChatStub const&) = delete;
    ChatStub& operator=(ChatStub const&) = delete;

    [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(_port) + "/v1"; }

    [[nodiscard]] std::vector<json> requests() const
    {
        auto lock = std::scoped_lock { _mutex };
        return _requests;
    }

    [[nodiscard]] std::vector<std::string> authorization() const
    {
        auto lock = std::scoped_lock { _mutex };
        return _authorization;
    }

  private:
    Handler _handler;
    httplib::Server _server;
    int _port = 0;
    std::thread _thread;
    mutable std::mutex _mutex;
    std::vector<json> _requests;
    std::vector<std::string> _authorization;
};

/// A port with nothing listening on it.
inline int closedPort()
{
    auto probe = httplib::Server {};
    return probe.bind_to_any_port("127.0.0.1");
}

} // namespace hplan::test
