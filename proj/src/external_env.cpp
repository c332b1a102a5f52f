// SPDX-License-Identifier: Apache-2.0
//
// Adapter for an out-of-process environment engine speaking one JSON object per line.
//
//   -> {"type":"reset","task":{...},"seed":N,"max_steps":H}
//   <- {"observation":"...","done":false}
//   -> {"type":"step","action":"..."}
//   <- {"observation":"...","done":true,"reward":0.5}
//   -> {"type":"close"}
//
// One engine process per session, launched through /bin/sh -c.

#include "worlds.hpp"

#include <fmt/format.h>

#include <csignal>
#include <cstdio>
#include <mutex>

#include <sys/wait.h>
#include <unistd.h>

namespace hplan::detail
{

namespace
{

class ExternalSession final: public Session
{
  public:
    ExternalSession(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed): _maxSteps(spec.maxSteps)
    {
        auto const it = spec.config.find("command");
        if (it == spec.config.end() || it->second.empty())
            throw BadConfig("external environment requires a 'command'");

        static auto ignoreSigpipe = std::once_flag {};
        std::call_once(ignoreSigpipe, [] { std::signal(SIGPIPE, SIG_IGN); });

        launch(it->second);
        auto const reply = exchange({ { "type", "reset" }, { "task", toJson(task) }, { "seed", seed }, { "max_steps", spec.maxSteps } });
        _initial = Observation { reply.value("observation", std::string {}), 0 };
    }

    ~ExternalSession() override
    {
        if (_to)
        {
            std::fputs("{\"type\":\"close\"}\n", _to);
            std::fclose(_to);
        }
        if (_from)
            std::fclose(_from);
        if (_pid > 0)
        {
            auto status = 0;
            ::waitpid(_pid, &status, 0);
        }
    }

    ExternalSession(ExternalSession const&) = delete;
    ExternalSession& operator=(ExternalSession const&) = delete;

    [[nodiscard]] Observation const& initialObservation() const override { return _initial; }
    [[nodiscard]] bool terminated() const override { return _terminated; }
    [[nodiscard]] int stepsTaken() const override { return _steps; }

    StepOutcome step(std::string_view action) override
    {
        if (_terminated)
            throw SessionTerminated(fmt::format("step after episode end (after {} steps)", _steps));

        ++_steps;
        auto const reply = exchange({ { "type", "step" }, { "action", std::string { action } } });

        auto outcome = StepOutcome {};
        outcome.observation = Observation { reply.value("observation", std::string {}), _steps };
        outcome.done = reply.value("done", false);
        if (outcome.done)
        {
            auto const& r = reply.contains("reward") ? reply["reward"] : json {};
            outcome.reward = r.is_number() ? r.get<double>() : 0.0;
            outcome.truncated = _steps >= _maxSteps && *outcome.reward < 1.0;
        }
        else if (_steps >= _maxSteps)
        {
            outcome.done = true;
            outcome.reward = 0.0;
            outcome.truncated = true;
        }
        if (outcome.reward && (*outcome.reward < 0.0 || *outcome.reward > 1.0))
            throw IoError(fmt::format("external environment reported reward {} outside [0, 1]", *outcome.reward));

        _terminated = outcome.done;
        return outcome;
    }

  private:
    void launch(std::string const& command)
    {
        int toChild[2];
        int fromChild[2];
        if (::pipe(toChild) != 0 || ::pipe(fromChild) != 0)
            throw IoError("pipe() failed for external environment");

        _pid = ::fork();
        if (_pid < 0)
            throw IoError("fork() failed for external environment");
        if (_pid == 0)
        {
            ::dup2(toChild[0], STDIN_FILENO);
            ::dup2(fromChild[1], STDOUT_FILENO);
            ::close(toChild[0]);
            ::close(toChild[1]);
            ::close(fromChild[0]);
            ::close(fromChild[1]);
            ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(toChild[0]);
        ::close(fromChild[1]);
        _to = ::fdopen(toChild[1], "w");
        _from = ::fdopen(fromChild[0], "r");
    }

    json exchange(json const& request)
    {
        auto const line = request.dump() + "\n";
        if (std::fputs(line.c_str(), _to) < 0 || std::fflush(_to) != 0)
            throw IoError("external environment closed its input");

        auto reply = std::string {};
        for (int c = std::fgetc(_from); c != EOF && c != '\n'; c = std::fgetc(_from))
            reply += static_cast<char>(c);
        if (reply.empty())
            throw IoError("external environment produced no reply");
        try
        {
            return json::parse(reply);
        }
        catch (json::parse_error const& e)
        {
            throw IoError(fmt::format("external environment sent malformed reply: {}", e.what()));
        }
    }

    int _maxSteps;
    int _steps = 0;
    bool _terminated = false;
    Observation _initial;
    pid_t _pid = -1;
    std::FILE* _to = nullptr;
    std::FILE* _from = nullptr;
};

} // namespace

std::unique_ptr<Session> makeExternal(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed)
{
    return std::make_unique<ExternalSession>(spec, task, seed);
}

} // namespace hplan::detail
