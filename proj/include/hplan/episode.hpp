// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/actor.hpp>
#include <hplan/env.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace hplan
{

/// An actor failure mid-episode. Carries the trajectory recorded up to the failing turn.
class EpisodeError: public Error
{
  public:
    EpisodeError(std::string const& message, Trajectory partial): Error(message), _partial(std::move(partial)) {}

    [[nodiscard]] Trajectory const& partial() const noexcept { return _partial; }

  private:
    Trajectory _partial;
};

/// Runs one episode to termination. `seed` drives both the world and the actor.
[[nodiscard]] Trajectory runEpisode(EnvironmentSpec const& spec,
                                    TaskInstance const& task,
                                    ActorPolicy const& actor,
                                    std::string_view renderedPlan,
                                    std::uint64_t seed);

} // namespace hplan
