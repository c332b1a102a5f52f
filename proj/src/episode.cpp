// SPDX-License-Identifier: Apache-2.0
#include <hplan/episode.hpp>

#include <fmt/format.h>

namespace hplan
{

Trajectory runEpisode(EnvironmentSpec const& spec,
                      TaskInstance const& task,
                      ActorPolicy const& actor,
                      std::string_view renderedPlan,
                      std::uint64_t seed)
{
    auto session = reset(spec, task, seed);

    auto trajectory = Trajectory {};
    trajectory.task = task;
    trajectory.seed = seed;
    trajectory.initialObservation = session->initialObservation().text;

    while (!session->terminated())
    {
        auto action = std::string {};
        try
        {
            // Reasoning lines from ReAct-style actors never reach the world.
            action = extractAction(actor.nextAction(ActorInput {
                .task = task,
                .initialObservation = trajectory.initialObservation,
                .history = trajectory.turns,
                .renderedPlan = renderedPlan,
                .episodeSeed = seed,
            }));
        }
        catch (Error const& e)
        {
            throw EpisodeError(fmt::format("task {}: actor failed at step {}: {}", task.id, trajectory.turns.size() + 1, e.what()),
                               trajectory);
        }

        auto const outcome = session->step(action);
        trajectory.turns.push_back({ std::move(action), outcome.observation.text });
        if (outcome.done)
        {
            trajectory.reward = outcome.reward.value_or(0.0);
            trajectory.truncated = outcome.truncated;
        }
    }
    return trajectory;
}

} // namespace hplan
