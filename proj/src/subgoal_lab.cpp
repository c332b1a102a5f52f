// SPDX-License-Identifier: Apache-2.0
//
// SubgoalLab: a multi-room science world whose task is an ordered subgoal checklist. A subgoal
// completes when its action succeeds while every earlier subgoal is already complete; the dense
// reward is the completed fraction at termination.

#include "worlds.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>

namespace hplan::detail
{

namespace
{

constexpr auto kDefaultRooms = std::array {
    "art studio", "bathroom", "bedroom", "foundry", "greenhouse", "hallway", "kitchen", "living room", "outside", "workshop",
};

constexpr auto kUnknownAction = "No known action matches that input.";

struct Subgoal
{
    std::string action;
    std::string produces;
};

bool startsWith(std::string_view s, std::string_view p)
{
    return s.substr(0, p.size()) == p;
}

std::string joinObjects(std::vector<std::string> const& items)
{
    if (items.empty())
        return "nothing of interest";
    auto out = std::string {};
    for (auto const& item: items)
    {
        if (!out.empty())
            out += ", ";
        out += "a " + item;
    }
    return out;
}

class SubgoalLab final: public WorldSession
{
  public:
    SubgoalLab(EnvironmentSpec const& spec, TaskInstance const& task): WorldSession(spec.maxSteps, spec.rewardKind)
    {
        if (auto const rooms = task.param("rooms"); !rooms.empty())
            _rooms = splitList(rooms, ',');
        else
            _rooms.assign(kDefaultRooms.begin(), kDefaultRooms.end());

        _location = task.param("start", "hallway");
        if (!isRoom(_location))
            throw UnknownTask(fmt::format("subgoallab task {}: start room '{}' does not exist", task.id, _location));

        for (auto const& entry: splitList(task.param("objects"), ';'))
        {
            auto const colon = entry.find(':');
            if (colon == std::string::npos)
                throw UnknownTask(fmt::format("subgoallab task {}: malformed objects entry '{}'", task.id, entry));
            auto const room = splitList(entry.substr(0, colon), ',');
            if (room.size() != 1 || !isRoom(room.front()))
                throw UnknownTask(fmt::format("subgoallab task {}: unknown room in '{}'", task.id, entry));
            for (auto& object: splitList(entry.substr(colon + 1), ','))
                _objects[room.front()].push_back(normalizeAction(object));
        }

        for (auto const& raw: splitList(task.param("subgoals"), '|'))
        {
            auto sg = Subgoal {};
            if (auto const arrow = raw.find("=>"); arrow != std::string::npos)
            {
                sg.action = normalizeAction(raw.substr(0, arrow));
                sg.produces = normalizeAction(raw.substr(arrow + 2));
            }
            else
            {
                sg.action = normalizeAction(raw);
            }
            _subgoals.push_back(std::move(sg));
        }
        if (_subgoals.empty())
            throw UnknownTask(fmt::format("subgoallab task {}: no subgoals", task.id));

        setInitialObservation(fmt::format("{}\nYour task is to {}", describeRoom(), task.instruction));
    }

  protected:
    std::string apply(std::string const& action) override
    {
        auto const result = execute(action);
        if (result.valid && _completed < _subgoals.size() && _subgoals[_completed].action == action)
        {
            auto const& produced = _subgoals[_completed].produces;
            ++_completed;
            if (!produced.empty())
            {
                _objects[_location].push_back(produced);
                return fmt::format("{} This produces {}.", result.text, produced);
            }
        }
        return result.text;
    }

    bool goalReached() const override { return _completed == _subgoals.size(); }

    double progress() const override { return static_cast<double>(_completed) / static_cast<double>(_subgoals.size()); }

  private:
    struct Result
    {
        bool valid;
        std::string text;
    };

    [[nodiscard]] bool isRoom(std::string const& name) const { return std::ranges::find(_rooms, name) != _rooms.end(); }

    [[nodiscard]] bool reachable(std::string const& object) const
    {
        if (std::ranges::find(_inventory, object) != _inventory.end())
            return true;
        auto const it = _objects.find(_location);
        return it != _objects.end() && std::ranges::find(it->second, object) != it->second.end();
    }

    [[nodiscard]] std::string describeRoom() const
    {
        auto const it = _objects.find(_location);
        auto const items = it == _objects.end() ? std::vector<std::string> {} : it->second;
        return fmt::format("This room is called the {}. In it, you see: {}.", _location, joinObjects(items));
    }

    Result missing(std::string const& object) const { return { false, fmt::format("There is no {} here.", object) }; }

    Result unary(std::string const& object, std::string text) const
    {
        return reachable(object) ? Result { true, std::move(text) } : missing(object);
    }

    Result binary(std::string const& args, std::string_view joiner, std::string_view format)
    {
        auto const pos = args.find(joiner);
        if (pos == std::string::npos)
            return { false, kUnknownAction };
        auto const a = args.substr(0, pos);
        auto const b = args.substr(pos + joiner.size());
        if (!reachable(a))
            return missing(a);
        if (!reachable(b))
            return missing(b);
        return { true, fmt::format(fmt::runtime(format), a, b) };
    }

    Result execute(std::string const& action)
    {
        if (action == "look around")
            return { true, describeRoom() };
        if (action == "wait")
            return { true, "You decide to wait for 10 iterations." };
        if (action == "wait1")
            return { true, "You decide to wait for 1 iterations." };
        if (action == "inventory")
            return { true, fmt::format("In your inventory, you see: {}.", joinObjects(_inventory)) };

        if (startsWith(action, "teleport to "))
        {
            auto const room = action.substr(12);
            if (!isRoom(room))
                return { false, kUnknownAction };
            _location = room;
            return { true, fmt::format("You teleport to the {}.", room) };
        }
        if (startsWith(action, "pick up "))
        {
            auto const object = action.substr(8);
            auto& here = _objects[_location];
            auto const it = std::ranges::find(here, object);
            if (it == here.end())
                return missing(object);
            here.erase(it);
            _inventory.push_back(object);
            return { true, fmt::format("You move the {} to the inventory.", object) };
        }
        if (startsWith(action, "pour "))
            return binary(action.substr(5), " into ", "You pour the {} into the {}.");
        if (startsWith(action, "move "))
            return binary(action.substr(5), " to ", "You move the {} to the {}.");
        if (startsWith(action, "connect "))
            return binary(action.substr(8), " to ", "The {} is now connected to the {}.");
        if (startsWith(action, "use "))
        {
            auto const args = action.substr(4);
            if (args.find(" on ") != std::string::npos)
                return binary(args, " on ", "You use the {} on the {}.");
            return unary(args, fmt::format("You use the {}.", args));
        }

        for (auto const& [verb, format]: std::array<std::pair<std::string_view, std::string_view>, 9> { {
                 { "mix ", "You mix the contents of the {}." },
                 { "focus on ", "You focus on the {}." },
                 { "open ", "The {} is now open." },
                 { "close ", "The {} is now closed." },
                 { "activate ", "The {} is now activated." },
                 { "deactivate ", "The {} is now deactivated." },
                 { "disconnect ", "The {} is now disconnected." },
                 { "examine ", "You see a {}." },
                 { "read ", "You read the {}." },
             } })
        {
            if (startsWith(action, verb))
            {
                auto const object = action.substr(verb.size());
                return unary(object, fmt::format(fmt::runtime(format), object));
            }
        }
        if (startsWith(action, "look at "))
        {
            auto const object = action.substr(8);
            return unary(object, fmt::format("You look at the {}.", object));
        }
        return { false, kUnknownAction };
    }

    std::vector<std::string> _rooms;
    std::map<std::string, std::vector<std::string>> _objects;
    std::vector<std::string> _inventory;
    std::vector<Subgoal> _subgoals;
    std::size_t _completed = 0;
    std::string _location;
};

} // namespace

std::unique_ptr<Session> makeSubgoalLab(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t)
{
    return std::make_unique<SubgoalLab>(spec, task);
}

} // namespace hplan::detail
