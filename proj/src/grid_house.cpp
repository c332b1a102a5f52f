// SPDX-License-Identifier: Apache-2.0
//
// GridHouse: a single-room household world with receptacles, portable objects and a lamp,
// driven by the nine household action templates (go to / take / put / open / close / toggle /
// clean / heat / cool). Binary reward.

#include "worlds.hpp"

#include <hplan/hashing.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <random>
#include <set>

namespace hplan::detail
{

namespace
{

constexpr auto kDefaultReceptacles = std::array {
    "cabinet 1", "cabinet 2",  "countertop 1", "desk 1",     "diningtable 1", "drawer 1",       "fridge 1",
    "garbagecan 1", "microwave 1", "shelf 1",   "sidetable 1", "sinkbasin 1",  "stoveburner 1", "toaster 1",
};

constexpr auto kDistractorPool = std::array {
    "book", "bowl", "bread", "cellphone", "keychain", "mug", "pen", "plate", "spoon", "tomato",
};

constexpr auto kDistractorCount = 3;
constexpr auto kNothingHappens = "Nothing happens.";

enum class GoalType
{
    PickAndPlace,
    Clean,
    Heat,
    Cool,
    LookInLight,
};

std::optional<GoalType> goalTypeFrom(std::string const& type)
{
    if (type == "pick_and_place")
        return GoalType::PickAndPlace;
    if (type == "pick_clean_then_place")
        return GoalType::Clean;
    if (type == "pick_heat_then_place")
        return GoalType::Heat;
    if (type == "pick_cool_then_place")
        return GoalType::Cool;
    if (type == "look_at_obj_in_light")
        return GoalType::LookInLight;
    return std::nullopt;
}

std::string baseType(std::string const& name)
{
    auto const space = name.rfind(' ');
    if (space == std::string::npos)
        return name;
    auto const tail = name.substr(space + 1);
    return std::ranges::all_of(tail, [](unsigned char c) { return std::isdigit(c); }) ? name.substr(0, space) : name;
}

std::string instanceName(std::string name)
{
    return baseType(name) == name ? name + " 1" : name;
}

bool isOpenable(std::string const& receptacle)
{
    static auto const openable = std::set<std::string> { "cabinet", "drawer", "fridge", "microwave", "safe" };
    return openable.contains(baseType(receptacle));
}

std::string listItems(std::vector<std::string> const& items)
{
    if (items.empty())
        return "nothing";
    auto out = std::string {};
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        if (i > 0)
            out += items.size() > 1 && i + 1 == items.size() ? ", and " : ", ";
        out += "a " + items[i];
    }
    return out;
}

bool startsWith(std::string_view s, std::string_view p)
{
    return s.substr(0, p.size()) == p;
}

class GridHouse final: public WorldSession
{
  public:
    GridHouse(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed):
        WorldSession(spec.maxSteps, spec.rewardKind)
    {
        auto const goal = goalTypeFrom(task.param("type"));
        if (!goal)
            throw UnknownTask(fmt::format("gridhouse task {}: unknown type '{}'", task.id, task.param("type")));
        _goal = *goal;

        if (auto const custom = task.param("receptacles"); !custom.empty())
            _receptacles = splitList(custom, ',');
        else
            _receptacles.assign(kDefaultReceptacles.begin(), kDefaultReceptacles.end());
        std::ranges::sort(_receptacles);

        auto const source = task.param("source");
        if (task.param("object").empty() || source.empty())
            throw UnknownTask(fmt::format("gridhouse task {}: 'object' and 'source' are required", task.id));
        _object = instanceName(task.param("object"));
        requireReceptacle(task, source);

        if (_goal == GoalType::LookInLight)
        {
            _lamp = instanceName(task.param("lamp", "desklamp"));
            _lampAt = task.param("lamp_at", "desk 1");
            requireReceptacle(task, _lampAt);
            _contents[_lampAt].push_back(_lamp);
        }
        else
        {
            _target = task.param("target");
            if (_target.empty())
                throw UnknownTask(fmt::format("gridhouse task {}: 'target' is required", task.id));
            requireReceptacle(task, _target);
        }

        _contents[source].push_back(_object);
        placeDistractors(task, seed);

        setInitialObservation(fmt::format("You are in the middle of a room. Looking quickly around you, you see {}.\nYour task is to: {}",
                                          listItems(_receptacles),
                                          task.instruction));
    }

  protected:
    std::string apply(std::string const& action) override
    {
        if (action == "look")
            return _location.empty() ? "You are in the middle of a room." : fmt::format("You are facing the {}.", _location);
        if (action == "inventory")
            return _holding ? fmt::format("You are carrying: a {}.", *_holding) : "You are not carrying anything.";

        if (startsWith(action, "go to "))
            return goTo(action.substr(6));
        if (startsWith(action, "open "))
            return open(action.substr(5));
        if (startsWith(action, "close "))
            return close(action.substr(6));
        if (startsWith(action, "take "))
            return take(action.substr(5));
        if (startsWith(action, "put "))
            return put(action.substr(4));
        if (startsWith(action, "clean "))
            return transform(action.substr(6), "sinkbasin", "clean", _cleaned);
        if (startsWith(action, "heat "))
            return transform(action.substr(5), "microwave", "heat", _heated);
        if (startsWith(action, "cool "))
            return transform(action.substr(5), "fridge", "cool", _cooled);
        if (startsWith(action, "toggle "))
            return toggle(action.substr(7));
        if (startsWith(action, "use "))
            return toggle(action.substr(4));
        return kNothingHappens;
    }

    bool goalReached() const override
    {
        switch (_goal)
        {
            case GoalType::PickAndPlace: return inReceptacle(_object, _target);
            case GoalType::Clean: return _cleaned.contains(_object) && inReceptacle(_object, _target);
            case GoalType::Heat: return _heated.contains(_object) && inReceptacle(_object, _target);
            case GoalType::Cool: return _cooled.contains(_object) && inReceptacle(_object, _target);
            case GoalType::LookInLight: return _holding == _object && _lampOn && _location == _lampAt;
        }
        return false;
    }

    double progress() const override { return goalReached() ? 1.0 : 0.0; }

  private:
    void requireReceptacle(TaskInstance const& task, std::string const& name) const
    {
        if (!std::ranges::binary_search(_receptacles, name))
            throw UnknownTask(fmt::format("gridhouse task {}: receptacle '{}' does not exist", task.id, name));
    }

    void placeDistractors(TaskInstance const& task, std::uint64_t seed)
    {
        auto rng = std::mt19937_64 { deriveSeed(seed, "gridhouse:" + task.id) };
        auto pool = std::vector<std::string> {};
        for (auto const* name: kDistractorPool)
        {
            if (name != baseType(_object))
                pool.emplace_back(name);
        }
        for (auto i = 0; i < kDistractorCount && !pool.empty(); ++i)
        {
            auto const pick = uniformBelow(rng, pool.size());
            auto const where = uniformBelow(rng, _receptacles.size());
            _contents[_receptacles[where]].push_back(instanceName(pool[pick]));
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }

    [[nodiscard]] bool exists(std::string const& r) const { return std::ranges::binary_search(_receptacles, r); }
    [[nodiscard]] bool accessible(std::string const& r) const { return !isOpenable(r) || _open.contains(r); }

    [[nodiscard]] bool inReceptacle(std::string const& object, std::string const& r) const
    {
        auto const it = _contents.find(r);
        return it != _contents.end() && std::ranges::find(it->second, object) != it->second.end();
    }

    [[nodiscard]] std::vector<std::string> itemsIn(std::string const& r) const
    {
        auto const it = _contents.find(r);
        return it == _contents.end() ? std::vector<std::string> {} : it->second;
    }

    [[nodiscard]] std::string describeContents(std::string const& r) const
    {
        if (isOpenable(r))
            return fmt::format("The {} is open. In it, you see {}.", r, listItems(itemsIn(r)));
        return fmt::format("On the {}, you see {}.", r, listItems(itemsIn(r)));
    }

    std::string goTo(std::string const& r)
    {
        if (!exists(r) || _location == r)
            return kNothingHappens;
        _location = r;
        if (isOpenable(r) && !_open.contains(r))
            return fmt::format("You arrive at {}. The {} is closed.", r, r);
        return fmt::format("You arrive at {}. {}", r, describeContents(r));
    }

    std::string open(std::string const& r)
    {
        if (r != _location || !isOpenable(r) || _open.contains(r))
            return kNothingHappens;
        _open.insert(r);
        return fmt::format("You open the {}. {}", r, describeContents(r));
    }

    std::string close(std::string const& r)
    {
        if (r != _location || !_open.contains(r))
            return kNothingHappens;
        _open.erase(r);
        return fmt::format("You close the {}.", r);
    }

    std::string take(std::string const& args)
    {
        auto const sep = args.find(" from ");
        if (sep == std::string::npos || _holding)
            return kNothingHappens;
        auto const object = args.substr(0, sep);
        auto const r = args.substr(sep + 6);
        if (r != _location || !accessible(r) || !inReceptacle(object, r) || object == _lamp)
            return kNothingHappens;
        auto& items = _contents[r];
        items.erase(std::ranges::find(items, object));
        _holding = object;
        return fmt::format("You pick up the {} from the {}.", object, r);
    }

    std::string put(std::string const& args)
    {
        auto object = std::string {};
        auto r = std::string {};
        for (auto const* sep: { " in/on ", " in ", " on " })
        {
            if (auto const pos = args.find(sep); pos != std::string::npos)
            {
                object = args.substr(0, pos);
                r = args.substr(pos + std::char_traits<char>::length(sep));
                break;
            }
        }
        if (object.empty() || _holding != object || r != _location || !accessible(r))
            return kNothingHappens;
        _contents[r].push_back(object);
        _holding.reset();
        return fmt::format("You put the {} in/on the {}.", object, r);
    }

    std::string transform(std::string const& args, std::string_view appliance, std::string_view verb, std::set<std::string>& states)
    {
        auto const sep = args.find(" with ");
        if (sep == std::string::npos)
            return kNothingHappens;
        auto const object = args.substr(0, sep);
        auto const r = args.substr(sep + 6);
        if (_holding != object || r != _location || baseType(r) != appliance)
            return kNothingHappens;
        states.insert(object);
        return fmt::format("You {} the {} using the {}.", verb, object, r);
    }

    std::string toggle(std::string const& args)
    {
        if (_lamp.empty() || !startsWith(args, _lamp) || _location != _lampAt)
            return kNothingHappens;
        auto const rest = args.substr(_lamp.size());
        if (!rest.empty() && rest != " " + _lampAt)
            return kNothingHappens;
        _lampOn = !_lampOn;
        return fmt::format("You turn {} the {}.", _lampOn ? "on" : "off", _lamp);
    }

    GoalType _goal = GoalType::PickAndPlace;
    std::vector<std::string> _receptacles;
    std::map<std::string, std::vector<std::string>> _contents;
    std::set<std::string> _open;
    std::set<std::string> _cleaned;
    std::set<std::string> _heated;
    std::set<std::string> _cooled;
    std::string _object;
    std::string _target;
    std::string _lamp;
    std::string _lampAt;
    bool _lampOn = false;
    std::string _location;
    std::optional<std::string> _holding;
};

} // namespace

std::unique_ptr<Session> makeGridHouse(EnvironmentSpec const& spec, TaskInstance const& task, std::uint64_t seed)
{
    return std::make_unique<GridHouse>(spec, task, seed);
}

} // namespace hplan::detail
