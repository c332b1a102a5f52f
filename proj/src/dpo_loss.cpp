// SPDX-License-Identifier: Apache-2.0
#include <hplan/dpo_loss.hpp>
#include <hplan/hashing.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>

namespace hplan
{

void TabularPolicy::addContext(std::string const& context, std::vector<std::string> const& candidates, std::vector<double> const& logits)
{
    if (candidates.empty() || candidates.size() != logits.size())
        throw BadConfig(fmt::format("context '{}': {} candidates but {} logits", context, candidates.size(), logits.size()));
    if (std::set<std::string>(candidates.begin(), candidates.end()).size() != candidates.size())
        throw BadConfig(fmt::format("context '{}': duplicate candidates", context));
    if (_entries.contains(context))
        throw BadConfig(fmt::format("context '{}' already defined", context));
    _entries.emplace(context, Entry { candidates, _logits.size() });
    _logits.insert(_logits.end(), logits.begin(), logits.end());
}

TabularPolicy::Entry const& TabularPolicy::entry(std::string const& context) const
{
    auto const it = _entries.find(context);
    if (it == _entries.end())
        throw UnknownCandidate(fmt::format("tabular policy has no context '{}'", context.substr(0, 80)));
    return it->second;
}

std::size_t TabularPolicy::position(Entry const& e, std::string const& target, std::string const& context) const
{
    auto const it = std::ranges::find(e.candidates, target);
    if (it == e.candidates.end())
        throw UnknownCandidate(fmt::format("context '{}' has no candidate '{}'", context.substr(0, 80), target.substr(0, 80)));
    return static_cast<std::size_t>(it - e.candidates.begin());
}

double TabularPolicy::normalizer(Entry const& e) const
{
    auto const first = _logits.begin() + static_cast<std::ptrdiff_t>(e.offset);
    auto const last = first + static_cast<std::ptrdiff_t>(e.candidates.size());
    auto const top = *std::max_element(first, last);
    auto sum = 0.0;
    for (auto it = first; it != last; ++it)
        sum += std::exp(*it - top);
    return top + std::log(sum);
}

double TabularPolicy::logprob(std::string const& target, std::string const& context) const
{
    auto const& e = entry(context);
    return _logits[e.offset + position(e, target, context)] - normalizer(e);
}

double TabularPolicy::probability(std::string const& target, std::string const& context) const
{
    return std::exp(logprob(target, context));
}

void TabularPolicy::accumulateGradient(std::string const& target, std::string const& context, double scale, std::span<double> grad) const
{
    auto const& e = entry(context);
    auto const hit = position(e, target, context);
    auto const z = normalizer(e);
    for (std::size_t i = 0; i < e.candidates.size(); ++i)
    {
        auto const p = std::exp(_logits[e.offset + i] - z);
        grad[e.offset + i] += scale * ((i == hit ? 1.0 : 0.0) - p);
    }
}

std::vector<std::string> TabularPolicy::contexts() const
{
    auto out = std::vector<std::string> {};
    for (auto const& [context, _]: _entries)
        out.push_back(context);
    return out;
}

std::vector<std::string> const& TabularPolicy::candidates(std::string const& context) const
{
    return entry(context).candidates;
}

json TabularPolicy::toJson() const
{
    auto list = json::array();
    for (auto const& [context, e]: _entries)
    {
        auto const first = _logits.begin() + static_cast<std::ptrdiff_t>(e.offset);
        list.push_back({
            { "context", context },
            { "candidates", e.candidates },
            { "logits", std::vector<double>(first, first + static_cast<std::ptrdiff_t>(e.candidates.size())) },
        });
    }
    return { { "contexts", std::move(list) } };
}

TabularPolicy TabularPolicy::fromJson(json const& j)
{
    auto policy = TabularPolicy {};
    for (auto const& c: j.at("contexts"))
        policy.addContext(c.at("context").get<std::string>(), c.at("candidates").get<std::vector<std::string>>(), c.at("logits").get<std::vector<double>>());
    return policy;
}

TabularPolicy TabularPolicy::fromFile(std::filesystem::path const& path)
{
    try
    {
        return fromJson(json::parse(readText(path)));
    }
    catch (json::exception const& e)
    {
        throw BadConfig(fmt::format("{}: malformed tabular policy: {}", path.string(), e.what()));
    }
}

TabularPolicy tabularPolicyFor(std::span<PreferencePair const> pairs, std::uint64_t seed, double scale)
{
    auto order = std::vector<std::string> {};
    auto candidates = std::map<std::string, std::vector<std::string>> {};
    for (auto const& pair: pairs)
    {
        auto [it, fresh] = candidates.try_emplace(pair.instruction);
        if (fresh)
            order.push_back(pair.instruction);
        for (auto const* text: { &pair.chosen, &pair.rejected })
        {
            if (std::find(it->second.begin(), it->second.end(), *text) == it->second.end())
                it->second.push_back(*text);
        }
    }
    auto rng = std::mt19937_64 { deriveSeed(seed, "tabular-init") };
    auto policy = TabularPolicy {};
    for (auto const& context: order)
    {
        auto const& texts = candidates[context];
        auto logits = std::vector<double>(texts.size(), 0.0);
        if (scale > 0.0)
        {
            for (auto& l: logits)
                l = scale * (2.0 * uniform01(rng) - 1.0);
        }
        policy.addContext(context, texts, logits);
    }
    return policy;
}

void LossConfig::check() const
{
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw BadConfig(fmt::format("beta must be a positive finite number, got {}", beta));
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw BadConfig(fmt::format("gamma must lie in [0, 1], got {}", gamma));
}

double logSigmoid(double x)
{
    return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

namespace
{

double tokenCount(std::string const& text)
{
    auto count = 0;
    auto inToken = false;
    for (unsigned char c: text)
    {
        auto const space = std::isspace(c) != 0;
        if (!space && !inToken)
            ++count;
        inToken = !space;
    }
    return static_cast<double>(std::max(1, count));
}

double scaleFor(std::string const& target, LossConfig const& config)
{
    return config.perTokenAverage ? 1.0 / tokenCount(target) : 1.0;
}

double scored(PolicyScorer const& scorer, std::string const& target, std::string const& context, LossConfig const& config)
{
    auto const value = scorer.logprob(target, context);
    if (!std::isfinite(value))
        throw NonFiniteScore(fmt::format("non-finite log-probability for '{}'", target.substr(0, 80)));
    return value * scaleFor(target, config);
}

double reductionWeight(std::size_t size, LossConfig const& config)
{
    return config.reduction == Reduction::Mean ? 1.0 / static_cast<double>(size) : 1.0;
}

template <typename Batch>
void requireNonEmpty(Batch const& batch, std::string_view what)
{
    if (batch.empty())
        throw BadConfig(fmt::format("{} needs a non-empty batch", what));
}

LossValue sftImpl(PolicyScorer const& policy, DifferentiableScorer const* diff, std::span<SftExample const> batch, LossConfig const& config)
{
    requireNonEmpty(batch, "sft loss");
    auto const w = reductionWeight(batch.size(), config);
    auto out = LossValue {};
    if (diff)
        out.gradient.assign(diff->parameters().size(), 0.0);
    auto total = 0.0;
    for (auto const& e: batch)
    {
        total += -scored(policy, e.target, e.instruction, config);
        if (diff)
            diff->accumulateGradient(e.target, e.instruction, -w * scaleFor(e.target, config), out.gradient);
    }
    out.value = total * w;
    return out;
}

LossValue dpoImpl(PolicyScorer const& policy,
                  DifferentiableScorer const* diff,
                  PolicyScorer const& reference,
                  std::span<PreferencePair const> batch,
                  LossConfig const& config)
{
    config.check();
    requireNonEmpty(batch, "dpo loss");
    auto const w = reductionWeight(batch.size(), config);
    auto out = LossValue {};
    if (diff)
        out.gradient.assign(diff->parameters().size(), 0.0);

    auto preference = 0.0;
    auto sft = 0.0;
    for (auto const& p: batch)
    {
        auto const chosen = scored(policy, p.chosen, p.instruction, config);
        auto const rejected = scored(policy, p.rejected, p.instruction, config);
        auto const refChosen = scored(reference, p.chosen, p.instruction, config);
        auto const refRejected = scored(reference, p.rejected, p.instruction, config);

        auto const x = config.beta * ((chosen - refChosen) - (rejected - refRejected));
        preference += -logSigmoid(x);
        sft += -chosen;

        if (diff)
        {
            // d/dx of -log sigmoid(x) is -sigmoid(-x).
            auto const g = -std::exp(logSigmoid(-x)) * config.beta;
            diff->accumulateGradient(p.chosen, p.instruction, w * (g - config.gamma) * scaleFor(p.chosen, config), out.gradient);
            diff->accumulateGradient(p.rejected, p.instruction, -w * g * scaleFor(p.rejected, config), out.gradient);
        }
    }
    out.value = w * preference + config.gamma * w * sft;
    return out;
}

} // namespace

double sftLoss(PolicyScorer const& policy, std::span<SftExample const> batch, LossConfig const& config)
{
    return sftImpl(policy, nullptr, batch, config).value;
}

LossValue sftLossWithGradient(DifferentiableScorer const& policy, std::span<SftExample const> batch, LossConfig const& config)
{
    return sftImpl(policy, &policy, batch, config);
}

double dpoSftLoss(PolicyScorer const& policy, PolicyScorer const& reference, std::span<PreferencePair const> batch, LossConfig const& config)
{
    return dpoImpl(policy, nullptr, reference, batch, config).value;
}

LossValue dpoSftLossWithGradient(DifferentiableScorer const& policy,
                                 PolicyScorer const& reference,
                                 std::span<PreferencePair const> batch,
                                 LossConfig const& config)
{
    return dpoImpl(policy, &policy, reference, batch, config);
}

GradCheckResult gradCheck(DifferentiableScorer& scorer, std::function<LossValue(DifferentiableScorer const&)> const& loss, double h)
{
    if (!(h > 0.0))
        throw BadConfig(fmt::format("finite-difference step must be positive, got {}", h));

    auto const analytic = loss(scorer).gradient;
    auto params = scorer.parameters();
    if (analytic.size() != params.size())
        throw Error(fmt::format("loss returned {} gradient components for {} parameters", analytic.size(), params.size()));

    auto result = GradCheckResult {};
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        if (std::abs(analytic[i]) <= 1e-8)
            continue;
        auto const saved = params[i];
        params[i] = saved + h;
        auto const up = loss(scorer).value;
        params[i] = saved - h;
        auto const down = loss(scorer).value;
        params[i] = saved;

        auto const numeric = (up - down) / (2.0 * h);
        auto const rel = std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]), std::abs(numeric));
        result.maxRelativeError = std::max(result.maxRelativeError, rel);
        ++result.compared;
    }
    return result;
}

} // namespace hplan
