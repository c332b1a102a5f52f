// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hplan/errors.hpp>
#include <hplan/jsonl.hpp>
#include <hplan/pref_data.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hplan
{

class UnknownCandidate: public Error
{
  public:
    using Error::Error;
};

class NonFiniteScore: public Error
{
  public:
    using Error::Error;
};

/// Assigns log pi(target | context).
class PolicyScorer
{
  public:
    virtual ~PolicyScorer() = default;

    [[nodiscard]] virtual double logprob(std::string const& target, std::string const& context) const = 0;
};

class DifferentiableScorer: public PolicyScorer
{
  public:
    [[nodiscard]] virtual std::span<double> parameters() = 0;
    [[nodiscard]] virtual std::span<double const> parameters() const = 0;

    /// grad += scale * d logprob(target | context) / d theta.
    virtual void accumulateGradient(std::string const& target, std::string const& context, double scale, std::span<double> grad) const = 0;
};

/// One softmax over an enumerated candidate list per context.
class TabularPolicy final: public DifferentiableScorer
{
  public:
    TabularPolicy() = default;

    /// Throws BadConfig on duplicate contexts or candidates, or a size mismatch.
    void addContext(std::string const& context, std::vector<std::string> const& candidates, std::vector<double> const& logits);

    [[nodiscard]] double logprob(std::string const& target, std::string const& context) const override;
    [[nodiscard]] double probability(std::string const& target, std::string const& context) const;

    [[nodiscard]] std::span<double> parameters() override { return _logits; }
    [[nodiscard]] std::span<double const> parameters() const override { return _logits; }
    void accumulateGradient(std::string const& target, std::string const& context, double scale, std::span<double> grad) const override;

    [[nodiscard]] std::vector<std::string> contexts() const;
    [[nodiscard]] std::vector<std::string> const& candidates(std::string const& context) const;

    /// {contexts: [{context, candidates: [...], logits: [...]}]}
    [[nodiscard]] json toJson() const;
    [[nodiscard]] static TabularPolicy fromJson(json const& j);
    [[nodiscard]] static TabularPolicy fromFile(std::filesystem::path const& path);

  private:
    struct Entry
    {
        std::vector<std::string> candidates;
        std::size_t offset = 0;
    };

    [[nodiscard]] Entry const& entry(std::string const& context) const;
    [[nodiscard]] std::size_t position(Entry const& e, std::string const& target, std::string const& context) const;
    /// Log-sum-exp of the context's logits.
    [[nodiscard]] double normalizer(Entry const& e) const;

    std::map<std::string, Entry> _entries;
    std::vector<double> _logits;
};

/// One context per distinct prompt of `pairs`, holding every chosen or rejected text seen with it
/// in first-seen order. Logits are 0, or scale * U(-1, 1) drawn with `seed` when scale > 0.
[[nodiscard]] TabularPolicy tabularPolicyFor(std::span<PreferencePair const> pairs, std::uint64_t seed = 0, double scale = 0.0);

enum class Reduction
{
    Mean,
    Sum,
};

struct LossConfig
{
    double beta = 0.1;
    double gamma = 1.0;
    Reduction reduction = Reduction::Mean;
    /// Divide each log-probability by the whitespace token count of its target. Off by default.
    bool perTokenAverage = false;

    /// Throws BadConfig unless beta > 0 and 0 <= gamma <= 1.
    void check() const;
};

struct LossValue
{
    double value = 0.0;
    /// With respect to the policy parameters; empty when no gradient was requested.
    std::vector<double> gradient;
};

/// log(sigmoid(x)) without overflow for large |x|.
[[nodiscard]] double logSigmoid(double x);

/// Mean (or sum) over the batch of -log pi(target | instruction).
[[nodiscard]] double sftLoss(PolicyScorer const& policy, std::span<SftExample const> batch, LossConfig const& config = {});
[[nodiscard]] LossValue sftLossWithGradient(DifferentiableScorer const& policy, std::span<SftExample const> batch, LossConfig const& config = {});

/// Preference term -log sigmoid(beta * margin) plus gamma times the negative log-likelihood of the
/// chosen plans. The reference scorer is frozen and never differentiated.
[[nodiscard]] double dpoSftLoss(PolicyScorer const& policy, PolicyScorer const& reference, std::span<PreferencePair const> batch, LossConfig const& config = {});
[[nodiscard]] LossValue dpoSftLossWithGradient(DifferentiableScorer const& policy,
                                               PolicyScorer const& reference,
                                               std::span<PreferencePair const> batch,
                                               LossConfig const& config = {});

struct GradCheckResult
{
    double maxRelativeError = 0.0;
    /// Components with |analytic gradient| > 1e-8 that entered the maximum.
    std::size_t compared = 0;
};

/// Central differences of `loss` at step h against its analytic gradient. Parameters are
/// perturbed in place and restored.
[[nodiscard]] GradCheckResult gradCheck(DifferentiableScorer& scorer,
                                        std::function<LossValue(DifferentiableScorer const&)> const& loss,
                                        double h = 1e-5);

} // namespace hplan
