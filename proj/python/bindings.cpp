// SPDX-License-Identifier: Apache-2.0
// Structured values cross the boundary as JSON text; the Python package decodes them.

#include <hplan/dpo_loss.hpp>
#include <hplan/mc_eval.hpp>
#include <hplan/pipeline.hpp>
#include <hplan/synthetic.hpp>

#include <fmt/format.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hplan;

namespace
{

std::string parsePlanJson(std::string const& text, std::string const& taskId, int sourceIndex)
{
    auto const parsed = parsePlan(text, taskId, sourceIndex);
    auto out = toJson(parsed.plan);
    out["written_levels"] = parsed.report.writtenLevels;
    auto warnings = json::array();
    for (auto const& warning: parsed.report.warnings)
        warnings.push_back(warning.message);
    out["warnings"] = warnings;
    return out.dump();
}

std::string renderJson(std::string const& plan, std::string const& mode, std::optional<int> m)
{
    auto p = planFromJson(json::parse(plan));
    if (m)
        p = prefix(p, *m);
    return render(p, renderModeFromString(mode));
}

std::string prefixJson(std::string const& plan, int m)
{
    return toJson(prefix(planFromJson(json::parse(plan)), m)).dump();
}

std::vector<std::string> validateJson(std::string const& plan, bool strictMonotone, std::optional<int> maxLevels)
{
    auto const report = validate(planFromJson(json::parse(plan)), { .strictMonotone = strictMonotone, .maxLevels = maxLevels });
    auto out = std::vector<std::string> {};
    for (auto const& violation: report.violations)
        out.push_back(fmt::format("{}: {}", toString(violation.rule), violation.message));
    return out;
}

std::string selectBestJson(std::string const& table, std::vector<std::string> const& plans, bool literalFormula)
{
    auto parsed = std::vector<HierarchicalPlan> {};
    for (auto const& plan: plans)
        parsed.push_back(planFromJson(json::parse(plan)));
    return toJson(selectBest(qtableFromJson(json::parse(table)), parsed, { .tolerance = 1e-9, .literalFormula = literalFormula })).dump();
}

using PairTuple = std::tuple<std::string, std::string, std::string>;
using SftTuple = std::pair<std::string, std::string>;

std::vector<PreferencePair> toPairs(std::vector<PairTuple> const& pairs)
{
    auto out = std::vector<PreferencePair> {};
    for (auto const& [context, chosen, rejected]: pairs)
    {
        auto pair = PreferencePair {};
        pair.taskId = context;
        pair.instruction = context;
        pair.chosen = chosen;
        pair.rejected = rejected;
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<SftExample> toSft(std::vector<SftTuple> const& examples)
{
    auto out = std::vector<SftExample> {};
    for (auto const& [context, target]: examples)
        out.push_back({ context, context, target, 1 });
    return out;
}

LossConfig lossConfig(double beta, double gamma, std::string const& reduction, bool perTokenAverage)
{
    if (reduction != "mean" && reduction != "sum")
        throw BadConfig(fmt::format("reduction must be mean or sum, got '{}'", reduction));
    return { .beta = beta, .gamma = gamma, .reduction = reduction == "sum" ? Reduction::Sum : Reduction::Mean, .perTokenAverage = perTokenAverage };
}

PipelineConfig configFrom(std::filesystem::path const& path, std::map<std::string, std::string> const& overrides)
{
    auto config = loadConfig(path);
    for (auto const& [key, value]: overrides)
        applySetting(config, key, value);
    validateConfig(config);
    return config;
}

RunLimits limitsFrom(std::optional<int> maxNewTasks)
{
    return { .maxNewTasks = maxNewTasks };
}

template <typename Run>
std::string runStage(Run run, std::filesystem::path const& path, std::map<std::string, std::string> const& overrides, std::optional<int> maxNewTasks)
{
    auto const config = configFrom(path, overrides);
    auto const release = py::gil_scoped_release {};
    return toJson(run(config, limitsFrom(maxNewTasks))).dump();
}

std::string auditJson(AuditResult const& audit)
{
    return json { { "ok", audit.ok }, { "problems", audit.problems }, { "recomputed", audit.recomputed } }.dump();
}

std::filesystem::path writeSuite(std::filesystem::path const& dir, int tasks, int levels, int plans, std::uint64_t seed)
{
    auto const options = SuiteOptions { .tasks = tasks, .maxLevels = levels, .plansPerTask = plans, .seed = seed, .markUnseen = true };
    auto const suite = makeSyntheticSuite(options);
    std::filesystem::create_directories(dir);
    writeTaskSuite(dir / "tasks.jsonl", suite.tasks);
    writeStubFixture(dir / "plans.jsonl", suite.fixture);
    writeTextAtomic(dir / "pipeline.conf",
                    fmt::format("suite = tasks.jsonl\n"
                                "planner.kind = stub\n"
                                "planner.fixture = plans.jsonl\n"
                                "actor.kind = scripted\n"
                                "actor.q = 1\n"
                                "actor.lambda = ln2\n"
                                "M = {}\n"
                                "N = {}\n"
                                "output_dir = out\n",
                                levels,
                                plans));
    return dir / "pipeline.conf";
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "hplan native core";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<BadConfig>(m, "BadConfig", error.ptr());
    py::register_exception<OutOfRange>(m, "OutOfRange", error.ptr());
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<StageFailed>(m, "StageFailed", error.ptr());

    m.def("parse_plan", &parsePlanJson, py::arg("text"), py::arg("task_id") = "", py::arg("source_index") = 1);
    m.def("render", &renderJson, py::arg("plan"), py::arg("mode") = "hierarchical", py::arg("m") = std::nullopt);
    m.def("prefix", &prefixJson, py::arg("plan"), py::arg("m"));
    m.def("validate", &validateJson, py::arg("plan"), py::arg("strict_monotone") = false, py::arg("max_levels") = std::nullopt);
    m.def("select_best", &selectBestJson, py::arg("table"), py::arg("plans"), py::arg("literal_formula") = false);

    py::class_<TabularPolicy>(m, "TabularPolicy")
        .def(py::init<>())
        .def("add_context", &TabularPolicy::addContext, py::arg("context"), py::arg("candidates"), py::arg("logits"))
        .def("logprob", &TabularPolicy::logprob, py::arg("target"), py::arg("context"))
        .def("probability", &TabularPolicy::probability, py::arg("target"), py::arg("context"))
        .def("contexts", &TabularPolicy::contexts)
        .def_property(
            "parameters",
            [](TabularPolicy const& p) {
                auto const params = p.parameters();
                return std::vector<double>(params.begin(), params.end());
            },
            [](TabularPolicy& p, std::vector<double> const& values) {
                auto params = p.parameters();
                if (values.size() != params.size())
                    throw BadConfig(fmt::format("expected {} parameters, got {}", params.size(), values.size()));
                std::ranges::copy(values, params.begin());
            })
        .def("to_json", [](TabularPolicy const& p) { return p.toJson().dump(); })
        .def_static("from_json", [](std::string const& text) { return TabularPolicy::fromJson(json::parse(text)); });

    m.def("log_sigmoid", &logSigmoid, py::arg("x"));
    m.def(
        "sft_loss",
        [](TabularPolicy const& policy, std::vector<SftTuple> const& batch, std::string const& reduction) {
            auto const examples = toSft(batch);
            return sftLoss(policy, examples, lossConfig(0.1, 1.0, reduction, false));
        },
        py::arg("policy"), py::arg("batch"), py::arg("reduction") = "mean");
    m.def(
        "sft_loss_with_gradient",
        [](TabularPolicy const& policy, std::vector<SftTuple> const& batch, std::string const& reduction) {
            auto const examples = toSft(batch);
            auto const loss = sftLossWithGradient(policy, examples, lossConfig(0.1, 1.0, reduction, false));
            return std::pair { loss.value, loss.gradient };
        },
        py::arg("policy"), py::arg("batch"), py::arg("reduction") = "mean");
    m.def(
        "dpo_sft_loss",
        [](TabularPolicy const& policy, TabularPolicy const& reference, std::vector<PairTuple> const& batch, double beta, double gamma, std::string const& reduction, bool perToken) {
            auto const pairs = toPairs(batch);
            return dpoSftLoss(policy, reference, pairs, lossConfig(beta, gamma, reduction, perToken));
        },
        py::arg("policy"), py::arg("reference"), py::arg("batch"), py::arg("beta") = 0.1, py::arg("gamma") = 1.0, py::arg("reduction") = "mean",
        py::arg("per_token_average") = false);
    m.def(
        "dpo_sft_loss_with_gradient",
        [](TabularPolicy const& policy, TabularPolicy const& reference, std::vector<PairTuple> const& batch, double beta, double gamma, std::string const& reduction, bool perToken) {
            auto const pairs = toPairs(batch);
            auto const loss = dpoSftLossWithGradient(policy, reference, pairs, lossConfig(beta, gamma, reduction, perToken));
            return std::pair { loss.value, loss.gradient };
        },
        py::arg("policy"), py::arg("reference"), py::arg("batch"), py::arg("beta") = 0.1, py::arg("gamma") = 1.0, py::arg("reduction") = "mean",
        py::arg("per_token_average") = false);

    m.def("make_synthetic_suite", &writeSuite, py::arg("dir"), py::arg("tasks") = 30, py::arg("levels") = 3, py::arg("plans") = 5, py::arg("seed") = 0);
    m.def("dump_config", [](std::filesystem::path const& path, std::map<std::string, std::string> const& overrides) { return dumpConfig(configFrom(path, overrides)); },
          py::arg("config"), py::arg("overrides") = std::map<std::string, std::string> {});
    m.def(
        "run_stage1", [](std::filesystem::path const& path, std::map<std::string, std::string> const& overrides, std::optional<int> maxNewTasks) {
            return runStage([](auto const& c, auto const& l) { return runStage1(c, l); }, path, overrides, maxNewTasks);
        },
        py::arg("config"), py::arg("overrides") = std::map<std::string, std::string> {}, py::arg("max_new_tasks") = std::nullopt);
    m.def(
        "run_stage2", [](std::filesystem::path const& path, std::map<std::string, std::string> const& overrides, std::optional<int> maxNewTasks) {
            return runStage([](auto const& c, auto const& l) { return runStage2(c, l); }, path, overrides, maxNewTasks);
        },
        py::arg("config"), py::arg("overrides") = std::map<std::string, std::string> {}, py::arg("max_new_tasks") = std::nullopt);
    m.def(
        "run_eval", [](std::filesystem::path const& path, std::map<std::string, std::string> const& overrides, std::optional<int> maxNewTasks) {
            return runStage([](auto const& c, auto const& l) { return runEval(c, l); }, path, overrides, maxNewTasks);
        },
        py::arg("config"), py::arg("overrides") = std::map<std::string, std::string> {}, py::arg("max_new_tasks") = std::nullopt);
    m.def("audit_report", [](std::filesystem::path const& dir) { return auditJson(auditReport(dir)); }, py::arg("dir"));
    m.def("audit_pairs", [](std::filesystem::path const& path, double margin) { return auditJson(auditPairs(path, margin)); }, py::arg("path"), py::arg("margin") = 0.0);
}
