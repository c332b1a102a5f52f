// SPDX-License-Identifier: Apache-2.0
#include <hplan/dpo_loss.hpp>
#include <hplan/env.hpp>
#include <hplan/pipeline.hpp>
#include <hplan/synthetic.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

namespace
{

using hplan::json;

struct CommonOptions
{
    std::string config;
    std::vector<std::string> settings;
    std::string out;
    int maxTasks = -1;
    int workers = 0;
};

void addCommon(CLI::App& cmd, CommonOptions& o)
{
    cmd.add_option("-c,--config", o.config, "Config file (key = value lines)");
    cmd.add_option("-s,--set", o.settings, "Override a setting, key=value (repeatable)");
    cmd.add_option("-o,--out", o.out, "Output directory");
    cmd.add_option("--max-tasks", o.maxTasks, "Stop after this many newly computed tasks");
    cmd.add_option("-j,--workers", o.workers, "Task-level worker threads");
}

hplan::PipelineConfig buildConfig(CommonOptions const& o)
{
    auto config = o.config.empty() ? hplan::PipelineConfig {} : hplan::loadConfig(o.config);
    for (auto const& s: o.settings)
    {
        auto const eq = s.find('=');
        if (eq == std::string::npos)
            throw hplan::BadConfig(fmt::format("--set expects key=value, got '{}'", s));
        config.baseDir.clear();
        hplan::applySetting(config, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!o.out.empty())
        config.outputDir = o.out;
    if (o.workers > 0)
        config.workers = o.workers;
    return config;
}

hplan::RunLimits limitsOf(CommonOptions const& o)
{
    auto limits = hplan::RunLimits {};
    if (o.maxTasks >= 0)
        limits.maxNewTasks = o.maxTasks;
    return limits;
}

int printReport(hplan::StageReport const& report)
{
    std::cout << hplan::toJson(report).dump(2) << "\n";
    return report.complete ? 0 : 3;
}

int runStage(std::function<hplan::StageReport()> const& stage)
{
    try
    {
        return printReport(stage());
    }
    catch (hplan::StageFailed const& e)
    {
        std::cout << hplan::toJson(e.report()).dump(2) << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int lossCheck(std::string const& dpoFile, std::string const& policyFile, std::string const& referenceFile, double initScale, std::uint64_t seed,
              hplan::LossConfig const& loss, double h)
{
    auto pairs = std::vector<hplan::PreferencePair> {};
    for (auto const& record: hplan::readJsonl(dpoFile))
        pairs.push_back(hplan::pairFromDpoRecord(record));
    if (pairs.empty())
        throw hplan::BadConfig(fmt::format("{} holds no preference pairs", dpoFile));

    auto policy = policyFile.empty() ? hplan::tabularPolicyFor(pairs, seed, initScale) : hplan::TabularPolicy::fromFile(policyFile);
    auto const reference = referenceFile.empty() ? hplan::tabularPolicyFor(pairs) : hplan::TabularPolicy::fromFile(referenceFile);

    auto chosen = std::vector<hplan::SftExample> {};
    for (auto const& p: pairs)
        chosen.push_back({ p.taskId, p.instruction, p.chosen, p.chosenCoords.second });

    auto const total = hplan::dpoSftLoss(policy, reference, pairs, loss);
    auto const sft = loss.gamma * hplan::sftLoss(policy, chosen, loss);
    auto const check = hplan::gradCheck(policy, [&](hplan::DifferentiableScorer const& p) { return hplan::dpoSftLossWithGradient(p, reference, pairs, loss); }, h);

    auto const out = json {
        { "pairs", pairs.size() },
        { "beta", loss.beta },
        { "gamma", loss.gamma },
        { "loss", total },
        { "preference_term", total - sft },
        { "sft_term", sft },
        { "grad_check", { { "h", h }, { "max_relative_error", check.maxRelativeError }, { "compared", check.compared } } },
    };
    std::cout << out.dump(2) << "\n";
    return 0;
}

int report(std::filesystem::path const& dir)
{
    auto dirs = std::vector<std::filesystem::path> {};
    for (auto const* stage: { "stage1", "stage2" })
    {
        if (std::filesystem::exists(dir / stage / "report.json"))
            dirs.push_back(dir / stage);
    }
    if (std::filesystem::exists(dir / "eval"))
    {
        auto evals = std::vector<std::filesystem::path> {};
        for (auto const& entry: std::filesystem::directory_iterator(dir / "eval"))
        {
            if (std::filesystem::exists(entry.path() / "report.json"))
                evals.push_back(entry.path());
        }
        std::sort(evals.begin(), evals.end());
        dirs.insert(dirs.end(), evals.begin(), evals.end());
    }
    if (dirs.empty())
        throw hplan::BadConfig(fmt::format("no stage reports under {}", dir.string()));

    auto ok = true;
    auto out = json::object();
    for (auto const& d: dirs)
    {
        auto const audit = hplan::auditReport(d);
        auto const reportJson = json::parse(hplan::readText(d / "report.json"));
        auto const name = std::filesystem::relative(d, dir).string();
        out[name] = { { "audit_ok", audit.ok }, { "problems", audit.problems }, { "metrics", reportJson["metrics"] } };
        ok = ok && audit.ok;
    }
    std::cout << out.dump(2) << "\n";
    return ok ? 0 : 1;
}

int makeSuite(std::filesystem::path const& dir, hplan::SuiteOptions const& options)
{
    auto const suite = hplan::makeSyntheticSuite(options);
    std::filesystem::create_directories(dir);
    hplan::writeTaskSuite(dir / "tasks.jsonl", suite.tasks);
    hplan::writeStubFixture(dir / "plans.jsonl", suite.fixture);
    hplan::writeTextAtomic(dir / "pipeline.conf",
                           fmt::format("# synthetic GridHouse suite\n"
                                       "suite = tasks.jsonl\n"
                                       "planner.kind = stub\n"
                                       "planner.fixture = plans.jsonl\n"
                                       "actor.kind = scripted\n"
                                       "actor.q = 1\n"
                                       "actor.lambda = ln2\n"
                                       "M = {}\n"
                                       "N = {}\n"
                                       "output_dir = out\n",
                                       options.maxLevels, options.plansPerTask));
    std::cout << fmt::format("wrote {} tasks to {}\n", suite.tasks.size(), dir.string());
    return 0;
}

/// Serves a built-in world over stdin/stdout using the external-engine line protocol.
int serveEnv(std::string const& world, std::string const& reward)
{
    auto spec = hplan::EnvironmentSpec {};
    spec.kind = hplan::envKindFromString(world);
    if (spec.kind == hplan::EnvKind::External)
        throw hplan::BadConfig("serve-env needs a built-in world");
    spec.rewardKind = reward == "dense" ? hplan::RewardKind::Dense : hplan::RewardKind::Binary;

    auto session = std::unique_ptr<hplan::Session> {};
    auto line = std::string {};
    while (std::getline(std::cin, line))
    {
        if (line.empty())
            continue;
        auto reply = json {};
        try
        {
            auto const request = json::parse(line);
            auto const type = request.value("type", "");
            if (type == "close")
                break;
            if (type == "reset")
            {
                spec.maxSteps = request.value("max_steps", spec.maxSteps);
                session = hplan::reset(spec, hplan::taskFromJson(request.at("task")), request.value("seed", std::uint64_t { 0 }));
                reply = { { "observation", session->initialObservation().text }, { "done", false } };
            }
            else if (type == "step" && session)
            {
                auto const outcome = session->step(request.at("action").get<std::string>());
                reply = { { "observation", outcome.observation.text }, { "done", outcome.done } };
                if (outcome.reward)
                    reply["reward"] = *outcome.reward;
                if (outcome.truncated)
                    reply["truncated"] = true;
            }
            else
                reply = { { "error", fmt::format("unexpected request '{}'", type) } };
        }
        catch (std::exception const& e)
        {
            reply = { { "error", e.what() } };
        }
        std::cout << reply.dump() << std::endl;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    auto app = CLI::App { "Hierarchical plan data pipeline" };
    app.require_subcommand(1);

    auto stage1 = CommonOptions {};
    auto* stage1Cmd = app.add_subcommand("stage1", "Generate, evaluate and select plans; write SFT data");
    addCommon(*stage1Cmd, stage1);

    auto stage2 = CommonOptions {};
    auto* stage2Cmd = app.add_subcommand("stage2", "Build preference pairs and export the dataset");
    addCommon(*stage2Cmd, stage2);

    auto eval = CommonOptions {};
    auto evalMode = std::string {};
    auto evalSplit = std::string {};
    auto evalRender = std::string {};
    auto repetitions = 0;
    auto* evalCmd = app.add_subcommand("eval", "Run the actor over a split with a plan source");
    addCommon(*evalCmd, eval);
    evalCmd->add_option("--mode", evalMode, "adaptive, fix-<j>, none or base");
    evalCmd->add_option("--split", evalSplit, "all, seen or unseen");
    evalCmd->add_option("--render", evalRender, "hierarchical or last-level");
    evalCmd->add_option("--repetitions", repetitions, "Episodes per task");

    auto dpoFile = std::string {};
    auto policyFile = std::string {};
    auto referenceFile = std::string {};
    auto initScale = 0.0;
    auto lossSeed = std::uint64_t { 0 };
    auto loss = hplan::LossConfig {};
    auto h = 1e-5;
    auto* lossCmd = app.add_subcommand("loss-check", "Evaluate the combined loss on a DPO file and check its gradient");
    lossCmd->add_option("--dpo", dpoFile, "DPO JSON-Lines file")->required()->check(CLI::ExistingFile);
    lossCmd->add_option("--policy", policyFile, "Tabular policy JSON (default: built from the pairs)")->check(CLI::ExistingFile);
    lossCmd->add_option("--reference", referenceFile, "Tabular reference JSON (default: uniform)")->check(CLI::ExistingFile);
    lossCmd->add_option("--init-scale", initScale, "Random logit scale for the built policy (0 = uniform)");
    lossCmd->add_option("--seed", lossSeed, "Seed for the random policy init");
    lossCmd->add_option("--beta", loss.beta, "Preference temperature");
    lossCmd->add_option("--gamma", loss.gamma, "Weight of the likelihood term");
    lossCmd->add_flag("--per-token", loss.perTokenAverage, "Average log-probabilities per token");
    lossCmd->add_option("--step", h, "Finite-difference step");

    auto reportDir = std::string { "out" };
    auto* reportCmd = app.add_subcommand("report", "Audit every stage report under an output directory");
    reportCmd->add_option("dir", reportDir, "Output directory");

    auto suiteDir = std::string {};
    auto suite = hplan::SuiteOptions {};
    auto* suiteCmd = app.add_subcommand("make-suite", "Write a synthetic task suite, stub plans and a config");
    suiteCmd->add_option("dir", suiteDir, "Destination directory")->required();
    suiteCmd->add_option("--tasks", suite.tasks, "Task count");
    suiteCmd->add_option("--levels", suite.maxLevels, "Maximum plan depth M");
    suiteCmd->add_option("--plans", suite.plansPerTask, "Fixed plans per task N");
    suiteCmd->add_option("--seed", suite.seed, "Generator seed");

    auto world = std::string { "gridhouse" };
    auto reward = std::string { "binary" };
    auto* serveCmd = app.add_subcommand("serve-env", "Serve a built-in world over stdin/stdout");
    serveCmd->add_option("--world", world, "gridhouse or subgoallab");
    serveCmd->add_option("--reward", reward, "binary or dense")->check(CLI::IsMember({ "binary", "dense" }));

    auto shown = CommonOptions {};
    auto* configCmd = app.add_subcommand("show-config", "Print the effective configuration");
    addCommon(*configCmd, shown);

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*stage1Cmd)
            return runStage([&] { return hplan::runStage1(buildConfig(stage1), limitsOf(stage1)); });
        if (*stage2Cmd)
            return runStage([&] { return hplan::runStage2(buildConfig(stage2), limitsOf(stage2)); });
        if (*evalCmd)
        {
            return runStage([&] {
                auto config = buildConfig(eval);
                if (!evalMode.empty())
                    config.evalMode = evalMode;
                if (!evalSplit.empty())
                    hplan::applySetting(config, "eval.split", evalSplit);
                if (!evalRender.empty())
                    config.renderMode = hplan::renderModeFromString(evalRender);
                if (repetitions > 0)
                    config.repetitions = repetitions;
                return hplan::runEval(config, limitsOf(eval));
            });
        }
        if (*lossCmd)
        {
            loss.check();
            return lossCheck(dpoFile, policyFile, referenceFile, initScale, lossSeed, loss, h);
        }
        if (*reportCmd)
            return report(reportDir);
        if (*suiteCmd)
            return makeSuite(suiteDir, suite);
        if (*serveCmd)
            return serveEnv(world, reward);
        if (*configCmd)
        {
            std::cout << hplan::dumpConfig(buildConfig(shown));
            return 0;
        }
    }
    catch (hplan::BadConfig const& e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return 64;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
