#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mocapo/cli.hpp"

namespace {

// Writes to the file when one is given, otherwise to stdout.
class Sink {
public:
    explicit Sink(std::string const& path)
    {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) { throw mocapo::Error("cannot write " + path); }
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-objective, cost-aware prompt optimization"};
    app.require_subcommand(1);

    mocapo::RunOptions run;
    std::uint64_t seed = 0;
    std::uint64_t budget = 0;
    std::string optimizer;
    std::string backend;
    auto* run_cmd = app.add_subcommand("run", "Optimize prompts; writes one archive per seed");
    run_cmd->add_option("--config", run.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run_cmd->add_option("--seed", seed, "Run only this seed");
    auto* budget_opt = run_cmd->add_option("--budget-tokens", budget, "Evaluation token budget");
    run_cmd->add_option("--optimizer", optimizer, "Optimizer")->check(CLI::IsMember({"mocapo", "nsga2po"}));
    run_cmd->add_option("--backend", backend, "LLM backend")->check(CLI::IsMember({"simulator", "http"}));
    run_cmd->add_option("--out", run.out, "Output directory, or a .json file for a single seed");

    mocapo::TestEvalOptions test_eval;
    std::string test_backend;
    std::string test_out;
    std::string test_fixture;
    auto* test_cmd = app.add_subcommand("test-eval", "Score archived fronts on the test split");
    test_cmd->add_option("archives", test_eval.archives, "Archive files")->required()->check(CLI::ExistingFile);
    test_cmd->add_flag("--all-snapshots", test_eval.snapshots, "Also score every per-step front");
    test_cmd->add_flag("--initial", test_eval.initial, "Also score the initial population");
    test_cmd->add_option("--backend", test_backend, "LLM backend")->check(CLI::IsMember({"simulator", "http"}));
    test_cmd->add_option("--fixture", test_fixture, "Serve responses from a recorded fixture");
    test_cmd->add_option("--out", test_out, "Write here instead of updating the archive in place");

    mocapo::MetricsOptions metrics;
    std::string metrics_out;
    auto* metrics_cmd = app.add_subcommand("metrics", "Front-quality report as CSV");
    metrics_cmd->add_option("archives", metrics.archives, "Archive files")->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--reference", metrics.reference, "Reference point coordinate in normalized space");
    metrics_cmd->add_option("--n-pref", metrics.n_pref, "Preference vectors for nR2")->check(CLI::PositiveNumber);
    metrics_cmd->add_option("--metric-seed", metrics.metric_seed, "Seed for preference sampling");
    metrics_cmd->add_flag("--dev-as-test", metrics.dev_as_test, "Use development vectors in place of test scores");
    metrics_cmd->add_option("--out", metrics_out, "CSV output file");

    mocapo::PlotOptions eas;
    std::string eas_out;
    std::string eas_svg;
    auto* eas_cmd = app.add_subcommand("eas", "Empirical attainment surfaces as CSV");
    eas_cmd->add_option("archives", eas.archives, "Archive files")->required()->check(CLI::ExistingFile);
    eas_cmd->add_flag("--dev-as-test", eas.dev_as_test, "Use development vectors in place of test scores");
    eas_cmd->add_option("--out", eas_out, "CSV output file");
    eas_cmd->add_option("--svg", eas_svg, "Also render an SVG plot");

    mocapo::PlotOptions traj;
    std::string traj_out;
    std::string traj_svg;
    auto* traj_cmd = app.add_subcommand("trajectory", "Per-step metric traces as CSV");
    traj_cmd->add_option("archives", traj.archives, "Archive files")->required()->check(CLI::ExistingFile);
    traj_cmd->add_option("--metric", traj.metric, "hv or nr2")->check(CLI::IsMember({"hv", "nr2"}));
    traj_cmd->add_option("--reference", traj.reference, "Reference point coordinate in normalized space");
    traj_cmd->add_option("--n-pref", traj.n_pref, "Preference vectors for nR2")->check(CLI::PositiveNumber);
    traj_cmd->add_option("--metric-seed", traj.metric_seed, "Seed for preference sampling");
    traj_cmd->add_flag("--dev-as-test", traj.dev_as_test, "Use development vectors in place of test scores");
    traj_cmd->add_option("--out", traj_out, "CSV output file");
    traj_cmd->add_option("--svg", traj_svg, "Also render an SVG plot");

    mocapo::ReplayOptions replay;
    std::string replay_fixture;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run an archive and check it reproduces byte for byte");
    replay_cmd->add_option("archive", replay.archive, "Archive file")->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--fixture", replay_fixture, "Serve responses from a recorded fixture");

    std::uint64_t synth_seed = 0;
    mocapo::SyntheticSizes sizes;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth-task", "Write the synthetic review task as JSON-lines files");
    synth_cmd->add_option("--seed", synth_seed, "Task seed");
    synth_cmd->add_option("--dev", sizes.dev, "Development instances");
    synth_cmd->add_option("--shots", sizes.shots, "Few-shot pool size");
    synth_cmd->add_option("--test", sizes.test, "Test instances");
    synth_cmd->add_option("--instructions", sizes.instructions, "Initial instructions");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            if (*seed_opt) { run.overrides.seed = seed; }
            if (*budget_opt) { run.overrides.budget_tokens = budget; }
            if (!optimizer.empty()) { run.overrides.optimizer = optimizer; }
            if (!backend.empty()) { run.overrides.backend = backend; }
            mocapo::cmd_run(run, std::cerr);
        } else if (test_cmd->parsed()) {
            if (!test_backend.empty()) { test_eval.backend = test_backend; }
            if (!test_fixture.empty()) { test_eval.replay_fixture = test_fixture; }
            if (!test_out.empty()) { test_eval.out = test_out; }
            mocapo::cmd_test_eval(test_eval, std::cerr);
        } else if (metrics_cmd->parsed()) {
            Sink out(metrics_out);
            mocapo::cmd_metrics(metrics, out.stream());
        } else if (eas_cmd->parsed()) {
            if (!eas_svg.empty()) { eas.svg = eas_svg; }
            Sink out(eas_out);
            mocapo::cmd_eas(eas, out.stream());
        } else if (traj_cmd->parsed()) {
            if (!traj_svg.empty()) { traj.svg = traj_svg; }
            Sink out(traj_out);
            mocapo::cmd_trajectory(traj, out.stream());
        } else if (replay_cmd->parsed()) {
            if (!replay_fixture.empty()) { replay.fixture = replay_fixture; }
            return mocapo::cmd_replay(replay, std::cout) ? 0 : 3;
        } else if (synth_cmd->parsed()) {
            mocapo::write_synthetic_task(synth_seed, sizes, synth_out);
        }
    } catch (mocapo::BackendError const& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 4;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
