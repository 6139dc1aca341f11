#pragma once

// The command implementations behind tools/mocapo.cpp. Each command takes a
// plain options struct and writes its report to a stream, so tests can drive
// them without spawning processes.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocapo/archive.hpp"
#include "mocapo/config.hpp"
#include "mocapo/metrics.hpp"
#include "mocapo/mo_capo.hpp"
#include "mocapo/nsga2_po.hpp"
#include "mocapo/svg.hpp"

namespace mocapo {

// ---------------------------------------------------------------------------
// run

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> budget_tokens;
    std::optional<std::string> optimizer;
    std::optional<std::string> backend;
};

/// Loads a config file and applies command-line overrides. The file is parsed
/// on its own first so that diagnostics refer to its own lines.
inline RunConfig load_config(std::filesystem::path const& path, RunOverrides const& o)
{
    auto cfg = load_config(path);
    if (!o.seed && !o.budget_tokens && !o.optimizer && !o.backend) { return cfg; }
    nlohmann::json doc = nlohmann::json::parse(detail::slurp(path));
    if (o.seed) { doc["seeds"] = {*o.seed}; }
    if (o.budget_tokens) { doc["budget"]["tokens"] = *o.budget_tokens; }
    if (o.optimizer) { doc["optimizer"]["name"] = *o.optimizer; }
    if (o.backend) { doc["backend"]["kind"] = *o.backend; }
    return parse_config(doc.dump(2), std::filesystem::absolute(path).parent_path(), path.string() + " (with overrides)");
}

inline RunResult run_optimizer(RunConfig const& cfg, std::uint64_t seed, std::ostream* log = nullptr)
{
    auto oc = cfg.optimizer_config;
    oc.seed = seed;
    BackendSet backends(cfg);
    if (cfg.optimizer == "nsga2po") {
        Nsga2Po opt(cfg.task, oc, backends.eval(), backends.meta(), cfg.templates);
        opt.set_log(log);
        return opt.run(cfg.initial_instructions);
    }
    MoCapo opt(cfg.task, oc, backends.eval(), backends.meta(), cfg.templates);
    opt.set_log(log);
    return opt.run(cfg.initial_instructions);
}

/// The configuration snapshot stored in an archive: the resolved document with
/// the seed list narrowed to this run's seed.
inline nlohmann::json config_snapshot(RunConfig const& cfg, std::uint64_t seed)
{
    auto snap = cfg.resolved;
    snap["seeds"] = {seed};
    return snap;
}

inline RunArchive make_archive(RunConfig const& cfg, std::uint64_t seed, RunResult run)
{
    RunArchive a;
    a.config = config_snapshot(cfg, seed);
    a.config_hash = hash_hex(a.config.dump());
    a.task = cfg.task.name;
    a.task_digest = task_digest(cfg.task);
    a.seed = seed;
    a.token_budget = cfg.optimizer_config.token_budget;
    a.run = std::move(run);
    return a;
}

inline std::string archive_filename(RunArchive const& a)
{
    return a.task + "_" + a.run.optimizer + "_seed" + std::to_string(a.seed) + ".json";
}

struct RunOptions {
    std::string config;
    RunOverrides overrides;
    std::string out{"."};
};

/// One archive per seed. `out` is a directory, or a .json file name for a single seed.
inline std::vector<std::string> cmd_run(RunOptions const& o, std::ostream& report)
{
    auto const cfg = load_config(o.config, o.overrides);
    std::vector<std::string> written;
    bool const single_file = std::filesystem::path(o.out).extension() == ".json";
    if (single_file && cfg.seeds.size() != 1) { throw Error("--out names a file but the config lists several seeds"); }
    if (!single_file) { std::filesystem::create_directories(o.out); }
    for (auto seed : cfg.seeds) {
        auto archive = make_archive(cfg, seed, run_optimizer(cfg, seed, &report));
        auto const path = single_file ? o.out : (std::filesystem::path(o.out) / archive_filename(archive)).string();
        write_archive(archive, path);
        report << "seed " << seed << ": " << archive.run.optimizer << " stopped (" << archive.run.stop_reason << ") after "
               << archive.run.steps << " steps, " << archive.run.history.eval_tokens_total() << " evaluation tokens, "
               << archive.run.history.distinct_evaluated() << " candidates, front of " << archive.run.final_front.size()
               << " -> " << path << "\n";
        written.push_back(path);
    }
    return written;
}

/// Rebuilds the configuration an archive was produced with.
inline RunConfig archive_config(RunArchive const& a, std::optional<std::string> backend = std::nullopt)
{
    auto doc = a.config;
    if (backend) { doc["backend"]["kind"] = *backend; }
    auto cfg = parse_config(doc.dump(2), std::filesystem::current_path(), "archive config");
    if (task_digest(cfg.task) != a.task_digest) {
        throw Error("task data changed since the archive was written (digest mismatch)");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// test-eval

struct TestEvalOptions {
    std::vector<std::string> archives;
    bool snapshots{false};
    bool initial{false};
    std::optional<std::string> backend;
    std::optional<std::string> replay_fixture;
    std::optional<std::string> out; // only with a single archive; defaults to rewriting in place
};

/// Scores prompts on every test instance. Returns the number of evaluation calls made.
inline std::size_t score_on_test(RunArchive& a, RunConfig const& cfg, std::vector<PromptId> const& ids)
{
    if (cfg.task.test.empty()) { throw Error("task " + cfg.task.name + " has no test instances"); }
    BackendSet backends(cfg);
    RunHistory scratch;
    auto oc = cfg.optimizer_config;
    oc.seed = a.seed;
    Evaluator ev(cfg.task, {}, backends.eval(), scratch, oc);
    std::size_t calls = 0;
    for (auto id : ids) {
        if (a.has_test(id)) { continue; }
        auto const& p = a.run.history.prompt(id);
        auto const results = ev.run_instances(p, cfg.task.test);
        calls += results.size();
        TestScore t{objectives_from_results(results, oc.weights), 0.0, 0.0, results.size()};
        for (auto const& r : results) {
            t.mean_tok_in += static_cast<double>(r.tok_in);
            t.mean_tok_out += static_cast<double>(r.tok_out);
        }
        t.mean_tok_in /= static_cast<double>(results.size());
        t.mean_tok_out /= static_cast<double>(results.size());
        a.test_scores[id] = std::move(t);
    }
    return calls;
}

inline std::vector<PromptId> prompts_to_score(RunArchive const& a, bool snapshots, bool initial)
{
    std::vector<PromptId> ids;
    auto add = [&](PromptId id) {
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) { ids.push_back(id); }
    };
    for (auto const& m : a.run.final_front) { add(m.id); }
    if (snapshots) {
        for (auto const& s : a.run.snapshots) {
            for (auto const& m : s.front) { add(m.id); }
        }
    }
    if (initial) {
        for (auto id : a.run.initial_population) { add(id); }
    }
    return ids;
}

inline void cmd_test_eval(TestEvalOptions const& o, std::ostream& report)
{
    if (o.out && o.archives.size() != 1) { throw Error("--out needs exactly one archive"); }
    for (auto const& path : o.archives) {
        auto a = read_archive(path);
        auto cfg = archive_config(a, o.backend);
        if (o.replay_fixture) { cfg.replay_path = *o.replay_fixture; }
        auto const calls = score_on_test(a, cfg, prompts_to_score(a, o.snapshots, o.initial));
        auto const dest = o.out.value_or(path);
        write_archive(a, dest);
        report << path << ": " << calls << " test evaluations, " << a.test_scores.size() << " prompts scored -> " << dest << "\n";
    }
}

// ---------------------------------------------------------------------------
// metrics, trajectories and attainment

/// Dev and test vectors of a set of prompts. Without test scores the dev
/// vectors stand in for both.
struct ScoredFront {
    std::vector<PromptId> ids;
    std::vector<ObjectiveVector> dev;
    std::vector<ObjectiveVector> test;
};

inline ScoredFront scored_front(RunArchive const& a, std::vector<FrontMember> const& front, bool dev_as_test)
{
    ScoredFront s;
    for (auto const& m : front) {
        s.ids.push_back(m.id);
        s.dev.push_back(m.objectives);
        if (dev_as_test) {
            s.test.push_back(m.objectives);
        } else {
            auto it = a.test_scores.find(m.id);
            if (it == a.test_scores.end()) {
                throw Error("archive for seed " + std::to_string(a.seed) + " lacks test scores for prompt " + m.id.hex() +
                            "; run test-eval first or pass --dev-as-test");
            }
            s.test.push_back(it->second.objectives);
        }
    }
    return s;
}

inline bool has_test_scores(RunArchive const& a, std::vector<FrontMember> const& front)
{
    return std::all_of(front.begin(), front.end(), [&](FrontMember const& m) { return a.has_test(m.id); });
}

/// Global bounds over the dev and test vectors of every reported front
/// (final fronts and per-step fronts) across all archives.
inline NormalizationBounds global_bounds(std::vector<RunArchive> const& archives, bool dev_as_test)
{
    std::vector<ObjectiveVector> all;
    for (auto const& a : archives) {
        auto add = [&](std::vector<FrontMember> const& front) {
            for (auto const& m : front) {
                all.push_back(m.objectives);
                if (!dev_as_test && a.has_test(m.id)) { all.push_back(a.test_scores.at(m.id).objectives); }
            }
        };
        add(a.run.final_front);
        for (auto const& s : a.run.snapshots) { add(s.front); }
    }
    return NormalizationBounds::from_vectors(all);
}

inline void require_same_task(std::vector<RunArchive> const& archives)
{
    if (archives.empty()) { throw Error("no archives given"); }
    for (auto const& a : archives) {
        if (a.task_digest != archives.front().task_digest) {
            throw Error("archives come from different tasks (" + archives.front().task + " vs " + a.task + ")");
        }
    }
}

struct MetricsOptions {
    std::vector<std::string> archives;
    double reference{1.1};
    std::size_t n_pref{500};
    std::uint64_t metric_seed{0};
    bool dev_as_test{false};
};

struct ArchiveMetrics {
    std::string optimizer;
    std::uint64_t seed{0};
    FrontMetrics front;
    std::size_t candidates{0};
    double blocks_per_candidate{0.0};
    std::optional<std::uint64_t> iter1;
    double tt80{0.0};
};

inline Trajectory archive_trajectory(RunArchive const& a, NormalizationBounds const& bounds, std::span<Preference const> prefs,
                                     ObjectiveVector const& r, bool dev_as_test)
{
    std::vector<TrajectoryPoint> pts;
    for (auto const& s : a.run.snapshots) {
        if (s.front.empty()) { continue; }
        bool const use_dev = dev_as_test || !has_test_scores(a, s.front);
        auto const sf = scored_front(a, s.front, use_dev);
        auto const m = front_metrics(sf.ids, bounds.normalize(sf.dev), bounds.normalize(sf.test), prefs, r);
        pts.push_back({s.step, s.eval_tokens, 0.0, m.hv_pessimistic, m.nr2.mean});
    }
    return finish_trajectory(std::move(pts), a.token_budget);
}

inline std::vector<ArchiveMetrics> compute_metrics(std::vector<RunArchive> const& archives, MetricsOptions const& o)
{
    require_same_task(archives);
    auto const bounds = global_bounds(archives, o.dev_as_test);
    auto const prefs = sample_preferences(o.n_pref, o.metric_seed);
    ObjectiveVector const r{o.reference, o.reference};
    std::vector<ArchiveMetrics> rows;
    for (auto const& a : archives) {
        auto const sf = scored_front(a, a.run.final_front, o.dev_as_test);
        ArchiveMetrics m;
        m.optimizer = a.run.optimizer;
        m.seed = a.seed;
        m.front = front_metrics(sf.ids, bounds.normalize(sf.dev), bounds.normalize(sf.test), prefs, r);
        m.candidates = a.run.history.distinct_evaluated();
        m.blocks_per_candidate =
            m.candidates == 0 ? 0.0 : static_cast<double>(a.run.history.records().size()) / static_cast<double>(m.candidates);
        auto const traj = archive_trajectory(a, bounds, prefs, r, o.dev_as_test);
        m.iter1 = traj.iter1;
        m.tt80 = traj.tt80;
        rows.push_back(m);
    }
    return rows;
}

namespace detail {

inline std::pair<double, double> mean_std(std::vector<double> const& xs)
{
    if (xs.empty()) { return {0.0, 0.0}; }
    double mean = 0.0;
    for (double x : xs) { mean += x; }
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) { var += (x - mean) * (x - mean); }
    double const sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return {mean, sd};
}

} // namespace detail

/// Per-archive rows followed by mean and standard deviation per optimizer.
inline void cmd_metrics(MetricsOptions const& o, std::ostream& csv)
{
    std::vector<RunArchive> archives;
    for (auto const& p : o.archives) { archives.push_back(read_archive(p)); }
    auto const rows = compute_metrics(archives, o);
    csv << std::setprecision(10);
    csv << "optimizer,seed,nR2,nR2_se,HV_opt,HV_pes,Gap,front,Cand,B_per_Cand,Iter1,TT80\n";
    std::map<std::string, std::vector<ArchiveMetrics>> groups;
    for (auto const& m : rows) {
        csv << m.optimizer << "," << m.seed << "," << m.front.nr2.mean << "," << m.front.nr2.std_error << ","
            << m.front.hv_optimistic << "," << m.front.hv_pessimistic << "," << m.front.gap << "," << m.front.size << ","
            << m.candidates << "," << m.blocks_per_candidate << "," << (m.iter1 ? std::to_string(*m.iter1) : "") << ","
            << m.tt80 << "\n";
        groups[m.optimizer].push_back(m);
    }
    auto column = [](std::vector<ArchiveMetrics> const& g, auto field) {
        std::vector<double> xs;
        for (auto const& m : g) { xs.push_back(field(m)); }
        return detail::mean_std(xs);
    };
    for (auto const& [name, g] : groups) {
        std::vector<std::pair<double, double>> cols{
            column(g, [](auto const& m) { return m.front.nr2.mean; }),
            column(g, [](auto const& m) { return m.front.nr2.std_error; }),
            column(g, [](auto const& m) { return m.front.hv_optimistic; }),
            column(g, [](auto const& m) { return m.front.hv_pessimistic; }),
            column(g, [](auto const& m) { return m.front.gap; }),
            column(g, [](auto const& m) { return static_cast<double>(m.front.size); }),
            column(g, [](auto const& m) { return static_cast<double>(m.candidates); }),
            column(g, [](auto const& m) { return m.blocks_per_candidate; }),
            column(g, [](auto const& m) { return m.iter1 ? static_cast<double>(*m.iter1) : 0.0; }),
            column(g, [](auto const& m) { return m.tt80; }),
        };
        for (int which = 0; which < 2; ++which) {
            csv << name << "," << (which == 0 ? "mean" : "std");
            for (auto const& c : cols) { csv << "," << (which == 0 ? c.first : c.second); }
            csv << "\n";
        }
    }
}

struct PlotOptions {
    std::vector<std::string> archives;
    std::optional<std::string> svg;
    std::string metric{"hv"}; // trajectory: hv | nr2
    double reference{1.1};
    std::size_t n_pref{500};
    std::uint64_t metric_seed{0};
    bool dev_as_test{false};
};

inline void cmd_trajectory(PlotOptions const& o, std::ostream& csv)
{
    if (o.metric != "hv" && o.metric != "nr2") { throw Error("trajectory metric must be hv or nr2"); }
    std::vector<RunArchive> archives;
    for (auto const& p : o.archives) { archives.push_back(read_archive(p)); }
    require_same_task(archives);
    auto const bounds = global_bounds(archives, o.dev_as_test);
    auto const prefs = sample_preferences(o.n_pref, o.metric_seed);
    ObjectiveVector const r{o.reference, o.reference};
    SvgPlot plot(o.metric == "hv" ? "Pessimistic hypervolume over budget" : "Noisy R2 over budget", "budget fraction",
                 o.metric == "hv" ? "HV (pessimistic)" : "nR2");
    csv << std::setprecision(10) << "optimizer,seed,step,tokens,fraction," << o.metric << "\n";
    for (auto const& a : archives) {
        auto const t = archive_trajectory(a, bounds, prefs, r, o.dev_as_test);
        SvgPlot::Series s{a.run.optimizer + " seed " + std::to_string(a.seed), {}, false};
        for (auto const& p : t.points) {
            double const v = o.metric == "hv" ? p.hv_pessimistic : p.nr2;
            csv << a.run.optimizer << "," << a.seed << "," << p.step << "," << p.tokens << "," << p.fraction << "," << v << "\n";
            s.points.emplace_back(p.fraction, v);
        }
        plot.add(std::move(s));
    }
    if (o.svg) {
        std::ofstream out(*o.svg);
        out << plot.render();
    }
}

/// Test-set optimistic front of an archive in raw objective units.
inline std::vector<ObjectiveVector> optimistic_test_front(RunArchive const& a, bool dev_as_test)
{
    auto const sf = scored_front(a, a.run.final_front, dev_as_test);
    return subset(sf.test, optimistic_pessimistic_split(sf.test).optimistic);
}

inline std::vector<std::size_t> attainment_levels(std::size_t runs)
{
    std::vector<std::size_t> levels{1, (runs + 1) / 2, runs};
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return levels;
}

inline void cmd_eas(PlotOptions const& o, std::ostream& csv)
{
    std::vector<RunArchive> archives;
    for (auto const& p : o.archives) { archives.push_back(read_archive(p)); }
    require_same_task(archives);
    std::map<std::string, std::vector<std::vector<ObjectiveVector>>> by_optimizer;
    for (auto const& a : archives) { by_optimizer[a.run.optimizer].push_back(optimistic_test_front(a, o.dev_as_test)); }
    SvgPlot plot("Empirical attainment surfaces", "negative mean score", "cost");
    csv << std::setprecision(10) << "optimizer,level,runs,f1,f2\n";
    for (auto const& [name, fronts] : by_optimizer) {
        for (auto level : attainment_levels(fronts.size())) {
            auto const surf = attainment_surface(fronts, level);
            auto const steps = staircase(surf);
            SvgPlot::Series s{name + " L=" + std::to_string(level) + "/" + std::to_string(fronts.size()), {}, true};
            for (auto const& [x, y] : steps) {
                csv << name << "," << level << "," << fronts.size() << "," << x << "," << y << "\n";
                s.points.emplace_back(x, y);
            }
            plot.add(std::move(s));
        }
    }
    if (o.svg) {
        std::ofstream out(*o.svg);
        out << plot.render();
    }
}

// ---------------------------------------------------------------------------
// replay

struct ReplayOptions {
    std::string archive;
    std::optional<std::string> fixture;
};

/// Re-runs the archived configuration and compares everything except test
/// scores byte for byte. Returns true when identical.
inline bool cmd_replay(ReplayOptions const& o, std::ostream& report)
{
    auto original = read_archive(o.archive);
    auto cfg = archive_config(original);
    if (o.fixture) { cfg.replay_path = *o.fixture; }
    auto rerun = make_archive(cfg, original.seed, run_optimizer(cfg, original.seed));
    original.test_scores.clear();
    bool const same = serialize_archive(original) == serialize_archive(rerun);
    report << o.archive << ": replay " << (same ? "verified, history is byte-identical" : "DIFFERS from the archive") << "\n";
    return same;
}

// ---------------------------------------------------------------------------
// synthetic task files

/// Writes the generated task as dev/shots/test JSON-lines plus an instruction list.
inline void write_synthetic_task(std::uint64_t seed, SyntheticSizes sizes, std::filesystem::path const& dir)
{
    auto const st = make_synthetic_task(seed, sizes);
    std::filesystem::create_directories(dir);
    auto dump = [&](std::vector<Instance> const& v, std::string const& name) {
        std::ofstream out(dir / name);
        for (auto const& i : v) { out << nlohmann::json{{"id", i.id}, {"input", i.input}, {"label", i.label}}.dump() << "\n"; }
    };
    dump(st.task.dev, "dev.jsonl");
    dump(st.task.shots, "shots.jsonl");
    dump(st.task.test, "test.jsonl");
    std::ofstream(dir / "instructions.json") << nlohmann::json(st.initial_instructions).dump(2) << "\n";
}

} // namespace mocapo
