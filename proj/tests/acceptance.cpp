// Acceptance suite: one line per criterion, exit code 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mocapo/cli.hpp"
#include "oracles.hpp"

using namespace mocapo;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

std::string fmt(double x, int prec = 4)
{
    std::ostringstream o;
    o << std::setprecision(prec) << x;
    return o.str();
}

// ---------------------------------------------------------------------------
// 1. moo-core against brute force, a rectangle-union grid and Monte Carlo

Outcome moo_core_oracles()
{
    auto const t0 = std::chrono::steady_clock::now();
    std::mt19937_64 gen(20240601);
    oracle::Pt const r{1.1, 1.1};
    ObjectiveVector const rv{1.1, 1.1};
    std::size_t nds_bad = 0, hv_bad = 0, mc_bad = 0, mc_checked = 0;
    double worst_hv = 0.0, worst_z = 0.0;
    for (int set = 0; set < 1000; ++set) {
        auto const pts = oracle::random_points(gen, 50);
        std::vector<ObjectiveVector> vs;
        for (auto p : pts) { vs.push_back({p.first, p.second}); }

        auto front = non_dominated_sort(vs).fronts.front();
        auto expect = oracle::nondominated(vs);
        std::sort(front.begin(), front.end());
        nds_bad += front == expect ? 0 : 1;

        double const hv = hypervolume_2d(vs, rv);
        double const ref = oracle::hv_rectangles(pts, r);
        worst_hv = std::max(worst_hv, std::abs(hv - ref));
        hv_bad += std::abs(hv - ref) <= 1e-12 ? 0 : 1;

        // 10^6 samples for every 100th set keeps the run within its time limit.
        if (set % 100 == 0) {
            ++mc_checked;
            auto const mc = oracle::hv_monte_carlo(pts, {-0.05, -0.05}, r, 1'000'000, 7000 + static_cast<std::uint64_t>(set));
            double const z = mc.std_error > 0 ? std::abs(mc.value - hv) / mc.std_error : (mc.value == hv ? 0.0 : 1e9);
            worst_z = std::max(worst_z, z);
            mc_bad += z <= 3.0 ? 0 : 1;
        }
    }
    double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool const pass = nds_bad == 0 && hv_bad == 0 && mc_bad == 0 && secs < 10.0;
    return {pass, "1000 sets: NDS mismatches " + std::to_string(nds_bad) + ", HV>1e-12 " + std::to_string(hv_bad) +
                      " (max err " + fmt(worst_hv, 3) + "), MC outside 3se " + std::to_string(mc_bad) + "/" +
                      std::to_string(mc_checked) + " (max z " + fmt(worst_z, 3) + "), " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. crowding-distance fixture

Outcome crowding_fixture()
{
    std::vector<ObjectiveVector> const front{{0.0, 1.0}, {0.4, 0.5}, {1.0, 0.0}};
    auto const cd = crowding_distance(front);
    bool const pass = std::isinf(cd[0]) && cd[0] > 0 && cd[1] == 2.0 && std::isinf(cd[2]) && cd[2] > 0;
    return {pass, "CD = [" + fmt(cd[0]) + ", " + fmt(cd[1], 17) + ", " + fmt(cd[2]) + "]"};
}

// ---------------------------------------------------------------------------
// 3. cost objective

Outcome cost_objective()
{
    Prompt const p("x", {});
    RunHistory h;
    h.register_prompt(p);
    EvalRecord rec{p.id(), 0, {}};
    // Token counts averaging to (1000, 200).
    for (auto [tin, tout] : {std::pair{900, 150}, std::pair{1100, 250}, std::pair{1000, 200}}) {
        InstanceResult ir;
        ir.instance_id = std::to_string(rec.results.size());
        ir.score = 1.0;
        ir.tok_in = static_cast<std::uint64_t>(tin);
        ir.tok_out = static_cast<std::uint64_t>(tout);
        rec.results.push_back(ir);
    }
    h.commit(rec);
    CostWeights const mistral{0.08, 0.32};
    double const f2 = objective_values(h, p.id(), {0}, mistral)[1];
    bool exact = f2 == 144.0;

    double worst = 0.0;
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        double const a = u(gen), b = u(gen), k = u(gen);
        double const base = objective_values(h, p.id(), {0}, {a, b})[1];
        double const scaled_in = objective_values(h, p.id(), {0}, {k * a, b})[1];
        double const scaled_out = objective_values(h, p.id(), {0}, {a, k * b})[1];
        double const sum_in = objective_values(h, p.id(), {0}, {a + k, b})[1];
        double const only_in = objective_values(h, p.id(), {0}, {a, 0.0})[1];
        double const only_out = objective_values(h, p.id(), {0}, {0.0, b})[1];
        double const only_k = objective_values(h, p.id(), {0}, {k, 0.0})[1];
        auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(y)); };
        worst = std::max({worst, rel(base, only_in + only_out), rel(scaled_in, k * only_in + only_out),
                          rel(scaled_out, only_in + k * only_out), rel(sum_in, only_in + only_k + only_out)});
    }
    return {exact && worst <= 1e-12, "f2 = " + fmt(f2, 17) + ", worst linearity deviation " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// 4. intensification invariants

class InvariantWatch : public MoCapoObserver {
public:
    void attach(MoCapo const* m) { m_ = m; }

    void on_challenger_block(PromptId, std::size_t block, BlockSet const&) override
    {
        if (!shared().contains(block)) { ++outside_shared; }
    }

    void on_environmental_selection(std::size_t population, std::size_t mu) override
    {
        ++selections;
        if (population > mu) { ++oversize; }
    }

    void on_loop_boundary(MoCapo const& m) override
    {
        ++boundaries;
        auto const& inc = m.incumbents();
        auto const& pop = m.population();
        for (auto id : inc) {
            if (std::find(pop.begin(), pop.end(), id) == pop.end()) { ++not_subset; }
        }
        auto const b = shared();
        if (b.size() < last_shared) { ++shrinking; }
        last_shared = b.size();
        std::vector<ObjectiveVector> v;
        for (auto id : inc) { v.push_back(oracle::objectives(m.history(), id, b, m.config().weights)); }
        for (std::size_t i = 0; i < v.size(); ++i) {
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (i != k && oracle::dom(v[i], v[k]) && oracle::dom_tol(v[i], v[k])) {
                    ++dominated;
                }
            }
        }
    }

    std::size_t outside_shared{0}, oversize{0}, not_subset{0}, shrinking{0}, dominated{0};
    std::size_t boundaries{0}, selections{0};

private:
    [[nodiscard]] BlockSet shared() const
    {
        auto const& inc = m_->incumbents();
        auto out = oracle::blocks_of(m_->history(), inc.front());
        for (auto id : inc) {
            auto const b = oracle::blocks_of(m_->history(), id);
            BlockSet keep;
            for (auto x : out) {
                if (b.contains(x)) { keep.insert(x); }
            }
            out = keep;
        }
        return out;
    }

    MoCapo const* m_{nullptr};
    std::size_t last_shared{0};
};

Outcome intensification_invariants()
{
    InvariantWatch w;
    std::size_t iterations = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto st = make_synthetic_task(seed, {60, 20, 20, 10});
        SimulatorBackend sim(st.simulator, st.task);
        OptimizerConfig cfg;
        cfg.mu = 10;
        cfg.block_size = 10;
        cfg.token_budget = 200'000;
        cfg.seed = seed;
        MoCapo m(st.task, cfg, sim, sim);
        InvariantWatch local;
        local.attach(&m);
        m.set_observer(&local);
        auto const r = m.run(st.initial_instructions);
        iterations += r.steps;
        w.outside_shared += local.outside_shared;
        w.oversize += local.oversize;
        w.not_subset += local.not_subset;
        w.shrinking += local.shrinking;
        w.dominated += local.dominated;
        w.boundaries += local.boundaries;
        w.selections += local.selections;
    }
    std::size_t const violations = w.outside_shared + w.oversize + w.not_subset + w.shrinking + w.dominated;
    return {violations == 0 && w.boundaries > 0 && w.selections > 0,
            "100 runs, " + std::to_string(iterations) + " iterations, " + std::to_string(w.boundaries) + " boundaries, " +
                std::to_string(w.selections) + " selections; violations: outside B_shared " + std::to_string(w.outside_shared) +
                ", |P|>mu " + std::to_string(w.oversize) + ", inc not in P " + std::to_string(w.not_subset) +
                ", dominated inc " + std::to_string(w.dominated) + ", B_shared shrank " + std::to_string(w.shrinking)};
}

// ---------------------------------------------------------------------------
// shared simulator study for criteria 5-8 and 10

nlohmann::json study_config(std::string const& optimizer, std::uint64_t seed, CostWeights w)
{
    return {
        {"task", {{"synthetic", {{"seed", 0}, {"dev", 100}, {"shots", 20}, {"test", 200}}}}},
        {"backend", {{"kind", "simulator"}}},
        {"optimizer", {{"name", optimizer}, {"mu", 10}, {"block_size", 10}, {"crossovers", 4}, {"max_shots", 5}}},
        {"budget", {{"tokens", 1'500'000}}},
        {"seeds", {seed}},
        {"weights", {{"w_in", w.w_in}, {"w_out", w.w_out}}},
    };
}

RunArchive study_run(std::string const& optimizer, std::uint64_t seed, CostWeights w = {})
{
    auto const cfg = parse_config(study_config(optimizer, seed, w).dump(2), std::filesystem::current_path(), "study");
    auto a = make_archive(cfg, seed, run_optimizer(cfg, seed));
    score_on_test(a, cfg, prompts_to_score(a, true, true));
    return a;
}

struct Study {
    std::vector<RunArchive> mocapo;
    std::vector<RunArchive> nsga2;
    double seconds{0};
};

Study const& study()
{
    static Study s = [] {
        auto const t0 = std::chrono::steady_clock::now();
        Study out;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            out.mocapo.push_back(study_run("mocapo", seed));
            out.nsga2.push_back(study_run("nsga2po", seed));
        }
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }();
    return s;
}

Outcome efficiency()
{
    auto const& s = study();
    std::ostringstream d;
    std::size_t cand_ok = 0, iter_ok = 0, tt_ok = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        MetricsOptions o;
        auto const rows = compute_metrics({s.mocapo[i], s.nsga2[i]}, o);
        auto const& m = rows[0];
        auto const& n = rows[1];
        double const cand_ratio = static_cast<double>(m.candidates) / static_cast<double>(n.candidates);
        double const iter_ratio = static_cast<double>(*m.iter1) / static_cast<double>(*n.iter1);
        cand_ok += cand_ratio >= 2.0 ? 1 : 0;
        iter_ok += iter_ratio <= 0.5 ? 1 : 0;
        tt_ok += m.tt80 < n.tt80 ? 1 : 0;
        d << " seed" << i + 1 << ": #Cand " << m.candidates << "/" << n.candidates << " (x" << fmt(cand_ratio, 3) << "), Iter1 x"
          << fmt(iter_ratio, 3) << ", TT80 " << fmt(m.tt80, 3) << " vs " << fmt(n.tt80, 3) << ";";
    }
    return {cand_ok == 3 && iter_ok == 3 && tt_ok >= 2, "TT80 smaller in " + std::to_string(tt_ok) + "/3;" + d.str()};
}

/// Normalized test-set hypervolumes of both optimizers and the shared initial population.
struct QualityRow {
    double mocapo, nsga2, initial;
};

QualityRow quality_row(RunArchive const& m, RunArchive const& n)
{
    std::vector<ObjectiveVector> all;
    auto test_of = [](RunArchive const& a, std::vector<PromptId> const& ids) {
        std::vector<ObjectiveVector> v;
        for (auto id : ids) { v.push_back(a.test_scores.at(id).objectives); }
        return v;
    };
    auto front_ids = [](RunArchive const& a) {
        std::vector<PromptId> ids;
        for (auto const& f : a.run.final_front) { ids.push_back(f.id); }
        return ids;
    };
    auto const mt = test_of(m, front_ids(m));
    auto const nt = test_of(n, front_ids(n));
    auto const it = test_of(m, m.run.initial_population);
    for (auto const* v : {&mt, &nt, &it}) { all.insert(all.end(), v->begin(), v->end()); }
    for (auto const* a : {&m, &n}) {
        for (auto const& f : a->run.final_front) { all.push_back(f.objectives); }
    }
    auto const bounds = NormalizationBounds::from_vectors(all);
    auto hv_opt = [&](std::vector<ObjectiveVector> const& test) {
        auto const norm = bounds.normalize(test);
        return hypervolume_2d(subset(norm, optimistic_pessimistic_split(norm).optimistic), default_reference_point());
    };
    return {hv_opt(mt), hv_opt(nt), hv_opt(it)};
}

Outcome quality()
{
    auto const& s = study();
    std::size_t wins = 0, improved = 0;
    std::ostringstream d;
    for (std::size_t i = 0; i < 3; ++i) {
        if (s.mocapo[i].run.initial_population != s.nsga2[i].run.initial_population) {
            return {false, "optimizers started from different initial populations"};
        }
        auto const q = quality_row(s.mocapo[i], s.nsga2[i]);
        wins += q.mocapo >= q.nsga2 ? 1 : 0;
        improved += (q.mocapo >= 1.2 * q.initial && q.nsga2 >= 1.2 * q.initial) ? 1 : 0;
        d << " seed" << i + 1 << ": HV_opt " << fmt(q.mocapo) << " vs " << fmt(q.nsga2) << ", initial " << fmt(q.initial) << ";";
    }
    bool const pass = wins >= 2 && improved == 3 && s.seconds < 300.0;
    return {pass, "MO-CAPO >= NSGA-II-PO in " + std::to_string(wins) + "/3, both >= 1.2x initial in " + std::to_string(improved) +
                      "/3, study " + fmt(s.seconds, 3) + " s;" + d.str()};
}

// ---------------------------------------------------------------------------
// 7. generalization metrics

double in_sample_r2_oracle(std::vector<ObjectiveVector> const& v, std::vector<Preference> const& prefs)
{
    double total = 0.0;
    for (auto const& l : prefs) {
        double best = std::numeric_limits<double>::infinity();
        for (auto const& f : v) { best = std::min(best, std::max(l[0] * f[0], l[1] * f[1])); }
        total += best;
    }
    return total / static_cast<double>(prefs.size());
}

Outcome generalization_metrics()
{
    auto const& s = study();
    std::vector<RunArchive> all = s.mocapo;
    all.insert(all.end(), s.nsga2.begin(), s.nsga2.end());
    auto const bounds = global_bounds(all, false);
    auto const prefs_a = sample_preferences(500, 11);
    auto const prefs_b = sample_preferences(500, 12);
    std::size_t gap_bad = 0, r2_bad = 0, mc_bad = 0, fronts = 0;
    double worst_r2 = 0.0, worst_z = 0.0;
    for (auto const& a : all) {
        std::vector<std::vector<FrontMember>> sets{a.run.final_front};
        for (auto const& snap : a.run.snapshots) { sets.push_back(snap.front); }
        for (auto const& front : sets) {
            if (front.empty()) { continue; }
            ++fronts;
            auto const sf = scored_front(a, front, false);
            auto const dev = bounds.normalize(sf.dev);
            auto const test = bounds.normalize(sf.test);
            auto const m = front_metrics(sf.ids, dev, test, prefs_a);
            gap_bad += m.gap >= 0.0 ? 0 : 1;

            double const in_sample = noisy_r2(sf.ids, dev, dev, prefs_a).mean;
            double const err = std::abs(in_sample - in_sample_r2_oracle(dev, prefs_a));
            worst_r2 = std::max(worst_r2, err);
            r2_bad += err <= 1e-12 ? 0 : 1;
        }
        auto const sf = scored_front(a, a.run.final_front, false);
        auto const e1 = noisy_r2(sf.ids, bounds.normalize(sf.dev), bounds.normalize(sf.test), prefs_a);
        auto const e2 = noisy_r2(sf.ids, bounds.normalize(sf.dev), bounds.normalize(sf.test), prefs_b);
        double const se = std::sqrt(e1.std_error * e1.std_error + e2.std_error * e2.std_error);
        double const z = se > 0 ? std::abs(e1.mean - e2.mean) / se : 0.0;
        worst_z = std::max(worst_z, z);
        mc_bad += z <= 3.0 ? 0 : 1;
    }
    return {gap_bad == 0 && r2_bad == 0 && mc_bad == 0,
            std::to_string(fronts) + " fronts: negative gaps " + std::to_string(gap_bad) + ", nR2(dev=test) vs R2 max err " +
                fmt(worst_r2, 3) + ", 500-vector batches max z " + fmt(worst_z, 3) + " over " + std::to_string(all.size()) +
                " archives"};
}

// ---------------------------------------------------------------------------
// 8. cost-weight ablation

double front_mean_tok_in(RunArchive const& a)
{
    double total = 0.0;
    for (auto const& f : a.run.final_front) { total += mean_tokens(a.run.history, f.id, a.run.final_basis).tok_in; }
    return total / static_cast<double>(a.run.final_front.size());
}

Outcome ablation()
{
    auto const& s = study();
    double base = 0, no_in = 0, no_out = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        base += front_mean_tok_in(s.mocapo[seed - 1]);
        no_in += front_mean_tok_in(study_run("mocapo", seed, {0.0, 0.32}));
        no_out += front_mean_tok_in(study_run("mocapo", seed, {0.08, 0.0}));
    }
    base /= 3;
    no_in /= 3;
    no_out /= 3;
    double const up = no_in / base - 1.0;
    double const shift = std::abs(no_out / base - 1.0);
    return {up >= 0.5 && shift < 0.25, "mean input tokens of final fronts: default " + fmt(base) + ", w_in=0 " + fmt(no_in) + " (+" +
                                           fmt(100 * up, 3) + "%), w_out=0 " + fmt(no_out) + " (" + fmt(100 * shift, 3) + "% shift)"};
}

// ---------------------------------------------------------------------------
// 9. determinism

std::string slurp(std::filesystem::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism()
{
    auto const dir = std::filesystem::temp_directory_path() / "mocapo_acceptance_determinism";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto const cfg_path = dir / "config.json";
    auto doc = study_config("mocapo", 5, {});
    doc["budget"]["tokens"] = 300'000;
    std::ofstream(cfg_path) << doc.dump(2);

    std::ostringstream log;
    RunOptions o;
    o.config = cfg_path.string();
    o.out = (dir / "first.json").string();
    cmd_run(o, log);
    o.out = (dir / "second.json").string();
    cmd_run(o, log);
    auto const a = slurp(dir / "first.json");
    auto const b = slurp(dir / "second.json");
    bool const same = !a.empty() && a == b;
    bool const replayed = cmd_replay({(dir / "first.json").string(), std::nullopt}, log);
    return {same && replayed, std::string("archives ") + (same ? "byte-identical" : "DIFFER") + " (" + std::to_string(a.size()) +
                                  " bytes), replay " + (replayed ? "verified" : "FAILED")};
}

// ---------------------------------------------------------------------------
// 10. attainment-surface nesting

Outcome eas_nesting()
{
    auto const& s = study();
    std::size_t violations = 0, points = 0, alpha_bad = 0;
    for (auto const* group : {&s.mocapo, &s.nsga2}) {
        std::vector<std::vector<ObjectiveVector>> fronts;
        for (auto const& a : *group) { fronts.push_back(optimistic_test_front(a, false)); }
        std::vector<std::vector<Point2>> surf;
        for (std::size_t level = 1; level <= fronts.size(); ++level) { surf.push_back(attainment_surface(fronts, level)); }
        for (std::size_t i = 0; i < surf[0].size(); ++i) {
            ++points;
            for (std::size_t l = 0; l + 1 < surf.size(); ++l) {
                if (surf[l][i].second > surf[l + 1][i].second) { ++violations; }
            }
            // Each finite surface point must be attained by at least L of S runs.
            for (std::size_t l = 0; l < surf.size(); ++l) {
                auto const y = surf[l][i];
                if (!std::isfinite(y.second)) { continue; }
                std::size_t hits = 0;
                for (auto const& f : fronts) {
                    bool hit = false;
                    for (auto const& p : f) { hit = hit || (p[0] <= y.first && p[1] <= y.second); }
                    hits += hit ? 1 : 0;
                }
                alpha_bad += hits >= l + 1 ? 0 : 1;
            }
        }
    }
    return {violations == 0 && alpha_bad == 0 && points > 0,
            std::to_string(points) + " grid points over 2 optimizers x 3 seeds: nesting violations " + std::to_string(violations) +
                ", attainment-level violations " + std::to_string(alpha_bad)};
}

} // namespace

int main()
{
    std::vector<std::pair<std::string, std::function<Outcome()>>> const criteria{
        {"moo-core oracle equivalence", moo_core_oracles},
        {"crowding-distance fixture", crowding_fixture},
        {"cost objective exactness", cost_objective},
        {"intensification invariants", intensification_invariants},
        {"efficiency analogue (#Cand, Iter1, TT80)", efficiency},
        {"quality analogue (test HV)", quality},
        {"generalization-metric properties", generalization_metrics},
        {"cost-weight ablation direction", ablation},
        {"determinism and replay", determinism},
        {"attainment-surface nesting", eas_nesting},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (std::exception const& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << " " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
