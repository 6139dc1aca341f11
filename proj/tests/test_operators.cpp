#include <catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "mocapo/operators.hpp"

using namespace mocapo;

namespace {

struct Ops {
    TaskSpec task = fx::task(30, 8);
    fx::ScriptedBackend llm;
    RunHistory history;
    OptimizerConfig cfg;
    MetaPromptTemplates templates = MetaPromptTemplates::defaults();
    Rng rng{42};
    OperatorStats stats;
    std::unique_ptr<Evaluator> ev;

    Ops()
    {
        cfg.block_size = 10;
        ev = std::make_unique<Evaluator>(task, partition_blocks(task.dev, 10), llm, history, cfg);
    }

    OperatorContext ctx() { return {task, *ev, llm, templates, cfg, rng, &stats, nullptr}; }

    PromptId add(Prompt const& p, BlockSet const& blocks)
    {
        ev->evaluate(p, blocks);
        return p.id();
    }
};

std::vector<FewShotExample> shots(std::initializer_list<int> ids)
{
    std::vector<FewShotExample> v;
    for (int i : ids) { v.emplace_back("shot-" + std::to_string(i), "yes"); }
    return v;
}

} // namespace

TEST_CASE("create_shots uses the response when correct and the label otherwise")
{
    Ops o;
    auto c = o.ctx();
    CHECK(create_shots(0, "wrong", c).empty());
    CHECK(o.llm.calls == 0);

    auto const fallback = create_shots(4, "wrong", c);
    REQUIRE(fallback.size() == 4);
    for (auto const& s : fallback) { CHECK(s.output == "yes"); }

    o.llm.scripts["right"] = {fx::always(true), 3};
    auto const main = create_shots(4, "right", c);
    for (auto const& s : main) { CHECK(s.output == "w w <final_answer>yes</final_answer>"); }
    CHECK(o.history.aux_eval_tokens() > 0);
    CHECK(o.history.token_meter() == 0);
    CHECK_THROWS(create_shots(9, "x", c));
}

TEST_CASE("initial population shot counts")
{
    std::vector<std::string> const instr{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    SECTION("n_max = 0 gives zero-shot prompts")
    {
        Ops o;
        o.cfg.max_shots = 0;
        auto c = o.ctx();
        for (auto const& p : initialize_pop(instr, c)) { CHECK(p.shot_count() == 0); }
    }
    SECTION("mu = 10, n_max = 5 stays within 0..5 and is seed-deterministic")
    {
        Ops o1, o2;
        auto c1 = o1.ctx();
        auto c2 = o2.ctx();
        auto const a = initialize_pop(instr, c1);
        auto const b = initialize_pop(instr, c2);
        REQUIRE(a.size() == 10);
        std::set<std::size_t> counts;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].shot_count() <= 5);
            CHECK(a[i] == b[i]);
            counts.insert(a[i].shot_count());
        }
        CHECK(counts.size() > 1);
    }
}

TEST_CASE("crossover shot counts and offspring number")
{
    Ops o;
    auto const a = o.add(Prompt("ma", shots({0, 1})), {0});
    auto const b = o.add(Prompt("pa", shots({2, 3, 4})), {0});
    auto const z1 = o.add(Prompt("z1", {}), {0});
    auto const z2 = o.add(Prompt("z2", {}), {0});
    auto c = o.ctx();

    std::vector<PromptId> pop{a, b};
    auto const off = crossover(pop, [&] { return std::pair{a, b}; }, c);
    REQUIRE(off.size() == 4);
    auto const& u1 = o.history.prompt(a).few_shots();
    auto const& u2 = o.history.prompt(b).few_shots();
    for (auto const& p : off) {
        CHECK(p.shot_count() == 2);
        CHECK(p.instruction() == "ma");
        for (auto const& s : p.few_shots()) {
            bool const from_parent = std::find(u1.begin(), u1.end(), s) != u1.end() || std::find(u2.begin(), u2.end(), s) != u2.end();
            CHECK(from_parent);
        }
    }

    std::vector<PromptId> zeros{z1, z2};
    for (auto const& p : crossover(zeros, [&] { return std::pair{z1, z2}; }, c)) { CHECK(p.shot_count() == 0); }
}

TEST_CASE("meta output without markers falls back to the parent after one retry")
{
    Ops o;
    o.llm.meta_markers = false;
    auto const a = o.add(Prompt("ma", {}), {0});
    auto const b = o.add(Prompt("pa", {}), {0});
    auto c = o.ctx();
    std::vector<PromptId> pop{a, b};
    auto const off = crossover(pop, [&] { return std::pair{b, a}; }, c);
    CHECK(off.front().instruction() == "pa");
    CHECK(o.stats.meta_calls == 2 * o.cfg.crossovers);
    CHECK(o.stats.meta_fallbacks == o.cfg.crossovers);
    CHECK(o.history.meta_tokens() > 0);
}

TEST_CASE("mutation changes shot counts by at most one within bounds")
{
    Ops o;
    o.cfg.max_shots = 3;
    auto c = o.ctx();
    std::vector<Prompt> in;
    for (int i = 0; i < 60; ++i) {
        in.emplace_back("m" + std::to_string(i), i % 3 == 0 ? shots({}) : i % 3 == 1 ? shots({1, 2, 3}) : shots({4}));
    }
    auto const out = mutate(in, c);
    REQUIRE(out.size() == in.size());
    std::set<long> deltas;
    for (std::size_t i = 0; i < in.size(); ++i) {
        auto const before = static_cast<long>(in[i].shot_count());
        auto const after = static_cast<long>(out[i].shot_count());
        CHECK(std::abs(after - before) <= 1);
        CHECK(after <= 3);
        if (before == 3) { CHECK(after <= 3); }
        if (before == 0) { CHECK(after >= 0); }
        deltas.insert(after - before);
        std::set<std::string> inputs;
        for (auto const& s : out[i].few_shots()) { CHECK(inputs.insert(s.input).second); }
    }
    CHECK(deltas == std::set<long>{-1, 0, 1});

    Ops o2;
    o2.cfg.max_shots = 3;
    auto c2 = o2.ctx();
    auto const again = mutate(in, c2);
    for (std::size_t i = 0; i < in.size(); ++i) { CHECK(again[i] == out[i]); }
}

TEST_CASE("tournament case 1: an incumbent beats a non-incumbent")
{
    Ops o;
    o.llm.scripts["good"] = {fx::always(true), 1};
    auto const inc = o.add(Prompt("bad", {}), {0});
    auto const other = o.add(Prompt("good", {}), {0});
    std::vector<PromptId> incs{inc};
    auto const view = TournamentView::make(o.history, o.cfg.weights, incs);
    for (int i = 0; i < 20; ++i) {
        auto const r = binary_tournament(other, inc, view, o.rng);
        CHECK(r.winner == inc);
        CHECK(r.decided_by == TournamentCase::incumbent);
    }
}

TEST_CASE("tournament case 2: incumbents compare by crowding on shared blocks")
{
    Ops o;
    o.llm.scripts["i1"] = {fx::always(true), 9};
    o.llm.scripts["i2"] = {fx::per_ten(5), 5};
    o.llm.scripts["i3"] = {fx::per_ten(1), 1};
    auto const a = o.add(Prompt("i1", {}), {0, 1});
    auto const b = o.add(Prompt("i2", {}), {0});
    auto const c = o.add(Prompt("i3", {}), {0, 2});
    std::vector<PromptId> incs{a, b, c};
    auto const view = TournamentView::make(o.history, o.cfg.weights, incs);
    CHECK(std::isinf(view.incumbent_crowding.at(a)));
    CHECK(std::isfinite(view.incumbent_crowding.at(b)));
    auto const r = binary_tournament(b, a, view, o.rng);
    CHECK(r.winner == a);
    CHECK(r.decided_by == TournamentCase::incumbent_crowding);
}

TEST_CASE("tournament case 3: same blocks, the dominating candidate wins")
{
    Ops o;
    o.llm.scripts["good"] = {fx::always(true), 1};
    auto const good = o.add(Prompt("good", {}), {0, 1});
    auto const bad = o.add(Prompt("bad", {}), {0, 1});
    auto const inc = o.add(Prompt("inc", {}), {2});
    std::vector<PromptId> incs{inc};
    auto const view = TournamentView::make(o.history, o.cfg.weights, incs);
    for (int i = 0; i < 20; ++i) {
        auto const r = binary_tournament(bad, good, view, o.rng);
        CHECK(r.winner == good);
        CHECK(r.decided_by == TournamentCase::same_level);
    }
}

TEST_CASE("tournament case 4: weaker dominance with nested block sets")
{
    Ops o;
    o.llm.scripts["deep"] = {fx::per_ten(6), 1};
    o.llm.scripts["shallow"] = {fx::per_ten(5), 1};
    auto const deep = o.add(Prompt("deep", {}), {0, 1});
    auto const shallow = o.add(Prompt("shallow", {}), {0});
    auto const inc = o.add(Prompt("inc", {}), {2});
    std::vector<PromptId> incs{inc};
    auto const view = TournamentView::make(o.history, o.cfg.weights, incs);
    auto const r = binary_tournament(shallow, deep, view, o.rng);
    CHECK(r.winner == deep);
    CHECK(r.decided_by == TournamentCase::weaker_dominance);
}

TEST_CASE("tournament case 5: disjoint block sets are a fair coin")
{
    Ops o;
    o.llm.scripts["p"] = {fx::always(true), 1};
    auto const p = o.add(Prompt("p", {}), {0});
    auto const q = o.add(Prompt("q", {}), {1});
    auto const inc = o.add(Prompt("inc", {}), {2});
    std::vector<PromptId> incs{inc};
    auto const view = TournamentView::make(o.history, o.cfg.weights, incs);
    int p_wins = 0;
    for (int i = 0; i < 1000; ++i) {
        auto const r = binary_tournament(p, q, view, o.rng);
        CHECK(r.decided_by == TournamentCase::random);
        p_wins += r.winner == p ? 1 : 0;
    }
    CHECK(p_wins >= 400);
    CHECK(p_wins <= 600);
}

TEST_CASE("parent selection returns two distinct prompts")
{
    Ops o;
    o.llm.scripts["star"] = {fx::always(true), 1};
    std::vector<PromptId> pop{o.add(Prompt("star", {}), {0})};
    for (int i = 0; i < 4; ++i) { pop.push_back(o.add(Prompt("weak" + std::to_string(i), {}), {0})); }
    std::vector<PromptId> incs{pop.front()};
    auto const view = TournamentView::make(o.history, o.cfg.weights, incs);
    for (int i = 0; i < 50; ++i) {
        auto const [a, b] = tournament_select(pop, view, o.rng);
        CHECK(a != b);
    }
    std::vector<PromptId> lone{pop.front()};
    CHECK_THROWS(tournament_select(lone, view, o.rng));
}

TEST_CASE("rank-crowding tournament prefers lower rank, then larger crowding")
{
    std::vector<PromptId> ids{PromptId{1}, PromptId{2}, PromptId{3}, PromptId{4}};
    std::vector<ObjectiveVector> vecs{{0, 1}, {0.5, 0.5}, {1, 0}, {1, 1}};
    auto const rc = RankCrowding::make(ids, vecs);
    Rng rng(1);
    CHECK(rank_crowding_tournament(ids[3], ids[1], rc, rng) == ids[1]);
    CHECK(rank_crowding_tournament(ids[1], ids[0], rc, rng) == ids[0]);
}
