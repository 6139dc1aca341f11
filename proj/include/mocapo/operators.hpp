#pragma once

// Evolutionary operators over prompts: initialization with few-shot creation,
// meta-LLM crossover and mutation, and binary tournament parent selection.

#include <algorithm>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mocapo/evaluation.hpp"
#include "mocapo/llm.hpp"
#include "mocapo/pareto.hpp"
#include "mocapo/rng.hpp"
#include "mocapo/templates.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

struct OperatorStats {
    std::size_t meta_calls{0};
    std::size_t meta_fallbacks{0};
    std::size_t shots_created{0};
};

struct OperatorContext {
    TaskSpec const& task;
    Evaluator& evaluator;
    LlmBackend& meta_llm;
    MetaPromptTemplates const& templates;
    OptimizerConfig const& config;
    Rng& rng;
    OperatorStats* stats{nullptr};
    std::ostream* log{nullptr};
};

/// Samples `count` shot-pool instances (skipping inputs in `exclude`) and asks
/// the evaluation-LLM to solve each with `instruction`. A correct response
/// becomes the example output; otherwise the gold label is used.
inline std::vector<FewShotExample> create_shots(std::size_t count, std::string const& instruction, OperatorContext& ctx,
                                                std::set<std::string> const& exclude = {})
{
    std::vector<Instance const*> pool;
    for (auto const& inst : ctx.task.shots) {
        if (!exclude.contains(inst.input)) { pool.push_back(&inst); }
    }
    if (count > pool.size()) {
        throw Error("cannot create " + std::to_string(count) + " shots from a pool of " + std::to_string(pool.size()));
    }
    std::vector<FewShotExample> shots;
    if (count == 0) { return shots; }
    Prompt const zero_shot(instruction, {});
    auto const& llm = ctx.config.llm;
    for (auto i : ctx.rng.sample_indices(pool.size(), count)) {
        auto const& inst = *pool[i];
        auto req = ChatRequest::user(llm.eval_model, render_prompt(zero_shot, inst.input), llm.max_output_tokens,
                                     llm.eval_temperature, ctx.config.seed);
        auto resp = ctx.evaluator.backend().complete(req);
        ctx.evaluator.history().add_aux_eval_tokens(resp.tok_in + resp.tok_out);
        bool const correct = ctx.evaluator.scorer()(inst, resp.text) >= 1.0;
        shots.emplace_back(inst.input, correct ? resp.text : inst.label);
        if (ctx.stats != nullptr) { ++ctx.stats->shots_created; }
    }
    return shots;
}

/// k ~ Uniform{0..n_max} shots per initial instruction.
inline std::vector<Prompt> initialize_pop(std::vector<std::string> const& instructions, OperatorContext& ctx)
{
    if (instructions.empty()) { throw Error("initialize_pop: no initial instructions"); }
    std::vector<Prompt> pop;
    pop.reserve(instructions.size());
    for (auto const& instr : instructions) {
        auto const k = ctx.rng.uniform_index(ctx.config.max_shots + 1);
        pop.emplace_back(instr, create_shots(k, instr, ctx));
    }
    return pop;
}

namespace detail {

/// One meta-LLM round trip with a single retry; nullopt if neither reply carries <prompt> markers.
inline std::optional<std::string> ask_meta(std::string const& content, OperatorContext& ctx)
{
    auto const& llm = ctx.config.llm;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto req = ChatRequest::user(llm.meta_model, content, llm.max_output_tokens, llm.meta_temperature, ctx.rng.next());
        auto resp = ctx.meta_llm.complete(req);
        ctx.evaluator.history().add_meta_tokens(resp.tok_in + resp.tok_out);
        if (ctx.stats != nullptr) { ++ctx.stats->meta_calls; }
        if (auto p = extract_marked_prompt(resp.text); p && !p->empty()) { return p; }
    }
    if (ctx.stats != nullptr) { ++ctx.stats->meta_fallbacks; }
    if (ctx.log != nullptr) { *ctx.log << "meta-LLM returned no <prompt> markers twice; keeping parent instruction\n"; }
    return std::nullopt;
}

} // namespace detail

using ParentSelector = std::function<std::pair<PromptId, PromptId>()>;

/// c offspring: crossed instructions from the meta-LLM, shots sampled from the
/// parents' shot union with size floor((|s_a| + |s_b|) / 2).
inline std::vector<Prompt> crossover(std::span<PromptId const> population, ParentSelector const& select, OperatorContext& ctx)
{
    if (population.size() < 2) { throw Error("crossover needs at least two prompts in the population"); }
    auto const& history = ctx.evaluator.history();
    std::vector<Prompt> offspring;
    for (std::size_t j = 0; j < ctx.config.crossovers; ++j) {
        auto [ida, idb] = select();
        auto const& a = history.prompt(ida);
        auto const& b = history.prompt(idb);
        auto const meta_prompt = fill_template(ctx.templates.crossover, {{"task_description", ctx.task.description},
                                                                          {"mother", a.instruction()},
                                                                          {"father", b.instruction()}});
        auto instruction = detail::ask_meta(meta_prompt, ctx).value_or(a.instruction());

        std::vector<FewShotExample> shot_union = a.few_shots();
        for (auto const& s : b.few_shots()) {
            if (std::find(shot_union.begin(), shot_union.end(), s) == shot_union.end()) { shot_union.push_back(s); }
        }
        auto const k = (a.shot_count() + b.shot_count()) / 2;
        offspring.emplace_back(std::move(instruction), ctx.rng.sample(shot_union, k));
    }
    return offspring;
}

/// Meta-LLM rewrite of the instruction, then r ~ Uniform{0,1,2}: add a created
/// shot (if below n_max), drop one (if any), or keep the count. Shots are
/// shuffled in every case.
inline std::vector<Prompt> mutate(std::span<Prompt const> offspring, OperatorContext& ctx)
{
    std::vector<Prompt> out;
    out.reserve(offspring.size());
    for (auto const& off : offspring) {
        auto const meta_prompt = fill_template(ctx.templates.mutation,
                                               {{"task_description", ctx.task.description}, {"instruction", off.instruction()}});
        auto instruction = detail::ask_meta(meta_prompt, ctx).value_or(off.instruction());

        auto shots = off.few_shots();
        auto const r = ctx.rng.uniform_index(3);
        if (r == 0 && shots.size() < ctx.config.max_shots) {
            std::set<std::string> used;
            for (auto const& s : shots) { used.insert(s.input); }
            std::size_t available = 0;
            for (auto const& inst : ctx.task.shots) { available += used.contains(inst.input) ? 0 : 1; }
            if (available > 0) {
                auto fresh = create_shots(1, instruction, ctx, used);
                shots.push_back(std::move(fresh.front()));
            }
        } else if (r == 1 && !shots.empty()) {
            shots = ctx.rng.sample(shots, shots.size() - 1);
        }
        ctx.rng.shuffle(shots);
        out.emplace_back(std::move(instruction), std::move(shots));
    }
    return out;
}

// ---------------------------------------------------------------------------
// parent selection

enum class TournamentCase { incumbent = 1, incumbent_crowding = 2, same_level = 3, weaker_dominance = 4, random = 5 };

struct TournamentOutcome {
    PromptId winner;
    TournamentCase decided_by{TournamentCase::random};
};

/// What a tournament needs to know about the current search state.
struct TournamentView {
    RunHistory const& history;
    CostWeights weights;
    std::set<PromptId> incumbents;
    std::map<PromptId, double> incumbent_crowding; // over the incumbents' shared blocks

    static TournamentView make(RunHistory const& history, CostWeights weights, std::span<PromptId const> incumbents)
    {
        TournamentView v{history, weights, {incumbents.begin(), incumbents.end()}, {}};
        if (incumbents.empty()) { return v; }
        BlockSet shared = history.evaluated_blocks(incumbents.front());
        for (auto id : incumbents) {
            auto const b = history.evaluated_blocks(id);
            BlockSet keep;
            std::set_intersection(shared.begin(), shared.end(), b.begin(), b.end(), std::inserter(keep, keep.end()));
            shared = std::move(keep);
        }
        if (shared.empty()) { return v; }
        std::vector<ObjectiveVector> vecs;
        for (auto id : incumbents) { vecs.push_back(objective_values(history, id, shared, weights)); }
        auto const cd = crowding_distance(vecs);
        for (std::size_t i = 0; i < incumbents.size(); ++i) { v.incumbent_crowding[incumbents[i]] = cd[i]; }
        return v;
    }
};

/// Better NDS rank, then larger crowding distance; full ties are broken at random.
inline std::size_t best_by_nds_cd(std::span<ObjectiveVector const> vecs, Rng& rng)
{
    auto const part = non_dominated_sort(vecs);
    auto const& first = part.fronts.front();
    std::vector<ObjectiveVector> front;
    for (auto i : first) { front.push_back(vecs[i]); }
    auto const cd = crowding_distance(front);
    double const best = *std::max_element(cd.begin(), cd.end());
    std::vector<std::size_t> ties;
    for (std::size_t k = 0; k < first.size(); ++k) {
        if (cd[k] == best) { ties.push_back(first[k]); }
    }
    return ties[rng.uniform_index(ties.size())];
}

/// Worst NDS rank, then smallest crowding distance; full ties are broken at random.
inline std::size_t worst_by_nds_cd(std::span<ObjectiveVector const> vecs, Rng& rng)
{
    auto const part = non_dominated_sort(vecs);
    auto const& last = part.fronts.back();
    std::vector<ObjectiveVector> front;
    for (auto i : last) { front.push_back(vecs[i]); }
    auto const cd = crowding_distance(front);
    double const worst = *std::min_element(cd.begin(), cd.end());
    std::vector<std::size_t> ties;
    for (std::size_t k = 0; k < last.size(); ++k) {
        if (cd[k] == worst) { ties.push_back(last[k]); }
    }
    return ties[rng.uniform_index(ties.size())];
}

/// One binary tournament between p1 and p2, applying the five cases in order.
inline TournamentOutcome binary_tournament(PromptId p1, PromptId p2, TournamentView const& view, Rng& rng)
{
    bool const inc1 = view.incumbents.contains(p1);
    bool const inc2 = view.incumbents.contains(p2);
    if (inc1 != inc2) { return {inc1 ? p1 : p2, TournamentCase::incumbent}; }
    if (inc1 && inc2) {
        auto cd = [&](PromptId id) {
            auto it = view.incumbent_crowding.find(id);
            return it == view.incumbent_crowding.end() ? 0.0 : it->second;
        };
        double const c1 = cd(p1);
        double const c2 = cd(p2);
        if (c1 != c2) { return {c1 > c2 ? p1 : p2, TournamentCase::incumbent_crowding}; }
        return {rng.coin() ? p1 : p2, TournamentCase::incumbent_crowding};
    }

    auto const b1 = view.history.evaluated_blocks(p1);
    auto const b2 = view.history.evaluated_blocks(p2);
    if (b1 == b2 && !b1.empty()) {
        std::vector<ObjectiveVector> vecs{objective_values(view.history, p1, b1, view.weights),
                                          objective_values(view.history, p2, b2, view.weights)};
        return {best_by_nds_cd(vecs, rng) == 0 ? p1 : p2, TournamentCase::same_level};
    }
    auto restricted = [&](PromptId id) {
        return [&view, id](BlockSet const& blocks) { return objective_values(view.history, id, blocks, view.weights); };
    };
    auto nested = [](BlockSet const& small, BlockSet const& big) {
        return !small.empty() && small.size() < big.size() && std::includes(big.begin(), big.end(), small.begin(), small.end());
    };
    if (nested(b1, b2) &&
        weakly_dominates_on_subset(b2, restricted(p2), b1, objective_values(view.history, p1, b1, view.weights))) {
        return {p2, TournamentCase::weaker_dominance};
    }
    if (nested(b2, b1) &&
        weakly_dominates_on_subset(b1, restricted(p1), b2, objective_values(view.history, p2, b2, view.weights))) {
        return {p1, TournamentCase::weaker_dominance};
    }
    return {rng.coin() ? p1 : p2, TournamentCase::random};
}

namespace detail {

template <typename Tournament>
std::pair<PromptId, PromptId> distinct_parents(std::span<PromptId const> population, Rng& rng, Tournament&& play)
{
    if (population.size() < 2) { throw Error("tournament selection needs at least two distinct prompts"); }
    auto round = [&] {
        auto const idx = rng.sample_indices(population.size(), 2);
        return play(population[idx[0]], population[idx[1]]);
    };
    auto const a = round();
    // Re-run tournaments until a distinct second parent appears. A population
    // where one member wins every pairing would never yield one, so cap it.
    constexpr int kMaxRounds = 1000;
    for (int i = 0; i < kMaxRounds; ++i) {
        auto const b = round();
        if (b != a) { return {a, b}; }
    }
    std::vector<PromptId> others;
    for (auto id : population) {
        if (id != a) { others.push_back(id); }
    }
    if (others.empty()) { throw Error("population holds a single distinct prompt; cannot select two parents"); }
    return {a, others[rng.uniform_index(others.size())]};
}

} // namespace detail

/// Two tournaments over the population; parents are distinct by content hash.
inline std::pair<PromptId, PromptId> tournament_select(std::span<PromptId const> population, TournamentView const& view, Rng& rng)
{
    return detail::distinct_parents(population, rng, [&](PromptId p1, PromptId p2) {
        return binary_tournament(p1, p2, view, rng).winner;
    });
}

/// NSGA-II rank and crowding distance for a population evaluated on one common basis.
struct RankCrowding {
    std::map<PromptId, std::size_t> rank;
    std::map<PromptId, double> crowding;

    static RankCrowding make(std::span<PromptId const> ids, std::span<ObjectiveVector const> vecs)
    {
        RankCrowding rc;
        auto const part = non_dominated_sort(vecs);
        for (std::size_t f = 0; f < part.fronts.size(); ++f) {
            std::vector<ObjectiveVector> front;
            for (auto i : part.fronts[f]) { front.push_back(vecs[i]); }
            auto const cd = crowding_distance(front);
            for (std::size_t k = 0; k < part.fronts[f].size(); ++k) {
                auto const id = ids[part.fronts[f][k]];
                rc.rank[id] = f;
                rc.crowding[id] = cd[k];
            }
        }
        return rc;
    }
};

/// Lower front rank wins, then larger crowding distance, then a coin flip.
inline PromptId rank_crowding_tournament(PromptId p1, PromptId p2, RankCrowding const& rc, Rng& rng)
{
    auto const r1 = rc.rank.at(p1);
    auto const r2 = rc.rank.at(p2);
    if (r1 != r2) { return r1 < r2 ? p1 : p2; }
    auto const c1 = rc.crowding.at(p1);
    auto const c2 = rc.crowding.at(p2);
    if (c1 != c2) { return c1 > c2 ? p1 : p2; }
    return rng.coin() ? p1 : p2;
}

inline std::pair<PromptId, PromptId> rank_crowding_select(std::span<PromptId const> population, RankCrowding const& rc, Rng& rng)
{
    return detail::distinct_parents(population, rng, [&](PromptId p1, PromptId p2) {
        return rank_crowding_tournament(p1, p2, rc, rng);
    });
}

} // namespace mocapo
