#pragma once

// Block-wise racing of challengers against a non-dominated incumbent set.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mocapo/evaluation.hpp"
#include "mocapo/operators.hpp"
#include "mocapo/pareto.hpp"
#include "mocapo/run_result.hpp"
#include "mocapo/templates.hpp"

namespace mocapo {

class MoCapo;

/// Hooks for watching the loop from tests and tools. All default to no-ops.
class MoCapoObserver {
public:
    virtual ~MoCapoObserver() = default;
    virtual void on_challenger_block(PromptId /*challenger*/, std::size_t /*block*/, BlockSet const& /*shared*/) {}
    virtual void on_environmental_selection(std::size_t /*population*/, std::size_t /*mu*/) {}
    virtual void on_loop_boundary(MoCapo const& /*state*/) {}
};

inline BlockSet intersect(BlockSet const& a, BlockSet const& b)
{
    BlockSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

inline BlockSet difference(BlockSet const& a, BlockSet const& b)
{
    BlockSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

class MoCapo {
public:
    MoCapo(TaskSpec task, OptimizerConfig cfg, LlmBackend& eval_llm, LlmBackend& meta_llm,
           MetaPromptTemplates templates = MetaPromptTemplates::defaults())
        : task_(std::move(task)), cfg_(std::move(cfg)), templates_(std::move(templates)),
          evaluator_(task_, make_blocks(task_, cfg_), eval_llm, history_, cfg_), meta_(meta_llm),
          init_rng_(Rng::stream(cfg_.seed, "initial-population")), rng_(Rng::stream(cfg_.seed, "mo-capo"))
    {
        task_.validate();
        templates_.validate();
    }

    MoCapo(MoCapo const&) = delete;
    MoCapo& operator=(MoCapo const&) = delete;

    void set_observer(MoCapoObserver* obs) noexcept { observer_ = obs; }
    void set_log(std::ostream* log) noexcept { log_ = log; }

    RunResult run(std::vector<std::string> const& initial_instructions)
    {
        initialize(initial_instructions);
        snapshot(0);
        std::string reason = "iterations";
        std::size_t t = 1;
        for (;; ++t) {
            if (cfg_.iterations && t > *cfg_.iterations) { break; }
            BudgetMeter const meter{cfg_.token_budget, history_.eval_tokens_total(), t - 1, cfg_.step_cap};
            if (check_budget(meter) == BudgetDecision::stop) {
                reason = meter.consumed >= meter.budget ? "budget" : "step_cap";
                break;
            }
            try {
                iterate();
            } catch (BudgetExhausted const&) {
                reason = "budget";
                snapshot(t);
                ++t;
                break;
            }
            snapshot(t);
        }
        return result(reason, t - 1);
    }

    void initialize(std::vector<std::string> const& instructions)
    {
        if (instructions.size() != cfg_.mu) {
            throw Error("expected " + std::to_string(cfg_.mu) + " initial instructions, got " + std::to_string(instructions.size()));
        }
        auto ctx = context(init_rng_);
        auto const pop = initialize_pop(instructions, ctx);
        BlockSet const first{rng_.pick(evaluator_.all_blocks())};
        population_.clear();
        for (auto const& p : pop) {
            evaluator_.evaluate(p, first, EvalMode::forced);
            if (!in_population(p.id())) { population_.push_back(p.id()); }
        }
        initial_population_ = population_;
        incumbents_ = nds_front(population_, first);
        notify_boundary();
    }

    /// One generation: c crossovers, mutation, then intensification of each offspring.
    void iterate()
    {
        auto ctx = context(rng_);
        auto const view = TournamentView::make(history_, cfg_.weights, incumbents_);
        auto const offspring = mutate(crossover(population_, [&] { return tournament_select(population_, view, rng_); }, ctx), ctx);
        for (auto const& off : offspring) {
            intensify(off);
            notify_boundary();
        }
    }

    void intensify(Prompt const& challenger)
    {
        history_.register_prompt(challenger);
        auto const id = challenger.id();
        if (is_incumbent(id)) { return; }

        auto const shared = shared_blocks();
        auto chal_blocks = intersect(history_.evaluated_blocks(id), shared);
        auto f_new = ObjectiveVector::sentinel(2);
        bool accepted = false;
        while (!accepted) {
            if (chal_blocks == shared) {
                accepted = true;
                break;
            }
            auto const f_old = f_new;
            do {
                auto const b = rng_.pick(difference(shared, chal_blocks));
                chal_blocks.insert(b);
                if (observer_ != nullptr) { observer_->on_challenger_block(id, b, shared); }
                evaluator_.evaluate(challenger, {b});
                f_new = estimate(id, chal_blocks);
            } while (!(dominates(f_new, f_old) || chal_blocks == shared));

            if (chal_blocks == shared) {
                accepted = true;
                break;
            }
            auto const inc = closest_incumbent(id, chal_blocks);
            if (dominates(estimate(inc, chal_blocks), f_new)) {
                add_to_population(id);
                break;
            }
        }
        if (accepted) {
            add_to_population(id);
            auto candidates = incumbents_;
            candidates.push_back(id);
            incumbents_ = nds_front(candidates, shared);
        }
        if (population_.size() > cfg_.mu) { environmental_selection(); }
        advance_incumbents();
    }

    /// Incumbent nearest to the challenger in min-max normalized objective space.
    PromptId closest_incumbent(PromptId challenger, BlockSet const& blocks)
    {
        if (incumbents_.empty()) { throw Error("closest_incumbent: no incumbents"); }
        auto const fc = estimate(challenger, blocks);
        std::vector<ObjectiveVector> vecs;
        for (auto inc : incumbents_) { vecs.push_back(estimate(inc, blocks)); }
        PromptId best = incumbents_.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < incumbents_.size(); ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < fc.size(); ++j) {
                auto const [lo, hi] = seen_bounds_[j];
                if (hi <= lo) { continue; }
                double const diff = (vecs[i][j] - fc[j]) / (hi - lo);
                d += diff * diff;
            }
            d = std::sqrt(d);
            if (d < best_d || (d == best_d && incumbents_[i] < best)) {
                best_d = d;
                best = incumbents_[i];
            }
        }
        return best;
    }

    /// Evaluates the least-evaluated incumbent on one more block: an unseen one
    /// when all incumbents are level, otherwise one it lacks from their union.
    void advance_incumbents()
    {
        if (incumbents_.empty()) { return; }
        auto lagging = incumbents_.front();
        for (auto id : incumbents_) {
            auto const n = history_.evaluated_blocks(id).size();
            auto const best = history_.evaluated_blocks(lagging).size();
            if (n < best || (n == best && id < lagging)) { lagging = id; }
        }
        auto const own = history_.evaluated_blocks(lagging);
        bool level = true;
        BlockSet union_blocks;
        for (auto id : incumbents_) {
            auto const b = history_.evaluated_blocks(id);
            level = level && b == own;
            union_blocks.insert(b.begin(), b.end());
        }
        auto const candidates = difference(level ? evaluator_.all_blocks() : union_blocks, own);
        if (candidates.empty()) { return; }
        auto const b = rng_.pick(candidates);
        evaluator_.evaluate(history_.prompt(lagging), {b});
        reassess_incumbents();
    }

    void environmental_selection()
    {
        bool incumbents_shrank = false;
        while (population_.size() > cfg_.mu) {
            std::vector<PromptId> others;
            for (auto id : population_) {
                if (!is_incumbent(id)) { others.push_back(id); }
            }
            PromptId victim;
            if (!others.empty()) {
                auto const level = history_.evaluated_blocks(others.front());
                bool const homogeneous = std::all_of(others.begin(), others.end(),
                                                     [&](PromptId id) { return history_.evaluated_blocks(id) == level; });
                if (homogeneous) {
                    auto const vecs = vectors(others, level);
                    victim = others[worst_by_nds_cd(vecs, rng_)];
                } else {
                    std::size_t fewest = std::numeric_limits<std::size_t>::max();
                    for (auto id : others) { fewest = std::min(fewest, history_.evaluated_blocks(id).size()); }
                    std::vector<PromptId> least;
                    for (auto id : others) {
                        if (history_.evaluated_blocks(id).size() == fewest) { least.push_back(id); }
                    }
                    victim = least[rng_.uniform_index(least.size())];
                }
            } else {
                auto const vecs = vectors(incumbents_, shared_blocks());
                auto const cd = crowding_distance(vecs);
                double const lowest = *std::min_element(cd.begin(), cd.end());
                std::vector<PromptId> ties;
                for (std::size_t i = 0; i < cd.size(); ++i) {
                    if (cd[i] == lowest) { ties.push_back(incumbents_[i]); }
                }
                victim = ties[rng_.uniform_index(ties.size())];
                std::erase(incumbents_, victim);
                incumbents_shrank = true;
            }
            std::erase(population_, victim);
        }
        if (observer_ != nullptr) { observer_->on_environmental_selection(population_.size(), cfg_.mu); }
        if (incumbents_shrank) { reassess_incumbents(); }
    }

    /// Intersection of the incumbents' evaluated blocks.
    [[nodiscard]] BlockSet shared_blocks() const
    {
        if (incumbents_.empty()) { return {}; }
        auto shared = history_.evaluated_blocks(incumbents_.front());
        for (auto id : incumbents_) { shared = intersect(shared, history_.evaluated_blocks(id)); }
        return shared;
    }

    [[nodiscard]] std::vector<PromptId> const& population() const noexcept { return population_; }
    [[nodiscard]] std::vector<PromptId> const& incumbents() const noexcept { return incumbents_; }
    [[nodiscard]] RunHistory const& history() const noexcept { return history_; }
    [[nodiscard]] Evaluator& evaluator() noexcept { return evaluator_; }
    [[nodiscard]] OptimizerConfig const& config() const noexcept { return cfg_; }
    [[nodiscard]] TaskSpec const& task() const noexcept { return task_; }
    [[nodiscard]] Rng& rng() noexcept { return rng_; }

    /// Replaces population and incumbents wholesale. Every id must already be
    /// known to the history; used to set up hand-built states in tests.
    void set_state(std::vector<PromptId> population, std::vector<PromptId> incumbents)
    {
        for (auto id : incumbents) {
            if (std::find(population.begin(), population.end(), id) == population.end()) {
                throw Error("set_state: incumbent " + id.hex() + " is not in the population");
            }
        }
        population_ = std::move(population);
        incumbents_ = std::move(incumbents);
        for (auto id : population_) {
            auto const b = history_.evaluated_blocks(id);
            if (!b.empty()) { estimate(id, b); }
        }
    }

private:
    static std::vector<Block> make_blocks(TaskSpec const& task, OptimizerConfig const& cfg)
    {
        cfg.validate();
        auto blocks = partition_blocks(task.dev, cfg.block_size);
        if (blocks.empty()) { throw Error("development set is smaller than one block"); }
        if (task.shots.size() < cfg.max_shots) { throw Error("few-shot pool is smaller than max_shots"); }
        return blocks;
    }

    OperatorContext context(Rng& rng) { return {task_, evaluator_, meta_, templates_, cfg_, rng, &stats_, log_}; }

    /// Objective estimate on a block set; every estimate widens the online normalization bounds.
    ObjectiveVector estimate(PromptId id, BlockSet const& blocks)
    {
        auto v = objective_values(history_, id, blocks, cfg_.weights);
        if (seen_bounds_.empty()) {
            for (double x : v) { seen_bounds_.emplace_back(x, x); }
        }
        for (std::size_t j = 0; j < v.size(); ++j) {
            seen_bounds_[j].first = std::min(seen_bounds_[j].first, v[j]);
            seen_bounds_[j].second = std::max(seen_bounds_[j].second, v[j]);
        }
        return v;
    }

    std::vector<ObjectiveVector> vectors(std::span<PromptId const> ids, BlockSet const& blocks)
    {
        std::vector<ObjectiveVector> out;
        out.reserve(ids.size());
        for (auto id : ids) { out.push_back(estimate(id, blocks)); }
        return out;
    }

    std::vector<PromptId> nds_front(std::span<PromptId const> ids, BlockSet const& blocks)
    {
        auto const vecs = vectors(ids, blocks);
        std::vector<PromptId> front;
        for (auto i : non_dominated_indices(vecs)) { front.push_back(ids[i]); }
        return front;
    }

    // Once the shared basis grows, incumbents are compared again on the larger
    // basis until no member is dominated.
    void reassess_incumbents()
    {
        for (;;) {
            auto const front = nds_front(incumbents_, shared_blocks());
            if (front.size() == incumbents_.size()) { return; }
            incumbents_ = front;
        }
    }

    [[nodiscard]] bool is_incumbent(PromptId id) const
    {
        return std::find(incumbents_.begin(), incumbents_.end(), id) != incumbents_.end();
    }

    [[nodiscard]] bool in_population(PromptId id) const
    {
        return std::find(population_.begin(), population_.end(), id) != population_.end();
    }

    void add_to_population(PromptId id)
    {
        if (!in_population(id)) { population_.push_back(id); }
    }

    void notify_boundary()
    {
        if (observer_ != nullptr) { observer_->on_loop_boundary(*this); }
    }

    void snapshot(std::size_t step)
    {
        Snapshot s;
        s.step = step;
        s.eval_tokens = history_.eval_tokens_total();
        s.meta_tokens = history_.meta_tokens();
        s.basis = shared_blocks();
        for (auto id : incumbents_) { s.front.push_back({id, objective_values(history_, id, s.basis, cfg_.weights)}); }
        s.population_size = population_.size();
        s.candidates = history_.distinct_evaluated();
        snapshots_.push_back(std::move(s));
    }

    RunResult result(std::string reason, std::size_t steps) const
    {
        RunResult r;
        r.optimizer = "mocapo";
        r.history = history_;
        r.initial_population = initial_population_;
        r.final_population = population_;
        r.final_basis = shared_blocks();
        for (auto id : incumbents_) { r.final_front.push_back({id, objective_values(history_, id, r.final_basis, cfg_.weights)}); }
        r.snapshots = snapshots_;
        r.stop_reason = std::move(reason);
        r.steps = steps;
        r.meta_fallbacks = stats_.meta_fallbacks;
        return r;
    }

    TaskSpec task_;
    OptimizerConfig cfg_;
    MetaPromptTemplates templates_;
    RunHistory history_;
    Evaluator evaluator_;
    LlmBackend& meta_;
    Rng init_rng_;
    Rng rng_;
    OperatorStats stats_;
    std::vector<PromptId> population_;
    std::vector<PromptId> incumbents_;
    std::vector<PromptId> initial_population_;
    std::vector<std::pair<double, double>> seen_bounds_;
    std::vector<Snapshot> snapshots_;
    MoCapoObserver* observer_{nullptr};
    std::ostream* log_{nullptr};
};

} // namespace mocapo
