#pragma once

// Steady-state NSGA-II over prompts: every candidate is scored on the whole
// development set, and survivors are chosen by front rank with crowding
// distance recomputed after each removal.

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include "mocapo/evaluation.hpp"
#include "mocapo/operators.hpp"
#include "mocapo/pareto.hpp"
#include "mocapo/run_result.hpp"
#include "mocapo/templates.hpp"

namespace mocapo {

class Nsga2Po {
public:
    Nsga2Po(TaskSpec task, OptimizerConfig cfg, LlmBackend& eval_llm, LlmBackend& meta_llm,
            MetaPromptTemplates templates = MetaPromptTemplates::defaults())
        : task_(std::move(task)), cfg_(std::move(cfg)), templates_(std::move(templates)),
          evaluator_(task_, make_blocks(task_, cfg_), eval_llm, history_, cfg_), meta_(meta_llm),
          init_rng_(Rng::stream(cfg_.seed, "initial-population")), rng_(Rng::stream(cfg_.seed, "nsga2-po"))
    {
        task_.validate();
        templates_.validate();
    }

    Nsga2Po(Nsga2Po const&) = delete;
    Nsga2Po& operator=(Nsga2Po const&) = delete;

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
            bool const exhausted = !iterate();
            snapshot(t);
            if (exhausted) {
                reason = "budget";
                ++t;
                break;
            }
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
        population_.clear();
        for (auto const& p : pop) {
            evaluator_.evaluate(p, evaluator_.all_blocks(), EvalMode::forced);
            if (std::find(population_.begin(), population_.end(), p.id()) == population_.end()) { population_.push_back(p.id()); }
        }
        initial_population_ = population_;
    }

    /// One generation. Returns false when the budget ran out while scoring
    /// offspring; offspring without a full evaluation are discarded.
    bool iterate()
    {
        auto ctx = context(rng_);
        auto const rc = RankCrowding::make(population_, vectors(population_));
        auto const offspring =
            mutate(crossover(population_, [&] { return rank_crowding_select(population_, rc, rng_); }, ctx), ctx);
        bool complete = true;
        for (auto const& off : offspring) {
            if (std::find(population_.begin(), population_.end(), off.id()) != population_.end()) { continue; }
            try {
                evaluator_.evaluate(off, evaluator_.all_blocks());
            } catch (BudgetExhausted const&) {
                complete = false;
                break;
            }
            population_.push_back(off.id());
        }
        environmental_selection();
        return complete;
    }

    void environmental_selection()
    {
        while (population_.size() > cfg_.mu) {
            auto const vecs = vectors(population_);
            population_.erase(population_.begin() + static_cast<std::ptrdiff_t>(worst_by_nds_cd(vecs, rng_)));
        }
    }

    [[nodiscard]] std::vector<PromptId> const& population() const noexcept { return population_; }
    [[nodiscard]] RunHistory const& history() const noexcept { return history_; }
    [[nodiscard]] OptimizerConfig const& config() const noexcept { return cfg_; }

    /// Non-dominated members of the population on the full development set.
    [[nodiscard]] std::vector<FrontMember> front() const
    {
        auto const vecs = vectors(population_);
        std::vector<FrontMember> out;
        for (auto i : non_dominated_indices(vecs)) { out.push_back({population_[i], vecs[i]}); }
        return out;
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

    [[nodiscard]] std::vector<ObjectiveVector> vectors(std::vector<PromptId> const& ids) const
    {
        auto const all = evaluator_.all_blocks();
        std::vector<ObjectiveVector> out;
        out.reserve(ids.size());
        for (auto id : ids) { out.push_back(objective_values(history_, id, all, cfg_.weights)); }
        return out;
    }

    void snapshot(std::size_t step)
    {
        Snapshot s;
        s.step = step;
        s.eval_tokens = history_.eval_tokens_total();
        s.meta_tokens = history_.meta_tokens();
        s.basis = evaluator_.all_blocks();
        s.front = front();
        s.population_size = population_.size();
        s.candidates = history_.distinct_evaluated();
        snapshots_.push_back(std::move(s));
    }

    RunResult result(std::string reason, std::size_t steps) const
    {
        RunResult r;
        r.optimizer = "nsga2po";
        r.history = history_;
        r.initial_population = initial_population_;
        r.final_population = population_;
        r.final_basis = evaluator_.all_blocks();
        r.final_front = front();
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
    std::vector<PromptId> initial_population_;
    std::vector<Snapshot> snapshots_;
    std::ostream* log_{nullptr};
};

} // namespace mocapo
