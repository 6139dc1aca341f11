#pragma once

// Block-wise scoring through the evaluation-LLM, the token-cost objective and
// budget enforcement.

#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "mocapo/llm.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

/// Opaque per-instance score in [0, 1] computed from the raw model output.
using RewardFunction = std::function<double(Instance const&, std::string_view raw_output)>;

class RewardRegistry {
public:
    static RewardRegistry& instance()
    {
        static RewardRegistry r;
        return r;
    }

    void add(std::string task, RewardFunction fn)
    {
        std::lock_guard lock(mutex_);
        fns_[std::move(task)] = std::move(fn);
    }

    [[nodiscard]] RewardFunction find(std::string const& task) const
    {
        std::lock_guard lock(mutex_);
        auto it = fns_.find(task);
        if (it == fns_.end()) { throw Error("no reward function registered for task '" + task + "'"); }
        return it->second;
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, RewardFunction> fns_;
};

class Scorer {
public:
    /// I[extracted answer == gold label]; a missing marker scores 0.
    static Scorer exact_match()
    {
        return Scorer([](Instance const& inst, std::string_view raw) {
            auto ans = extract_marked_answer(raw);
            return ans && *ans == trim(inst.label) ? 1.0 : 0.0;
        });
    }

    static Scorer reward(RewardFunction fn) { return Scorer(std::move(fn)); }

    static Scorer for_task(TaskSpec const& task)
    {
        if (task.scorer == ScorerKind::exact_match_marker) { return exact_match(); }
        return reward(RewardRegistry::instance().find(task.name));
    }

    double operator()(Instance const& inst, std::string_view raw) const
    {
        double const s = fn_(inst, raw);
        if (!(s >= 0.0 && s <= 1.0)) { throw Error("score outside [0, 1] for instance " + inst.id); }
        return s;
    }

private:
    explicit Scorer(RewardFunction fn) : fn_(std::move(fn)) {}
    RewardFunction fn_;
};

struct BudgetMeter {
    std::uint64_t budget{7'500'000};
    std::uint64_t consumed{0};
    std::size_t step_count{0};
    std::size_t step_cap{2000};
};

enum class BudgetDecision { proceed, stop };

inline BudgetDecision check_budget(BudgetMeter const& m)
{
    return m.consumed >= m.budget || m.step_count >= m.step_cap ? BudgetDecision::stop : BudgetDecision::proceed;
}

class BudgetExhausted : public Error {
public:
    BudgetExhausted() : Error("token budget exhausted") {}
};

/// f1 = -mean score, f2 = w_in * mean tok_in + w_out * mean tok_out over all
/// instances of the given blocks.
inline ObjectiveVector objective_values(RunHistory const& history, PromptId id, BlockSet const& blocks, CostWeights const& w)
{
    if (blocks.empty()) { throw Error("objective_values: empty block set"); }
    auto const lookup = history.lookup(id, blocks);
    if (!lookup.complete()) { throw MissingEvaluation(id, lookup.missing); }
    double score = 0.0;
    double tin = 0.0;
    double tout = 0.0;
    std::size_t n = 0;
    for (auto const* rec : lookup.records) {
        for (auto const& r : rec->results) {
            score += r.score;
            tin += static_cast<double>(r.tok_in);
            tout += static_cast<double>(r.tok_out);
            ++n;
        }
    }
    if (n == 0) { throw Error("objective_values: blocks contain no instances"); }
    auto const dn = static_cast<double>(n);
    return ObjectiveVector{-(score / dn), w.w_in * (tin / dn) + w.w_out * (tout / dn)};
}

struct TokenMeans {
    double tok_in{0.0};
    double tok_out{0.0};
};

inline TokenMeans mean_tokens(RunHistory const& history, PromptId id, BlockSet const& blocks)
{
    auto const lookup = history.lookup(id, blocks);
    if (!lookup.complete()) { throw MissingEvaluation(id, lookup.missing); }
    TokenMeans m;
    std::size_t n = 0;
    for (auto const* rec : lookup.records) {
        for (auto const& r : rec->results) {
            m.tok_in += static_cast<double>(r.tok_in);
            m.tok_out += static_cast<double>(r.tok_out);
            ++n;
        }
    }
    if (n > 0) {
        m.tok_in /= static_cast<double>(n);
        m.tok_out /= static_cast<double>(n);
    }
    return m;
}

enum class EvalMode { budgeted, forced };

/// Runs prompts on dev blocks and commits one record per new (prompt, block)
/// pair. Cached pairs cost nothing. Budget is checked before each pair, so a
/// run overshoots by at most one block.
class Evaluator {
public:
    Evaluator(TaskSpec const& task, std::vector<Block> blocks, LlmBackend& backend, RunHistory& history,
              OptimizerConfig const& cfg)
        : task_(task), blocks_(std::move(blocks)), backend_(backend), history_(history), llm_(cfg.llm), seed_(cfg.seed),
          budget_(cfg.token_budget), weights_(cfg.weights), scorer_(Scorer::for_task(task))
    {
        for (auto const& inst : task_.dev) { dev_index_.emplace(inst.id, &inst); }
    }

    [[nodiscard]] std::vector<Block> const& blocks() const noexcept { return blocks_; }
    [[nodiscard]] BlockSet all_blocks() const
    {
        BlockSet s;
        for (auto const& b : blocks_) { s.insert(b.index); }
        return s;
    }
    [[nodiscard]] std::uint64_t budget() const noexcept { return budget_; }
    [[nodiscard]] bool exhausted() const noexcept { return history_.eval_tokens_total() >= budget_; }
    [[nodiscard]] Scorer const& scorer() const noexcept { return scorer_; }
    [[nodiscard]] RunHistory& history() noexcept { return history_; }
    [[nodiscard]] RunHistory const& history() const noexcept { return history_; }
    [[nodiscard]] LlmBackend& backend() noexcept { return backend_; }

    void evaluate(Prompt const& p, BlockSet const& blocks, EvalMode mode = EvalMode::budgeted)
    {
        history_.register_prompt(p);
        for (auto b : blocks) {
            if (history_.has_record(p.id(), b)) { continue; }
            if (mode == EvalMode::budgeted && exhausted()) { throw BudgetExhausted(); }
            auto const& block = block_at(b);
            std::vector<Instance const*> insts;
            insts.reserve(block.instance_ids.size());
            for (auto const& id : block.instance_ids) { insts.push_back(dev_index_.at(id)); }
            EvalRecord rec{p.id(), b, run_instances(p, insts)};
            history_.commit(std::move(rec));
        }
    }

    void evaluate(std::span<Prompt const> prompts, BlockSet const& blocks, EvalMode mode = EvalMode::budgeted)
    {
        for (auto const& p : prompts) { evaluate(p, blocks, mode); }
    }

    [[nodiscard]] ObjectiveVector objectives(PromptId id, BlockSet const& blocks) const
    {
        return objective_values(history_, id, blocks, weights_);
    }

    [[nodiscard]] CostWeights const& weights() const noexcept { return weights_; }

    /// Evaluates a prompt on arbitrary instances without touching the history.
    /// Calls fan out up to the configured concurrency; results keep input order.
    std::vector<InstanceResult> run_instances(Prompt const& p, std::span<Instance const* const> instances)
    {
        std::vector<InstanceResult> out(instances.size());
        auto one = [&](std::size_t i) {
            auto const& inst = *instances[i];
            auto req = ChatRequest::user(llm_.eval_model, render_prompt(p, inst.input), llm_.max_output_tokens,
                                         llm_.eval_temperature, seed_);
            auto resp = backend_.complete(req);
            InstanceResult r;
            r.instance_id = inst.id;
            r.score = scorer_(inst, resp.text);
            r.tok_in = resp.tok_in;
            r.tok_out = resp.tok_out;
            r.raw_output = std::move(resp.text);
            r.usage_estimated = resp.usage_estimated;
            out[i] = std::move(r);
        };
        auto const width = std::max<std::size_t>(1, llm_.concurrency);
        if (width == 1) {
            for (std::size_t i = 0; i < instances.size(); ++i) { one(i); }
            return out;
        }
        for (std::size_t start = 0; start < instances.size(); start += width) {
            std::vector<std::future<void>> inflight;
            for (std::size_t i = start; i < std::min(instances.size(), start + width); ++i) {
                inflight.push_back(std::async(std::launch::async, one, i));
            }
            for (auto& f : inflight) { f.get(); }
        }
        return out;
    }

    std::vector<InstanceResult> run_instances(Prompt const& p, std::vector<Instance> const& instances)
    {
        std::vector<Instance const*> ptrs;
        ptrs.reserve(instances.size());
        for (auto const& i : instances) { ptrs.push_back(&i); }
        return run_instances(p, std::span<Instance const* const>(ptrs));
    }

private:
    Block const& block_at(std::size_t index) const
    {
        if (index >= blocks_.size() || blocks_[index].index != index) { throw Error("unknown block " + std::to_string(index)); }
        return blocks_[index];
    }

    TaskSpec const& task_;
    std::vector<Block> blocks_;
    LlmBackend& backend_;
    RunHistory& history_;
    LlmSettings llm_;
    std::uint64_t seed_;
    std::uint64_t budget_;
    CostWeights weights_;
    Scorer scorer_;
    std::map<std::string, Instance const*> dev_index_;
};

/// Objective vector of a prompt on a standalone instance set (used for test-set scoring).
inline ObjectiveVector objectives_from_results(std::vector<InstanceResult> const& results, CostWeights const& w)
{
    if (results.empty()) { throw Error("no instances to aggregate"); }
    double s = 0.0;
    double tin = 0.0;
    double tout = 0.0;
    for (auto const& r : results) {
        s += r.score;
        tin += static_cast<double>(r.tok_in);
        tout += static_cast<double>(r.tok_out);
    }
    auto const n = static_cast<double>(results.size());
    return ObjectiveVector{-(s / n), w.w_in * (tin / n) + w.w_out * (tout / n)};
}

} // namespace mocapo
