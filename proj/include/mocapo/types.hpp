#pragma once

// Domain types shared across the engine: prompts, objective vectors, blocks,
// cost weights, evaluation records and the run history ledger.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mocapo/rng.hpp"

namespace mocapo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PromptId {
    std::uint64_t value{0};

    friend auto operator<=>(PromptId, PromptId) = default;

    [[nodiscard]] std::string hex() const
    {
        std::array<char, 17> buf{};
        std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(value));
        return std::string(buf.data(), 16);
    }

    static PromptId from_hex(std::string_view s)
    {
        if (s.size() != 16) { throw Error("prompt id must be 16 hex digits: " + std::string(s)); }
        std::uint64_t v = 0;
        for (char c : s) {
            v <<= 4U;
            if (c >= '0' && c <= '9') { v |= static_cast<std::uint64_t>(c - '0'); }
            else if (c >= 'a' && c <= 'f') { v |= static_cast<std::uint64_t>(c - 'a' + 10); }
            else { throw Error("invalid hex digit in prompt id: " + std::string(s)); }
        }
        return PromptId{v};
    }
};

struct FewShotExample {
    std::string input;
    std::string output;

    FewShotExample(std::string in, std::string out) : input(std::move(in)), output(std::move(out))
    {
        if (input.empty()) { throw Error("few-shot example input must be non-empty"); }
        if (output.empty()) { throw Error("few-shot example output must be non-empty"); }
    }

    friend bool operator==(FewShotExample const&, FewShotExample const&) = default;
    friend auto operator<=>(FewShotExample const&, FewShotExample const&) = default;
};

/// An instruction plus an ordered tuple of few-shot examples. The id is a
/// content hash, so structurally equal prompts share an id.
class Prompt {
public:
    Prompt(std::string instruction, std::vector<FewShotExample> shots)
        : instruction_(std::move(instruction)), few_shots_(std::move(shots)), id_(content_hash(instruction_, few_shots_))
    {
    }

    [[nodiscard]] PromptId id() const noexcept { return id_; }
    [[nodiscard]] std::string const& instruction() const noexcept { return instruction_; }
    [[nodiscard]] std::vector<FewShotExample> const& few_shots() const noexcept { return few_shots_; }
    [[nodiscard]] std::size_t shot_count() const noexcept { return few_shots_.size(); }

    void validate(std::size_t max_shots) const
    {
        if (few_shots_.size() > max_shots) {
            throw Error("prompt has " + std::to_string(few_shots_.size()) + " shots, limit is " + std::to_string(max_shots));
        }
    }

    friend bool operator==(Prompt const& a, Prompt const& b)
    {
        return a.instruction_ == b.instruction_ && a.few_shots_ == b.few_shots_;
    }

    static PromptId content_hash(std::string_view instruction, std::vector<FewShotExample> const& shots)
    {
        auto h = fnv1a_field(instruction, kFnvOffset);
        for (auto const& s : shots) {
            h = fnv1a_field(s.input, h);
            h = fnv1a_field(s.output, h);
        }
        return PromptId{splitmix64(h)};
    }

private:
    std::string instruction_;
    std::vector<FewShotExample> few_shots_;
    PromptId id_;
};

/// Instruction, then each shot as an Input/Output pair, then the query.
inline std::string render_prompt(Prompt const& p, std::string_view input)
{
    std::string out = p.instruction();
    for (auto const& s : p.few_shots()) {
        out += "\n\nInput: ";
        out += s.input;
        out += "\nOutput: ";
        out += s.output;
    }
    out += "\n\nInput: ";
    out += input;
    out += "\nOutput:";
    return out;
}

/// m objective values under minimization (f1 = negated mean score, f2 = cost).
class ObjectiveVector {
public:
    ObjectiveVector() = default;
    ObjectiveVector(std::initializer_list<double> v) : values_(v) { check(); }
    explicit ObjectiveVector(std::vector<double> v) : values_(std::move(v)) { check(); }

    /// (inf, ..., inf): only used to seed the intensification comparison.
    static ObjectiveVector sentinel(std::size_t m)
    {
        ObjectiveVector v;
        v.values_.assign(m, std::numeric_limits<double>::infinity());
        return v;
    }

    [[nodiscard]] bool is_sentinel() const
    {
        return !values_.empty() && std::all_of(values_.begin(), values_.end(), [](double x) { return std::isinf(x) && x > 0; });
    }

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    [[nodiscard]] auto begin() const noexcept { return values_.begin(); }
    [[nodiscard]] auto end() const noexcept { return values_.end(); }
    [[nodiscard]] std::vector<double> const& values() const noexcept { return values_; }

    friend bool operator==(ObjectiveVector const&, ObjectiveVector const&) = default;

private:
    void check() const
    {
        for (double x : values_) {
            if (!std::isfinite(x)) { throw Error("objective vector entries must be finite"); }
        }
    }

    std::vector<double> values_;
};

using BlockSet = std::set<std::size_t>;

struct Instance {
    std::string id;
    std::string input;
    std::string label;
};

struct Block {
    std::size_t index{0};
    std::vector<std::string> instance_ids;
};

/// Consecutive blocks of exactly `block_size` instances; a trailing remainder is dropped.
inline std::vector<Block> partition_blocks(std::vector<Instance> const& dev, std::size_t block_size)
{
    if (block_size == 0) { throw Error("block size must be >= 1"); }
    std::vector<Block> blocks;
    for (std::size_t start = 0; start + block_size <= dev.size(); start += block_size) {
        Block b{blocks.size(), {}};
        for (std::size_t i = start; i < start + block_size; ++i) { b.instance_ids.push_back(dev[i].id); }
        blocks.push_back(std::move(b));
    }
    return blocks;
}

/// USD per one million input / output tokens.
struct CostWeights {
    double w_in{0.08};
    double w_out{0.32};

    void validate() const
    {
        if (!(w_in >= 0.0) || !(w_out >= 0.0) || !std::isfinite(w_in) || !std::isfinite(w_out)) {
            throw Error("cost weights must be finite and non-negative");
        }
    }

    /// Averaged OpenRouter prices for the models the defaults were derived from.
    static std::optional<CostWeights> preset(std::string_view model)
    {
        static const std::map<std::string, CostWeights, std::less<>> table{
            {"mistral-3.2-24b", {0.08, 0.32}},
            {"qwen3-30b", {0.11, 0.41}},
            {"gpt-oss-120b", {0.12, 0.49}},
            {"claude-opus-4.6", {2.72, 25.43}},
            {"gpt-5.2-pro", {21.00, 168.00}},
        };
        auto it = table.find(model);
        if (it == table.end()) { return std::nullopt; }
        return it->second;
    }
};

struct InstanceResult {
    std::string instance_id;
    double score{0.0};
    std::uint64_t tok_in{0};
    std::uint64_t tok_out{0};
    std::string raw_output;
    bool usage_estimated{false};
};

struct EvalRecord {
    PromptId prompt;
    std::size_t block{0};
    std::vector<InstanceResult> results;

    [[nodiscard]] std::uint64_t tokens() const
    {
        std::uint64_t t = 0;
        for (auto const& r : results) { t += r.tok_in + r.tok_out; }
        return t;
    }
};

class MissingEvaluation : public Error {
public:
    MissingEvaluation(PromptId id, BlockSet missing)
        : Error("prompt " + id.hex() + " lacks records for " + std::to_string(missing.size()) + " block(s)"), missing_(std::move(missing))
    {
    }
    [[nodiscard]] BlockSet const& missing() const noexcept { return missing_; }

private:
    BlockSet missing_;
};

/// Append-only ledger of (prompt, block) evaluations. One writer; readers may
/// share a const reference once writes for the current step are committed.
class RunHistory {
public:
    using Key = std::pair<PromptId, std::size_t>;

    struct Lookup {
        std::vector<EvalRecord const*> records;
        BlockSet missing;
        [[nodiscard]] bool complete() const noexcept { return missing.empty(); }
    };

    Prompt const& register_prompt(Prompt const& p)
    {
        auto [it, inserted] = prompts_.try_emplace(p.id(), p);
        if (!inserted && !(it->second == p)) { throw Error("prompt id collision for " + p.id().hex()); }
        return it->second;
    }

    [[nodiscard]] bool knows(PromptId id) const { return prompts_.contains(id); }

    [[nodiscard]] Prompt const& prompt(PromptId id) const
    {
        auto it = prompts_.find(id);
        if (it == prompts_.end()) { throw Error("unknown prompt " + id.hex()); }
        return it->second;
    }

    [[nodiscard]] bool has_record(PromptId id, std::size_t block) const { return records_.contains({id, block}); }

    void commit(EvalRecord rec)
    {
        if (!knows(rec.prompt)) { throw Error("commit for unregistered prompt " + rec.prompt.hex()); }
        Key key{rec.prompt, rec.block};
        if (records_.contains(key)) {
            throw Error("duplicate evaluation of prompt " + rec.prompt.hex() + " on block " + std::to_string(rec.block));
        }
        token_meter_ += rec.tokens();
        eval_calls_ += rec.results.size();
        blocks_by_prompt_[rec.prompt].insert(rec.block);
        records_.emplace(key, std::move(rec));
    }

    [[nodiscard]] BlockSet evaluated_blocks(PromptId id) const
    {
        auto it = blocks_by_prompt_.find(id);
        return it == blocks_by_prompt_.end() ? BlockSet{} : it->second;
    }

    [[nodiscard]] Lookup lookup(PromptId id, BlockSet const& blocks) const
    {
        Lookup out;
        for (auto b : blocks) {
            auto it = records_.find({id, b});
            if (it == records_.end()) { out.missing.insert(b); }
            else { out.records.push_back(&it->second); }
        }
        return out;
    }

    /// Tokens of all committed evaluation records.
    [[nodiscard]] std::uint64_t token_meter() const noexcept { return token_meter_; }
    /// Evaluation-LLM tokens spent outside block evaluations (few-shot creation).
    [[nodiscard]] std::uint64_t aux_eval_tokens() const noexcept { return aux_eval_tokens_; }
    [[nodiscard]] std::uint64_t meta_tokens() const noexcept { return meta_tokens_; }
    [[nodiscard]] std::uint64_t eval_tokens_total() const noexcept { return token_meter_ + aux_eval_tokens_; }
    [[nodiscard]] std::uint64_t eval_calls() const noexcept { return eval_calls_; }

    void add_aux_eval_tokens(std::uint64_t t) noexcept { aux_eval_tokens_ += t; }
    void add_meta_tokens(std::uint64_t t) noexcept { meta_tokens_ += t; }

    [[nodiscard]] std::map<Key, EvalRecord> const& records() const noexcept { return records_; }
    [[nodiscard]] std::map<PromptId, Prompt> const& prompts() const noexcept { return prompts_; }
    [[nodiscard]] std::size_t distinct_evaluated() const noexcept { return blocks_by_prompt_.size(); }

private:
    std::map<PromptId, Prompt> prompts_;
    std::map<Key, EvalRecord> records_;
    std::map<PromptId, BlockSet> blocks_by_prompt_;
    std::uint64_t token_meter_{0};
    std::uint64_t aux_eval_tokens_{0};
    std::uint64_t meta_tokens_{0};
    std::uint64_t eval_calls_{0};
};

enum class ScorerKind { exact_match_marker, reward_function };

struct TaskSpec {
    std::string name;
    std::string description;
    ScorerKind scorer{ScorerKind::exact_match_marker};
    std::vector<Instance> dev;
    std::vector<Instance> shots;
    std::vector<Instance> test;

    void validate() const
    {
        std::set<std::string> seen;
        for (auto const* part : {&dev, &shots, &test}) {
            std::set<std::string> local;
            for (auto const& inst : *part) {
                if (!local.insert(inst.id).second) { throw Error("duplicate instance id '" + inst.id + "' in task " + name); }
                if (seen.contains(inst.id)) { throw Error("instance '" + inst.id + "' appears in more than one of dev/shots/test"); }
            }
            seen.insert(local.begin(), local.end());
        }
    }

    [[nodiscard]] Instance const& dev_instance(std::string const& id) const
    {
        auto it = std::find_if(dev.begin(), dev.end(), [&](Instance const& i) { return i.id == id; });
        if (it == dev.end()) { throw Error("unknown dev instance " + id); }
        return *it;
    }
};

struct LlmSettings {
    std::string eval_model{"simulator"};
    std::string meta_model{"simulator"};
    double eval_temperature{0.0};
    double meta_temperature{1.0};
    int max_output_tokens{3000};
    std::size_t concurrency{1};
};

struct OptimizerConfig {
    std::size_t mu{10};
    std::size_t block_size{30};
    std::optional<std::size_t> iterations; // unbounded: stop on budget or step cap
    std::size_t crossovers{4};
    std::size_t max_shots{5};
    CostWeights weights{};
    std::uint64_t token_budget{7'500'000};
    std::uint64_t seed{0};
    std::size_t step_cap{2000};
    LlmSettings llm{};

    void validate() const
    {
        if (mu < 2) { throw Error("mu must be >= 2"); }
        if (crossovers < 1) { throw Error("crossovers per iteration must be >= 1"); }
        if (block_size < 1) { throw Error("block size must be >= 1"); }
        if (llm.max_output_tokens < 1) { throw Error("max output tokens must be >= 1"); }
        weights.validate();
    }
};

} // namespace mocapo
