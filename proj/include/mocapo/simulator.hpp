#pragma once

// Deterministic stand-in for both the evaluation-LLM and the meta-LLM. Every
// response is a pure function of (request, simulator seed): answer quality
// follows a closed-form q(p), output length follows "reasoning" keywords, and
// meta requests are recognised by matching the crossover/mutation templates.

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mocapo/llm.hpp"
#include "mocapo/rng.hpp"
#include "mocapo/templates.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

struct SimulatorConfig {
    double q_base{0.30};
    std::map<std::string, double> keyword_bonus;
    double shot_bonus{0.05};
    std::size_t shot_saturation{3};
    double verbosity_penalty{0.004}; // per instruction word
    std::map<std::string, std::size_t> reasoning_words; // keyword -> extra output words
    std::size_t output_base_words{6};
    std::size_t output_jitter{4};
    double edit_rate{0.15};
    std::vector<std::string> vocabulary; // words the mutation may insert or substitute
    double marker_failure_rate{0.0};
    std::vector<std::string> labels;
    std::uint64_t seed{0};
};

/// Lower-cased word with surrounding punctuation removed.
inline std::string normalize_word(std::string_view w)
{
    std::string out;
    for (unsigned char c : w) {
        if (std::isalnum(c) != 0) { out += static_cast<char>(std::tolower(c)); }
    }
    return out;
}

struct RenderedPromptParts {
    std::string instruction;
    std::size_t shots{0};
    std::string prompt_body; // everything before the query
    std::string query;
};

/// Splits a render_prompt() output back into instruction, shot count and query.
inline RenderedPromptParts parse_rendered_prompt(std::string_view text)
{
    constexpr std::string_view sep = "\n\nInput: ";
    constexpr std::string_view tail = "\nOutput:";
    RenderedPromptParts parts;
    auto const last = text.rfind(sep);
    if (last == std::string_view::npos) {
        parts.instruction = std::string(text);
        parts.query = std::string(text);
        return parts;
    }
    parts.prompt_body = std::string(text.substr(0, last));
    auto query = text.substr(last + sep.size());
    if (query.size() >= tail.size() && query.substr(query.size() - tail.size()) == tail) {
        query.remove_suffix(tail.size());
    }
    parts.query = std::string(query);
    auto const first = text.find(sep);
    parts.instruction = std::string(text.substr(0, first));
    std::size_t pos = first;
    while (pos < last) {
        ++parts.shots;
        pos = text.find(sep, pos + sep.size());
    }
    return parts;
}

class SimulatorBackend final : public LlmBackend {
public:
    SimulatorBackend(SimulatorConfig config, MetaPromptTemplates templates = MetaPromptTemplates::defaults())
        : config_(std::move(config)), templates_(std::move(templates))
    {
        for (auto const& [k, v] : config_.keyword_bonus) { bonus_[normalize_word(k)] = v; }
        for (auto const& [k, v] : config_.reasoning_words) { reasoning_[normalize_word(k)] = v; }
    }

    SimulatorBackend(SimulatorConfig config, TaskSpec const& task, MetaPromptTemplates templates = MetaPromptTemplates::defaults())
        : SimulatorBackend(std::move(config), std::move(templates))
    {
        add_instances(task.dev);
        add_instances(task.shots);
        add_instances(task.test);
    }

    void add_instances(std::vector<Instance> const& instances)
    {
        for (auto const& inst : instances) { answers_[inst.input] = inst.label; }
    }

    [[nodiscard]] std::string name() const override { return "simulator"; }
    [[nodiscard]] SimulatorConfig const& config() const noexcept { return config_; }

    /// Closed-form probability that a prompt answers an instance correctly.
    [[nodiscard]] double expected_quality(std::string_view instruction, std::size_t shots) const
    {
        auto const words = split_words(instruction);
        std::set<std::string> seen;
        double q = config_.q_base;
        for (auto const& w : words) {
            auto n = normalize_word(w);
            auto it = bonus_.find(n);
            if (it != bonus_.end() && seen.insert(n).second) { q += it->second; }
        }
        q += config_.shot_bonus * static_cast<double>(std::min(shots, config_.shot_saturation));
        q -= config_.verbosity_penalty * static_cast<double>(words.size());
        return std::clamp(q, 0.0, 1.0);
    }

    /// Reasoning length (in words, excluding the answer marker) the instruction elicits.
    [[nodiscard]] std::size_t reasoning_length(std::string_view instruction) const
    {
        std::set<std::string> seen;
        std::size_t extra = 0;
        for (auto const& w : split_words(instruction)) {
            auto n = normalize_word(w);
            auto it = reasoning_.find(n);
            if (it != reasoning_.end() && seen.insert(n).second) { extra += it->second; }
        }
        return config_.output_base_words + extra;
    }

    ChatResponse complete(ChatRequest const& req) override
    {
        req.validate();
        std::string content;
        for (auto const& m : req.messages) {
            if (!content.empty()) { content += "\n"; }
            content += m.content;
        }
        std::string text;
        if (auto v = match_template(templates_.crossover, content)) {
            text = meta_output(crossover_words(v->at("mother"), v->at("father"), req), req);
        } else if (auto w = match_template(templates_.mutation, content)) {
            text = meta_output(mutate_words(w->at("instruction"), req), req);
        } else {
            text = eval_output(content, req);
        }
        auto words = split_words(text);
        if (words.size() > static_cast<std::size_t>(req.max_output_tokens)) {
            words.resize(static_cast<std::size_t>(req.max_output_tokens));
            text = join_words(words);
        }
        ChatResponse resp;
        resp.tok_in = request_input_words(req);
        resp.tok_out = words.size();
        resp.text = std::move(text);
        return resp;
    }

    /// Crossover: position-wise seeded interleaving of the two word sequences.
    [[nodiscard]] std::string crossover_words(std::string const& a, std::string const& b, ChatRequest const& req) const
    {
        auto wa = split_words(a);
        auto wb = split_words(b);
        if (wa == wb) { return join_words(wa); }
        Rng rng(call_seed(req, "crossover"));
        std::size_t const len = rng.coin() ? wa.size() : wb.size();
        std::vector<std::string> out;
        for (std::size_t i = 0; i < len; ++i) {
            bool const has_a = i < wa.size();
            bool const has_b = i < wb.size();
            if (has_a && has_b) { out.push_back(rng.coin() ? wa[i] : wb[i]); }
            else { out.push_back(has_a ? wa[i] : wb[i]); }
        }
        return join_words(out);
    }

    /// Mutation: each word is deleted, substituted or followed by an inserted
    /// vocabulary word with probability edit_rate.
    [[nodiscard]] std::string mutate_words(std::string const& instruction, ChatRequest const& req) const
    {
        auto words = split_words(instruction);
        if (config_.edit_rate <= 0.0 || config_.vocabulary.empty()) { return join_words(words); }
        Rng rng(call_seed(req, "mutation"));
        std::vector<std::string> out;
        for (auto const& w : words) {
            if (rng.uniform01() >= config_.edit_rate) {
                out.push_back(w);
                continue;
            }
            switch (rng.uniform_index(3)) {
            case 0: break; // delete
            case 1: out.push_back(rng.pick(config_.vocabulary)); break;
            default:
                out.push_back(w);
                out.push_back(rng.pick(config_.vocabulary));
                break;
            }
        }
        if (out.empty()) { return join_words(words); }
        return join_words(out);
    }

private:
    [[nodiscard]] std::uint64_t call_seed(ChatRequest const& req, std::string_view salt) const
    {
        return splitmix64(request_hash(req) ^ splitmix64(config_.seed) ^ fnv1a(salt));
    }

    [[nodiscard]] std::string meta_output(std::string const& instruction, ChatRequest const& req) const
    {
        if (config_.marker_failure_rate > 0.0 && unit_interval(call_seed(req, "marker")) < config_.marker_failure_rate) {
            return instruction;
        }
        return "<prompt>" + instruction + "</prompt>";
    }

    [[nodiscard]] std::string eval_output(std::string const& content, ChatRequest const& req) const
    {
        auto const parts = parse_rendered_prompt(content);
        auto const prompt_key = fnv1a_field(parts.prompt_body, kFnvOffset);
        auto const instance_key = fnv1a_field(parts.query, kFnvOffset);
        auto const h = splitmix64(splitmix64(prompt_key) ^ splitmix64(instance_key + 0x5bd1e995ULL) ^ splitmix64(config_.seed ^ req.seed));

        double const q = expected_quality(parts.instruction, parts.shots);
        bool const correct = unit_interval(h) < q;

        std::string answer = "unknown";
        auto it = answers_.find(parts.query);
        if (it != answers_.end()) {
            if (correct) {
                answer = it->second;
            } else {
                std::vector<std::string> wrong;
                for (auto const& l : config_.labels) {
                    if (l != it->second) { wrong.push_back(l); }
                }
                if (!wrong.empty()) { answer = wrong[splitmix64(h ^ 0x1234ULL) % wrong.size()]; }
            }
        }

        static const std::vector<std::string> filler{"the", "input", "mentions", "which", "suggests", "that", "so",
                                                     "this", "points", "to", "one", "category", "given", "context"};
        std::size_t const n = reasoning_length(parts.instruction) + splitmix64(h ^ 0x77ULL) % (config_.output_jitter + 1);
        std::string text = "Reasoning:";
        auto wh = h;
        for (std::size_t i = 1; i < n; ++i) {
            wh = splitmix64(wh);
            text += ' ';
            text += filler[wh % filler.size()];
        }
        text += " <final_answer>" + answer + "</final_answer>";
        return text;
    }

    SimulatorConfig config_;
    MetaPromptTemplates templates_;
    std::map<std::string, double> bonus_;
    std::map<std::string, std::size_t> reasoning_;
    std::map<std::string, std::string> answers_;
};

} // namespace mocapo
