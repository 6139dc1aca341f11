#pragma once

// Scripted LLM and tiny tasks for hand-traced tests.

#include <atomic>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mocapo/llm.hpp"
#include "mocapo/templates.hpp"
#include "mocapo/types.hpp"

namespace fx {

using namespace mocapo;

/// Per-instruction behavior: which query inputs it answers correctly and how
/// many output words each answer takes.
struct Script {
    std::function<bool(std::string const& input)> correct;
    std::size_t out_words{1};
};

/// Every dev/test input is "<prefix>-<i>" with gold label "yes". Unknown
/// instructions answer wrong with one output word. Meta requests echo the
/// first parent (crossover) or the instruction (mutation) inside markers.
class ScriptedBackend final : public LlmBackend {
public:
    std::map<std::string, Script> scripts;
    std::atomic<std::size_t> calls{0};
    MetaPromptTemplates templates{MetaPromptTemplates::defaults()};
    bool meta_markers{true};

    [[nodiscard]] std::string name() const override { return "scripted"; }

    ChatResponse complete(ChatRequest const& req) override
    {
        ++calls;
        auto const& content = req.messages.front().content;
        ChatResponse r;
        r.tok_in = request_input_words(req);
        if (auto v = match_template(templates.crossover, content)) {
            r.text = wrap(v->at("mother"));
        } else if (auto w = match_template(templates.mutation, content)) {
            r.text = wrap(w->at("instruction"));
        } else {
            auto const instr = content.substr(0, content.find("\n\n"));
            auto const q = content.rfind("Input: ");
            auto input = content.substr(q + 7);
            input = input.substr(0, input.find('\n'));
            auto it = scripts.find(instr);
            bool const ok = it != scripts.end() && it->second.correct(input);
            std::size_t const words = it != scripts.end() ? it->second.out_words : 1;
            std::string text;
            for (std::size_t i = 1; i < words; ++i) { text += "w "; }
            text += std::string("<final_answer>") + (ok ? "yes" : "no") + "</final_answer>";
            r.text = text;
        }
        r.tok_out = whitespace_token_count(r.text);
        return r;
    }

private:
    [[nodiscard]] std::string wrap(std::string const& s) const { return meta_markers ? "<prompt>" + s + "</prompt>" : s; }
};

inline std::vector<Instance> instances(std::string const& prefix, std::size_t n)
{
    std::vector<Instance> v;
    for (std::size_t i = 0; i < n; ++i) { v.push_back({prefix + "-" + std::to_string(i), prefix + "-" + std::to_string(i), "yes"}); }
    return v;
}

inline TaskSpec task(std::size_t dev, std::size_t shots = 6, std::size_t test = 10)
{
    TaskSpec t;
    t.name = "scripted";
    t.description = "Answer yes.";
    t.dev = instances("dev", dev);
    t.shots = instances("shot", shots);
    t.test = instances("test", test);
    return t;
}

inline std::function<bool(std::string const&)> always(bool v)
{
    return [v](std::string const&) { return v; };
}

/// Correct on a fixed fraction of each block of ten: inputs whose index mod 10 < k.
inline std::function<bool(std::string const&)> per_ten(int k)
{
    return [k](std::string const& input) { return std::stoi(input.substr(input.rfind('-') + 1)) % 10 < k; };
}

} // namespace fx
