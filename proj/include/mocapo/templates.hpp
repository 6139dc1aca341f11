#pragma once

// Meta-prompt templates with named {placeholders}.

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mocapo/types.hpp"

namespace mocapo {

namespace detail {

struct TemplatePart {
    bool placeholder{false};
    std::string text; // literal text or placeholder name
};

inline std::vector<TemplatePart> parse_template(std::string_view tmpl)
{
    std::vector<TemplatePart> parts;
    std::string literal;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            auto name = close == std::string_view::npos ? std::string_view{} : tmpl.substr(i + 1, close - i - 1);
            bool const valid = !name.empty() && name.find_first_not_of("abcdefghijklmnopqrstuvwxyz_") == std::string_view::npos;
            if (valid) {
                if (!literal.empty()) { parts.push_back({false, std::move(literal)}); literal.clear(); }
                parts.push_back({true, std::string(name)});
                i = close + 1;
                continue;
            }
        }
        literal += tmpl[i++];
    }
    if (!literal.empty()) { parts.push_back({false, std::move(literal)}); }
    return parts;
}

} // namespace detail

inline std::string fill_template(std::string_view tmpl, std::map<std::string, std::string> const& values)
{
    std::string out;
    for (auto const& part : detail::parse_template(tmpl)) {
        if (!part.placeholder) { out += part.text; continue; }
        auto it = values.find(part.text);
        if (it == values.end()) { throw Error("no value for template placeholder {" + part.text + "}"); }
        out += it->second;
    }
    return out;
}

/// Inverse of fill_template: recovers placeholder values from a filled text by
/// anchoring on the literal segments. Returns nullopt when the text does not
/// follow the template.
inline std::optional<std::map<std::string, std::string>> match_template(std::string_view tmpl, std::string_view text)
{
    auto const parts = detail::parse_template(tmpl);
    std::map<std::string, std::string> values;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto const& part = parts[k];
        if (!part.placeholder) {
            if (text.substr(pos, part.text.size()) != part.text) { return std::nullopt; }
            pos += part.text.size();
            continue;
        }
        std::size_t end = text.size();
        if (k + 1 < parts.size() && !parts[k + 1].placeholder) {
            end = text.find(parts[k + 1].text, pos);
            if (end == std::string_view::npos) { return std::nullopt; }
        }
        values[part.text] = std::string(text.substr(pos, end - pos));
        pos = end;
    }
    if (pos != text.size()) { return std::nullopt; }
    return values;
}

struct MetaPromptTemplates {
    std::string crossover;
    std::string mutation;

    static MetaPromptTemplates defaults()
    {
        return {
            "You receive two prompts for the following task: {task_description}\n"
            "Please merge the two prompts into a single coherent prompt. Maintain the key linguistic features from both "
            "original prompts:\n"
            "Prompt 1: {mother}\n"
            "Prompt 2: {father}\n"
            "\n"
            "Return the new prompt in the following format:\n"
            "<prompt>new prompt</prompt>.",
            "You receive a prompt for the following task: {task_description}\n"
            "Please rephrase the prompt, preserving its core meaning while substantially varying the linguistic style.\n"
            "Prompt: {instruction}\n"
            "\n"
            "Return the new prompt in the following format:\n"
            "<prompt>new prompt</prompt>",
        };
    }

    void validate() const
    {
        auto require = [](std::string const& tmpl, std::string_view what, std::vector<std::string> const& names) {
            if (tmpl.find("<prompt>") == std::string::npos || tmpl.find("</prompt>") == std::string::npos) {
                throw Error(std::string(what) + " template must ask for output inside <prompt></prompt> markers");
            }
            for (auto const& n : names) {
                if (tmpl.find("{" + n + "}") == std::string::npos) {
                    throw Error(std::string(what) + " template lacks placeholder {" + n + "}");
                }
            }
        };
        require(crossover, "crossover", {"task_description", "mother", "father"});
        require(mutation, "mutation", {"task_description", "instruction"});
    }

    static MetaPromptTemplates load(std::string const& crossover_path, std::string const& mutation_path)
    {
        auto slurp = [](std::string const& path) {
            std::ifstream in(path);
            if (!in) { throw Error("cannot read template file " + path); }
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        MetaPromptTemplates t{slurp(crossover_path), slurp(mutation_path)};
        t.validate();
        return t;
    }
};

} // namespace mocapo
