#pragma once

#include <cctype>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mocapo/rng.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    int max_output_tokens{3000};
    double temperature{0.0};
    std::uint64_t seed{0};

    void validate() const
    {
        if (max_output_tokens < 1) { throw Error("chat request: max_output_tokens must be >= 1"); }
        if (messages.empty()) { throw Error("chat request: no messages"); }
    }

    static ChatRequest user(std::string model, std::string content, int max_tokens, double temperature, std::uint64_t seed)
    {
        return ChatRequest{std::move(model), {{"user", std::move(content)}}, max_tokens, temperature, seed};
    }
};

struct ChatResponse {
    std::string text;
    std::uint64_t tok_in{0};
    std::uint64_t tok_out{0};
    bool usage_estimated{false};
};

class BackendError : public Error {
public:
    using Error::Error;
};

/// Chat-completion endpoint. Implementations must tolerate concurrent calls.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual ChatResponse complete(ChatRequest const& req) = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

inline std::size_t whitespace_token_count(std::string_view text)
{
    std::size_t n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        bool const space = std::isspace(c) != 0;
        if (!space && !in_token) { ++n; }
        in_token = !space;
    }
    return n;
}

inline std::vector<std::string> split_words(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) != 0) { ++i; }
        std::size_t j = i;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j])) == 0) { ++j; }
        if (j > i) { out.emplace_back(text.substr(i, j - i)); }
        i = j;
    }
    return out;
}

inline std::string join_words(std::vector<std::string> const& words)
{
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) { out += ' '; }
        out += words[i];
    }
    return out;
}

inline std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) { ++b; }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) { --e; }
    return std::string(s.substr(b, e - b));
}

/// Content between the first `open` marker and the next `close` marker, trimmed.
inline std::optional<std::string> extract_marked(std::string_view text, std::string_view open, std::string_view close)
{
    auto const start = text.find(open);
    if (start == std::string_view::npos) { return std::nullopt; }
    auto const body = start + open.size();
    auto const stop = text.find(close, body);
    if (stop == std::string_view::npos) { return std::nullopt; }
    return trim(text.substr(body, stop - body));
}

inline std::optional<std::string> extract_marked_answer(std::string_view text)
{
    return extract_marked(text, "<final_answer>", "</final_answer>");
}

inline std::optional<std::string> extract_marked_prompt(std::string_view text)
{
    return extract_marked(text, "<prompt>", "</prompt>");
}

inline std::uint64_t request_hash(ChatRequest const& req)
{
    auto h = fnv1a_field(req.model, kFnvOffset);
    for (auto const& m : req.messages) {
        h = fnv1a_field(m.role, h);
        h = fnv1a_field(m.content, h);
    }
    h = fnv1a_field(std::to_string(req.max_output_tokens), h);
    h = fnv1a_field(std::to_string(req.temperature), h);
    h = fnv1a_field(std::to_string(req.seed), h);
    return splitmix64(h);
}

inline std::uint64_t request_input_words(ChatRequest const& req)
{
    std::uint64_t n = 0;
    for (auto const& m : req.messages) { n += whitespace_token_count(m.content); }
    return n;
}

/// Counts tokens flowing through a backend; used for meta-LLM accounting.
class MeteredBackend final : public LlmBackend {
public:
    explicit MeteredBackend(LlmBackend& inner) : inner_(inner) {}

    ChatResponse complete(ChatRequest const& req) override
    {
        auto resp = inner_.complete(req);
        std::lock_guard lock(mutex_);
        tokens_ += resp.tok_in + resp.tok_out;
        ++calls_;
        return resp;
    }

    [[nodiscard]] std::string name() const override { return inner_.name(); }
    [[nodiscard]] std::uint64_t tokens() const
    {
        std::lock_guard lock(mutex_);
        return tokens_;
    }
    [[nodiscard]] std::uint64_t calls() const
    {
        std::lock_guard lock(mutex_);
        return calls_;
    }

private:
    LlmBackend& inner_;
    mutable std::mutex mutex_;
    std::uint64_t tokens_{0};
    std::uint64_t calls_{0};
};

} // namespace mocapo
