#pragma once

// OpenAI-compatible chat-completions client plus a JSON-lines record/replay
// layer for fixtures.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mocapo/llm.hpp"

namespace mocapo {

inline nlohmann::json chat_request_body(ChatRequest const& req)
{
    nlohmann::json msgs = nlohmann::json::array();
    for (auto const& m : req.messages) { msgs.push_back({{"role", m.role}, {"content", m.content}}); }
    return {
        {"model", req.model},
        {"messages", std::move(msgs)},
        {"max_tokens", req.max_output_tokens},
        {"temperature", req.temperature},
        {"seed", req.seed},
    };
}

/// Reads choices[0].message.content and the usage block. Missing usage falls
/// back to whitespace counts and flags the response.
inline ChatResponse parse_chat_completion(nlohmann::json const& body, ChatRequest const& req)
{
    ChatResponse resp;
    try {
        auto const& content = body.at("choices").at(0).at("message").at("content");
        resp.text = content.is_null() ? std::string{} : content.get<std::string>();
    } catch (nlohmann::json::exception const& e) {
        throw BackendError(std::string("malformed chat completion payload: ") + e.what());
    }
    auto const usage = body.find("usage");
    bool have_usage = usage != body.end() && usage->is_object() && usage->contains("prompt_tokens") &&
                      usage->contains("completion_tokens");
    if (have_usage) {
        try {
            resp.tok_in = usage->at("prompt_tokens").get<std::uint64_t>();
            resp.tok_out = usage->at("completion_tokens").get<std::uint64_t>();
        } catch (nlohmann::json::exception const&) {
            have_usage = false;
        }
    }
    if (!have_usage) {
        resp.tok_in = request_input_words(req);
        resp.tok_out = whitespace_token_count(resp.text);
        resp.usage_estimated = true;
    }
    return resp;
}

struct HttpBackendOptions {
    std::string base_url; // scheme://host[:port][/prefix]
    std::string api_key_env{"OPENAI_API_KEY"};
    int max_retries{3};
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
    std::chrono::seconds timeout{300};
};

class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendOptions opts) : opts_(std::move(opts))
    {
        while (!opts_.base_url.empty() && opts_.base_url.back() == '/') { opts_.base_url.pop_back(); }
        auto const scheme_end = opts_.base_url.find("://");
        if (scheme_end == std::string::npos) { throw Error("base url needs a scheme: " + opts_.base_url); }
        auto const path_start = opts_.base_url.find('/', scheme_end + 3);
        origin_ = opts_.base_url.substr(0, path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (origin_.starts_with("https://")) { throw Error("built without TLS support; cannot reach " + origin_); }
#endif
        path_ = (path_start == std::string::npos ? std::string{} : opts_.base_url.substr(path_start)) + "/v1/chat/completions";
        if (char const* key = std::getenv(opts_.api_key_env.c_str())) { api_key_ = key; }
    }

    [[nodiscard]] std::string name() const override { return "http:" + opts_.base_url; }

    ChatResponse complete(ChatRequest const& req) override
    {
        req.validate();
        auto const body = chat_request_body(req).dump();
        auto backoff = opts_.initial_backoff;
        std::string last_error;
        for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff = std::min(backoff * 2, opts_.max_backoff);
            }
            httplib::Client client(origin_);
            client.set_read_timeout(opts_.timeout);
            client.set_write_timeout(opts_.timeout);
            httplib::Headers headers;
            if (!api_key_.empty()) { headers.emplace("Authorization", "Bearer " + api_key_); }
            auto res = client.Post(path_, headers, body, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403) {
                throw BackendError("authentication rejected by " + origin_ + " (HTTP " + std::to_string(res->status) + ")");
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw BackendError("HTTP " + std::to_string(res->status) + " from " + origin_ + ": " + res->body);
            }
            nlohmann::json parsed;
            try {
                parsed = nlohmann::json::parse(res->body);
            } catch (nlohmann::json::parse_error const& e) {
                throw BackendError(std::string("malformed chat completion payload: ") + e.what());
            }
            return parse_chat_completion(parsed, req);
        }
        throw BackendError("giving up after " + std::to_string(opts_.max_retries + 1) + " attempts: " + last_error);
    }

private:
    HttpBackendOptions opts_;
    std::string origin_;
    std::string path_;
    std::string api_key_;
};

inline nlohmann::json response_to_json(ChatResponse const& r)
{
    return {{"text", r.text}, {"tok_in", r.tok_in}, {"tok_out", r.tok_out}, {"usage_estimated", r.usage_estimated}};
}

inline ChatResponse response_from_json(nlohmann::json const& j)
{
    return {j.at("text").get<std::string>(), j.at("tok_in").get<std::uint64_t>(), j.at("tok_out").get<std::uint64_t>(),
            j.value("usage_estimated", false)};
}

/// Appends one `{"request_hash", "response"}` line per call to a fixture file.
class RecordingBackend final : public LlmBackend {
public:
    RecordingBackend(LlmBackend& inner, std::string const& path) : inner_(inner), out_(path, std::ios::app)
    {
        if (!out_) { throw Error("cannot open fixture file " + path); }
    }

    [[nodiscard]] std::string name() const override { return "record:" + inner_.name(); }

    ChatResponse complete(ChatRequest const& req) override
    {
        auto resp = inner_.complete(req);
        nlohmann::json line{{"request_hash", PromptId{request_hash(req)}.hex()}, {"response", response_to_json(resp)}};
        std::lock_guard lock(mutex_);
        out_ << line.dump() << '\n';
        out_.flush();
        return resp;
    }

private:
    LlmBackend& inner_;
    std::ofstream out_;
    std::mutex mutex_;
};

/// Serves responses from a fixture written by RecordingBackend.
class ReplayBackend final : public LlmBackend {
public:
    explicit ReplayBackend(std::string const& path)
    {
        std::ifstream in(path);
        if (!in) { throw Error("cannot open fixture file " + path); }
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) { continue; }
            auto j = nlohmann::json::parse(line);
            responses_.emplace(j.at("request_hash").get<std::string>(), response_from_json(j.at("response")));
        }
    }

    [[nodiscard]] std::string name() const override { return "replay"; }

    ChatResponse complete(ChatRequest const& req) override
    {
        auto it = responses_.find(PromptId{request_hash(req)}.hex());
        if (it == responses_.end()) { throw BackendError("request not present in replay fixture"); }
        return it->second;
    }

private:
    std::map<std::string, ChatResponse> responses_;
};

} // namespace mocapo
