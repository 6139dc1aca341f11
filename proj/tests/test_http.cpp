#include <catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <thread>

#include "mocapo/http_backend.hpp"

using namespace mocapo;

namespace {

// Local chat-completions endpoint; `reply` picks status and body per request.
struct FakeServer {
    httplib::Server server;
    std::thread thread;
    int port{0};
    std::atomic<int> hits{0};
    std::function<std::pair<int, std::string>(int, nlohmann::json const&)> reply;

    FakeServer()
    {
        server.Post("/v1/chat/completions", [this](httplib::Request const& req, httplib::Response& res) {
            auto const n = ++hits;
            auto [status, body] = reply(n, nlohmann::json::parse(req.body));
            res.status = status;
            res.set_content(body, "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeServer()
    {
        server.stop();
        thread.join();
    }

    HttpBackend backend() const
    {
        HttpBackendOptions o;
        o.base_url = "http://127.0.0.1:" + std::to_string(port);
        o.max_retries = 2;
        o.initial_backoff = std::chrono::milliseconds(1);
        o.api_key_env = "MOCAPO_TEST_UNSET_KEY";
        return HttpBackend(o);
    }
};

std::string completion(std::string const& text, bool usage)
{
    nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
    if (usage) { j["usage"] = {{"prompt_tokens", 50}, {"completion_tokens", 7}}; }
    return j.dump();
}

ChatRequest request() { return ChatRequest::user("m", "three word prompt", 64, 0.0, 1); }

} // namespace

TEST_CASE("usage counts are passed through")
{
    FakeServer s;
    s.reply = [](int, nlohmann::json const& body) {
        CHECK(body.at("model") == "m");
        CHECK(body.at("max_tokens") == 64);
        return std::pair{200, completion("<final_answer>a</final_answer>", true)};
    };
    auto b = s.backend();
    auto const r = b.complete(request());
    CHECK(r.text == "<final_answer>a</final_answer>");
    CHECK(r.tok_in == 50);
    CHECK(r.tok_out == 7);
    CHECK_FALSE(r.usage_estimated);
}

TEST_CASE("missing usage falls back to whitespace counts")
{
    FakeServer s;
    s.reply = [](int, nlohmann::json const&) { return std::pair{200, completion("one two", false)}; };
    auto b = s.backend();
    auto const r = b.complete(request());
    CHECK(r.tok_in == 3);
    CHECK(r.tok_out == 2);
    CHECK(r.usage_estimated);
}

TEST_CASE("transient errors are retried, auth errors are not")
{
    SECTION("500 then 429 then success")
    {
        FakeServer s;
        s.reply = [](int n, nlohmann::json const&) {
            if (n == 1) { return std::pair{500, std::string("{}")}; }
            if (n == 2) { return std::pair{429, std::string("{}")}; }
            return std::pair{200, completion("ok", true)};
        };
        auto b = s.backend();
        CHECK(b.complete(request()).text == "ok");
        CHECK(s.hits == 3);
    }
    SECTION("persistent 503 gives up")
    {
        FakeServer s;
        s.reply = [](int, nlohmann::json const&) { return std::pair{503, std::string("{}")}; };
        auto b = s.backend();
        CHECK_THROWS_AS(b.complete(request()), BackendError);
        CHECK(s.hits == 3);
    }
    SECTION("401 fails immediately")
    {
        FakeServer s;
        s.reply = [](int, nlohmann::json const&) { return std::pair{401, std::string("{}")}; };
        auto b = s.backend();
        CHECK_THROWS_AS(b.complete(request()), BackendError);
        CHECK(s.hits == 1);
    }
    SECTION("malformed payload")
    {
        FakeServer s;
        s.reply = [](int, nlohmann::json const&) { return std::pair{200, std::string(R"({"choices": []})")}; };
        auto b = s.backend();
        CHECK_THROWS_AS(b.complete(request()), BackendError);
    }
}

TEST_CASE("recorded responses replay without the server")
{
    std::random_device rd;
    auto const path = (std::filesystem::temp_directory_path() / ("mocapo-fixture-" + std::to_string(rd()) + ".jsonl")).string();
    auto const req = request();
    ChatResponse live;
    {
        FakeServer s;
        s.reply = [](int, nlohmann::json const&) { return std::pair{200, completion("recorded", true)}; };
        auto b = s.backend();
        RecordingBackend rec(b, path);
        live = rec.complete(req);
    }
    ReplayBackend replay(path);
    auto const again = replay.complete(req);
    CHECK(again.text == live.text);
    CHECK(again.tok_in == live.tok_in);
    CHECK(again.tok_out == live.tok_out);
    CHECK_THROWS_AS(replay.complete(ChatRequest::user("m", "unseen", 64, 0.0, 1)), BackendError);
    std::filesystem::remove(path);
}
