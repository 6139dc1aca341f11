#pragma once

// JSON run archives. The history is embedded as a JSON-lines string so it can
// be streamed and diffed; a digest over the whole document detects edits.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocapo/run_result.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

inline constexpr int kArchiveSchemaVersion = 1;

using nlohmann::json;

inline std::string hash_hex(std::string_view bytes) { return PromptId{fnv1a(bytes)}.hex(); }

inline json to_json(Prompt const& p)
{
    json shots = json::array();
    for (auto const& s : p.few_shots()) { shots.push_back({{"input", s.input}, {"output", s.output}}); }
    return {{"id", p.id().hex()}, {"instruction", p.instruction()}, {"shots", std::move(shots)}};
}

inline Prompt prompt_from_json(json const& j)
{
    std::vector<FewShotExample> shots;
    for (auto const& s : j.at("shots")) { shots.emplace_back(s.at("input").get<std::string>(), s.at("output").get<std::string>()); }
    Prompt p(j.at("instruction").get<std::string>(), std::move(shots));
    if (p.id().hex() != j.at("id").get<std::string>()) { throw Error("prompt id does not match its content: " + j.at("id").dump()); }
    return p;
}

inline json to_json(ObjectiveVector const& v) { return v.values(); }
inline ObjectiveVector objectives_from_json(json const& j) { return ObjectiveVector(j.get<std::vector<double>>()); }

inline json to_json(EvalRecord const& r)
{
    json results = json::array();
    for (auto const& x : r.results) {
        results.push_back({{"instance", x.instance_id},
                           {"score", x.score},
                           {"tok_in", x.tok_in},
                           {"tok_out", x.tok_out},
                           {"raw", x.raw_output},
                           {"estimated", x.usage_estimated}});
    }
    return {{"prompt", r.prompt.hex()}, {"block", r.block}, {"results", std::move(results)}};
}

inline EvalRecord record_from_json(json const& j)
{
    EvalRecord r;
    r.prompt = PromptId::from_hex(j.at("prompt").get<std::string>());
    r.block = j.at("block").get<std::size_t>();
    for (auto const& x : j.at("results")) {
        InstanceResult ir;
        ir.instance_id = x.at("instance").get<std::string>();
        ir.score = x.at("score").get<double>();
        ir.tok_in = x.at("tok_in").get<std::uint64_t>();
        ir.tok_out = x.at("tok_out").get<std::uint64_t>();
        ir.raw_output = x.at("raw").get<std::string>();
        ir.usage_estimated = x.value("estimated", false);
        r.results.push_back(std::move(ir));
    }
    return r;
}

/// One JSON object per line, ordered by (prompt id, block).
inline std::string history_jsonl(RunHistory const& h)
{
    std::string out;
    for (auto const& [key, rec] : h.records()) {
        out += to_json(rec).dump();
        out += '\n';
    }
    return out;
}

inline json to_json(std::vector<FrontMember> const& front)
{
    json a = json::array();
    for (auto const& m : front) { a.push_back({{"id", m.id.hex()}, {"objectives", to_json(m.objectives)}}); }
    return a;
}

inline std::vector<FrontMember> front_from_json(json const& j)
{
    std::vector<FrontMember> out;
    for (auto const& m : j) { out.push_back({PromptId::from_hex(m.at("id").get<std::string>()), objectives_from_json(m.at("objectives"))}); }
    return out;
}

inline json ids_to_json(std::vector<PromptId> const& ids)
{
    json a = json::array();
    for (auto id : ids) { a.push_back(id.hex()); }
    return a;
}

inline std::vector<PromptId> ids_from_json(json const& j)
{
    std::vector<PromptId> out;
    for (auto const& s : j) { out.push_back(PromptId::from_hex(s.get<std::string>())); }
    return out;
}

inline json blocks_to_json(BlockSet const& b) { return std::vector<std::size_t>(b.begin(), b.end()); }
inline BlockSet blocks_from_json(json const& j)
{
    auto v = j.get<std::vector<std::size_t>>();
    return {v.begin(), v.end()};
}

/// Test-set score of one prompt.
struct TestScore {
    ObjectiveVector objectives;
    double mean_tok_in{0.0};
    double mean_tok_out{0.0};
    std::size_t instances{0};
};

struct RunArchive {
    int schema_version{kArchiveSchemaVersion};
    json config;              // resolved configuration the run was started with
    std::string config_hash;
    std::string task;
    std::string task_digest;
    std::uint64_t seed{0};
    std::uint64_t token_budget{0};
    RunResult run;
    std::map<PromptId, TestScore> test_scores;

    [[nodiscard]] bool has_test(PromptId id) const { return test_scores.contains(id); }
};

/// Digest over instance ids, inputs and labels of all splits.
inline std::string task_digest(TaskSpec const& t)
{
    std::uint64_t h = fnv1a_field(t.name, kFnvOffset);
    h = fnv1a_field(t.description, h);
    for (auto const* part : {&t.dev, &t.shots, &t.test}) {
        h = fnv1a_field(std::to_string(part->size()), h);
        for (auto const& i : *part) {
            h = fnv1a_field(i.id, h);
            h = fnv1a_field(i.input, h);
            h = fnv1a_field(i.label, h);
        }
    }
    return PromptId{h}.hex();
}

namespace detail {

inline json snapshots_to_json(std::vector<Snapshot> const& snaps)
{
    json a = json::array();
    for (auto const& s : snaps) {
        a.push_back({{"step", s.step},
                     {"eval_tokens", s.eval_tokens},
                     {"meta_tokens", s.meta_tokens},
                     {"basis", blocks_to_json(s.basis)},
                     {"front", to_json(s.front)},
                     {"population", s.population_size},
                     {"candidates", s.candidates}});
    }
    return a;
}

inline std::vector<Snapshot> snapshots_from_json(json const& j)
{
    std::vector<Snapshot> out;
    for (auto const& s : j) {
        Snapshot x;
        x.step = s.at("step").get<std::size_t>();
        x.eval_tokens = s.at("eval_tokens").get<std::uint64_t>();
        x.meta_tokens = s.at("meta_tokens").get<std::uint64_t>();
        x.basis = blocks_from_json(s.at("basis"));
        x.front = front_from_json(s.at("front"));
        x.population_size = s.at("population").get<std::size_t>();
        x.candidates = s.at("candidates").get<std::size_t>();
        out.push_back(std::move(x));
    }
    return out;
}

} // namespace detail

/// Everything except the digest field.
inline json archive_body(RunArchive const& a)
{
    json prompts = json::array();
    for (auto const& [id, p] : a.run.history.prompts()) { prompts.push_back(to_json(p)); }
    json tests = json::object();
    for (auto const& [id, t] : a.test_scores) {
        tests[id.hex()] = {{"objectives", to_json(t.objectives)},
                           {"mean_tok_in", t.mean_tok_in},
                           {"mean_tok_out", t.mean_tok_out},
                           {"instances", t.instances}};
    }
    auto const& h = a.run.history;
    return {
        {"schema_version", a.schema_version},
        {"config", a.config},
        {"config_hash", a.config_hash},
        {"task", a.task},
        {"task_digest", a.task_digest},
        {"optimizer", a.run.optimizer},
        {"seed", a.seed},
        {"budget",
         {{"tokens", a.token_budget},
          {"eval_tokens", h.eval_tokens_total()},
          {"record_tokens", h.token_meter()},
          {"shot_creation_tokens", h.aux_eval_tokens()},
          {"meta_tokens", h.meta_tokens()},
          {"eval_calls", h.eval_calls()}}},
        {"stop_reason", a.run.stop_reason},
        {"steps", a.run.steps},
        {"meta_fallbacks", a.run.meta_fallbacks},
        {"prompts", std::move(prompts)},
        {"history", history_jsonl(h)},
        {"snapshots", detail::snapshots_to_json(a.run.snapshots)},
        {"initial_population", ids_to_json(a.run.initial_population)},
        {"final_population", ids_to_json(a.run.final_population)},
        {"final_basis", blocks_to_json(a.run.final_basis)},
        {"final_front", to_json(a.run.final_front)},
        {"test", std::move(tests)},
    };
}

inline std::string serialize_archive(RunArchive const& a)
{
    auto body = archive_body(a);
    auto const digest = hash_hex(body.dump());
    body["digest"] = digest;
    return body.dump(1) + "\n";
}

inline RunArchive parse_archive(std::string const& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (json::parse_error const& e) {
        throw Error(std::string("archive is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != kArchiveSchemaVersion) {
            throw Error("unsupported archive schema version " + j.at("schema_version").dump());
        }
        auto const digest = j.at("digest").get<std::string>();
        RunArchive a;
        a.config = j.at("config");
        a.config_hash = j.at("config_hash").get<std::string>();
        if (hash_hex(a.config.dump()) != a.config_hash) { throw Error("archive config does not match its config hash"); }
        a.task = j.at("task").get<std::string>();
        a.task_digest = j.at("task_digest").get<std::string>();
        a.seed = j.at("seed").get<std::uint64_t>();
        auto const& budget = j.at("budget");
        a.token_budget = budget.at("tokens").get<std::uint64_t>();
        a.run.optimizer = j.at("optimizer").get<std::string>();
        a.run.stop_reason = j.at("stop_reason").get<std::string>();
        a.run.steps = j.at("steps").get<std::size_t>();
        a.run.meta_fallbacks = j.at("meta_fallbacks").get<std::size_t>();

        auto& h = a.run.history;
        for (auto const& p : j.at("prompts")) { h.register_prompt(prompt_from_json(p)); }
        std::istringstream lines(j.at("history").get<std::string>());
        std::string line;
        while (std::getline(lines, line)) {
            if (!line.empty()) { h.commit(record_from_json(json::parse(line))); }
        }
        h.add_aux_eval_tokens(budget.at("shot_creation_tokens").get<std::uint64_t>());
        h.add_meta_tokens(budget.at("meta_tokens").get<std::uint64_t>());
        if (h.token_meter() != budget.at("record_tokens").get<std::uint64_t>()) {
            throw Error("archive token totals disagree with its history");
        }

        a.run.snapshots = detail::snapshots_from_json(j.at("snapshots"));
        a.run.initial_population = ids_from_json(j.at("initial_population"));
        a.run.final_population = ids_from_json(j.at("final_population"));
        a.run.final_basis = blocks_from_json(j.at("final_basis"));
        a.run.final_front = front_from_json(j.at("final_front"));
        for (auto const& [hex, t] : j.at("test").items()) {
            a.test_scores[PromptId::from_hex(hex)] = {objectives_from_json(t.at("objectives")), t.at("mean_tok_in").get<double>(),
                                                      t.at("mean_tok_out").get<double>(), t.at("instances").get<std::size_t>()};
        }
        if (hash_hex(archive_body(a).dump()) != digest) { throw Error("archive digest mismatch: the file was modified"); }
        return a;
    } catch (json::exception const& e) {
        throw Error(std::string("malformed archive: ") + e.what());
    }
}

inline void write_archive(RunArchive const& a, std::string const& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) { throw Error("cannot write archive " + path); }
    out << serialize_archive(a);
    if (!out) { throw Error("failed writing archive " + path); }
}

inline RunArchive read_archive(std::string const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) { throw Error("cannot read archive " + path); }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_archive(ss.str());
    } catch (Error const& e) {
        throw Error(path + ": " + e.what());
    }
}

} // namespace mocapo
