#pragma once

// Run configuration: one JSON document with task, backend, optimizer, budget,
// seeds and weights sections. Errors point at the offending line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocapo/http_backend.hpp"
#include "mocapo/simulator.hpp"
#include "mocapo/synthetic.hpp"
#include "mocapo/templates.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    nlohmann::json resolved; // the document with defaults filled in and paths made absolute
    TaskSpec task;
    std::vector<std::string> initial_instructions;
    std::string optimizer{"mocapo"};
    OptimizerConfig optimizer_config;
    MetaPromptTemplates templates{MetaPromptTemplates::defaults()};
    std::string backend{"simulator"};
    SimulatorConfig simulator;
    HttpBackendOptions http;
    std::optional<std::string> record_path;
    std::optional<std::string> replay_path;
    std::vector<std::uint64_t> seeds{0};
};

namespace detail {

inline std::string slurp(std::filesystem::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) { throw ConfigError("cannot read " + p.string()); }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class ConfigReader {
public:
    ConfigReader(std::string source, std::string text, std::filesystem::path base)
        : source_(std::move(source)), text_(std::move(text)), base_(std::move(base))
    {
    }

    [[noreturn]] void fail(std::string const& where, std::string const& msg) const
    {
        throw ConfigError(source_ + ":" + std::to_string(line_of(where)) + ": " + where + ": " + msg);
    }

    /// Best-effort line of the last key of a dotted path, found by scanning the raw text.
    [[nodiscard]] std::size_t line_of(std::string const& where) const
    {
        std::size_t pos = 0;
        std::stringstream parts(where);
        std::string key;
        while (std::getline(parts, key, '.')) {
            auto const at = text_.find("\"" + key + "\"", pos);
            if (at == std::string::npos) { break; }
            pos = at;
        }
        return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
    }

    void only_keys(nlohmann::json const& obj, std::string const& where, std::set<std::string> const& allowed) const
    {
        if (!obj.is_object()) { fail(where, "expected an object"); }
        for (auto const& [k, v] : obj.items()) {
            if (!allowed.contains(k)) { fail(where.empty() ? k : where + "." + k, "unknown key"); }
        }
    }

    template <typename T>
    T get(nlohmann::json const& obj, std::string const& key, std::string const& where, T fallback) const
    {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) { return fallback; }
        try {
            return it->get<T>();
        } catch (nlohmann::json::exception const&) {
            fail(where.empty() ? key : where + "." + key, "has the wrong type (" + std::string(it->type_name()) + ")");
        }
    }

    [[nodiscard]] std::filesystem::path path(std::string const& p) const
    {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : std::filesystem::weakly_canonical(base_ / fp);
    }

private:
    std::string source_;
    std::string text_;
    std::filesystem::path base_;
};

inline std::vector<Instance> read_instances(std::filesystem::path const& p, std::string const& prefix)
{
    std::ifstream in(p);
    if (!in) { throw ConfigError("cannot read instances from " + p.string()); }
    std::vector<Instance> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) { continue; }
        try {
            auto j = nlohmann::json::parse(line);
            Instance inst;
            inst.id = j.contains("id") ? j.at("id").get<std::string>() : prefix + "-" + std::to_string(n);
            inst.input = j.at("input").get<std::string>();
            inst.label = j.at("label").get<std::string>();
            out.push_back(std::move(inst));
        } catch (nlohmann::json::exception const& e) {
            throw ConfigError(p.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<std::string> read_instructions(std::filesystem::path const& p)
{
    auto const text = slurp(p);
    std::vector<std::string> out;
    if (p.extension() == ".json") {
        try {
            out = nlohmann::json::parse(text).get<std::vector<std::string>>();
        } catch (nlohmann::json::exception const& e) {
            throw ConfigError(p.string() + ": " + e.what());
        }
        return out;
    }
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!trim(line).empty()) { out.push_back(trim(line)); }
    }
    return out;
}

} // namespace detail

/// Parses a configuration document. Relative paths resolve against `base`.
inline RunConfig parse_config(std::string const& text, std::filesystem::path const& base, std::string const& source = "config")
{
    using nlohmann::json;
    detail::ConfigReader r(source, text, base);
    json root;
    try {
        root = json::parse(text);
    } catch (json::parse_error const& e) {
        auto const upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
        auto const line = 1 + std::count(upto.begin(), upto.end(), '\n');
        throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
    }
    r.only_keys(root, "", {"task", "backend", "optimizer", "budget", "seeds", "weights"});

    RunConfig cfg;
    json resolved = root;

    // weights
    auto& oc = cfg.optimizer_config;
    if (root.contains("weights")) {
        auto const& w = root["weights"];
        r.only_keys(w, "weights", {"model", "w_in", "w_out"});
        if (w.contains("model")) {
            auto const model = r.get<std::string>(w, "model", "weights", "");
            auto preset = CostWeights::preset(model);
            if (!preset) { r.fail("weights.model", "unknown model preset '" + model + "'"); }
            oc.weights = *preset;
        }
        oc.weights.w_in = r.get<double>(w, "w_in", "weights", oc.weights.w_in);
        oc.weights.w_out = r.get<double>(w, "w_out", "weights", oc.weights.w_out);
        try {
            oc.weights.validate();
        } catch (Error const& e) {
            r.fail("weights", e.what());
        }
    }
    resolved["weights"] = {{"w_in", oc.weights.w_in}, {"w_out", oc.weights.w_out}};

    // budget and seeds
    if (root.contains("budget")) {
        r.only_keys(root["budget"], "budget", {"tokens", "step_cap"});
        oc.token_budget = r.get<std::uint64_t>(root["budget"], "tokens", "budget", oc.token_budget);
        oc.step_cap = r.get<std::size_t>(root["budget"], "step_cap", "budget", oc.step_cap);
    }
    resolved["budget"] = {{"tokens", oc.token_budget}, {"step_cap", oc.step_cap}};
    if (root.contains("seeds")) {
        cfg.seeds = r.get<std::vector<std::uint64_t>>(root, "seeds", "", {});
        if (cfg.seeds.empty()) { r.fail("seeds", "needs at least one seed"); }
    }
    resolved["seeds"] = cfg.seeds;

    // optimizer
    json opt = root.value("optimizer", json::object());
    r.only_keys(opt, "optimizer", {"name", "mu", "block_size", "iterations", "crossovers", "max_shots", "templates"});
    cfg.optimizer = r.get<std::string>(opt, "name", "optimizer", cfg.optimizer);
    if (cfg.optimizer != "mocapo" && cfg.optimizer != "nsga2po") { r.fail("optimizer.name", "must be mocapo or nsga2po"); }
    oc.mu = r.get<std::size_t>(opt, "mu", "optimizer", oc.mu);
    oc.block_size = r.get<std::size_t>(opt, "block_size", "optimizer", oc.block_size);
    oc.crossovers = r.get<std::size_t>(opt, "crossovers", "optimizer", oc.crossovers);
    oc.max_shots = r.get<std::size_t>(opt, "max_shots", "optimizer", oc.max_shots);
    if (opt.contains("iterations") && !opt["iterations"].is_null()) {
        oc.iterations = r.get<std::size_t>(opt, "iterations", "optimizer", 0);
    }
    json resolved_opt = {{"name", cfg.optimizer},
                         {"mu", oc.mu},
                         {"block_size", oc.block_size},
                         {"crossovers", oc.crossovers},
                         {"max_shots", oc.max_shots},
                         {"iterations", oc.iterations ? json(*oc.iterations) : json(nullptr)}};
    if (opt.contains("templates")) {
        auto const& t = opt["templates"];
        r.only_keys(t, "optimizer.templates", {"crossover", "mutation"});
        auto const cx = r.path(r.get<std::string>(t, "crossover", "optimizer.templates", ""));
        auto const mu = r.path(r.get<std::string>(t, "mutation", "optimizer.templates", ""));
        try {
            cfg.templates = MetaPromptTemplates::load(cx.string(), mu.string());
        } catch (Error const& e) {
            r.fail("optimizer.templates", e.what());
        }
        resolved_opt["templates"] = {{"crossover", cx.string()}, {"mutation", mu.string()}};
    }
    resolved["optimizer"] = resolved_opt;
    try {
        oc.validate();
    } catch (Error const& e) {
        r.fail("optimizer", e.what());
    }

    // task
    if (!root.contains("task")) { r.fail("task", "missing section"); }
    auto const& task = root["task"];
    r.only_keys(task, "task", {"name", "description", "scorer", "dev", "shots", "test", "initial_instructions", "synthetic"});
    json resolved_task = json::object();
    std::optional<SyntheticTask> synthetic;
    if (task.contains("synthetic")) {
        auto const& s = task["synthetic"];
        r.only_keys(s, "task.synthetic", {"seed", "dev", "shots", "test"});
        SyntheticSizes sizes;
        sizes.dev = r.get<std::size_t>(s, "dev", "task.synthetic", sizes.dev);
        sizes.shots = r.get<std::size_t>(s, "shots", "task.synthetic", sizes.shots);
        sizes.test = r.get<std::size_t>(s, "test", "task.synthetic", sizes.test);
        sizes.instructions = oc.mu;
        auto const seed = r.get<std::uint64_t>(s, "seed", "task.synthetic", 0);
        synthetic = make_synthetic_task(seed, sizes);
        cfg.task = synthetic->task;
        cfg.initial_instructions = synthetic->initial_instructions;
        cfg.simulator = synthetic->simulator;
        resolved_task["synthetic"] = {{"seed", seed}, {"dev", sizes.dev}, {"shots", sizes.shots}, {"test", sizes.test}};
    } else {
        cfg.task.name = r.get<std::string>(task, "name", "task", "");
        if (cfg.task.name.empty()) { r.fail("task.name", "is required"); }
        for (auto const* part : {"dev", "shots", "test"}) {
            if (!task.contains(part)) {
                if (std::string(part) == "test") { continue; }
                r.fail(std::string("task.") + part, "is required");
            }
            auto const p = r.path(r.get<std::string>(task, part, "task", ""));
            auto insts = detail::read_instances(p, part);
            resolved_task[part] = p.string();
            if (std::string(part) == "dev") { cfg.task.dev = std::move(insts); }
            else if (std::string(part) == "shots") { cfg.task.shots = std::move(insts); }
            else { cfg.task.test = std::move(insts); }
        }
        if (!task.contains("initial_instructions")) { r.fail("task.initial_instructions", "is required"); }
        auto const& ii = task["initial_instructions"];
        if (ii.is_string()) {
            auto const p = r.path(ii.get<std::string>());
            cfg.initial_instructions = detail::read_instructions(p);
            resolved_task["initial_instructions"] = p.string();
        } else {
            cfg.initial_instructions = r.get<std::vector<std::string>>(task, "initial_instructions", "task", {});
            resolved_task["initial_instructions"] = cfg.initial_instructions;
        }
        std::set<std::string> labels;
        for (auto const* part : {&cfg.task.dev, &cfg.task.shots, &cfg.task.test}) {
            for (auto const& i : *part) { labels.insert(i.label); }
        }
        cfg.simulator.labels.assign(labels.begin(), labels.end());
    }
    if (task.contains("name")) { cfg.task.name = r.get<std::string>(task, "name", "task", cfg.task.name); }
    if (task.contains("description")) { cfg.task.description = r.get<std::string>(task, "description", "task", ""); }
    auto const scorer = r.get<std::string>(task, "scorer", "task", "exact_match");
    if (scorer == "exact_match") { cfg.task.scorer = ScorerKind::exact_match_marker; }
    else if (scorer == "reward") { cfg.task.scorer = ScorerKind::reward_function; }
    else { r.fail("task.scorer", "must be exact_match or reward"); }
    if (cfg.task.description.empty()) { r.fail("task.description", "is required"); }
    if (cfg.initial_instructions.size() != oc.mu) {
        r.fail("task.initial_instructions", "needs exactly mu = " + std::to_string(oc.mu) + " instructions, found " +
                                                std::to_string(cfg.initial_instructions.size()));
    }
    try {
        cfg.task.validate();
    } catch (Error const& e) {
        r.fail("task", e.what());
    }
    if (cfg.task.shots.size() < oc.max_shots) { r.fail("task.shots", "few-shot pool is smaller than optimizer.max_shots"); }
    resolved_task["name"] = cfg.task.name;
    resolved_task["description"] = cfg.task.description;
    resolved_task["scorer"] = scorer;
    resolved["task"] = resolved_task;

    // backend
    json be = root.value("backend", json::object());
    r.only_keys(be, "backend", {"kind", "simulator", "http", "eval_model", "meta_model", "eval_temperature",
                                "meta_temperature", "max_output_tokens", "concurrency", "record", "replay"});
    cfg.backend = r.get<std::string>(be, "kind", "backend", cfg.backend);
    if (cfg.backend != "simulator" && cfg.backend != "http") { r.fail("backend.kind", "must be simulator or http"); }
    auto& llm = oc.llm;
    llm.eval_model = r.get<std::string>(be, "eval_model", "backend", cfg.backend == "simulator" ? "simulator" : "");
    llm.meta_model = r.get<std::string>(be, "meta_model", "backend", llm.eval_model);
    llm.eval_temperature = r.get<double>(be, "eval_temperature", "backend", llm.eval_temperature);
    llm.meta_temperature = r.get<double>(be, "meta_temperature", "backend", llm.meta_temperature);
    llm.max_output_tokens = r.get<int>(be, "max_output_tokens", "backend", llm.max_output_tokens);
    llm.concurrency = r.get<std::size_t>(be, "concurrency", "backend", llm.concurrency);
    if (llm.max_output_tokens < 1) { r.fail("backend.max_output_tokens", "must be >= 1"); }
    if (llm.eval_model.empty()) { r.fail("backend.eval_model", "is required for the http backend"); }
    json resolved_be = {{"kind", cfg.backend},
                        {"eval_model", llm.eval_model},
                        {"meta_model", llm.meta_model},
                        {"eval_temperature", llm.eval_temperature},
                        {"meta_temperature", llm.meta_temperature},
                        {"max_output_tokens", llm.max_output_tokens},
                        {"concurrency", llm.concurrency}};

    auto& sim = cfg.simulator;
    json s = be.value("simulator", json::object());
    r.only_keys(s, "backend.simulator", {"seed", "q_base", "keyword_bonus", "shot_bonus", "shot_saturation", "verbosity_penalty",
                                         "reasoning_words", "output_base_words", "output_jitter", "edit_rate", "vocabulary",
                                         "marker_failure_rate", "labels"});
    std::string const sw = "backend.simulator";
    sim.seed = r.get<std::uint64_t>(s, "seed", sw, sim.seed);
    sim.q_base = r.get<double>(s, "q_base", sw, sim.q_base);
    sim.keyword_bonus = r.get<std::map<std::string, double>>(s, "keyword_bonus", sw, sim.keyword_bonus);
    sim.shot_bonus = r.get<double>(s, "shot_bonus", sw, sim.shot_bonus);
    sim.shot_saturation = r.get<std::size_t>(s, "shot_saturation", sw, sim.shot_saturation);
    sim.verbosity_penalty = r.get<double>(s, "verbosity_penalty", sw, sim.verbosity_penalty);
    sim.reasoning_words = r.get<std::map<std::string, std::size_t>>(s, "reasoning_words", sw, sim.reasoning_words);
    sim.output_base_words = r.get<std::size_t>(s, "output_base_words", sw, sim.output_base_words);
    sim.output_jitter = r.get<std::size_t>(s, "output_jitter", sw, sim.output_jitter);
    sim.edit_rate = r.get<double>(s, "edit_rate", sw, sim.edit_rate);
    sim.vocabulary = r.get<std::vector<std::string>>(s, "vocabulary", sw, sim.vocabulary);
    sim.marker_failure_rate = r.get<double>(s, "marker_failure_rate", sw, sim.marker_failure_rate);
    sim.labels = r.get<std::vector<std::string>>(s, "labels", sw, sim.labels);
    if (cfg.backend == "simulator") {
        resolved_be["simulator"] = {{"seed", sim.seed},
                                    {"q_base", sim.q_base},
                                    {"keyword_bonus", sim.keyword_bonus},
                                    {"shot_bonus", sim.shot_bonus},
                                    {"shot_saturation", sim.shot_saturation},
                                    {"verbosity_penalty", sim.verbosity_penalty},
                                    {"reasoning_words", sim.reasoning_words},
                                    {"output_base_words", sim.output_base_words},
                                    {"output_jitter", sim.output_jitter},
                                    {"edit_rate", sim.edit_rate},
                                    {"vocabulary", sim.vocabulary},
                                    {"marker_failure_rate", sim.marker_failure_rate},
                                    {"labels", sim.labels}};
    }

    json h = be.value("http", json::object());
    r.only_keys(h, "backend.http", {"base_url", "api_key_env", "max_retries", "timeout_seconds"});
    cfg.http.base_url = r.get<std::string>(h, "base_url", "backend.http", "");
    if (char const* env = std::getenv("MOCAPO_BASE_URL"); env != nullptr && *env != '\0') { cfg.http.base_url = env; }
    cfg.http.api_key_env = r.get<std::string>(h, "api_key_env", "backend.http", cfg.http.api_key_env);
    cfg.http.max_retries = r.get<int>(h, "max_retries", "backend.http", cfg.http.max_retries);
    cfg.http.timeout = std::chrono::seconds(r.get<long>(h, "timeout_seconds", "backend.http", cfg.http.timeout.count()));
    if (cfg.backend == "http") {
        if (cfg.http.base_url.empty()) { r.fail("backend.http.base_url", "is required (or set MOCAPO_BASE_URL)"); }
        resolved_be["http"] = {{"base_url", cfg.http.base_url}, {"api_key_env", cfg.http.api_key_env}};
    }
    if (be.contains("record")) { cfg.record_path = r.path(r.get<std::string>(be, "record", "backend", "")).string(); }
    if (be.contains("replay")) { cfg.replay_path = r.path(r.get<std::string>(be, "replay", "backend", "")).string(); }
    if (cfg.replay_path) { resolved_be["replay"] = *cfg.replay_path; }
    resolved["backend"] = resolved_be;

    cfg.resolved = std::move(resolved);
    return cfg;
}

inline RunConfig load_config(std::filesystem::path const& path)
{
    auto const text = detail::slurp(path);
    auto const base = std::filesystem::absolute(path).parent_path();
    return parse_config(text, base, path.string());
}

/// Evaluation and meta backends for one run. Both roles share one simulator
/// or one HTTP client; record/replay wrap whichever is active.
class BackendSet {
public:
    explicit BackendSet(RunConfig const& cfg)
    {
        if (cfg.replay_path) {
            base_ = std::make_unique<ReplayBackend>(*cfg.replay_path);
        } else if (cfg.backend == "http") {
            base_ = std::make_unique<HttpBackend>(cfg.http);
        } else {
            base_ = std::make_unique<SimulatorBackend>(cfg.simulator, cfg.task, cfg.templates);
        }
        if (cfg.record_path) { recorder_ = std::make_unique<RecordingBackend>(*base_, *cfg.record_path); }
    }

    [[nodiscard]] LlmBackend& eval() noexcept { return recorder_ ? *recorder_ : *base_; }
    [[nodiscard]] LlmBackend& meta() noexcept { return eval(); }

private:
    std::unique_ptr<LlmBackend> base_;
    std::unique_ptr<LlmBackend> recorder_;
};

} // namespace mocapo
