#pragma once

// A generated four-way review-classification task together with the simulator
// settings that define its quality and cost landscape.

#include <string>
#include <vector>

#include "mocapo/rng.hpp"
#include "mocapo/simulator.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

struct SyntheticSizes {
    std::size_t dev{100};
    std::size_t shots{20};
    std::size_t test{200};
    std::size_t instructions{10};
};

struct SyntheticTask {
    TaskSpec task;
    SimulatorConfig simulator;
    std::vector<std::string> initial_instructions;
};

inline SimulatorConfig synthetic_simulator_config(std::uint64_t seed)
{
    SimulatorConfig c;
    c.seed = seed;
    c.q_base = 0.30;
    c.keyword_bonus = {
        {"careful", 0.08}, {"precise", 0.08}, {"expert", 0.06}, {"verify", 0.06}, {"sentiment", 0.05},
        {"label", 0.04},   {"step", 0.10},    {"reason", 0.08}, {"explain", 0.06}, {"guess", -0.10},
        {"maybe", -0.08},  {"quickly", -0.05},
    };
    c.reasoning_words = {{"step", 20}, {"reason", 15}, {"explain", 25}};
    c.shot_bonus = 0.05;
    c.shot_saturation = 3;
    c.verbosity_penalty = 0.004;
    c.output_base_words = 6;
    c.output_jitter = 4;
    c.edit_rate = 0.15;
    c.vocabulary = {"careful", "precise", "expert", "verify", "sentiment", "label", "step", "reason", "explain",
                    "guess",   "maybe",   "quickly", "please", "kindly", "review", "text", "answer", "the",
                    "overall", "tone",    "one",     "word",   "only",   "short"};
    c.labels = {"positive", "negative", "neutral", "mixed"};
    return c;
}

/// Deterministic task, simulator and initial instructions for a seed.
inline SyntheticTask make_synthetic_task(std::uint64_t seed, SyntheticSizes sizes = {})
{
    auto rng = Rng::stream(seed, "synthetic-task");
    SyntheticTask out;
    out.simulator = synthetic_simulator_config(seed);
    auto& task = out.task;
    task.name = "synthetic-reviews";
    task.description = "Classify the sentiment of a short product review as positive, negative, neutral or mixed. "
                       "Answer inside <final_answer></final_answer> tags.";
    task.scorer = ScorerKind::exact_match_marker;

    static const std::vector<std::string> products{"blender", "headset", "backpack", "kettle", "lamp", "keyboard",
                                                   "tent", "jacket", "router", "camera", "chair", "watch"};
    static const std::vector<std::string> aspects{"battery", "price", "finish", "delivery", "sound", "fit",
                                                  "setup", "handle", "screen", "strap"};
    static const std::vector<std::vector<std::string>> phrasing{
        {"works wonderfully", "exceeded what I hoped", "is a delight"},
        {"broke within a week", "was a letdown", "feels cheap"},
        {"does what it says", "is about average", "arrived as described"},
        {"is great but the rest disappoints", "looks nice yet fails often", "has good and bad sides"},
    };

    auto make = [&](std::string const& prefix, std::size_t n) {
        std::vector<Instance> v;
        for (std::size_t i = 0; i < n; ++i) {
            auto const label = rng.uniform_index(out.simulator.labels.size());
            auto const& product = rng.pick(products);
            auto const& aspect = rng.pick(aspects);
            auto const& phrase = rng.pick(phrasing[label]);
            Instance inst;
            inst.id = prefix + "-" + std::to_string(i);
            inst.input = "Review " + inst.id + ": the " + product + " " + phrase + ", especially the " + aspect + ".";
            inst.label = out.simulator.labels[label];
            v.push_back(std::move(inst));
        }
        return v;
    };
    task.dev = make("dev", sizes.dev);
    task.shots = make("shot", sizes.shots);
    task.test = make("test", sizes.test);

    static const std::vector<std::string> openers{
        "Please read the following customer review text carefully and then",
        "You will be shown a review written by a customer; kindly",
        "Here is some review text from an online shop, and I would like you to",
        "Take a look at the product review below and",
        "For the review that follows, please",
    };
    static const std::vector<std::string> bodies{
        "tell me what you think the overall sentiment of the writer might be",
        "decide which sentiment label fits the tone of the review best",
        "give the sentiment, maybe just guess quickly if you are not sure",
        "explain the tone and then name the sentiment",
        "work out the sentiment step by step before you answer",
        "figure out whether the customer sounds positive, negative, neutral or mixed",
    };
    static const std::vector<std::string> closers{
        "and write the answer at the end.",
        "and put only the final label in the answer tags.",
        "and please keep it reasonably short and to the point.",
        "and be as precise as you can.",
        "and do not add anything else.",
    };
    std::set<std::string> seen;
    while (out.initial_instructions.size() < sizes.instructions) {
        auto s = rng.pick(openers) + " " + rng.pick(bodies) + " " + rng.pick(closers);
        if (seen.insert(s).second || seen.size() >= openers.size() * bodies.size() * closers.size()) {
            out.initial_instructions.push_back(std::move(s));
        }
    }
    return out;
}

} // namespace mocapo
