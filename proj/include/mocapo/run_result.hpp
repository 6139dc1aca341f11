#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mocapo/types.hpp"

namespace mocapo {

struct FrontMember {
    PromptId id;
    ObjectiveVector objectives;
};

/// State of the reported front at the end of one optimizer step.
struct Snapshot {
    std::size_t step{0};
    std::uint64_t eval_tokens{0};
    std::uint64_t meta_tokens{0};
    BlockSet basis;
    std::vector<FrontMember> front;
    std::size_t population_size{0};
    std::size_t candidates{0};
};

struct RunResult {
    std::string optimizer;
    RunHistory history;
    std::vector<PromptId> initial_population;
    std::vector<PromptId> final_population;
    std::vector<FrontMember> final_front;
    BlockSet final_basis;
    std::vector<Snapshot> snapshots;
    std::string stop_reason;
    std::size_t steps{0};
    std::size_t meta_fallbacks{0};
};

} // namespace mocapo
