#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reqtree/core_model.hpp"
#include "reqtree/corpus.hpp"

namespace reqtree {

// Act-state-transfer automaton. A state is a cluster of exchange contexts:
// the previous (user act, system act) pair, or the start of the dialogue.
// Consuming a user act and emitting a system act moves to the state that
// owns the resulting context.

using StateId = int;
using ActDistribution = std::array<double, kNumActs>;

inline constexpr std::size_t kNumContexts = 1 + kNumActs * kNumActs;
inline constexpr std::size_t kStartContext = 0;

inline constexpr std::size_t context_of(DialogueAct user, DialogueAct system) {
    return 1 + index_of(user) * kNumActs + index_of(system);
}

struct WfstStateInfo {
    StateId id = 0;
    std::string description;
};

struct WfstArc {
    DialogueAct output = DialogueAct::General;
    StateId next = 0;
    double weight = 0.0;
};

struct WfstModel {
    std::vector<WfstStateInfo> states;
    StateId start_state = 0;
    /// Seen (state, user act) pairs -> smoothed system-act arcs, weights sum to 1.
    std::map<std::pair<StateId, DialogueAct>, std::vector<WfstArc>> transitions;
    /// Per-state output distribution over all inputs; backoff for unseen pairs.
    std::map<StateId, ActDistribution> state_marginals;
    /// Context index -> owning state (size kNumContexts).
    std::vector<StateId> context_states;

    double smoothing_alpha = 0.1;
    std::size_t max_states = 8;
    std::string user_id;
    std::string corpus_hash;
    std::size_t training_events = 0;

    std::size_t num_states() const { return states.size(); }
    bool has_state(StateId s) const { return s >= 0 && static_cast<std::size_t>(s) < states.size(); }
    StateId next_state(DialogueAct user, DialogueAct system) const;
};

struct WfstTrainConfig {
    std::size_t max_states = 8;
    double alpha = 0.1;
    std::string user_id;
};

struct StepResult {
    ActDistribution probs{};
    std::array<StateId, kNumActs> next{};
};

/// Greedy state splitting. Starts from one aggregate state; each round takes
/// the refinement with the largest smoothed training log-likelihood gain that
/// also lowers held-out perplexity (every fifth sequence is held out while
/// choosing; final probabilities use all sequences).
WfstModel train_wfst(const std::vector<DaSequence>& sequences, const WfstTrainConfig& cfg);

/// Backoff: seen pair -> state marginal -> uniform. Throws UnknownState.
StepResult step(const WfstModel& model, StateId state, DialogueAct input);

/// Most probable output; ties go to the lexicographically smallest act name.
DialogueAct predict(const WfstModel& model, StateId state, DialogueAct input);

/// Start state followed by the state reached after each complete
/// user/system exchange.
std::vector<StateId> traversal_history(const WfstModel& model, const DaSequence& sequence);

/// exp(-mean log p(system act)) over all exchanges, using `step` probabilities.
double perplexity(const WfstModel& model, const std::vector<DaSequence>& sequences);

/// Lexicographic order of serialized act names, used for deterministic tie-breaks.
bool act_name_less(DialogueAct a, DialogueAct b);

void to_json(json& j, const WfstModel& model);
void from_json(const json& j, WfstModel& model);

}  // namespace reqtree
