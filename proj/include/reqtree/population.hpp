#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reqtree/core_model.hpp"
#include "reqtree/corpus.hpp"
#include "reqtree/simulator.hpp"

namespace reqtree {

struct LabelSchema {
    std::string label;
    std::optional<std::string> parent;  // taxonomy parent; top-level labels hang under the root
    std::vector<std::pair<std::string, std::vector<SlotValue>>> slots;
};

struct Taxonomy {
    std::string root;
    std::vector<LabelSchema> labels;

    const LabelSchema* find(const std::string& label) const;
    std::vector<std::string> top_level() const;
    std::vector<std::string> children_of(const std::string& label) const;
};

/// Travel scenario: eight top-level services, two sub-requirements.
Taxonomy default_taxonomy();

/// Sequential draws over a CounterRng stream.
class Stream {
public:
    explicit Stream(CounterRng rng) : rng_(rng) {}
    double uniform() { return rng_.uniform(n_++, 0); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    std::size_t between(std::size_t lo, std::size_t hi);  // inclusive
    double between(double lo, double hi);
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    CounterRng rng_;
    std::uint64_t n_ = 0;
};

struct PopulationConfig {
    std::size_t num_users = 50;
    std::size_t dialogues_per_user = 20;
    std::size_t test_dialogues_per_user = 10;
    std::size_t goals_per_user = 20;
    /// Probability that a user follows a personal requirement order instead of the global one.
    double heterogeneity = 0.7;
    std::size_t min_goal_nodes = 2;  // including the root
    std::size_t max_goal_nodes = 8;
    double act_concentration = 0.8;
    double slot_loyalty = 0.85;
    double sub_item_rate = 0.5;
    std::pair<double, double> proactivity{0.2, 0.6};
    std::pair<double, double> accept{0.8, 1.0};
    std::pair<std::size_t, std::size_t> verbosity{1, 3};
    std::size_t max_corpus_turns = 30;
    std::uint64_t seed = 1;
};

using ActTable = std::array<std::array<double, kNumActs>, kNumActs>;  // [user act][system act]

struct GoalSpec {
    RTree goal;
    std::vector<std::string> order;
};

struct UserTruth {
    std::string user_id;
    std::vector<std::string> chain;  // personal requirement order, sub-items after their parent
    bool personal_order = false;
    ActTable act_table{};
    std::map<std::string, std::vector<Slot>> preferred_slots;
    StyleWeights style;
    std::vector<GoalSpec> eval_goals;
};

struct Population {
    Taxonomy taxonomy;
    std::vector<std::string> global_chain;
    std::vector<UserTruth> users;
    Corpus corpus;
    Corpus test_corpus;
};

Population generate_synthetic_population(const PopulationConfig& cfg, const Taxonomy& taxonomy = default_taxonomy());

/// Most likely system act per user act under the table; ties by act name.
DialogueAct table_argmax(const ActTable& table, DialogueAct user_act);

/// Corpus-style dialogue: the simulator answers a system that samples its acts
/// from `user.act_table`. Exposed for tests.
Dialogue simulate_corpus_dialogue(const UserTruth& user, const GoalSpec& goal, const Taxonomy& taxonomy,
                                  std::size_t max_turns, const CounterRng& rng);

void to_json(json& j, const PopulationConfig& cfg);
void from_json(const json& j, PopulationConfig& cfg);
void to_json(json& j, const GoalSpec& g);
void from_json(const json& j, GoalSpec& g);
json truth_to_json(const Population& population);

}  // namespace reqtree
