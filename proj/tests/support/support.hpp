#pragma once

// Generators, fixtures and independent oracles shared by the unit tests and
// the acceptance binary.

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "reqtree/corpus.hpp"
#include "reqtree/fpmc.hpp"
#include "reqtree/patterns.hpp"
#include "reqtree/policy.hpp"
#include "reqtree/wfst.hpp"

namespace reqtree::testing {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n);  // uniform in [0, n)

/// Random tree with 1..max_nodes nodes, labels drawn from `labels` (repeats allowed).
RTree random_tree(Rng& rng, std::size_t max_nodes, const std::vector<std::string>& labels);

/// Builds a tree from (label, parent index) pairs; the first entry is the root.
RTree tree_of(const std::vector<std::pair<std::string, int>>& spec);

// ---------------------------------------------------------------- pattern oracle

/// Shape encoding written independently of the library's canonical form:
/// label, then the sorted child encodings in brackets.
std::string shape_key(const LabelTree& tree);

/// Every connected node subset of every tree, encoded by shape; value is the
/// number of trees containing that shape. Shapes above `max_size` nodes or
/// below `min_support` are dropped.
std::map<std::string, std::size_t> brute_force_patterns(const std::vector<RTree>& trees, std::size_t min_support,
                                                        std::size_t max_size);

std::map<std::string, std::size_t> library_shapes(const PatternLibrary& lib);

// ---------------------------------------------------------------- act oracle

/// Conditional counts of the system act following each user act, smoothed
/// with the same add-alpha rule and marginal backoff.
struct ActCountOracle {
    std::array<std::array<double, kNumActs>, kNumActs> counts{};
    std::array<double, kNumActs> marginal{};
    double alpha = 0.1;

    explicit ActCountOracle(const std::vector<DaSequence>& seqs, double alpha);
    std::array<double, kNumActs> distribution(DialogueAct user) const;
    DialogueAct predict(DialogueAct user) const;
};

/// Random usr/sys alternating act sequences.
std::vector<DaSequence> random_da_sequences(Rng& rng, std::size_t count, std::size_t max_exchanges,
                                            const std::array<std::array<double, kNumActs>, kNumActs>& table);

// ---------------------------------------------------------------- corpora

/// User states each requirement of `labels` in order, the system asks a
/// slot question after each; ends with a goodbye exchange.
Dialogue chain_dialogue(const std::string& user, const std::string& root, const std::vector<std::string>& labels);

struct ChainFixture {
    UserSequences train;
    UserSequences held_out;
    std::map<std::string, std::vector<std::string>> chains;
    Corpus corpus;  // training dialogues
};

/// Two users with opposite deterministic chains:
///   A: hotel -> restaurant -> attraction -> taxi
///   B: hotel -> attraction -> restaurant -> metro
/// Each dialogue covers a prefix of at least two labels.
ChainFixture opposite_chains(std::size_t train_per_user, std::size_t held_per_user, std::uint64_t seed);

struct RankingScores {
    double auc = 0.0;
    std::map<std::string, double> top1;  // per user
};

/// AUC over all (observed, other item) pairs of every held-out transition,
/// and top-1 accuracy among items not yet seen in the sequence.
RankingScores ranking_scores(const FpmcModel& model, const UserSequences& held_out);

// ---------------------------------------------------------------- policy

/// Small hand-built model set for the travel scenario:
///   library from 8 x travel{hotel(price=cheap), restaurant(food=spicy)}
///           and 5 x travel{hotel, taxi(car=suv)}
///   one-state act model: Resp_acc -> State_out 0.7, otherwise uniform
///   user "u" prefers taxi on the planner; the pooled bigram prefers restaurant
///   stored preference restaurant food=spicy at 2
struct PolicyFixture {
    PatternLibrary library;
    WfstModel ast;
    FpmcModel fpmc;
    RequirementBigram bigram;
    RaPreferenceStore preferences;

    PolicyModels models() const;
};

PolicyFixture travel_fixture();

}  // namespace reqtree::testing
