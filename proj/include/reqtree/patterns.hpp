#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "reqtree/core_model.hpp"
#include "reqtree/preferences.hpp"

namespace reqtree {

/// Label-only view of a tree used for pattern mining and matching.
struct LabelTree {
    std::vector<std::string> labels;
    std::vector<int> parent;  // -1 for the root
    std::vector<std::vector<int>> children;
    int root = 0;

    std::size_t size() const { return labels.size(); }
};

LabelTree label_tree(const RTree& tree);

/// Order-insensitive canonical string: `label(child...)` with children sorted
/// by their own canonical strings. Parentheses and backslashes in labels are
/// escaped.
std::string canonical_form(const LabelTree& tree);

/// True when `pattern` embeds into `tree` with labels and parent/child edges
/// preserved (injective on siblings).
bool occurs_in(const LabelTree& pattern, const LabelTree& tree);

struct RequirementPattern {
    RTree shape;
    std::string canonical;
    std::size_t support = 0;
    std::string domain;  // root label
    LabelTree structure;
};

struct PatternLibrary {
    std::vector<RequirementPattern> patterns;  // sorted by (size, canonical)
    std::size_t min_support = 1;
    std::size_t max_pattern_size = 4;
    std::size_t corpus_size = 0;
    /// label -> slots seen on that label across the corpus, most frequent first.
    std::map<std::string, std::vector<Slot>> slot_hints;
    /// label -> most frequent parent label across the corpus.
    std::map<std::string, std::string> parent_prior;

    std::map<std::string, std::vector<std::size_t>> by_root;
    std::map<std::string, std::vector<std::size_t>> by_label;

    void reindex();
    const RequirementPattern* find(const std::string& canonical) const;
};

/// Level-wise Apriori over canonical unordered rooted subtrees. Returns every
/// connected rooted subtree with at most `max_pattern_size` nodes contained in
/// at least `min_support` trees.
PatternLibrary mine_patterns(const std::vector<RTree>& trees, std::size_t min_support,
                             std::size_t max_pattern_size = 4);

/// 5% of the corpus, at least 1.
std::size_t default_min_support(std::size_t corpus_size);

struct Proposal {
    std::string label;
    NodeId parent;
    double score = 0.0;
    bool operator==(const Proposal&) const = default;
};

inline constexpr double kPreferenceBoost = 0.1;

/// Child labels suggested by patterns for every confirmed or current node,
/// minus labels already under that node. score = support * (1 + 0.1 * freq).
std::vector<Proposal> match_patterns(const PatternLibrary& lib, const RTree& state,
                                     const RaPreferenceStore& profile);

void to_json(json& j, const PatternLibrary& lib);
void from_json(const json& j, PatternLibrary& lib);

}  // namespace reqtree
