#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "reqtree/error.hpp"

namespace reqtree {

using json = nlohmann::json;
using NodeId = std::string;

// ---------------------------------------------------------------- slots

struct DiscreteValue {
    std::string token;
    auto operator<=>(const DiscreteValue&) const = default;
};

/// Closed numeric range with a unit, e.g. 4..5 "stars". Equality is exact.
struct IntervalValue {
    double lo = 0.0;
    double hi = 0.0;
    std::string unit;
    auto operator<=>(const IntervalValue&) const = default;
};

using SlotValue = std::variant<DiscreteValue, IntervalValue>;

SlotValue discrete(std::string token);
/// Throws InvalidValue when lo > hi or either bound is NaN.
SlotValue interval(double lo, double hi, std::string unit);

/// Human-readable rendering: `cheap`, `4..5stars`.
std::string to_string(const SlotValue& value);

struct Slot {
    std::string name;
    SlotValue value;
    bool operator==(const Slot&) const = default;
};

// ---------------------------------------------------------------- tree

enum class NodeStatus { Potential, Candidate, Accepted, Current, Confirmed };

const char* to_string(NodeStatus status);
std::optional<NodeStatus> parse_node_status(std::string_view text);

struct RequirementNode {
    NodeId id;
    std::string req;
    std::vector<Slot> slots;
    std::vector<NodeId> sub_reqs;
    NodeStatus status = NodeStatus::Potential;

    const Slot* find_slot(std::string_view name) const;
    bool operator==(const RequirementNode&) const = default;
};

/// Requirement tree. Mutating helpers below take the tree by value and
/// return the updated copy, so a validated tree can be shared freely.
struct RTree {
    NodeId root;
    std::map<NodeId, RequirementNode> nodes;

    const RequirementNode& node(const NodeId& id) const;
    const RequirementNode* find(const NodeId& id) const;
    bool contains(const NodeId& id) const { return nodes.count(id) != 0; }
    bool operator==(const RTree&) const = default;
};

struct TreeViolation {
    std::string kind;  // "self-edge", "multiple-parents", ...
    NodeId node;
    std::string detail;
};

RTree make_tree(NodeId root_id, std::string root_req, NodeStatus status = NodeStatus::Potential);

std::vector<TreeViolation> validate_tree(const RTree& tree);
inline bool is_valid(const RTree& tree) { return validate_tree(tree).empty(); }

RTree attach_subrequirement(RTree tree, const NodeId& parent, RequirementNode node);
/// Inverse of attach for leaves; throws UnknownNode, InvalidValue for inner nodes or the root.
RTree detach_leaf(RTree tree, const NodeId& id);
/// Upserts by slot name.
RTree set_slot(RTree tree, const NodeId& node, Slot slot);
RTree set_status(RTree tree, const NodeId& node, NodeStatus status);

std::optional<NodeId> parent_of(const RTree& tree, const NodeId& id);
std::size_t edge_count(const RTree& tree);
std::size_t slot_count(const RTree& tree);
std::size_t depth(const RTree& tree);
/// Ids of nodes carrying `label`, in id order.
std::vector<NodeId> find_by_label(const RTree& tree, std::string_view label);
/// Node ids in depth-first preorder, children in stored order.
std::vector<NodeId> preorder(const RTree& tree);

struct TreeOverlap {
    std::size_t node_overlap = 0;
    std::size_t slot_overlap = 0;
    bool operator==(const TreeOverlap&) const = default;
};

/// Semantic intersection: nodes match on (label, parent label), slots on
/// (matched node key, name, exact value). Multiset semantics, symmetric.
TreeOverlap tree_intersection_size(const RTree& a, const RTree& b);

// ---------------------------------------------------------------- acts

enum class DialogueAct {
    StateIn,
    StateOut,
    QuesSelect,
    QuesRec,
    QuesReq,
    RespAcc,
    RespDeny,
    RespVag,
    General,
};

inline constexpr std::size_t kNumActs = 9;
inline constexpr std::array<DialogueAct, kNumActs> kAllActs = {
    DialogueAct::StateIn,  DialogueAct::StateOut, DialogueAct::QuesSelect,
    DialogueAct::QuesRec,  DialogueAct::QuesReq,  DialogueAct::RespAcc,
    DialogueAct::RespDeny, DialogueAct::RespVag,  DialogueAct::General,
};

inline constexpr std::size_t index_of(DialogueAct act) { return static_cast<std::size_t>(act); }

/// Serialized names: State_in, State_out, Ques_select, ...
const char* to_string(DialogueAct act);
std::optional<DialogueAct> parse_dialogue_act(std::string_view text);

struct DialogAction {
    DialogueAct da = DialogueAct::General;
    std::optional<std::string> req;
    std::vector<Slot> slots;

    static DialogAction general() { return {}; }
    /// General actions carry neither requirement nor slots.
    bool valid() const;
    bool operator==(const DialogAction&) const = default;
};

std::string describe(const DialogAction& action);

// ---------------------------------------------------------------- json

void to_json(json& j, const SlotValue& value);
void from_json(const json& j, SlotValue& value);
void to_json(json& j, const Slot& slot);
void from_json(const json& j, Slot& slot);
void to_json(json& j, const RTree& tree);
void from_json(const json& j, RTree& tree);
void to_json(json& j, const DialogAction& action);
void from_json(const json& j, DialogAction& action);

}  // namespace reqtree
