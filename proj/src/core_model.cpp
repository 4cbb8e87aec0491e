#include "reqtree/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

namespace reqtree {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::UnknownParent: return "unknown-parent";
        case ErrorKind::DuplicateId: return "duplicate-id";
        case ErrorKind::UnknownNode: return "unknown-node";
        case ErrorKind::InvalidValue: return "invalid-value";
        case ErrorKind::ParseError: return "parse-error";
        case ErrorKind::UnknownActLabel: return "unknown-act-label";
        case ErrorKind::InvalidGoalTree: return "invalid-goal-tree";
        case ErrorKind::EmptyTrainingData: return "empty-training-data";
        case ErrorKind::UnknownState: return "unknown-state";
        case ErrorKind::UnknownUser: return "unknown-user";
        case ErrorKind::UnknownLabel: return "unknown-label";
        case ErrorKind::DegenerateCorpus: return "degenerate-corpus";
        case ErrorKind::OrderMismatch: return "order-mismatch";
        case ErrorKind::SessionFinished: return "session-finished";
        case ErrorKind::MissingModel: return "missing-model";
        case ErrorKind::InvalidSpec: return "invalid-spec";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

// ---------------------------------------------------------------- slots

SlotValue discrete(std::string token) { return DiscreteValue{std::move(token)}; }

SlotValue interval(double lo, double hi, std::string unit) {
    if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
        std::ostringstream os;
        os << "interval bounds " << lo << ".." << hi << " are not ordered";
        throw Error(ErrorKind::InvalidValue, os.str());
    }
    return IntervalValue{lo, hi, std::move(unit)};
}

std::string to_string(const SlotValue& value) {
    if (const auto* d = std::get_if<DiscreteValue>(&value)) return d->token;
    const auto& iv = std::get<IntervalValue>(value);
    std::ostringstream os;
    os << iv.lo << ".." << iv.hi << iv.unit;
    return os.str();
}

// ---------------------------------------------------------------- tree

const char* to_string(NodeStatus status) {
    switch (status) {
        case NodeStatus::Potential: return "potential";
        case NodeStatus::Candidate: return "candidate";
        case NodeStatus::Accepted: return "accepted";
        case NodeStatus::Current: return "current";
        case NodeStatus::Confirmed: return "confirmed";
    }
    return "potential";
}

std::optional<NodeStatus> parse_node_status(std::string_view text) {
    for (auto s : {NodeStatus::Potential, NodeStatus::Candidate, NodeStatus::Accepted,
                   NodeStatus::Current, NodeStatus::Confirmed}) {
        if (text == to_string(s)) return s;
    }
    return std::nullopt;
}

const Slot* RequirementNode::find_slot(std::string_view name) const {
    for (const auto& s : slots) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

const RequirementNode& RTree::node(const NodeId& id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw Error(ErrorKind::UnknownNode, "no node '" + id + "'");
    return it->second;
}

const RequirementNode* RTree::find(const NodeId& id) const {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
}

RTree make_tree(NodeId root_id, std::string root_req, NodeStatus status) {
    RTree tree;
    tree.root = root_id;
    RequirementNode root;
    root.id = root_id;
    root.req = std::move(root_req);
    root.status = status;
    tree.nodes.emplace(std::move(root_id), std::move(root));
    return tree;
}

std::vector<TreeViolation> validate_tree(const RTree& tree) {
    std::vector<TreeViolation> out;
    auto add = [&](std::string kind, const NodeId& node, std::string detail) {
        out.push_back({std::move(kind), node, std::move(detail)});
    };

    if (!tree.contains(tree.root)) {
        add("missing-root", tree.root, "root id does not resolve");
        return out;
    }

    std::map<NodeId, std::vector<NodeId>> parents;
    std::size_t current = 0;
    for (const auto& [key, node] : tree.nodes) {
        if (key != node.id) add("id-mismatch", key, "stored under key '" + key + "' but id is '" + node.id + "'");
        if (node.status == NodeStatus::Current) ++current;

        std::set<NodeId> seen;
        for (const auto& child : node.sub_reqs) {
            if (child == key) {
                add("self-edge", key, "node lists itself as a sub-requirement");
                continue;
            }
            if (!seen.insert(child).second) {
                add("duplicate-child", key, "child '" + child + "' listed twice");
                continue;
            }
            if (!tree.contains(child)) {
                add("unresolved-child", key, "child '" + child + "' does not resolve");
                continue;
            }
            parents[child].push_back(key);
        }

        std::set<std::string> names;
        for (const auto& slot : node.slots) {
            if (slot.name.empty()) add("empty-slot-name", key, "slot without a name");
            else if (!names.insert(slot.name).second) add("duplicate-slot", key, "slot '" + slot.name + "' repeated");
            if (const auto* iv = std::get_if<IntervalValue>(&slot.value); iv && !(iv->lo <= iv->hi)) {
                add("invalid-interval", key, "slot '" + slot.name + "' has lo > hi");
            }
        }
    }
    if (current > 1) add("multiple-current", tree.root, std::to_string(current) + " nodes are current");

    for (const auto& [child, ps] : parents) {
        if (ps.size() > 1) add("multiple-parents", child, std::to_string(ps.size()) + " parents");
    }
    if (parents.count(tree.root)) add("root-has-parent", tree.root, "root is listed as a sub-requirement");

    // Reachability from the root; anything unreached is either detached or on a cycle.
    std::set<NodeId> reached;
    std::vector<NodeId> stack{tree.root};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        if (!reached.insert(id).second) continue;
        for (const auto& child : tree.nodes.at(id).sub_reqs) {
            if (child != id && tree.contains(child)) stack.push_back(child);
        }
    }
    std::set<NodeId> reported_cycle;
    for (const auto& [key, node] : tree.nodes) {
        if (reached.count(key)) continue;
        std::set<NodeId> walk;
        NodeId at = key;
        bool cyclic = false;
        while (true) {
            if (!walk.insert(at).second) {
                cyclic = true;
                break;
            }
            auto p = parents.find(at);
            if (p == parents.end() || p->second.empty()) break;
            at = p->second.front();
        }
        if (cyclic) {
            if (!reported_cycle.count(at)) {
                reported_cycle.insert(at);
                add("cycle", at, "sub-requirement edges form a cycle");
            }
        } else {
            add("unreachable", key, "node is not reachable from the root");
        }
    }
    return out;
}

RTree attach_subrequirement(RTree tree, const NodeId& parent, RequirementNode node) {
    auto it = tree.nodes.find(parent);
    if (it == tree.nodes.end()) throw Error(ErrorKind::UnknownParent, "no node '" + parent + "'");
    if (tree.contains(node.id)) throw Error(ErrorKind::DuplicateId, "node '" + node.id + "' already exists");
    if (node.id.empty()) throw Error(ErrorKind::InvalidValue, "node id is empty");
    it->second.sub_reqs.push_back(node.id);
    NodeId id = node.id;
    tree.nodes.emplace(std::move(id), std::move(node));
    return tree;
}

RTree detach_leaf(RTree tree, const NodeId& id) {
    auto it = tree.nodes.find(id);
    if (it == tree.nodes.end()) throw Error(ErrorKind::UnknownNode, "no node '" + id + "'");
    if (id == tree.root) throw Error(ErrorKind::InvalidValue, "cannot detach the root");
    if (!it->second.sub_reqs.empty()) throw Error(ErrorKind::InvalidValue, "node '" + id + "' has sub-requirements");
    for (auto& [key, node] : tree.nodes) {
        auto& subs = node.sub_reqs;
        subs.erase(std::remove(subs.begin(), subs.end(), id), subs.end());
    }
    tree.nodes.erase(id);
    return tree;
}

RTree set_slot(RTree tree, const NodeId& node, Slot slot) {
    auto it = tree.nodes.find(node);
    if (it == tree.nodes.end()) throw Error(ErrorKind::UnknownNode, "no node '" + node + "'");
    if (slot.name.empty()) throw Error(ErrorKind::InvalidValue, "slot name is empty");
    auto& slots = it->second.slots;
    auto found = std::find_if(slots.begin(), slots.end(), [&](const Slot& s) { return s.name == slot.name; });
    if (found != slots.end()) found->value = std::move(slot.value);
    else slots.push_back(std::move(slot));
    return tree;
}

RTree set_status(RTree tree, const NodeId& node, NodeStatus status) {
    auto it = tree.nodes.find(node);
    if (it == tree.nodes.end()) throw Error(ErrorKind::UnknownNode, "no node '" + node + "'");
    it->second.status = status;
    return tree;
}

std::optional<NodeId> parent_of(const RTree& tree, const NodeId& id) {
    for (const auto& [key, node] : tree.nodes) {
        if (std::find(node.sub_reqs.begin(), node.sub_reqs.end(), id) != node.sub_reqs.end()) return key;
    }
    return std::nullopt;
}

std::size_t edge_count(const RTree& tree) {
    std::size_t n = 0;
    for (const auto& [key, node] : tree.nodes) n += node.sub_reqs.size();
    return n;
}

std::size_t slot_count(const RTree& tree) {
    std::size_t n = 0;
    for (const auto& [key, node] : tree.nodes) n += node.slots.size();
    return n;
}

std::size_t depth(const RTree& tree) {
    if (!tree.contains(tree.root)) return 0;
    std::function<std::size_t(const NodeId&, std::size_t)> go = [&](const NodeId& id, std::size_t guard) {
        if (guard > tree.nodes.size()) return std::size_t{0};
        std::size_t best = 0;
        for (const auto& c : tree.nodes.at(id).sub_reqs) {
            if (tree.contains(c)) best = std::max(best, go(c, guard + 1));
        }
        return best + 1;
    };
    return go(tree.root, 0);
}

std::vector<NodeId> find_by_label(const RTree& tree, std::string_view label) {
    std::vector<NodeId> out;
    for (const auto& [key, node] : tree.nodes) {
        if (node.req == label) out.push_back(key);
    }
    return out;
}

std::vector<NodeId> preorder(const RTree& tree) {
    std::vector<NodeId> out;
    if (!tree.contains(tree.root)) return out;
    std::set<NodeId> seen;
    std::vector<NodeId> stack{tree.root};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        if (!seen.insert(id).second) continue;
        out.push_back(id);
        const auto& subs = tree.nodes.at(id).sub_reqs;
        for (auto it = subs.rbegin(); it != subs.rend(); ++it) {
            if (tree.contains(*it)) stack.push_back(*it);
        }
    }
    return out;
}

namespace {

using NodeKey = std::pair<std::string, std::optional<std::string>>;

struct KeyedTree {
    std::map<NodeKey, std::size_t> nodes;
    std::map<std::tuple<NodeKey, std::string, SlotValue>, std::size_t> slots;
};

KeyedTree keyed(const RTree& tree) {
    std::map<NodeId, std::string> parent_label;
    for (const auto& [key, node] : tree.nodes) {
        for (const auto& c : node.sub_reqs) parent_label[c] = node.req;
    }
    KeyedTree out;
    for (const auto& [key, node] : tree.nodes) {
        NodeKey nk{node.req, std::nullopt};
        if (auto p = parent_label.find(key); p != parent_label.end()) nk.second = p->second;
        ++out.nodes[nk];
        for (const auto& s : node.slots) ++out.slots[{nk, s.name, s.value}];
    }
    return out;
}

template <class Map>
std::size_t multiset_overlap(const Map& a, const Map& b) {
    std::size_t n = 0;
    for (const auto& [k, count] : a) {
        if (auto it = b.find(k); it != b.end()) n += std::min(count, it->second);
    }
    return n;
}

}  // namespace

TreeOverlap tree_intersection_size(const RTree& a, const RTree& b) {
    auto ka = keyed(a);
    auto kb = keyed(b);
    return {multiset_overlap(ka.nodes, kb.nodes), multiset_overlap(ka.slots, kb.slots)};
}

// ---------------------------------------------------------------- acts

const char* to_string(DialogueAct act) {
    switch (act) {
        case DialogueAct::StateIn: return "State_in";
        case DialogueAct::StateOut: return "State_out";
        case DialogueAct::QuesSelect: return "Ques_select";
        case DialogueAct::QuesRec: return "Ques_rec";
        case DialogueAct::QuesReq: return "Ques_req";
        case DialogueAct::RespAcc: return "Resp_acc";
        case DialogueAct::RespDeny: return "Resp_deny";
        case DialogueAct::RespVag: return "Resp_vag";
        case DialogueAct::General: return "General";
    }
    return "General";
}

std::optional<DialogueAct> parse_dialogue_act(std::string_view text) {
    for (auto act : kAllActs) {
        if (text == to_string(act)) return act;
    }
    return std::nullopt;
}

bool DialogAction::valid() const {
    if (da == DialogueAct::General) return !req && slots.empty();
    return true;
}

std::string describe(const DialogAction& action) {
    std::ostringstream os;
    os << to_string(action.da);
    if (action.req) os << "(" << *action.req;
    for (std::size_t i = 0; i < action.slots.size(); ++i) {
        os << (i == 0 && action.req ? "; " : (i == 0 ? "(" : ", "));
        os << action.slots[i].name << "=" << to_string(action.slots[i].value);
    }
    if (action.req || !action.slots.empty()) os << ")";
    return os.str();
}

// ---------------------------------------------------------------- json

void to_json(json& j, const SlotValue& value) {
    if (const auto* d = std::get_if<DiscreteValue>(&value)) {
        j = json{{"kind", "discrete"}, {"value", d->token}};
    } else {
        const auto& iv = std::get<IntervalValue>(value);
        j = json{{"kind", "interval"}, {"lo", iv.lo}, {"hi", iv.hi}, {"unit", iv.unit}};
    }
}

void from_json(const json& j, SlotValue& value) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "discrete") {
        value = discrete(j.at("value").get<std::string>());
    } else if (kind == "interval") {
        value = interval(j.at("lo").get<double>(), j.at("hi").get<double>(), j.value("unit", std::string{}));
    } else {
        throw Error(ErrorKind::InvalidValue, "unknown slot value kind '" + kind + "'");
    }
}

void to_json(json& j, const Slot& slot) { j = json{{"name", slot.name}, {"value", slot.value}}; }

void from_json(const json& j, Slot& slot) {
    slot.name = j.at("name").get<std::string>();
    slot.value = j.at("value").get<SlotValue>();
    if (slot.name.empty()) throw Error(ErrorKind::InvalidValue, "slot name is empty");
}

void to_json(json& j, const RTree& tree) {
    json nodes = json::object();
    for (const auto& [key, node] : tree.nodes) {
        nodes[key] = json{{"req", node.req},
                          {"slots", node.slots},
                          {"sub_reqs", node.sub_reqs},
                          {"status", to_string(node.status)}};
    }
    j = json{{"root", tree.root}, {"nodes", std::move(nodes)}};
}

void from_json(const json& j, RTree& tree) {
    tree = RTree{};
    tree.root = j.at("root").get<std::string>();
    for (const auto& [key, value] : j.at("nodes").items()) {
        RequirementNode node;
        node.id = key;
        node.req = value.at("req").get<std::string>();
        if (value.contains("slots")) node.slots = value.at("slots").get<std::vector<Slot>>();
        if (value.contains("sub_reqs")) node.sub_reqs = value.at("sub_reqs").get<std::vector<NodeId>>();
        const auto status = value.value("status", std::string{"potential"});
        auto parsed = parse_node_status(status);
        if (!parsed) throw Error(ErrorKind::InvalidValue, "unknown node status '" + status + "'");
        node.status = *parsed;
        tree.nodes.emplace(key, std::move(node));
    }
}

void to_json(json& j, const DialogAction& action) {
    j = json{{"da", to_string(action.da)},
             {"req", action.req ? json(*action.req) : json(nullptr)},
             {"slots", action.slots}};
}

void from_json(const json& j, DialogAction& action) {
    const auto label = j.at("da").get<std::string>();
    auto act = parse_dialogue_act(label);
    if (!act) throw Error(ErrorKind::UnknownActLabel, "'" + label + "' is not a dialogue act");
    action.da = *act;
    action.req.reset();
    if (auto it = j.find("req"); it != j.end() && !it->is_null()) action.req = it->get<std::string>();
    action.slots.clear();
    if (auto it = j.find("slots"); it != j.end() && !it->is_null()) action.slots = it->get<std::vector<Slot>>();
}

}  // namespace reqtree
