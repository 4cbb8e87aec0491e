#include "reqtree/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace reqtree {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t turn, std::uint64_t draw) const {
    return splitmix64(splitmix64(splitmix64(seed) ^ turn) ^ (draw * 0xd6e8feb86659fd93ULL));
}

double CounterRng::uniform(std::uint64_t turn, std::uint64_t draw) const {
    return static_cast<double>(bits(turn, draw) >> 11) * 0x1.0p-53;
}

CounterRng CounterRng::split(std::uint64_t stream) const {
    return CounterRng{splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL))};
}

void validate(const StyleWeights& w) {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(w.proactivity) || !prob(w.accept_threshold)) {
        throw Error(ErrorKind::InvalidValue, "style probabilities must lie in [0, 1]");
    }
    if (w.verbosity < 1) throw Error(ErrorKind::InvalidValue, "verbosity must be >= 1");
}

bool Agenda::done() const {
    return std::all_of(items.begin(), items.end(), [](const AgendaItem& i) { return i.done(); });
}

AgendaItem* Agenda::find(const std::string& label) {
    for (auto& i : items) {
        if (i.label == label) return &i;
    }
    return nullptr;
}

const AgendaItem* Agenda::find(const std::string& label) const {
    for (const auto& i : items) {
        if (i.label == label) return &i;
    }
    return nullptr;
}

AgendaItem* Agenda::next_pending() {
    for (auto& i : items) {
        if (!i.done()) return &i;
    }
    return nullptr;
}

std::vector<std::string> Agenda::order() const {
    std::vector<std::string> out;
    for (const auto& i : items) out.push_back(i.label);
    return out;
}

Agenda build_agenda(const RTree& goal, const std::vector<std::string>& order) {
    if (!is_valid(goal)) throw Error(ErrorKind::InvalidGoalTree, "goal tree fails validation");
    std::map<std::string, std::vector<NodeId>> by_label;
    for (const auto& id : preorder(goal)) {
        if (id != goal.root) by_label[goal.node(id).req].push_back(id);
    }
    Agenda agenda;
    agenda.root = goal.node(goal.root).req;
    std::size_t expected = goal.nodes.size() - 1;
    if (order.size() != expected) {
        throw Error(ErrorKind::OrderMismatch, "order has " + std::to_string(order.size()) + " labels, goal has " +
                                                  std::to_string(expected) + " non-root nodes");
    }
    for (const auto& label : order) {
        auto it = by_label.find(label);
        if (it == by_label.end() || it->second.empty()) {
            throw Error(ErrorKind::OrderMismatch, "label '" + label + "' is not an unused goal node");
        }
        const NodeId id = it->second.front();
        it->second.erase(it->second.begin());
        const auto& node = goal.node(id);
        AgendaItem item;
        item.label = node.req;
        if (auto p = parent_of(goal, id)) item.parent = goal.node(*p).req;
        item.goal_slots = node.slots;
        item.remaining = node.slots;
        agenda.items.push_back(std::move(item));
    }
    return agenda;
}

namespace {

bool contains(const std::vector<Slot>& slots, const Slot& s) {
    return std::find(slots.begin(), slots.end(), s) != slots.end();
}

void remove_stated(AgendaItem& item, const std::vector<Slot>& stated) {
    std::erase_if(item.remaining, [&](const Slot& s) { return contains(stated, s); });
}

// Up to `verbosity` remaining slots, names mentioned in `preferred` first.
std::vector<Slot> pick_slots(const AgendaItem& item, std::size_t verbosity, const std::vector<Slot>& preferred) {
    std::vector<Slot> out;
    for (const auto& s : item.remaining) {
        const bool asked = std::any_of(preferred.begin(), preferred.end(), [&](const Slot& p) { return p.name == s.name; });
        if (asked && out.size() < verbosity) out.push_back(s);
    }
    for (const auto& s : item.remaining) {
        if (out.size() >= verbosity) break;
        if (!contains(out, s)) out.push_back(s);
    }
    return out;
}

DialogAction state_in(AgendaItem& item, std::size_t verbosity, const std::vector<Slot>& preferred) {
    auto slots = pick_slots(item, verbosity, preferred);
    item.expressed = true;
    remove_stated(item, slots);
    return DialogAction{DialogueAct::StateIn, item.label, std::move(slots)};
}

}  // namespace

DialogAction user_step(Agenda& agenda, const StyleWeights& w, const DialogAction& sys, const CounterRng& rng) {
    const std::uint64_t turn = agenda.turn++;
    if (agenda.done()) return DialogAction::general();

    AgendaItem* item = sys.req ? agenda.find(*sys.req) : nullptr;
    const bool about_goal = item != nullptr;

    switch (sys.da) {
        case DialogueAct::QuesReq:
            if (about_goal && !item->remaining.empty()) return state_in(*item, w.verbosity, sys.slots);
            break;
        case DialogueAct::QuesRec:
        case DialogueAct::QuesSelect: {
            if (!sys.req) break;
            if (!about_goal) return DialogAction{DialogueAct::RespDeny, sys.req, {}};
            const bool accept = rng.uniform(turn, 0) < w.accept_threshold;
            std::vector<Slot> matches;
            for (const auto& s : sys.slots) {
                if (contains(item->remaining, s)) matches.push_back(s);
            }
            if (!accept) return DialogAction{DialogueAct::RespVag, sys.req, {}};
            item->expressed = true;
            remove_stated(*item, matches);
            return DialogAction{DialogueAct::RespAcc, sys.req, std::move(matches)};
        }
        case DialogueAct::StateOut: {
            if (!sys.req) break;
            if (!about_goal) return DialogAction{DialogueAct::RespDeny, sys.req, {}};
            const bool consistent = std::all_of(sys.slots.begin(), sys.slots.end(),
                                                [&](const Slot& s) { return contains(item->goal_slots, s); });
            if (consistent) {
                std::vector<Slot> accepted;
                for (const auto& s : sys.slots) {
                    if (contains(item->remaining, s)) accepted.push_back(s);
                }
                item->expressed = true;
                remove_stated(*item, accepted);
                return DialogAction{DialogueAct::RespAcc, sys.req, std::move(accepted)};
            }
            std::vector<Slot> counter;
            for (const auto& s : item->goal_slots) {
                const bool named = std::any_of(sys.slots.begin(), sys.slots.end(), [&](const Slot& o) { return o.name == s.name; });
                if (named && !contains(sys.slots, s) && contains(item->remaining, s)) counter.push_back(s);
            }
            remove_stated(*item, counter);
            return DialogAction{DialogueAct::RespDeny, sys.req, std::move(counter)};
        }
        default:
            break;
    }

    if (rng.uniform(turn, 1) < w.proactivity) {
        if (AgendaItem* next = agenda.next_pending()) return state_in(*next, w.verbosity, {});
    }
    return DialogAction{DialogueAct::RespVag, std::nullopt, {}};
}

void to_json(json& j, const StyleWeights& w) {
    j = json{{"proactivity", w.proactivity},
             {"accept_threshold", w.accept_threshold},
             {"verbosity", w.verbosity},
             {"seed", w.seed}};
}

void from_json(const json& j, StyleWeights& w) {
    w = StyleWeights{};
    w.proactivity = j.value("proactivity", w.proactivity);
    w.accept_threshold = j.value("accept_threshold", w.accept_threshold);
    w.verbosity = j.value("verbosity", w.verbosity);
    w.seed = j.value("seed", w.seed);
    validate(w);
}

}  // namespace reqtree
