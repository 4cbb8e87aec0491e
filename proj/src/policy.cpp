#include "reqtree/policy.hpp"

#include <algorithm>
#include <tuple>

namespace reqtree {

namespace {

bool is_question(DialogueAct a) {
    return a == DialogueAct::QuesReq || a == DialogueAct::QuesSelect || a == DialogueAct::QuesRec ||
           a == DialogueAct::StateOut;
}

bool is_slot_question(DialogueAct a) {
    return a == DialogueAct::QuesReq || a == DialogueAct::QuesSelect || a == DialogueAct::StateOut;
}

const std::vector<DialogueAct> kSlotQuestionMask = {DialogueAct::QuesReq, DialogueAct::QuesSelect,
                                                    DialogueAct::StateOut};
const std::vector<DialogueAct> kAnswerMask = {DialogueAct::StateOut, DialogueAct::RespAcc, DialogueAct::RespDeny};

void add_unique(std::vector<std::string>& out, const std::string& name) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
}

}  // namespace

const char* to_string(PolicyMode mode) {
    return mode == PolicyMode::Pus ? "pus" : "global";
}

PolicyMode parse_policy_mode(std::string_view text) {
    if (text == "pus") return PolicyMode::Pus;
    if (text == "global") return PolicyMode::GlobalTendency;
    throw Error(ErrorKind::InvalidValue, "unknown policy mode '" + std::string(text) + "'");
}

Policy::Policy(PolicyModels models, PolicyConfig config) : models_(std::move(models)), config_(config) {
    if (config_.max_rounds < 1) throw Error(ErrorKind::InvalidValue, "max_rounds must be >= 1");
    if (!models_.library) throw Error(ErrorKind::MissingModel, "pattern library");
    if (!models_.ast) throw Error(ErrorKind::MissingModel, "act-state-transfer model");
    if (config_.mode == PolicyMode::Pus && !models_.fpmc) throw Error(ErrorKind::MissingModel, "fpmc model");
    if (config_.mode == PolicyMode::GlobalTendency && !models_.bigram) {
        throw Error(ErrorKind::MissingModel, "requirement bigram");
    }
}

DialogueState Policy::init_session(const std::string& scenario_root) const {
    DialogueState state;
    state.tree = make_tree("n0", scenario_root, NodeStatus::Current);
    state.current_node = "n0";
    state.wfst_state = models_.ast->start_state;
    if (config_.mode == PolicyMode::Pus && models_.preferences) state.preferences = *models_.preferences;
    state.preferences.user.user_id = models_.user_id;
    state.candidates = ranked_candidates(state);
    return state;
}

std::vector<Proposal> Policy::ranked_candidates(const DialogueState& state) const {
    static const RaPreferenceStore kNoPreferences;
    const auto& profile = config_.mode == PolicyMode::Pus ? state.preferences : kNoPreferences;
    std::set<std::string> present;
    for (const auto& [id, node] : state.tree.nodes) present.insert(node.req);

    std::vector<Proposal> props;
    std::set<std::string> seen;
    for (auto& p : match_patterns(*models_.library, state.tree, profile)) {
        if (present.count(p.label) || state.rejected.count(p.label)) continue;
        if (!seen.insert(p.label).second) continue;
        props.push_back(std::move(p));
    }

    const std::string recent = state.confirmed_order.empty() ? kStartItem : state.confirmed_order.back();
    std::vector<std::tuple<int, double, double, std::string, std::size_t>> keyed;
    for (std::size_t i = 0; i < props.size(); ++i) {
        const auto& p = props[i];
        const double planner = config_.mode == PolicyMode::Pus
                                   ? score_or_zero(*models_.fpmc, models_.user_id, recent, p.label)
                                   : static_cast<double>(models_.bigram->count(recent, p.label));
        keyed.emplace_back(state.deferred.count(p.label) ? 1 : 0, -planner, -p.score, p.label, i);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<Proposal> out;
    out.reserve(keyed.size());
    for (const auto& k : keyed) out.push_back(props[std::get<4>(k)]);
    return out;
}

std::vector<SlotValue> Policy::candidate_values(const DialogueState& state, const NodeId& node, const std::string& label,
                                                const std::string& name, std::size_t limit) const {
    std::vector<SlotValue> out;
    const auto declined = state.declined.find(node);
    auto push = [&](const SlotValue& v) {
        if (out.size() >= limit || std::find(out.begin(), out.end(), v) != out.end()) return;
        if (declined != state.declined.end() &&
            std::find(declined->second.begin(), declined->second.end(), Slot{name, v}) != declined->second.end()) {
            return;
        }
        out.push_back(v);
    };
    for (const auto& p : top_preferences(state.preferences, label, state.preferences.size() + 1)) {
        if (p.name == name) push(p.value);
    }
    if (auto it = models_.library->slot_hints.find(label); it != models_.library->slot_hints.end()) {
        for (const auto& s : it->second) {
            if (s.name == name) push(s.value);
        }
    }
    return out;
}

std::vector<Slot> Policy::preferred_offer(const DialogueState& state, const std::string& label) const {
    std::vector<Slot> out;
    if (config_.mode != PolicyMode::Pus) return out;
    for (const auto& p : top_preferences(state.preferences, label, state.preferences.size() + 1)) {
        const bool named = std::any_of(out.begin(), out.end(), [&](const Slot& s) { return s.name == p.name; });
        if (!named) out.push_back({p.name, p.value});
    }
    return out;
}

std::vector<std::string> Policy::open_slot_names(const DialogueState& state, const NodeId& id) const {
    const auto& node = state.tree.node(id);
    std::vector<std::string> names;
    for (const auto& p : top_preferences(state.preferences, node.req, state.preferences.size() + 1)) {
        add_unique(names, p.name);
    }
    // Pattern hints only fill in for labels the user has no known preferences on.
    if (names.empty()) {
        if (auto it = models_.library->slot_hints.find(node.req); it != models_.library->slot_hints.end()) {
            for (const auto& s : it->second) add_unique(names, s.name);
        }
    }
    const auto asked = state.asked.find(id);
    std::erase_if(names, [&](const std::string& n) {
        return node.find_slot(n) != nullptr || (asked != state.asked.end() && asked->second.count(n));
    });
    return names;
}

std::optional<NodeId> Policy::infer_parent(const DialogueState& state, const std::string& label) const {
    auto usable = [&](const NodeId& id) {
        const auto* n = state.tree.find(id);
        return n && n->status != NodeStatus::Candidate;
    };
    for (const auto& c : state.candidates) {
        if (c.label == label && usable(c.parent)) return c.parent;
    }
    if (auto it = models_.library->parent_prior.find(label); it != models_.library->parent_prior.end()) {
        for (const auto& id : find_by_label(state.tree, it->second)) {
            if (usable(id)) return id;
        }
    }
    return state.tree.root;
}

namespace {

void make_current(DialogueState& state, const NodeId& id) {
    if (state.current_node && *state.current_node != id && state.tree.contains(*state.current_node)) {
        state.tree = set_status(std::move(state.tree), *state.current_node, NodeStatus::Confirmed);
    }
    state.tree = set_status(std::move(state.tree), id, NodeStatus::Current);
    state.current_node = id;
    const auto& label = state.tree.node(id).req;
    if (id != state.tree.root && (state.confirmed_order.empty() || state.confirmed_order.back() != label)) {
        state.confirmed_order.push_back(label);
    }
}

void drop_pending(DialogueState& state) {
    if (state.pending && state.tree.contains(*state.pending)) state.tree = detach_leaf(std::move(state.tree), *state.pending);
    state.pending.reset();
}

void upsert(DialogueState& state, const NodeId& id, const std::vector<Slot>& slots) {
    for (const auto& s : slots) {
        state.tree = set_slot(std::move(state.tree), id, s);
        state.asked[id].insert(s.name);
    }
}

void decline_unaccepted(DialogueState& state, const NodeId& id, const std::vector<Slot>& offered,
                        const std::vector<Slot>& accepted) {
    auto& declined = state.declined[id];
    for (const auto& s : offered) {
        if (std::find(accepted.begin(), accepted.end(), s) == accepted.end()) declined.push_back(s);
    }
}

}  // namespace

DialogueState Policy::apply_user_action(DialogueState state, const DialogAction& a) const {
    const bool learn = config_.mode == PolicyMode::Pus;
    const DialogAction* sys = state.last_system ? &*state.last_system : nullptr;
    const bool proposal_open = sys && sys->da == DialogueAct::QuesRec && state.pending;
    const bool slot_question = sys && is_slot_question(sys->da) && state.current_node;
    const bool ra_proposal = sys && !sys->slots.empty() &&
                             (sys->da == DialogueAct::QuesRec || sys->da == DialogueAct::QuesSelect);
    const std::string topic = state.current_node ? state.tree.node(*state.current_node).req : std::string{};
    auto record = [&](const std::string& req, const Slot& s, AttributeEvent e) {
        if (learn && !req.empty()) state.preferences = apply_event(std::move(state.preferences), req, s, e);
    };
    const std::string ra_req = sys && sys->req ? *sys->req : topic;

    const bool resolves_pending =
        proposal_open && (a.da == DialogueAct::RespAcc || a.da == DialogueAct::RespDeny || a.da == DialogueAct::RespVag ||
                          (a.da == DialogueAct::StateIn && a.req && *a.req == state.tree.node(*state.pending).req));
    if (state.pending && !resolves_pending) drop_pending(state);

    switch (a.da) {
        case DialogueAct::StateIn: {
            if (!a.req) {
                if (!state.current_node) break;
                upsert(state, *state.current_node, a.slots);
                for (const auto& s : a.slots) record(topic, s, AttributeEvent::UserInitiated);
                break;
            }
            const std::string& label = *a.req;
            state.rejected.erase(label);
            state.deferred.erase(label);
            std::optional<NodeId> target;
            if (state.pending) {
                target = state.pending;
                state.pending.reset();
            } else {
                for (const auto& id : find_by_label(state.tree, label)) {
                    if (state.tree.node(id).status != NodeStatus::Candidate) {
                        target = id;
                        break;
                    }
                }
            }
            if (!target) {
                RequirementNode node;
                node.id = "n" + std::to_string(state.next_id++);
                node.req = label;
                node.status = NodeStatus::Accepted;
                state.tree = attach_subrequirement(std::move(state.tree), *infer_parent(state, label), node);
                target = node.id;
            }
            make_current(state, *target);
            upsert(state, *target, a.slots);
            for (const auto& s : a.slots) record(label, s, AttributeEvent::UserInitiated);
            break;
        }
        case DialogueAct::RespAcc: {
            if (proposal_open) {
                const NodeId id = *state.pending;
                state.pending.reset();
                make_current(state, id);
                upsert(state, id, a.slots);
                decline_unaccepted(state, id, sys->slots, a.slots);
            } else if (slot_question) {
                const bool take_stated = a.slots.empty() && sys->da == DialogueAct::StateOut;
                const auto& accepted = take_stated ? sys->slots : a.slots;
                upsert(state, *state.current_node, accepted);
                decline_unaccepted(state, *state.current_node, sys->slots, accepted);
            }
            if (ra_proposal) {
                for (const auto& s : a.slots.empty() ? sys->slots : a.slots) record(ra_req, s, AttributeEvent::UserAccept);
            }
            break;
        }
        case DialogueAct::RespDeny: {
            if (proposal_open) {
                state.rejected.insert(state.tree.node(*state.pending).req);
                drop_pending(state);
            } else if (slot_question) {
                upsert(state, *state.current_node, a.slots);
                decline_unaccepted(state, *state.current_node, sys->slots, a.slots);
            }
            if (ra_proposal) {
                for (const auto& s : sys->slots) {
                    if (std::find(a.slots.begin(), a.slots.end(), s) == a.slots.end()) {
                        record(ra_req, s, AttributeEvent::UserReject);
                    }
                }
                for (const auto& s : a.slots) record(ra_req, s, AttributeEvent::UserInitiated);
            }
            break;
        }
        case DialogueAct::RespVag: {
            if (proposal_open) {
                state.deferred.insert(state.tree.node(*state.pending).req);
                drop_pending(state);
            }
            break;
        }
        default:
            break;
    }
    return state;
}

bool Policy::detect_topic_change(const DialogueState& state, const DialogAction& action) const {
    if (!state.current_node) return true;
    const NodeId cur = *state.current_node;
    const auto& node = state.tree.node(cur);
    if (action.req && *action.req != node.req) return true;
    if (auto it = state.questions.find(cur); it != state.questions.end() && it->second >= config_.slot_budget_per_requirement) {
        return true;
    }
    const auto next = apply_user_action(state, action);
    if (next.current_node != state.current_node) return true;
    return open_slot_names(next, cur).empty();
}

DialogueAct Policy::choose_act(const DialogueState& state, const std::vector<DialogueAct>& mask) const {
    const DialogueAct input = state.last_user_act.value_or(DialogueAct::General);
    const auto r = step(*models_.ast, state.wfst_state, input);
    DialogueAct best = mask.front();
    double best_p = -1;
    for (auto act : mask) {
        const double p = r.probs[index_of(act)];
        if (p > best_p || (p == best_p && act_name_less(act, best))) {
            best = act;
            best_p = p;
        }
    }
    return best;
}

void Policy::emit(DialogueState& state, DialogAction response) const {
    if (state.last_user_act) state.wfst_state = models_.ast->next_state(*state.last_user_act, response.da);
    state.last_system = std::move(response);
}

DialogueState Policy::finish(DialogueState state) const {
    state.pending.reset();
    bool removed = true;
    while (removed) {
        removed = false;
        for (const auto& [id, node] : state.tree.nodes) {
            if (node.status == NodeStatus::Candidate && node.sub_reqs.empty() && id != state.tree.root) {
                state.tree = detach_leaf(std::move(state.tree), id);
                removed = true;
                break;
            }
        }
    }
    for (auto& [id, node] : state.tree.nodes) node.status = NodeStatus::Confirmed;
    state.current_node.reset();
    state.candidates.clear();
    state.finished = true;
    return state;
}

DialogueState Policy::advance_topic(DialogueState state) const {
    drop_pending(state);
    if (state.current_node) {
        state.tree = set_status(std::move(state.tree), *state.current_node, NodeStatus::Confirmed);
        state.current_node.reset();
    }
    state.candidates = ranked_candidates(state);
    if (state.candidates.empty()) {
        state = finish(std::move(state));
        emit(state, DialogAction::general());
        return state;
    }
    const Proposal head = state.candidates.front();
    state.candidates.erase(state.candidates.begin());
    RequirementNode node;
    node.id = "n" + std::to_string(state.next_id++);
    node.req = head.label;
    node.status = NodeStatus::Candidate;
    state.tree = attach_subrequirement(std::move(state.tree), head.parent, node);
    state.pending = node.id;
    emit(state, DialogAction{DialogueAct::QuesRec, head.label, preferred_offer(state, head.label)});
    return state;
}

DialogueState Policy::ask_about_current(DialogueState state, bool fresh) const {
    const NodeId id = *state.current_node;
    const std::string label = state.tree.node(id).req;
    auto& asked_count = state.questions[id];
    const auto open = open_slot_names(state, id);
    const bool known_names =
        !top_preferences(state.preferences, label, 1).empty() || models_.library->slot_hints.count(label);
    // A fresh node the system knows nothing about still gets one open question.
    const bool generic = fresh && open.empty() && !known_names && id != state.tree.root;
    if (asked_count >= config_.slot_budget_per_requirement || (open.empty() && !generic)) {
        return advance_topic(std::move(state));
    }
    ++asked_count;
    if (generic) {
        emit(state, DialogAction{DialogueAct::QuesReq, label, {}});
        return state;
    }
    DialogueAct act = choose_act(state, kSlotQuestionMask);
    // Select offers two options per name; the other acts carry one value.
    const std::size_t per_name = act == DialogueAct::QuesSelect ? 2 : 1;
    std::vector<Slot> slots;
    for (const auto& name : open) {
        for (auto& v : candidate_values(state, id, label, name, per_name)) slots.push_back({name, std::move(v)});
    }
    if (slots.empty()) act = DialogueAct::QuesReq;
    if (act == DialogueAct::QuesReq) {
        for (const auto& name : open) state.asked[id].insert(name);
    }
    emit(state, DialogAction{act, label, std::move(slots)});
    return state;
}

DialogueState Policy::answer_user_question(DialogueState state) const {
    const DialogueAct act = choose_act(state, kAnswerMask);
    DialogAction response{act, std::nullopt, {}};
    if (state.current_node) {
        const NodeId id = *state.current_node;
        response.req = state.tree.node(id).req;
        if (act == DialogueAct::StateOut) {
            const auto open = open_slot_names(state, id);
            if (!open.empty()) {
                for (auto& v : candidate_values(state, id, *response.req, open.front(), 1)) {
                    response.slots.push_back({open.front(), std::move(v)});
                }
            }
        }
    }
    emit(state, std::move(response));
    return state;
}

std::pair<DialogueState, DialogAction> Policy::handle_user_action(DialogueState state, const DialogAction& action) const {
    if (state.finished) throw Error(ErrorKind::SessionFinished, "session already finished");
    if (!action.valid()) throw Error(ErrorKind::InvalidValue, "malformed user action: " + describe(action));

    const bool topic_change = detect_topic_change(state, action);
    const auto previous_current = state.current_node;

    ++state.turn_count;
    state = apply_user_action(std::move(state), action);
    state.last_user_act = action.da;

    if (action.da == DialogueAct::General) {
        state = finish(std::move(state));
        emit(state, DialogAction::general());
    } else if (is_question(action.da)) {
        state = answer_user_question(std::move(state));
    } else if (state.current_node && state.current_node != previous_current) {
        state = ask_about_current(std::move(state), true);
    } else if (!state.current_node || topic_change) {
        state = advance_topic(std::move(state));
    } else {
        state = ask_about_current(std::move(state), false);
    }

    if (!state.finished && state.turn_count >= config_.max_rounds) state = finish(std::move(state));
    DialogAction response = *state.last_system;
    return {std::move(state), std::move(response)};
}

json transcript_entry(std::size_t turn, Speaker speaker, const DialogAction& action, const DialogueState& state) {
    json candidates = json::array();
    for (const auto& c : state.candidates) candidates.push_back(c.label);
    json summary{{"current", state.current_node ? json(state.tree.node(*state.current_node).req) : json(nullptr)},
                 {"nodes", state.tree.nodes.size()},
                 {"slots", slot_count(state.tree)},
                 {"candidates", std::move(candidates)},
                 {"wfst_state", state.wfst_state},
                 {"finished", state.finished}};
    return json{{"turn", turn}, {"speaker", to_string(speaker)}, {"action", action}, {"state", std::move(summary)}};
}

void to_json(json& j, const PolicyConfig& cfg) {
    j = json{{"max_rounds", cfg.max_rounds},
             {"slot_budget_per_requirement", cfg.slot_budget_per_requirement},
             {"mode", to_string(cfg.mode)}};
}

void from_json(const json& j, PolicyConfig& cfg) {
    cfg = PolicyConfig{};
    cfg.max_rounds = j.value("max_rounds", cfg.max_rounds);
    cfg.slot_budget_per_requirement = j.value("slot_budget_per_requirement", cfg.slot_budget_per_requirement);
    if (j.contains("mode")) cfg.mode = parse_policy_mode(j.at("mode").get<std::string>());
    if (cfg.max_rounds < 1) throw Error(ErrorKind::InvalidValue, "max_rounds must be >= 1");
}

}  // namespace reqtree
