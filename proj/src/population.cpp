#include "reqtree/population.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace reqtree {

const LabelSchema* Taxonomy::find(const std::string& label) const {
    for (const auto& l : labels) {
        if (l.label == label) return &l;
    }
    return nullptr;
}

std::vector<std::string> Taxonomy::top_level() const {
    std::vector<std::string> out;
    for (const auto& l : labels) {
        if (!l.parent) out.push_back(l.label);
    }
    return out;
}

std::vector<std::string> Taxonomy::children_of(const std::string& label) const {
    std::vector<std::string> out;
    for (const auto& l : labels) {
        if (l.parent && *l.parent == label) out.push_back(l.label);
    }
    return out;
}

Taxonomy default_taxonomy() {
    auto d = [](std::initializer_list<const char*> tokens) {
        std::vector<SlotValue> out;
        for (const char* t : tokens) out.push_back(discrete(t));
        return out;
    };
    Taxonomy t;
    t.root = "travel";
    t.labels = {
        {"hotel", std::nullopt,
         {{"price", d({"cheap", "moderate", "luxury"})},
          {"stars", {interval(2, 3, "stars"), interval(3, 4, "stars"), interval(4, 5, "stars")}},
          {"area", d({"centre", "north", "south"})}}},
        {"restaurant", std::nullopt,
         {{"cuisine", d({"sichuan", "cantonese", "western"})},
          {"price", d({"cheap", "moderate", "expensive"})},
          {"area", d({"centre", "east", "west"})}}},
        {"peking_duck", std::string("restaurant"), {{"portion", d({"half", "whole"})}}},
        {"attraction", std::nullopt,
         {{"grade", d({"5a", "4a", "3a"})}, {"fee", d({"free", "paid"})}, {"area", d({"centre", "north", "east"})}}},
        {"ticket", std::string("attraction"), {{"count", {interval(1, 2, "people"), interval(3, 4, "people")}}}},
        {"taxi", std::nullopt,
         {{"car", d({"sedan", "van"})},
          {"departure", {interval(8, 10, "h"), interval(12, 14, "h"), interval(18, 20, "h")}}}},
        {"metro", std::nullopt, {{"line", d({"1", "2", "4", "10"})}}},
        {"shopping", std::nullopt, {{"type", d({"mall", "market", "outlet"})}, {"area", d({"centre", "west"})}}},
        {"museum", std::nullopt, {{"topic", d({"history", "art", "science"})}, {"fee", d({"free", "paid"})}}},
        {"bar", std::nullopt, {{"music", d({"jazz", "rock", "none"})}, {"price", d({"cheap", "expensive"})}}},
    };
    return t;
}

std::size_t Stream::below(std::size_t n) {
    if (n == 0) return 0;
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::size_t Stream::between(std::size_t lo, std::size_t hi) {
    return lo + below(hi - lo + 1);
}

double Stream::between(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

DialogueAct table_argmax(const ActTable& table, DialogueAct user_act) {
    const auto& row = table[index_of(user_act)];
    DialogueAct best = kAllActs[0];
    double best_p = -1;
    for (auto a : kAllActs) {
        const double p = row[index_of(a)];
        if (p > best_p || (p == best_p && std::string_view(to_string(a)) < to_string(best))) {
            best = a;
            best_p = p;
        }
    }
    return best;
}

namespace {

const std::vector<DialogueAct> kSystemActs = {DialogueAct::StateOut, DialogueAct::QuesSelect, DialogueAct::QuesRec,
                                              DialogueAct::QuesReq,  DialogueAct::RespAcc,    DialogueAct::RespDeny,
                                              DialogueAct::General};
const std::vector<DialogueAct> kPreferredActs = {DialogueAct::StateOut, DialogueAct::QuesSelect, DialogueAct::QuesRec,
                                                 DialogueAct::QuesReq};

std::vector<std::string> flatten(const Taxonomy& tax, const std::vector<std::string>& top) {
    std::vector<std::string> out;
    for (const auto& l : top) {
        out.push_back(l);
        for (const auto& c : tax.children_of(l)) out.push_back(c);
    }
    return out;
}

const std::vector<SlotValue>* schema_values(const Taxonomy& tax, const std::string& label, const std::string& name) {
    const auto* s = tax.find(label);
    if (!s) return nullptr;
    for (const auto& [n, values] : s->slots) {
        if (n == name) return &values;
    }
    return nullptr;
}

GoalSpec make_goal(const UserTruth& user, const Taxonomy& tax, const PopulationConfig& cfg, Stream& s) {
    // Requirements come up in the user's priority order, so a goal is a
    // prefix of the chain with some sub-items left out.
    const std::size_t want = s.between(std::max<std::size_t>(cfg.min_goal_nodes, 2) - 1,
                                       std::max(cfg.max_goal_nodes, cfg.min_goal_nodes) - 1);
    std::vector<std::string> items;
    for (std::size_t i = 0; i < user.chain.size() && items.size() < want; ++i) {
        const auto& label = user.chain[i];
        const auto& parent = tax.find(label)->parent;
        if (parent) {
            if (std::find(items.begin(), items.end(), *parent) == items.end()) continue;
            if (s.uniform() >= cfg.sub_item_rate) continue;
        }
        items.push_back(label);
    }

    GoalSpec g;
    g.goal = make_tree("n0", tax.root, NodeStatus::Confirmed);
    std::map<std::string, NodeId> ids;
    for (std::size_t i = 0; i < items.size(); ++i) {
        RequirementNode node;
        node.id = "n" + std::to_string(i + 1);
        node.req = items[i];
        node.status = NodeStatus::Confirmed;
        if (auto it = user.preferred_slots.find(items[i]); it != user.preferred_slots.end()) {
            for (const auto& pref : it->second) {
                Slot slot = pref;
                const auto* values = schema_values(tax, items[i], pref.name);
                if (values && values->size() > 1 && s.uniform() >= cfg.slot_loyalty) {
                    std::vector<SlotValue> others;
                    for (const auto& v : *values) {
                        if (v != pref.value) others.push_back(v);
                    }
                    slot.value = others[s.below(others.size())];
                }
                node.slots.push_back(std::move(slot));
            }
        }
        const auto& parent = tax.find(items[i])->parent;
        const NodeId parent_id = parent && ids.count(*parent) ? ids.at(*parent) : g.goal.root;
        ids[items[i]] = node.id;
        g.goal = attach_subrequirement(std::move(g.goal), parent_id, std::move(node));
    }
    g.order = items;
    return g;
}

DialogueAct sample_act(const ActTable& table, DialogueAct user_act, double u) {
    const auto& row = table[index_of(user_act)];
    double acc = 0;
    DialogueAct last = DialogueAct::General;
    for (auto a : kAllActs) {
        const double p = row[index_of(a)];
        if (p <= 0) continue;
        acc += p;
        last = a;
        if (u < acc) return a;
    }
    return last;
}

DialogAction corpus_system_action(DialogueAct act, Agenda& agenda, const std::optional<std::string>& topic,
                                  const Taxonomy& tax, Stream& s) {
    AgendaItem* unexpressed = nullptr;
    for (auto& i : agenda.items) {
        if (!i.expressed) {
            unexpressed = &i;
            break;
        }
    }
    std::string focus = topic.value_or("");
    if (focus.empty()) {
        if (auto* p = agenda.next_pending()) focus = p->label;
        else if (!agenda.items.empty()) focus = agenda.items.front().label;
        else focus = agenda.root;
    }
    const AgendaItem* item = agenda.find(focus);
    const LabelSchema* schema = tax.find(focus);

    // Slot name the question is about: a remaining goal slot when there is one.
    std::string name;
    if (item && !item->remaining.empty()) {
        name = item->remaining[s.below(item->remaining.size())].name;
    } else if (schema && !schema->slots.empty()) {
        name = schema->slots[s.below(schema->slots.size())].first;
    }
    const std::vector<SlotValue>* values = name.empty() ? nullptr : schema_values(tax, focus, name);
    std::optional<SlotValue> goal_value;
    if (item) {
        for (const auto& g : item->goal_slots) {
            if (g.name == name) goal_value = g.value;
        }
    }
    auto random_value = [&]() { return (*values)[s.below(values->size())]; };

    switch (act) {
        case DialogueAct::QuesRec: {
            if (unexpressed && s.uniform() < 0.7) return {DialogueAct::QuesRec, unexpressed->label, {}};
            std::vector<std::string> outside;
            for (const auto& l : tax.labels) {
                if (!agenda.find(l.label)) outside.push_back(l.label);
            }
            if (!outside.empty()) return {DialogueAct::QuesRec, outside[s.below(outside.size())], {}};
            return {DialogueAct::QuesRec, focus, {}};
        }
        case DialogueAct::QuesReq:
            if (!values) return {DialogueAct::QuesReq, focus, {}};
            return {DialogueAct::QuesReq, focus, {{name, random_value()}}};
        case DialogueAct::QuesSelect: {
            if (!values) return {DialogueAct::QuesSelect, focus, {}};
            std::vector<SlotValue> options;
            if (goal_value && s.uniform() < 0.5) options.push_back(*goal_value);
            while (options.size() < std::min<std::size_t>(2, values->size())) {
                auto v = random_value();
                if (std::find(options.begin(), options.end(), v) == options.end()) options.push_back(v);
            }
            std::vector<Slot> slots;
            for (auto& v : options) slots.push_back({name, std::move(v)});
            return {DialogueAct::QuesSelect, focus, std::move(slots)};
        }
        case DialogueAct::StateOut: {
            if (!values) return {DialogueAct::StateOut, focus, {}};
            const SlotValue v = goal_value && s.uniform() < 0.5 ? *goal_value : random_value();
            return {DialogueAct::StateOut, focus, {{name, v}}};
        }
        case DialogueAct::RespAcc:
        case DialogueAct::RespDeny:
            return {act, focus, {}};
        default:
            return DialogAction::general();
    }
}

}  // namespace

Dialogue simulate_corpus_dialogue(const UserTruth& user, const GoalSpec& goal, const Taxonomy& taxonomy,
                                  std::size_t max_turns, const CounterRng& rng) {
    Dialogue d;
    d.user_id = user.user_id;
    d.goal = goal.goal;
    Agenda agenda = build_agenda(goal.goal, goal.order);
    Stream s(rng.split(1));
    const CounterRng user_rng = rng.split(2);
    DialogAction sys = DialogAction::general();
    std::optional<std::string> topic;
    for (std::size_t t = 0; t < max_turns; ++t) {
        DialogAction a = user_step(agenda, user.style, sys, user_rng);
        if (a.req && (a.da == DialogueAct::StateIn || a.da == DialogueAct::RespAcc)) topic = a.req;
        const bool bye = a.da == DialogueAct::General;
        d.turns.push_back({Speaker::User, a});
        if (bye) {
            d.turns.push_back({Speaker::System, DialogAction::general()});
            break;
        }
        sys = corpus_system_action(sample_act(user.act_table, a.da, s.uniform()), agenda, topic, taxonomy, s);
        d.turns.push_back({Speaker::System, sys});
    }
    return d;
}

Population generate_synthetic_population(const PopulationConfig& cfg, const Taxonomy& taxonomy) {
    if (cfg.num_users < 1) throw Error(ErrorKind::InvalidValue, "num_users must be >= 1");
    Population pop;
    pop.taxonomy = taxonomy;
    const auto global_top = taxonomy.top_level();
    pop.global_chain = flatten(taxonomy, global_top);
    const CounterRng base{cfg.seed};

    for (std::size_t u = 0; u < cfg.num_users; ++u) {
        Stream s(base.split(u + 1));
        UserTruth user;
        char buf[16];
        std::snprintf(buf, sizeof buf, "u%02zu", u);
        user.user_id = buf;

        auto top = global_top;
        user.personal_order = top.size() > 1 && s.uniform() < cfg.heterogeneity;
        if (user.personal_order) {
            do {
                s.shuffle(top);
            } while (top == global_top);
        }
        user.chain = flatten(taxonomy, top);

        for (auto ua : kAllActs) {
            auto& row = user.act_table[index_of(ua)];
            const DialogueAct preferred = kPreferredActs[s.below(kPreferredActs.size())];
            const double rest = (1.0 - cfg.act_concentration) / static_cast<double>(kSystemActs.size() - 1);
            for (auto sa : kSystemActs) row[index_of(sa)] = sa == preferred ? cfg.act_concentration : rest;
        }

        for (const auto& schema : taxonomy.labels) {
            std::vector<std::size_t> idx(schema.slots.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            s.shuffle(idx);
            const std::size_t keep = idx.empty() ? 0 : s.between(std::size_t{1}, std::min<std::size_t>(3, idx.size()));
            std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
            auto& prefs = user.preferred_slots[schema.label];
            for (std::size_t i = 0; i < keep; ++i) {
                const auto& [name, values] = schema.slots[idx[i]];
                prefs.push_back({name, values[s.below(values.size())]});
            }
        }

        user.style.proactivity = s.between(cfg.proactivity.first, cfg.proactivity.second);
        user.style.accept_threshold = s.between(cfg.accept.first, cfg.accept.second);
        user.style.verbosity = s.between(cfg.verbosity.first, cfg.verbosity.second);
        user.style.seed = splitmix64(cfg.seed ^ (0x1000 + u));
        validate(user.style);

        for (std::size_t i = 0; i < cfg.dialogues_per_user; ++i) {
            auto goal = make_goal(user, taxonomy, cfg, s);
            pop.corpus.dialogues.push_back(
                simulate_corpus_dialogue(user, goal, taxonomy, cfg.max_corpus_turns, base.split(1000003 * (u + 1) + i)));
        }
        for (std::size_t i = 0; i < cfg.test_dialogues_per_user; ++i) {
            auto goal = make_goal(user, taxonomy, cfg, s);
            pop.test_corpus.dialogues.push_back(simulate_corpus_dialogue(
                user, goal, taxonomy, cfg.max_corpus_turns, base.split(2000003 * (u + 1) + i)));
        }
        for (std::size_t i = 0; i < cfg.goals_per_user; ++i) user.eval_goals.push_back(make_goal(user, taxonomy, cfg, s));
        pop.users.push_back(std::move(user));
    }
    pop.corpus.reindex();
    pop.test_corpus.reindex();
    return pop;
}

void to_json(json& j, const PopulationConfig& c) {
    j = json{{"num_users", c.num_users},
             {"dialogues_per_user", c.dialogues_per_user},
             {"test_dialogues_per_user", c.test_dialogues_per_user},
             {"goals_per_user", c.goals_per_user},
             {"heterogeneity", c.heterogeneity},
             {"min_goal_nodes", c.min_goal_nodes},
             {"max_goal_nodes", c.max_goal_nodes},
             {"act_concentration", c.act_concentration},
             {"slot_loyalty", c.slot_loyalty},
             {"sub_item_rate", c.sub_item_rate},
             {"proactivity", {c.proactivity.first, c.proactivity.second}},
             {"accept", {c.accept.first, c.accept.second}},
             {"verbosity", {c.verbosity.first, c.verbosity.second}},
             {"max_corpus_turns", c.max_corpus_turns},
             {"seed", c.seed}};
}

void from_json(const json& j, PopulationConfig& c) {
    c = PopulationConfig{};
    c.num_users = j.value("num_users", c.num_users);
    c.dialogues_per_user = j.value("dialogues_per_user", c.dialogues_per_user);
    c.test_dialogues_per_user = j.value("test_dialogues_per_user", c.test_dialogues_per_user);
    c.goals_per_user = j.value("goals_per_user", c.goals_per_user);
    c.heterogeneity = j.value("heterogeneity", c.heterogeneity);
    c.min_goal_nodes = j.value("min_goal_nodes", c.min_goal_nodes);
    c.max_goal_nodes = j.value("max_goal_nodes", c.max_goal_nodes);
    c.act_concentration = j.value("act_concentration", c.act_concentration);
    c.slot_loyalty = j.value("slot_loyalty", c.slot_loyalty);
    c.sub_item_rate = j.value("sub_item_rate", c.sub_item_rate);
    c.proactivity = j.value("proactivity", c.proactivity);
    c.accept = j.value("accept", c.accept);
    c.verbosity = j.value("verbosity", c.verbosity);
    c.max_corpus_turns = j.value("max_corpus_turns", c.max_corpus_turns);
    c.seed = j.value("seed", c.seed);
    if (c.min_goal_nodes < 2 || c.max_goal_nodes < c.min_goal_nodes) {
        throw Error(ErrorKind::InvalidValue, "goal node range must satisfy 2 <= min <= max");
    }
}

void to_json(json& j, const GoalSpec& g) {
    j = json{{"goal", g.goal}, {"order", g.order}};
}

void from_json(const json& j, GoalSpec& g) {
    g.goal = j.at("goal").get<RTree>();
    g.order = j.at("order").get<std::vector<std::string>>();
}

json truth_to_json(const Population& pop) {
    json users = json::array();
    for (const auto& u : pop.users) {
        json table = json::object();
        for (auto ua : kAllActs) {
            json row = json::object();
            for (auto sa : kAllActs) {
                const double p = u.act_table[index_of(ua)][index_of(sa)];
                if (p > 0) row[to_string(sa)] = p;
            }
            table[to_string(ua)] = std::move(row);
        }
        users.push_back({{"user_id", u.user_id},
                         {"chain", u.chain},
                         {"personal_order", u.personal_order},
                         {"act_table", std::move(table)},
                         {"preferred_slots", u.preferred_slots},
                         {"style", u.style},
                         {"eval_goals", u.eval_goals}});
    }
    return json{{"root", pop.taxonomy.root}, {"global_chain", pop.global_chain}, {"users", std::move(users)}};
}

}  // namespace reqtree
