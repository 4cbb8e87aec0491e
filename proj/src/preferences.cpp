#include "reqtree/preferences.hpp"

#include <algorithm>

namespace reqtree {

int delta_of(AttributeEvent event) {
    switch (event) {
        case AttributeEvent::UserInitiated: return kInitiatedDelta;
        case AttributeEvent::UserAccept: return kAcceptDelta;
        case AttributeEvent::UserReject: return kRejectDelta;
    }
    return 0;
}

const RaPreference* RaPreferenceStore::find(const std::string& req, const std::string& name,
                                            const SlotValue& value) const {
    auto it = prefs_.find(Key{req, name, value});
    return it == prefs_.end() ? nullptr : &it->second;
}

int RaPreferenceStore::max_freq(const std::string& req) const {
    int best = 0;
    bool any = false;
    for (const auto& [key, p] : prefs_) {
        if (p.req != req) continue;
        best = any ? std::max(best, p.freq) : p.freq;
        any = true;
    }
    return best;
}

RaPreferenceStore apply_event(RaPreferenceStore store, const std::string& req, const Slot& slot,
                              AttributeEvent event) {
    RaPreferenceStore::Key key{req, slot.name, slot.value};
    auto [it, inserted] = store.prefs_.try_emplace(key, RaPreference{req, slot.name, slot.value, 0});
    it->second.freq += delta_of(event);
    if (it->second.freq <= kPruneThreshold) store.prefs_.erase(it);
    return store;
}

std::vector<RaPreference> top_preferences(const RaPreferenceStore& store, const std::string& req,
                                          std::size_t limit) {
    std::vector<RaPreference> out;
    for (const auto& [key, p] : store.records()) {
        if (p.req == req && p.freq > 0) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const RaPreference& a, const RaPreference& b) {
        if (a.freq != b.freq) return a.freq > b.freq;
        if (a.name != b.name) return a.name < b.name;
        return a.value < b.value;
    });
    if (out.size() > limit) out.resize(limit);
    return out;
}

RaPreferenceStore mine_from_corpus(const std::vector<const Dialogue*>& dialogues, std::size_t window_n,
                                   const std::string& user_id) {
    RaPreferenceStore store;
    store.user.user_id = user_id;
    store.window_n = window_n;
    const std::size_t first = dialogues.size() > window_n ? dialogues.size() - window_n : 0;

    for (std::size_t di = first; di < dialogues.size(); ++di) {
        const Dialogue& d = *dialogues[di];
        const DialogAction* last_sys = nullptr;
        std::optional<std::string> topic;
        for (const auto& turn : d.turns) {
            const auto& a = turn.action;
            if (turn.speaker == Speaker::System) {
                last_sys = &a;
                if (a.req) topic = a.req;
                continue;
            }
            const bool answers_proposal = last_sys && !last_sys->slots.empty() &&
                                          (last_sys->da == DialogueAct::QuesRec || last_sys->da == DialogueAct::QuesSelect);
            if (a.da == DialogueAct::StateIn) {
                if (a.req) topic = a.req;
                if (!topic) continue;
                for (const auto& s : a.slots) store = apply_event(std::move(store), *topic, s, AttributeEvent::UserInitiated);
            } else if (a.da == DialogueAct::RespAcc && answers_proposal) {
                const std::string req = last_sys->req.value_or(a.req.value_or(topic.value_or("")));
                if (req.empty()) continue;
                const auto& accepted = a.slots.empty() ? last_sys->slots : a.slots;
                for (const auto& s : accepted) store = apply_event(std::move(store), req, s, AttributeEvent::UserAccept);
            } else if (a.da == DialogueAct::RespDeny && answers_proposal) {
                const std::string req = last_sys->req.value_or(a.req.value_or(topic.value_or("")));
                if (req.empty()) continue;
                for (const auto& s : last_sys->slots) {
                    if (std::find(a.slots.begin(), a.slots.end(), s) != a.slots.end()) continue;
                    store = apply_event(std::move(store), req, s, AttributeEvent::UserReject);
                }
                // A counter-preference stated with the rejection is a user-initiated statement.
                for (const auto& s : a.slots) store = apply_event(std::move(store), req, s, AttributeEvent::UserInitiated);
            }
            last_sys = nullptr;
        }
    }
    return store;
}

std::map<std::string, RaPreferenceStore> mine_all(const Corpus& corpus, std::size_t window_n) {
    std::map<std::string, RaPreferenceStore> out;
    for (const auto& uid : corpus.user_ids()) out.emplace(uid, mine_from_corpus(corpus.dialogues_of(uid), window_n, uid));
    return out;
}

void to_json(json& j, const RaPreferenceStore& store) {
    json prefs = json::array();
    for (const auto& [key, p] : store.records()) {
        prefs.push_back({{"req", p.req}, {"name", p.name}, {"value", p.value}, {"freq", p.freq}});
    }
    j = json{{"user", {{"user_id", store.user.user_id}, {"attributes", store.user.attributes}}},
             {"window_n", store.window_n},
             {"prefs", std::move(prefs)}};
}

void from_json(const json& j, RaPreferenceStore& store) {
    store = RaPreferenceStore{};
    const auto& u = j.at("user");
    store.user.user_id = u.at("user_id").get<std::string>();
    store.user.attributes = u.value("attributes", std::map<std::string, std::string>{});
    store.window_n = j.value("window_n", kDefaultWindow);
    for (const auto& p : j.at("prefs")) {
        RaPreference rec{p.at("req").get<std::string>(), p.at("name").get<std::string>(),
                         p.at("value").get<SlotValue>(), p.at("freq").get<int>()};
        RaPreferenceStore::Key key{rec.req, rec.name, rec.value};
        if (!store.prefs_.emplace(std::move(key), std::move(rec)).second) {
            throw Error(ErrorKind::InvalidValue, "duplicate preference record");
        }
    }
}

}  // namespace reqtree
