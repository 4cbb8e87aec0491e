#include "reqtree/wfst.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "reqtree/hashing.hpp"

namespace reqtree {

namespace {

constexpr double kNumActsD = static_cast<double>(kNumActs);

struct Event {
    std::size_t context;
    std::size_t user;
    std::size_t system;
};

using CountCube = std::array<std::array<double, kNumActs>, kNumActs>;  // [user][system]

std::vector<Event> events_of(const DaSequence& seq) {
    std::vector<Event> out;
    std::size_t ctx = kStartContext;
    for (std::size_t i = 0; i + 1 < seq.size();) {
        if (seq[i].first == Speaker::User && seq[i + 1].first == Speaker::System) {
            const auto u = index_of(seq[i].second);
            const auto o = index_of(seq[i + 1].second);
            out.push_back({ctx, u, o});
            ctx = 1 + u * kNumActs + o;
            i += 2;
        } else {
            ++i;
        }
    }
    return out;
}

std::vector<CountCube> context_counts(const std::vector<Event>& events) {
    std::vector<CountCube> counts(kNumContexts, CountCube{});
    for (const auto& e : events) counts[e.context][e.user][e.system] += 1.0;
    return counts;
}

CountCube sum_over(const std::vector<CountCube>& counts, const std::vector<std::size_t>& contexts) {
    CountCube total{};
    for (auto c : contexts) {
        for (std::size_t u = 0; u < kNumActs; ++u) {
            for (std::size_t o = 0; o < kNumActs; ++o) total[u][o] += counts[c][u][o];
        }
    }
    return total;
}

double mass(const CountCube& cube) {
    double m = 0;
    for (const auto& row : cube) {
        for (double v : row) m += v;
    }
    return m;
}

double smoothed_log_likelihood(const CountCube& cube, double alpha) {
    double ll = 0;
    for (const auto& row : cube) {
        double n = 0;
        for (double v : row) n += v;
        if (n == 0) continue;
        for (double v : row) {
            if (v > 0) ll += v * std::log((v + alpha) / (n + kNumActsD * alpha));
        }
    }
    return ll;
}

ActDistribution distribution(const CountCube& cube, std::size_t user, double alpha, bool& seen) {
    ActDistribution p{};
    double n = 0;
    for (double v : cube[user]) n += v;
    seen = n > 0;
    if (seen) {
        for (std::size_t o = 0; o < kNumActs; ++o) p[o] = (cube[user][o] + alpha) / (n + kNumActsD * alpha);
        return p;
    }
    ActDistribution marg{};
    double m = 0;
    for (const auto& row : cube) {
        for (std::size_t o = 0; o < kNumActs; ++o) {
            marg[o] += row[o];
            m += row[o];
        }
    }
    if (m > 0) {
        for (std::size_t o = 0; o < kNumActs; ++o) p[o] = (marg[o] + alpha) / (m + kNumActsD * alpha);
    } else {
        p.fill(1.0 / kNumActsD);
    }
    return p;
}

std::vector<CountCube> per_state(const std::vector<CountCube>& counts, const std::vector<StateId>& partition,
                                 std::size_t num_states) {
    std::vector<CountCube> out(num_states, CountCube{});
    for (std::size_t c = 0; c < kNumContexts; ++c) {
        auto& dst = out[static_cast<std::size_t>(partition[c])];
        for (std::size_t u = 0; u < kNumActs; ++u) {
            for (std::size_t o = 0; o < kNumActs; ++o) dst[u][o] += counts[c][u][o];
        }
    }
    return out;
}

double heldout_perplexity(const std::vector<CountCube>& fit, const std::vector<Event>& held,
                          const std::vector<StateId>& partition, std::size_t num_states, double alpha) {
    if (held.empty()) return 1.0;
    const auto states = per_state(fit, partition, num_states);
    double ll = 0;
    for (const auto& e : held) {
        bool seen = false;
        const auto p = distribution(states[static_cast<std::size_t>(partition[e.context])], e.user, alpha, seen);
        if (p[e.system] <= 0) return std::numeric_limits<double>::infinity();
        ll += std::log(p[e.system]);
    }
    return std::exp(-ll / static_cast<double>(held.size()));
}

std::string context_name(std::size_t c) {
    if (c == kStartContext) return "start";
    const auto u = (c - 1) / kNumActs;
    const auto o = (c - 1) % kNumActs;
    return std::string(to_string(kAllActs[u])) + ">" + to_string(kAllActs[o]);
}

struct Refinement {
    StateId state;
    std::vector<std::size_t> moved;
    double gain;
    int order;  // candidate family and key, for deterministic tie-breaks
};

std::string describe_state(const std::vector<StateId>& partition, StateId s, const std::vector<double>& ctx_events) {
    std::vector<std::string> names;
    std::size_t members = 0;
    for (std::size_t c = 0; c < kNumContexts; ++c) {
        if (partition[c] != s) continue;
        ++members;
        if (ctx_events[c] > 0) names.push_back(context_name(c));
    }
    std::ostringstream os;
    if (names.size() > 4) {
        os << members << " contexts, " << names.size() << " observed";
    } else {
        os << "{";
        for (std::size_t i = 0; i < names.size(); ++i) os << (i ? ", " : "") << names[i];
        os << "}";
    }
    return os.str();
}

}  // namespace

bool act_name_less(DialogueAct a, DialogueAct b) {
    return std::string_view(to_string(a)) < std::string_view(to_string(b));
}

StateId WfstModel::next_state(DialogueAct user, DialogueAct system) const {
    return context_states.at(context_of(user, system));
}

WfstModel train_wfst(const std::vector<DaSequence>& sequences, const WfstTrainConfig& cfg) {
    if (cfg.alpha < 0) throw Error(ErrorKind::InvalidValue, "smoothing alpha must be non-negative");
    std::vector<Event> all, fit_events, held_events;
    std::uint64_t h = fnv1a64("wfst");
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        auto ev = events_of(sequences[i]);
        for (const auto& [spk, act] : sequences[i]) {
            h = fnv1a64(to_string(spk), h);
            h = fnv1a64(to_string(act), h);
        }
        h = fnv1a64("|", h);
        all.insert(all.end(), ev.begin(), ev.end());
        auto& bucket = (i % 5 == 4) ? held_events : fit_events;
        bucket.insert(bucket.end(), ev.begin(), ev.end());
    }
    if (all.empty()) throw Error(ErrorKind::EmptyTrainingData, "no user/system exchanges to train on");
    if (fit_events.empty() || held_events.empty()) {
        fit_events = all;
        held_events = all;
    }

    const auto counts = context_counts(all);
    const auto fit_counts = context_counts(fit_events);
    std::vector<double> ctx_events(kNumContexts, 0.0);
    for (std::size_t c = 0; c < kNumContexts; ++c) ctx_events[c] = mass(counts[c]);

    std::vector<StateId> partition(kNumContexts, 0);
    std::size_t num_states = 1;
    const std::size_t cap = std::max<std::size_t>(1, cfg.max_states);

    while (num_states < cap) {
        std::vector<Refinement> candidates;
        for (StateId s = 0; s < static_cast<StateId>(num_states); ++s) {
            std::vector<std::size_t> members;
            for (std::size_t c = 0; c < kNumContexts; ++c) {
                if (partition[c] == s) members.push_back(c);
            }
            const auto whole = sum_over(counts, members);
            const double whole_ll = smoothed_log_likelihood(whole, cfg.alpha);
            const double whole_mass = mass(whole);
            std::set<std::vector<std::size_t>> tried;

            auto consider = [&](std::vector<std::size_t> moved, int order) {
                if (moved.empty() || moved.size() == members.size()) return;
                if (!tried.insert(moved).second) return;
                const auto part = sum_over(counts, moved);
                const double part_mass = mass(part);
                if (part_mass == 0 || part_mass == whole_mass) return;
                std::vector<std::size_t> rest;
                std::set_difference(members.begin(), members.end(), moved.begin(), moved.end(), std::back_inserter(rest));
                const double gain = smoothed_log_likelihood(part, cfg.alpha) +
                                    smoothed_log_likelihood(sum_over(counts, rest), cfg.alpha) - whole_ll;
                candidates.push_back({s, std::move(moved), gain, order});
            };

            for (std::size_t a = 0; a < kNumActs; ++a) {
                std::vector<std::size_t> by_system, by_user;
                for (auto c : members) {
                    if (c == kStartContext) continue;
                    if ((c - 1) % kNumActs == a) by_system.push_back(c);
                    if ((c - 1) / kNumActs == a) by_user.push_back(c);
                }
                consider(std::move(by_system), static_cast<int>(a));
                consider(std::move(by_user), static_cast<int>(kNumActs + a));
            }
            for (auto c : members) {
                if (ctx_events[c] > 0) consider({c}, static_cast<int>(2 * kNumActs + c));
            }
        }

        std::sort(candidates.begin(), candidates.end(), [](const Refinement& a, const Refinement& b) {
            if (a.gain != b.gain) return a.gain > b.gain;
            if (a.state != b.state) return a.state < b.state;
            return a.order < b.order;
        });

        const double base = heldout_perplexity(fit_counts, held_events, partition, num_states, cfg.alpha);
        bool accepted = false;
        for (const auto& cand : candidates) {
            if (!(cand.gain > 1e-9)) break;
            auto trial = partition;
            for (auto c : cand.moved) trial[c] = static_cast<StateId>(num_states);
            const double ppl = heldout_perplexity(fit_counts, held_events, trial, num_states + 1, cfg.alpha);
            if (ppl < base - 1e-12) {
                partition = std::move(trial);
                ++num_states;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }

    WfstModel model;
    model.smoothing_alpha = cfg.alpha;
    model.max_states = cap;
    model.user_id = cfg.user_id;
    model.corpus_hash = to_hex(h);
    model.training_events = all.size();
    model.context_states = partition;
    model.start_state = partition[kStartContext];
    for (StateId s = 0; s < static_cast<StateId>(num_states); ++s) {
        model.states.push_back({s, describe_state(partition, s, ctx_events)});
    }

    const auto states = per_state(counts, partition, num_states);
    for (StateId s = 0; s < static_cast<StateId>(num_states); ++s) {
        const auto& cube = states[static_cast<std::size_t>(s)];
        if (mass(cube) == 0) continue;
        ActDistribution marg{};
        double m = 0;
        for (const auto& row : cube) {
            for (std::size_t o = 0; o < kNumActs; ++o) {
                marg[o] += row[o];
                m += row[o];
            }
        }
        for (auto& v : marg) v = (v + cfg.alpha) / (m + kNumActsD * cfg.alpha);
        model.state_marginals[s] = marg;

        for (std::size_t u = 0; u < kNumActs; ++u) {
            bool seen = false;
            const auto p = distribution(cube, u, cfg.alpha, seen);
            if (!seen) continue;
            std::vector<WfstArc> arcs;
            for (std::size_t o = 0; o < kNumActs; ++o) {
                if (p[o] > 0) arcs.push_back({kAllActs[o], partition[1 + u * kNumActs + o], p[o]});
            }
            model.transitions[{s, kAllActs[u]}] = std::move(arcs);
        }
    }
    return model;
}

StepResult step(const WfstModel& model, StateId state, DialogueAct input) {
    if (!model.has_state(state)) {
        throw Error(ErrorKind::UnknownState, "state " + std::to_string(state) + " is not in the model");
    }
    StepResult r;
    for (std::size_t o = 0; o < kNumActs; ++o) r.next[o] = model.next_state(input, kAllActs[o]);
    if (auto it = model.transitions.find({state, input}); it != model.transitions.end()) {
        for (const auto& arc : it->second) r.probs[index_of(arc.output)] = arc.weight;
        return r;
    }
    if (auto it = model.state_marginals.find(state); it != model.state_marginals.end()) {
        r.probs = it->second;
        return r;
    }
    r.probs.fill(1.0 / kNumActsD);
    return r;
}

DialogueAct predict(const WfstModel& model, StateId state, DialogueAct input) {
    const auto r = step(model, state, input);
    DialogueAct best = kAllActs[0];
    double best_p = -1;
    for (auto act : kAllActs) {
        const double p = r.probs[index_of(act)];
        if (p > best_p || (p == best_p && act_name_less(act, best))) {
            best = act;
            best_p = p;
        }
    }
    return best;
}

std::vector<StateId> traversal_history(const WfstModel& model, const DaSequence& sequence) {
    std::vector<StateId> path{model.start_state};
    for (std::size_t i = 0; i + 1 < sequence.size();) {
        if (sequence[i].first == Speaker::User && sequence[i + 1].first == Speaker::System) {
            path.push_back(model.next_state(sequence[i].second, sequence[i + 1].second));
            i += 2;
        } else {
            ++i;
        }
    }
    return path;
}

double perplexity(const WfstModel& model, const std::vector<DaSequence>& sequences) {
    double ll = 0;
    std::size_t n = 0;
    for (const auto& seq : sequences) {
        StateId s = model.start_state;
        for (const auto& e : events_of(seq)) {
            const auto r = step(model, s, kAllActs[e.user]);
            const double p = r.probs[e.system];
            if (p <= 0) return std::numeric_limits<double>::infinity();
            ll += std::log(p);
            ++n;
            s = r.next[e.system];
        }
    }
    return n == 0 ? 1.0 : std::exp(-ll / static_cast<double>(n));
}

void to_json(json& j, const WfstModel& model) {
    json states = json::array();
    for (const auto& s : model.states) states.push_back({{"id", s.id}, {"description", s.description}});
    json transitions = json::array();
    for (const auto& [key, arcs] : model.transitions) {
        json ja = json::array();
        for (const auto& a : arcs) ja.push_back({{"output", to_string(a.output)}, {"next", a.next}, {"weight", a.weight}});
        transitions.push_back({{"state", key.first}, {"input", to_string(key.second)}, {"arcs", std::move(ja)}});
    }
    json marginals = json::array();
    for (const auto& [s, dist] : model.state_marginals) {
        json jd = json::object();
        for (auto act : kAllActs) jd[to_string(act)] = dist[index_of(act)];
        marginals.push_back({{"state", s}, {"distribution", std::move(jd)}});
    }
    j = json{{"states", std::move(states)},
             {"start_state", model.start_state},
             {"transitions", std::move(transitions)},
             {"state_marginals", std::move(marginals)},
             {"context_states", model.context_states},
             {"metadata",
              {{"user_id", model.user_id},
               {"alpha", model.smoothing_alpha},
               {"max_states", model.max_states},
               {"training_events", model.training_events},
               {"corpus_hash", model.corpus_hash}}}};
}

void from_json(const json& j, WfstModel& model) {
    auto act = [](const json& v) {
        const auto s = v.get<std::string>();
        auto a = parse_dialogue_act(s);
        if (!a) throw Error(ErrorKind::UnknownActLabel, "'" + s + "' is not a dialogue act");
        return *a;
    };
    model = WfstModel{};
    for (const auto& s : j.at("states")) model.states.push_back({s.at("id").get<StateId>(), s.value("description", "")});
    model.start_state = j.at("start_state").get<StateId>();
    for (const auto& t : j.at("transitions")) {
        std::vector<WfstArc> arcs;
        for (const auto& a : t.at("arcs")) arcs.push_back({act(a.at("output")), a.at("next").get<StateId>(), a.at("weight").get<double>()});
        model.transitions[{t.at("state").get<StateId>(), act(t.at("input"))}] = std::move(arcs);
    }
    for (const auto& m : j.at("state_marginals")) {
        ActDistribution d{};
        for (const auto& [name, p] : m.at("distribution").items()) d[index_of(act(json(name)))] = p.get<double>();
        model.state_marginals[m.at("state").get<StateId>()] = d;
    }
    model.context_states = j.at("context_states").get<std::vector<StateId>>();
    if (model.context_states.size() != kNumContexts) throw Error(ErrorKind::InvalidValue, "context_states has wrong size");
    const auto& meta = j.at("metadata");
    model.user_id = meta.value("user_id", "");
    model.smoothing_alpha = meta.value("alpha", 0.1);
    model.max_states = meta.value("max_states", std::size_t{8});
    model.training_events = meta.value("training_events", std::size_t{0});
    model.corpus_hash = meta.value("corpus_hash", "");
    for (auto s : model.context_states) {
        if (!model.has_state(s)) throw Error(ErrorKind::UnknownState, "context maps to missing state");
    }
}

}  // namespace reqtree
