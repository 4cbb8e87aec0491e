#include "support.hpp"

#include <algorithm>
#include <set>

namespace reqtree::testing {

std::size_t pick(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

RTree random_tree(Rng& rng, std::size_t max_nodes, const std::vector<std::string>& labels) {
    const std::size_t n = 1 + pick(rng, max_nodes);
    RTree t = make_tree("t0", labels[pick(rng, labels.size())]);
    for (std::size_t i = 1; i < n; ++i) {
        RequirementNode node;
        node.id = "t" + std::to_string(i);
        node.req = labels[pick(rng, labels.size())];
        t = attach_subrequirement(std::move(t), "t" + std::to_string(pick(rng, i)), std::move(node));
    }
    return t;
}

RTree tree_of(const std::vector<std::pair<std::string, int>>& spec) {
    RTree t = make_tree("t0", spec.front().first);
    for (std::size_t i = 1; i < spec.size(); ++i) {
        RequirementNode node;
        node.id = "t" + std::to_string(i);
        node.req = spec[i].first;
        t = attach_subrequirement(std::move(t), "t" + std::to_string(spec[i].second), std::move(node));
    }
    return t;
}

namespace {

std::string key_at(const LabelTree& t, int v, const std::vector<bool>& keep) {
    std::vector<std::string> kids;
    for (int c : t.children[static_cast<std::size_t>(v)]) {
        if (keep[static_cast<std::size_t>(c)]) kids.push_back(key_at(t, c, keep));
    }
    std::sort(kids.begin(), kids.end());
    std::string out = "<" + t.labels[static_cast<std::size_t>(v)];
    for (const auto& k : kids) out += k;
    return out + ">";
}

}  // namespace

std::string shape_key(const LabelTree& tree) {
    return key_at(tree, tree.root, std::vector<bool>(tree.size(), true));
}

std::map<std::string, std::size_t> brute_force_patterns(const std::vector<RTree>& trees, std::size_t min_support,
                                                        std::size_t max_size) {
    std::map<std::string, std::size_t> support;
    for (const auto& tree : trees) {
        const LabelTree t = label_tree(tree);
        const std::size_t n = t.size();
        std::set<std::string> here;
        for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
            std::vector<bool> keep(n);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                keep[i] = (mask >> i) & 1u;
                count += keep[i];
            }
            if (count > max_size) continue;
            // Connected iff exactly one kept node has no kept parent.
            int top = -1;
            std::size_t tops = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (keep[i] && (t.parent[i] < 0 || !keep[static_cast<std::size_t>(t.parent[i])])) {
                    ++tops;
                    top = static_cast<int>(i);
                }
            }
            if (tops == 1) here.insert(key_at(t, top, keep));
        }
        for (const auto& k : here) ++support[k];
    }
    std::erase_if(support, [&](const auto& kv) { return kv.second < min_support; });
    return support;
}

std::map<std::string, std::size_t> library_shapes(const PatternLibrary& lib) {
    std::map<std::string, std::size_t> out;
    for (const auto& p : lib.patterns) out[shape_key(p.structure)] = p.support;
    return out;
}

ActCountOracle::ActCountOracle(const std::vector<DaSequence>& seqs, double a) : alpha(a) {
    for (const auto& seq : seqs) {
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            if (seq[i].first == Speaker::User && seq[i + 1].first == Speaker::System) {
                counts[index_of(seq[i].second)][index_of(seq[i + 1].second)] += 1;
                marginal[index_of(seq[i + 1].second)] += 1;
                ++i;
            }
        }
    }
}

std::array<double, kNumActs> ActCountOracle::distribution(DialogueAct user) const {
    const auto& row = counts[index_of(user)];
    double n = 0, m = 0;
    for (std::size_t o = 0; o < kNumActs; ++o) {
        n += row[o];
        m += marginal[o];
    }
    std::array<double, kNumActs> p{};
    const double k = static_cast<double>(kNumActs);
    for (std::size_t o = 0; o < kNumActs; ++o) {
        if (n > 0) p[o] = (row[o] + alpha) / (n + k * alpha);
        else if (m > 0) p[o] = (marginal[o] + alpha) / (m + k * alpha);
        else p[o] = 1.0 / k;
    }
    return p;
}

DialogueAct ActCountOracle::predict(DialogueAct user) const {
    const auto p = distribution(user);
    // Highest probability; among equals the act whose name sorts first.
    std::vector<std::pair<std::string, DialogueAct>> best;
    const double top = *std::max_element(p.begin(), p.end());
    for (auto a : kAllActs) {
        if (p[index_of(a)] == top) best.emplace_back(to_string(a), a);
    }
    std::sort(best.begin(), best.end());
    return best.front().second;
}

std::vector<DaSequence> random_da_sequences(Rng& rng, std::size_t count, std::size_t max_exchanges,
                                            const std::array<std::array<double, kNumActs>, kNumActs>& table) {
    std::vector<DaSequence> out;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t d = 0; d < count; ++d) {
        DaSequence seq;
        const std::size_t n = 1 + pick(rng, max_exchanges);
        for (std::size_t e = 0; e < n; ++e) {
            const DialogueAct ua = kAllActs[pick(rng, kNumActs)];
            double x = u(rng), acc = 0;
            DialogueAct sa = DialogueAct::General;
            for (auto a : kAllActs) {
                acc += table[index_of(ua)][index_of(a)];
                if (x < acc) {
                    sa = a;
                    break;
                }
            }
            seq.push_back({Speaker::User, ua});
            seq.push_back({Speaker::System, sa});
        }
        out.push_back(std::move(seq));
    }
    return out;
}

Dialogue chain_dialogue(const std::string& user, const std::string& root, const std::vector<std::string>& labels) {
    Dialogue d;
    d.user_id = user;
    d.goal = make_tree("g0", root, NodeStatus::Confirmed);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        RequirementNode n;
        n.id = "g" + std::to_string(i + 1);
        n.req = labels[i];
        n.status = NodeStatus::Confirmed;
        d.goal = attach_subrequirement(std::move(d.goal), "g0", std::move(n));
        d.turns.push_back({Speaker::User, {DialogueAct::StateIn, labels[i], {}}});
        d.turns.push_back({Speaker::System, {DialogueAct::QuesReq, labels[i], {}}});
    }
    d.turns.push_back({Speaker::User, DialogAction::general()});
    d.turns.push_back({Speaker::System, DialogAction::general()});
    return d;
}

ChainFixture opposite_chains(std::size_t train_per_user, std::size_t held_per_user, std::uint64_t seed) {
    ChainFixture f;
    f.chains["A"] = {"hotel", "restaurant", "attraction", "taxi"};
    f.chains["B"] = {"hotel", "attraction", "restaurant", "metro"};
    Rng rng(seed);
    for (const auto& [user, chain] : f.chains) {
        for (std::size_t i = 0; i < train_per_user + held_per_user; ++i) {
            const std::size_t len = 2 + pick(rng, chain.size() - 1);
            const std::vector<std::string> prefix(chain.begin(), chain.begin() + static_cast<std::ptrdiff_t>(len));
            if (i < train_per_user) {
                f.corpus.dialogues.push_back(chain_dialogue(user, "travel", prefix));
            } else {
                f.held_out[user].push_back(prefix);
            }
        }
    }
    f.corpus.reindex();
    f.train = requirement_sequences_by_user(f.corpus);
    return f;
}

RankingScores ranking_scores(const FpmcModel& model, const UserSequences& held_out) {
    std::vector<std::string> items;
    for (const auto& [label, idx] : model.item_index) {
        if (label != kStartItem) items.push_back(label);
    }
    RankingScores out;
    double pairs = 0, wins = 0;
    for (const auto& [user, seqs] : held_out) {
        std::size_t hits = 0, total = 0;
        for (const auto& seq : seqs) {
            std::string prev = kStartItem;
            std::set<std::string> seen;
            for (const auto& next : seq) {
                const double s = score_next(model, user, prev, next);
                for (const auto& other : items) {
                    if (other == next) continue;
                    const double o = score_next(model, user, prev, other);
                    pairs += 1;
                    wins += s > o ? 1.0 : (s == o ? 0.5 : 0.0);
                }
                std::vector<std::string> open;
                for (const auto& i : items) {
                    if (!seen.count(i)) open.push_back(i);
                }
                hits += rank_candidates(model, user, prev, open).front() == next;
                ++total;
                seen.insert(next);
                prev = next;
            }
        }
        out.top1[user] = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    }
    out.auc = pairs > 0 ? wins / pairs : 0.0;
    return out;
}

PolicyModels PolicyFixture::models() const {
    return PolicyModels{&library, &ast, &fpmc, &bigram, &preferences, "u"};
}

PolicyFixture travel_fixture() {
    PolicyFixture f;
    std::vector<RTree> trees;
    for (int i = 0; i < 13; ++i) {
        RTree t = tree_of({{"travel", -1}, {"hotel", 0}, {i < 8 ? "restaurant" : "taxi", 0}});
        if (i < 8) {
            t = set_slot(std::move(t), "t1", {"price", discrete("cheap")});
            t = set_slot(std::move(t), "t2", {"food", discrete("spicy")});
        } else {
            t = set_slot(std::move(t), "t2", {"car", discrete("suv")});
        }
        trees.push_back(std::move(t));
    }
    f.library = mine_patterns(trees, 5, 4);

    f.ast.states = {{0, "all"}};
    f.ast.context_states.assign(kNumContexts, 0);
    std::vector<WfstArc> arcs;
    for (auto a : kAllActs) arcs.push_back({a, 0, a == DialogueAct::StateOut ? 0.7 : 0.3 / 8.0});
    f.ast.transitions[{0, DialogueAct::RespAcc}] = arcs;

    f.fpmc = make_fpmc({"u"}, {"hotel", "restaurant", "taxi"}, 1);
    f.fpmc.user_factors.row(0)[0] = 1.0;
    f.fpmc.item_user_factors.row(f.fpmc.item_index.at("taxi"))[0] = 1.0;

    f.bigram.counts["hotel"]["restaurant"] = 8;
    f.bigram.counts["hotel"]["taxi"] = 5;

    f.preferences = apply_event({}, "restaurant", {"food", discrete("spicy")}, AttributeEvent::UserInitiated);
    f.preferences.user.user_id = "u";
    return f;
}

}  // namespace reqtree::testing
