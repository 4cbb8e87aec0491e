#include "reqtree/patterns.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <tuple>

namespace reqtree {

namespace {

std::string escape(const std::string& label) {
    std::string out;
    out.reserve(label.size());
    for (char c : label) {
        if (c == '(' || c == ')' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::string canonical_at(const LabelTree& t, int node) {
    std::vector<std::string> kids;
    for (int c : t.children[static_cast<std::size_t>(node)]) kids.push_back(canonical_at(t, c));
    std::sort(kids.begin(), kids.end());
    std::string out = escape(t.labels[static_cast<std::size_t>(node)]) + "(";
    for (const auto& k : kids) out += k;
    out += ")";
    return out;
}

bool match_at(const LabelTree& p, int pn, const LabelTree& t, int tn) {
    if (p.labels[static_cast<std::size_t>(pn)] != t.labels[static_cast<std::size_t>(tn)]) return false;
    const auto& pk = p.children[static_cast<std::size_t>(pn)];
    const auto& tk = t.children[static_cast<std::size_t>(tn)];
    if (pk.size() > tk.size()) return false;
    std::vector<bool> used(tk.size(), false);
    std::function<bool(std::size_t)> assign = [&](std::size_t i) {
        if (i == pk.size()) return true;
        for (std::size_t j = 0; j < tk.size(); ++j) {
            if (used[j] || !match_at(p, pk[i], t, tk[j])) continue;
            used[j] = true;
            if (assign(i + 1)) return true;
            used[j] = false;
        }
        return false;
    };
    return assign(0);
}

LabelTree add_leaf(const LabelTree& t, int under, const std::string& label) {
    LabelTree out = t;
    const int id = static_cast<int>(out.labels.size());
    out.labels.push_back(label);
    out.parent.push_back(under);
    out.children.emplace_back();
    out.children[static_cast<std::size_t>(under)].push_back(id);
    return out;
}

// Copy of `t` without node `drop`, which must be a leaf or a root with one child.
LabelTree without(const LabelTree& t, int drop) {
    std::vector<int> remap(t.size(), -1);
    LabelTree out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (static_cast<int>(i) == drop) continue;
        remap[i] = static_cast<int>(out.labels.size());
        out.labels.push_back(t.labels[i]);
    }
    out.parent.assign(out.labels.size(), -1);
    out.children.assign(out.labels.size(), {});
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (remap[i] < 0) continue;
        const int p = t.parent[i];
        if (p >= 0 && p != drop) {
            out.parent[static_cast<std::size_t>(remap[i])] = remap[static_cast<std::size_t>(p)];
            out.children[static_cast<std::size_t>(remap[static_cast<std::size_t>(p)])].push_back(remap[i]);
        } else {
            out.root = remap[i];
        }
    }
    return out;
}

std::vector<LabelTree> immediate_subpatterns(const LabelTree& t) {
    std::vector<LabelTree> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const int n = static_cast<int>(i);
        const bool leaf = t.children[i].empty() && n != t.root;
        const bool thin_root = n == t.root && t.children[i].size() == 1;
        if (leaf || thin_root) out.push_back(without(t, n));
    }
    return out;
}

RTree shape_of(const LabelTree& t) {
    // Ids follow a canonical preorder so equal patterns produce equal shapes.
    RTree tree;
    int counter = 0;
    std::function<NodeId(int)> build = [&](int node) {
        const NodeId id = "p" + std::to_string(counter++);
        RequirementNode rn;
        rn.id = id;
        rn.req = t.labels[static_cast<std::size_t>(node)];
        tree.nodes.emplace(id, rn);
        std::vector<std::pair<std::string, int>> kids;
        for (int c : t.children[static_cast<std::size_t>(node)]) {
            kids.emplace_back(canonical_at(t, c), c);
        }
        std::sort(kids.begin(), kids.end());
        for (const auto& [canon, c] : kids) {
            const NodeId child = build(c);
            tree.nodes.at(id).sub_reqs.push_back(child);
        }
        return id;
    };
    tree.root = build(t.root);
    return tree;
}

}  // namespace

LabelTree label_tree(const RTree& tree) {
    LabelTree out;
    std::map<NodeId, int> index;
    for (const auto& id : preorder(tree)) {
        index[id] = static_cast<int>(out.labels.size());
        out.labels.push_back(tree.node(id).req);
    }
    out.parent.assign(out.labels.size(), -1);
    out.children.assign(out.labels.size(), {});
    for (const auto& [id, i] : index) {
        for (const auto& c : tree.node(id).sub_reqs) {
            auto it = index.find(c);
            if (it == index.end()) continue;
            out.parent[static_cast<std::size_t>(it->second)] = i;
            out.children[static_cast<std::size_t>(i)].push_back(it->second);
        }
    }
    out.root = index.count(tree.root) ? index.at(tree.root) : 0;
    return out;
}

std::string canonical_form(const LabelTree& tree) {
    if (tree.labels.empty()) return {};
    return canonical_at(tree, tree.root);
}

bool occurs_in(const LabelTree& pattern, const LabelTree& tree) {
    if (pattern.labels.empty()) return true;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (match_at(pattern, pattern.root, tree, static_cast<int>(i))) return true;
    }
    return false;
}

void PatternLibrary::reindex() {
    by_root.clear();
    by_label.clear();
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        by_root[patterns[i].domain].push_back(i);
        std::set<std::string> labels(patterns[i].structure.labels.begin(), patterns[i].structure.labels.end());
        for (const auto& l : labels) by_label[l].push_back(i);
    }
}

const RequirementPattern* PatternLibrary::find(const std::string& canonical) const {
    for (const auto& p : patterns) {
        if (p.canonical == canonical) return &p;
    }
    return nullptr;
}

std::size_t default_min_support(std::size_t corpus_size) {
    return std::max<std::size_t>(1, (corpus_size * 5 + 99) / 100);
}

PatternLibrary mine_patterns(const std::vector<RTree>& trees, std::size_t min_support, std::size_t max_pattern_size) {
    if (min_support < 1) throw Error(ErrorKind::InvalidValue, "min_support must be >= 1");
    PatternLibrary lib;
    lib.min_support = min_support;
    lib.max_pattern_size = max_pattern_size;
    lib.corpus_size = trees.size();

    std::vector<LabelTree> views;
    views.reserve(trees.size());
    for (const auto& t : trees) views.push_back(label_tree(t));

    // Corpus-wide slot and parent statistics used as hints at dialogue time.
    std::map<std::string, std::map<std::tuple<std::string, SlotValue>, std::size_t>> slot_counts;
    std::map<std::string, std::map<std::string, std::size_t>> parent_counts;
    for (const auto& t : trees) {
        for (const auto& [id, node] : t.nodes) {
            for (const auto& s : node.slots) ++slot_counts[node.req][{s.name, s.value}];
            for (const auto& c : node.sub_reqs) {
                if (const auto* child = t.find(c)) ++parent_counts[child->req][node.req];
            }
        }
    }
    for (const auto& [label, counts] : slot_counts) {
        std::vector<std::pair<std::size_t, Slot>> ranked;
        for (const auto& [key, n] : counts) ranked.emplace_back(n, Slot{std::get<0>(key), std::get<1>(key)});
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            if (a.second.name != b.second.name) return a.second.name < b.second.name;
            return a.second.value < b.second.value;
        });
        auto& hints = lib.slot_hints[label];
        for (auto& [n, s] : ranked) hints.push_back(std::move(s));
    }
    for (const auto& [label, parents] : parent_counts) {
        const std::string* best = nullptr;
        std::size_t best_n = 0;
        for (const auto& [p, n] : parents) {
            if (!best || n > best_n) {
                best = &p;
                best_n = n;
            }
        }
        lib.parent_prior[label] = *best;
    }

    auto support_of = [&](const LabelTree& pattern) {
        std::size_t n = 0;
        for (const auto& v : views) n += occurs_in(pattern, v) ? 1 : 0;
        return n;
    };

    // Level 1.
    std::map<std::string, std::size_t> label_support;
    for (const auto& v : views) {
        std::set<std::string> seen(v.labels.begin(), v.labels.end());
        for (const auto& l : seen) ++label_support[l];
    }
    std::vector<std::string> frequent_labels;
    std::map<std::string, std::pair<LabelTree, std::size_t>> level;
    for (const auto& [l, n] : label_support) {
        if (n < min_support) continue;
        frequent_labels.push_back(l);
        LabelTree t;
        t.labels = {l};
        t.parent = {-1};
        t.children = {{}};
        level.emplace(canonical_form(t), std::make_pair(t, n));
    }

    std::map<std::string, std::pair<LabelTree, std::size_t>> all;
    for (std::size_t size = 1; !level.empty(); ++size) {
        all.insert(level.begin(), level.end());
        if (size >= max_pattern_size) break;

        std::map<std::string, LabelTree> candidates;
        for (const auto& [canon, entry] : level) {
            const auto& base = entry.first;
            for (std::size_t node = 0; node < base.size(); ++node) {
                for (const auto& l : frequent_labels) {
                    auto grown = add_leaf(base, static_cast<int>(node), l);
                    auto gc = canonical_form(grown);
                    if (candidates.count(gc)) continue;
                    bool pruned = false;
                    for (const auto& sub : immediate_subpatterns(grown)) {
                        if (!level.count(canonical_form(sub))) {
                            pruned = true;
                            break;
                        }
                    }
                    if (!pruned) candidates.emplace(std::move(gc), std::move(grown));
                }
            }
        }

        std::map<std::string, std::pair<LabelTree, std::size_t>> next;
        for (auto& [canon, pattern] : candidates) {
            const auto n = support_of(pattern);
            if (n >= min_support) next.emplace(canon, std::make_pair(std::move(pattern), n));
        }
        level = std::move(next);
    }

    for (auto& [canon, entry] : all) {
        RequirementPattern p;
        p.canonical = canon;
        p.support = entry.second;
        p.structure = entry.first;
        p.domain = entry.first.labels[static_cast<std::size_t>(entry.first.root)];
        p.shape = shape_of(entry.first);
        lib.patterns.push_back(std::move(p));
    }
    std::stable_sort(lib.patterns.begin(), lib.patterns.end(), [](const auto& a, const auto& b) {
        if (a.structure.size() != b.structure.size()) return a.structure.size() < b.structure.size();
        return a.canonical < b.canonical;
    });
    lib.reindex();
    return lib;
}

std::vector<Proposal> match_patterns(const PatternLibrary& lib, const RTree& state, const RaPreferenceStore& profile) {
    std::map<std::pair<std::string, NodeId>, double> best;
    for (const auto& [id, node] : state.nodes) {
        if (node.status != NodeStatus::Confirmed && node.status != NodeStatus::Current) continue;
        auto hit = lib.by_label.find(node.req);
        if (hit == lib.by_label.end()) continue;

        std::set<std::string> present;
        for (const auto& c : node.sub_reqs) {
            if (const auto* child = state.find(c)) present.insert(child->req);
        }
        for (auto pi : hit->second) {
            const auto& p = lib.patterns[pi];
            const auto& s = p.structure;
            for (std::size_t n = 0; n < s.size(); ++n) {
                if (s.labels[n] != node.req) continue;
                for (int c : s.children[n]) {
                    const auto& label = s.labels[static_cast<std::size_t>(c)];
                    if (present.count(label)) continue;
                    const int freq = std::max(0, profile.max_freq(label));
                    const double score = static_cast<double>(p.support) * (1.0 + kPreferenceBoost * freq);
                    auto& slot = best[{label, id}];
                    slot = std::max(slot, score);
                }
            }
        }
    }
    std::vector<Proposal> out;
    for (const auto& [key, score] : best) out.push_back({key.first, key.second, score});
    std::stable_sort(out.begin(), out.end(), [](const Proposal& a, const Proposal& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.label != b.label) return a.label < b.label;
        return a.parent < b.parent;
    });
    return out;
}

void to_json(json& j, const PatternLibrary& lib) {
    json patterns = json::array();
    for (const auto& p : lib.patterns) {
        patterns.push_back({{"canonical", p.canonical}, {"support", p.support}, {"domain", p.domain}, {"shape", p.shape}});
    }
    j = json{{"min_support", lib.min_support},
             {"max_pattern_size", lib.max_pattern_size},
             {"corpus_size", lib.corpus_size},
             {"patterns", std::move(patterns)},
             {"slot_hints", lib.slot_hints},
             {"parent_prior", lib.parent_prior}};
}

void from_json(const json& j, PatternLibrary& lib) {
    lib = PatternLibrary{};
    lib.min_support = j.at("min_support").get<std::size_t>();
    lib.max_pattern_size = j.at("max_pattern_size").get<std::size_t>();
    lib.corpus_size = j.value("corpus_size", std::size_t{0});
    std::set<std::string> seen;
    for (const auto& jp : j.at("patterns")) {
        RequirementPattern p;
        p.shape = jp.at("shape").get<RTree>();
        if (!is_valid(p.shape)) throw Error(ErrorKind::InvalidValue, "pattern shape is not a valid tree");
        p.structure = label_tree(p.shape);
        p.canonical = canonical_form(p.structure);
        if (!seen.insert(p.canonical).second) throw Error(ErrorKind::InvalidValue, "duplicate pattern " + p.canonical);
        p.support = jp.at("support").get<std::size_t>();
        p.domain = p.structure.labels[static_cast<std::size_t>(p.structure.root)];
        lib.patterns.push_back(std::move(p));
    }
    lib.slot_hints = j.value("slot_hints", std::map<std::string, std::vector<Slot>>{});
    lib.parent_prior = j.value("parent_prior", std::map<std::string, std::string>{});
    lib.reindex();
}

}  // namespace reqtree
