#include "reqtree/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "reqtree/hashing.hpp"

namespace reqtree {

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

const char* to_string(Speaker speaker) { return speaker == Speaker::User ? "usr" : "sys"; }

void Corpus::reindex() {
    by_user.clear();
    for (std::size_t i = 0; i < dialogues.size(); ++i) by_user[dialogues[i].user_id].push_back(i);
}

std::vector<std::string> Corpus::user_ids() const {
    std::vector<std::string> out;
    out.reserve(by_user.size());
    for (const auto& [uid, idx] : by_user) out.push_back(uid);
    return out;
}

std::vector<const Dialogue*> Corpus::dialogues_of(const std::string& user_id) const {
    std::vector<const Dialogue*> out;
    if (auto it = by_user.find(user_id); it != by_user.end()) {
        for (auto i : it->second) out.push_back(&dialogues[i]);
    }
    return out;
}

std::vector<Turn> normalize_turns(std::vector<Turn> turns) {
    std::vector<Turn> out;
    out.reserve(turns.size() + 2);
    Speaker expect = Speaker::User;
    for (auto& t : turns) {
        if (t.speaker != expect) out.push_back(Turn{expect, DialogAction::general()});
        out.push_back(std::move(t));
        expect = out.back().speaker == Speaker::User ? Speaker::System : Speaker::User;
    }
    return out;
}

Dialogue dialogue_from_json(const json& j) {
    Dialogue d;
    d.user_id = j.at("user_id").get<std::string>();
    try {
        d.goal = j.at("goal").get<RTree>();
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidGoalTree, e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidGoalTree, e.what());
    }
    if (auto violations = validate_tree(d.goal); !violations.empty()) {
        throw Error(ErrorKind::InvalidGoalTree, violations.front().kind + " at '" + violations.front().node + "'");
    }
    std::vector<Turn> turns;
    for (const auto& jt : j.at("turns")) {
        Turn t;
        const auto speaker = jt.at("speaker").get<std::string>();
        if (speaker == "usr") t.speaker = Speaker::User;
        else if (speaker == "sys") t.speaker = Speaker::System;
        else throw Error(ErrorKind::ParseError, "unknown speaker '" + speaker + "'");
        t.action = jt.get<DialogAction>();
        if (!t.action.valid()) throw Error(ErrorKind::ParseError, "General turn carries a requirement or slots");
        turns.push_back(std::move(t));
    }
    d.turns = normalize_turns(std::move(turns));
    return d;
}

json dialogue_to_json(const Dialogue& d) {
    json turns = json::array();
    for (const auto& t : d.turns) {
        json jt = t.action;
        jt["speaker"] = to_string(t.speaker);
        turns.push_back(std::move(jt));
    }
    return json{{"user_id", d.user_id}, {"goal", d.goal}, {"turns", std::move(turns)}};
}

Corpus parse_corpus(std::istream& in, const std::string& source) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        try {
            corpus.dialogues.push_back(dialogue_from_json(json::parse(line)));
        } catch (const Error& e) {
            throw Error(e.kind(), where + ": " + e.what());
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
    }
    corpus.reindex();
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open corpus '" + path.string() + "'");
    return parse_corpus(in, path.string());
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
    for (const auto& d : corpus.dialogues) out << dialogue_to_json(d).dump() << '\n';
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write corpus '" + path.string() + "'");
    write_corpus(corpus, out);
}

DaSequence extract_da_sequence(const Dialogue& d) {
    DaSequence out;
    out.reserve(d.turns.size());
    for (const auto& t : d.turns) out.emplace_back(t.speaker, t.action.da);
    return out;
}

std::vector<std::string> extract_requirement_sequence(const Dialogue& d) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    const std::string root_label = d.goal.contains(d.goal.root) ? d.goal.node(d.goal.root).req : std::string{};
    auto confirm = [&](const std::string& label) {
        if (label.empty() || label == root_label) return;
        if (seen.insert(label).second) out.push_back(label);
    };
    const DialogAction* last_sys = nullptr;
    for (const auto& t : d.turns) {
        if (t.speaker == Speaker::System) {
            last_sys = &t.action;
            continue;
        }
        const auto& a = t.action;
        if (a.da == DialogueAct::StateIn && a.req) {
            confirm(*a.req);
        } else if (a.da == DialogueAct::RespAcc && last_sys &&
                   (last_sys->da == DialogueAct::QuesRec || last_sys->da == DialogueAct::QuesSelect)) {
            if (a.req) confirm(*a.req);
            else if (last_sys->req) confirm(*last_sys->req);
        }
    }
    return out;
}

std::map<std::string, std::vector<DaSequence>> da_sequences_by_user(const Corpus& corpus) {
    std::map<std::string, std::vector<DaSequence>> out;
    for (const auto& d : corpus.dialogues) out[d.user_id].push_back(extract_da_sequence(d));
    return out;
}

std::map<std::string, std::vector<std::vector<std::string>>> requirement_sequences_by_user(const Corpus& corpus) {
    std::map<std::string, std::vector<std::vector<std::string>>> out;
    for (const auto& d : corpus.dialogues) out[d.user_id].push_back(extract_requirement_sequence(d));
    return out;
}

}  // namespace reqtree
