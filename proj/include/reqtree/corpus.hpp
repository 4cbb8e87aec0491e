#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reqtree/core_model.hpp"

namespace reqtree {

enum class Speaker { User, System };

const char* to_string(Speaker speaker);  // "usr" / "sys"

struct Turn {
    Speaker speaker = Speaker::User;
    DialogAction action;
    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string user_id;
    RTree goal;
    std::vector<Turn> turns;
};

struct Corpus {
    std::vector<Dialogue> dialogues;
    /// user id -> dialogue indices, in file order.
    std::map<std::string, std::vector<std::size_t>> by_user;

    void reindex();
    std::vector<std::string> user_ids() const;
    std::vector<const Dialogue*> dialogues_of(const std::string& user_id) const;
};

/// Inserts General turns so the list alternates usr/sys starting with usr.
std::vector<Turn> normalize_turns(std::vector<Turn> turns);

Dialogue dialogue_from_json(const json& j);
json dialogue_to_json(const Dialogue& d);

/// JSON-lines reader. Errors carry the 1-based line number in their message.
Corpus parse_corpus(std::istream& in, const std::string& source = "<stream>");
Corpus load_corpus(const std::filesystem::path& path);
/// Canonical output: one compact JSON object per line, keys sorted.
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

using DaSequence = std::vector<std::pair<Speaker, DialogueAct>>;

DaSequence extract_da_sequence(const Dialogue& d);

/// Requirement labels in first-confirmation order. A label is confirmed by a
/// user State_in naming it, or by a user Resp_acc answering a system
/// Ques_rec/Ques_select about it. The goal's root label is never included.
std::vector<std::string> extract_requirement_sequence(const Dialogue& d);

std::map<std::string, std::vector<DaSequence>> da_sequences_by_user(const Corpus& corpus);
std::map<std::string, std::vector<std::vector<std::string>>> requirement_sequences_by_user(const Corpus& corpus);

}  // namespace reqtree
