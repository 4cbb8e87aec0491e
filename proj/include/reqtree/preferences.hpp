#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "reqtree/core_model.hpp"
#include "reqtree/corpus.hpp"

namespace reqtree {

struct RaPreference {
    std::string req;
    std::string name;
    SlotValue value;
    int freq = 0;
    bool operator==(const RaPreference&) const = default;
};

struct UserProfile {
    std::string user_id;
    std::map<std::string, std::string> attributes;
    bool operator==(const UserProfile&) const = default;
};

enum class AttributeEvent { UserInitiated, UserAccept, UserReject };

inline constexpr int kInitiatedDelta = 2;
inline constexpr int kAcceptDelta = 1;
inline constexpr int kRejectDelta = -1;
inline constexpr int kPruneThreshold = -3;
inline constexpr std::size_t kDefaultWindow = 20;

/// Per-user attribute preferences. Records are keyed by (req, name, value).
class RaPreferenceStore {
public:
    using Key = std::tuple<std::string, std::string, SlotValue>;

    UserProfile user;
    std::size_t window_n = kDefaultWindow;

    const std::map<Key, RaPreference>& records() const { return prefs_; }
    const RaPreference* find(const std::string& req, const std::string& name, const SlotValue& value) const;
    /// Largest freq among records for `req`; 0 when none.
    int max_freq(const std::string& req) const;
    std::size_t size() const { return prefs_.size(); }
    bool operator==(const RaPreferenceStore&) const = default;

    friend RaPreferenceStore apply_event(RaPreferenceStore store, const std::string& req, const Slot& slot,
                                         AttributeEvent event);
    friend void from_json(const json& j, RaPreferenceStore& store);

private:
    std::map<Key, RaPreference> prefs_;
};

int delta_of(AttributeEvent event);

/// Upsert (starting at 0), add the delta, prune at freq <= -3.
RaPreferenceStore apply_event(RaPreferenceStore store, const std::string& req, const Slot& slot,
                              AttributeEvent event);

/// Records for `req` with freq > 0, by freq desc then (name, value).
std::vector<RaPreference> top_preferences(const RaPreferenceStore& store, const std::string& req,
                                          std::size_t limit);

/// Replays the last `window_n` dialogues (in the order given) through
/// apply_event using the act-based scenario rules.
RaPreferenceStore mine_from_corpus(const std::vector<const Dialogue*>& dialogues, std::size_t window_n,
                                   const std::string& user_id);

/// One store per user in the corpus.
std::map<std::string, RaPreferenceStore> mine_all(const Corpus& corpus, std::size_t window_n);

void to_json(json& j, const RaPreferenceStore& store);
void from_json(const json& j, RaPreferenceStore& store);

}  // namespace reqtree
