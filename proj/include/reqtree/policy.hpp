#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "reqtree/core_model.hpp"
#include "reqtree/fpmc.hpp"
#include "reqtree/patterns.hpp"
#include "reqtree/preferences.hpp"
#include "reqtree/wfst.hpp"

namespace reqtree {

enum class PolicyMode { Pus, GlobalTendency };

const char* to_string(PolicyMode mode);  // "pus" / "global"
PolicyMode parse_policy_mode(std::string_view text);

struct PolicyConfig {
    std::size_t max_rounds = 17;
    std::size_t slot_budget_per_requirement = 3;
    PolicyMode mode = PolicyMode::Pus;
};

/// Non-owning views of the trained models a session runs against. Pus mode
/// needs `fpmc` (and uses `preferences` when present); GlobalTendency needs
/// `bigram` and ignores preferences.
struct PolicyModels {
    const PatternLibrary* library = nullptr;
    const WfstModel* ast = nullptr;
    const FpmcModel* fpmc = nullptr;
    const RequirementBigram* bigram = nullptr;
    const RaPreferenceStore* preferences = nullptr;
    std::string user_id;
};

struct DialogueState {
    RTree tree;
    std::optional<NodeId> current_node;
    std::vector<Proposal> candidates;
    StateId wfst_state = 0;
    std::size_t turn_count = 0;
    bool finished = false;

    std::optional<DialogAction> last_system;
    std::optional<DialogueAct> last_user_act;
    /// Candidate node proposed by the last Ques_rec, awaiting an answer.
    std::optional<NodeId> pending;
    std::set<std::string> rejected;
    std::set<std::string> deferred;
    /// Labels in the order the user confirmed them.
    std::vector<std::string> confirmed_order;
    /// Names put to the user as an open question, or already filled.
    std::map<NodeId, std::set<std::string>> asked;
    /// Offered values the user passed over; never offered again.
    std::map<NodeId, std::vector<Slot>> declined;
    std::map<NodeId, std::size_t> questions;
    RaPreferenceStore preferences;
    std::size_t next_id = 1;
};

class Policy {
public:
    /// Throws MissingModel when the mode's required models are absent.
    Policy(PolicyModels models, PolicyConfig config);

    const PolicyConfig& config() const { return config_; }

    DialogueState init_session(const std::string& scenario_root) const;

    /// One exchange. Throws SessionFinished once the session is over.
    std::pair<DialogueState, DialogAction> handle_user_action(DialogueState state, const DialogAction& action) const;

    /// Evaluated against the state before `action` is applied.
    bool detect_topic_change(const DialogueState& state, const DialogAction& action) const;

    /// Confirms the current node and proposes the best candidate via Ques_rec
    /// (stored in `last_system`), or finishes when nothing is left.
    DialogueState advance_topic(DialogueState state) const;

    /// Slot names still worth asking about for `node`, in asking order.
    std::vector<std::string> open_slot_names(const DialogueState& state, const NodeId& node) const;

    /// Candidates re-matched against the current tree and ranked for the mode.
    std::vector<Proposal> ranked_candidates(const DialogueState& state) const;

private:
    DialogueState apply_user_action(DialogueState state, const DialogAction& action) const;
    DialogueState finish(DialogueState state) const;
    DialogueState ask_about_current(DialogueState state, bool fresh) const;
    DialogueState answer_user_question(DialogueState state) const;
    std::vector<SlotValue> candidate_values(const DialogueState& state, const NodeId& node, const std::string& label,
                                            const std::string& name, std::size_t limit) const;
    std::vector<Slot> preferred_offer(const DialogueState& state, const std::string& label) const;
    DialogueAct choose_act(const DialogueState& state, const std::vector<DialogueAct>& mask) const;
    void emit(DialogueState& state, DialogAction response) const;
    std::optional<NodeId> infer_parent(const DialogueState& state, const std::string& label) const;

    PolicyModels models_;
    PolicyConfig config_;
};

/// One transcript record: turn number, speaker, action and a state summary.
json transcript_entry(std::size_t turn, Speaker speaker, const DialogAction& action, const DialogueState& state);

void to_json(json& j, const PolicyConfig& cfg);
void from_json(const json& j, PolicyConfig& cfg);

}  // namespace reqtree
