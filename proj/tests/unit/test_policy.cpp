#include "doctest.h"

#include <set>

#include "reqtree/policy.hpp"
#include "support.hpp"

using namespace reqtree;
using reqtree::testing::Rng;

namespace {

using A = DialogueAct;

Slot slot(const std::string& name, const std::string& value) { return {name, discrete(value)}; }

Policy make_policy(const testing::PolicyFixture& f, PolicyMode mode, std::size_t max_rounds = 17) {
    PolicyConfig cfg;
    cfg.mode = mode;
    cfg.max_rounds = max_rounds;
    return Policy(f.models(), cfg);
}

std::vector<std::string> labels_of(const std::vector<Proposal>& props) {
    std::vector<std::string> out;
    for (const auto& p : props) out.push_back(p.label);
    return out;
}

struct Replay {
    DialogueState state;
    std::vector<json> transcript;
};

Replay replay(const Policy& policy, const std::vector<DialogAction>& script) {
    Replay r{policy.init_session("travel"), {}};
    for (const auto& a : script) {
        if (r.state.finished) break;
        r.transcript.push_back(transcript_entry(r.state.turn_count + 1, Speaker::User, a, r.state));
        auto [next, response] = policy.handle_user_action(std::move(r.state), a);
        r.state = std::move(next);
        r.transcript.push_back(transcript_entry(r.state.turn_count, Speaker::System, response, r.state));
    }
    return r;
}

}  // namespace

TEST_CASE("missing models are reported") {
    const auto f = testing::travel_fixture();
    auto m = f.models();
    m.fpmc = nullptr;
    CHECK_THROWS_AS(Policy(m, {}), Error);
    PolicyConfig global;
    global.mode = PolicyMode::GlobalTendency;
    CHECK_NOTHROW(Policy(m, global));
    m.library = nullptr;
    CHECK_THROWS_AS(Policy(m, global), Error);
}

TEST_CASE("session starts at the scenario root") {
    const auto f = testing::travel_fixture();
    const auto state = make_policy(f, PolicyMode::Pus).init_session("travel");
    CHECK(state.tree.nodes.size() == 1);
    CHECK(state.tree.node(state.tree.root).req == "travel");
    CHECK(state.tree.node(state.tree.root).status == NodeStatus::Current);
    CHECK(state.turn_count == 0);
    // Planner first (taxi), then pattern support: hotel 13, restaurant 8 * 1.2.
    CHECK(labels_of(state.candidates) == std::vector<std::string>{"taxi", "hotel", "restaurant"});
    // Global ranking from <start> has no counts, so support alone decides.
    const auto global = make_policy(f, PolicyMode::GlobalTendency).init_session("travel");
    CHECK(labels_of(global.candidates) == std::vector<std::string>{"hotel", "restaurant", "taxi"});
}

TEST_CASE("empty library ends at the first topic change") {
    auto f = testing::travel_fixture();
    f.library = PatternLibrary{};
    const Policy p = make_policy(f, PolicyMode::Pus);
    auto state = p.init_session("travel");
    CHECK(state.candidates.empty());
    auto [next, response] = p.handle_user_action(state, {A::RespVag, std::nullopt, {}});
    CHECK(next.finished);
    CHECK(response == DialogAction::general());
}

TEST_CASE("bye right away") {
    const auto f = testing::travel_fixture();
    const Policy p = make_policy(f, PolicyMode::Pus);
    auto [state, response] = p.handle_user_action(p.init_session("travel"), DialogAction::general());
    CHECK(state.finished);
    CHECK(response == DialogAction::general());
    CHECK(state.tree.nodes.size() == 1);
    CHECK_THROWS_AS(p.handle_user_action(state, DialogAction::general()), Error);
}

TEST_CASE("a cheap hotel statement") {
    const auto f = testing::travel_fixture();
    const Policy p = make_policy(f, PolicyMode::Pus);
    auto [state, response] = p.handle_user_action(p.init_session("travel"), {A::StateIn, "hotel", {slot("price", "cheap")}});
    const auto ids = find_by_label(state.tree, "hotel");
    REQUIRE(ids.size() == 1);
    CHECK(parent_of(state.tree, ids[0]) == std::optional<NodeId>(state.tree.root));
    CHECK(state.tree.node(ids[0]).find_slot("price")->value == discrete("cheap"));
    CHECK(state.preferences.find("hotel", "price", discrete("cheap"))->freq == 2);
    // Nothing left to ask about hotel, so the planner's next requirement is proposed.
    CHECK(response == DialogAction{A::QuesRec, "taxi", {}});
}

TEST_CASE("golden transcript") {
    const auto f = testing::travel_fixture();
    const Policy p = make_policy(f, PolicyMode::Pus);
    const std::vector<DialogAction> script = {{A::StateIn, "hotel", {slot("price", "cheap")}},
                                              {A::RespAcc, std::nullopt, {}},
                                              {A::RespAcc, std::nullopt, {}},
                                              {A::RespAcc, std::nullopt, {slot("food", "spicy")}},
                                              DialogAction::general()};
    const auto r = replay(p, script);
    std::vector<DialogAction> system;
    for (const auto& e : r.transcript) {
        if (e.at("speaker") == "sys") system.push_back(e.at("action").get<DialogAction>());
    }
    const std::vector<DialogAction> golden = {{A::QuesRec, "taxi", {}},
                                              {A::StateOut, "taxi", {slot("car", "suv")}},
                                              {A::QuesRec, "restaurant", {slot("food", "spicy")}},
                                              DialogAction::general()};
    CHECK(system == golden);
    CHECK(r.state.finished);
    CHECK(r.state.turn_count == 4);
    CHECK(r.state.confirmed_order == std::vector<std::string>{"hotel", "taxi", "restaurant"});
    CHECK(r.state.preferences.find("restaurant", "food", discrete("spicy"))->freq == 3);

    const RTree goal = testing::tree_of({{"travel", -1}, {"hotel", 0}, {"taxi", 0}, {"restaurant", 0}});
    RTree full = goal;
    full = set_slot(std::move(full), "t1", slot("price", "cheap"));
    full = set_slot(std::move(full), "t2", slot("car", "suv"));
    full = set_slot(std::move(full), "t3", slot("food", "spicy"));
    CHECK(tree_intersection_size(full, r.state.tree) == TreeOverlap{4, 3});
    for (const auto& [id, node] : r.state.tree.nodes) CHECK(node.status == NodeStatus::Confirmed);

    // Replaying gives the identical transcript.
    const auto again = replay(p, script);
    CHECK(json(again.transcript).dump() == json(r.transcript).dump());
}

TEST_CASE("global tendency picks the pooled favourite") {
    const auto f = testing::travel_fixture();
    const Policy pus = make_policy(f, PolicyMode::Pus);
    const Policy global = make_policy(f, PolicyMode::GlobalTendency);
    const DialogAction hotel{A::StateIn, "hotel", {slot("price", "cheap")}};
    CHECK(pus.handle_user_action(pus.init_session("travel"), hotel).second.req == "taxi");
    auto [state, response] = global.handle_user_action(global.init_session("travel"), hotel);
    CHECK(response == DialogAction{A::QuesRec, "restaurant", {}});
    // No preference learning in the baseline.
    CHECK(state.preferences.size() == 0);
}

TEST_CASE("topic change detection") {
    const auto f = testing::travel_fixture();
    PolicyConfig cfg;
    cfg.slot_budget_per_requirement = 2;
    const Policy p(f.models(), cfg);
    auto state = p.init_session("travel");
    // Taxi accepted; the system offers car=suv.
    state = p.handle_user_action(state, {A::StateIn, "hotel", {slot("price", "cheap")}}).first;
    state = p.handle_user_action(state, {A::RespAcc, std::nullopt, {}}).first;
    REQUIRE(state.last_system->da == A::StateOut);
    const NodeId taxi = *state.current_node;
    CHECK(p.open_slot_names(state, taxi) == std::vector<std::string>{"car"});

    CHECK_FALSE(p.detect_topic_change(state, {A::RespVag, std::nullopt, {}}));
    CHECK_FALSE(p.detect_topic_change(state, {A::StateIn, "taxi", {}}));
    CHECK(p.detect_topic_change(state, {A::StateIn, "hotel", {}}));
    // Answering the last open name finishes the topic.
    CHECK(p.detect_topic_change(state, {A::StateIn, "taxi", {slot("car", "sedan")}}));

    // Two questions asked and answered vaguely: the budget of two is spent.
    state = p.handle_user_action(state, {A::RespVag, std::nullopt, {}}).first;
    CHECK(state.questions.at(taxi) == 2);
    CHECK(p.detect_topic_change(state, {A::RespVag, std::nullopt, {}}));
}

TEST_CASE("candidates empty finishes on advance") {
    auto f = testing::travel_fixture();
    f.library = PatternLibrary{};
    const Policy p = make_policy(f, PolicyMode::Pus);
    const auto state = p.advance_topic(p.init_session("travel"));
    CHECK(state.finished);
    CHECK(state.last_system == DialogAction::general());
}

TEST_CASE("property: masks, round cap and user-confirmed nodes") {
    const auto f = testing::travel_fixture();
    const std::set<A> allowed = {A::StateOut, A::QuesSelect, A::QuesRec, A::QuesReq, A::RespAcc, A::RespDeny, A::General};
    const std::vector<std::string> labels = {"hotel", "restaurant", "taxi", "spa", "metro"};
    const std::vector<Slot> slots = {slot("price", "cheap"), slot("car", "suv"), slot("food", "spicy"), slot("area", "east")};
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const PolicyMode mode = trial % 2 ? PolicyMode::Pus : PolicyMode::GlobalTendency;
        const Policy p = make_policy(f, mode, 1 + testing::pick(rng, 17));
        auto state = p.init_session("travel");
        std::set<std::string> confirmed_by_user;
        std::optional<std::string> proposed;
        while (!state.finished) {
            DialogAction a;
            const auto kind = testing::pick(rng, 10);
            if (kind < 3) {
                a = {A::StateIn, labels[testing::pick(rng, labels.size())], {}};
                if (testing::pick(rng, 2)) a.slots.push_back(slots[testing::pick(rng, slots.size())]);
            } else if (kind < 5) {
                a = {A::RespAcc, std::nullopt, {}};
            } else if (kind < 6) {
                a = {A::RespDeny, std::nullopt, {}};
            } else if (kind < 8) {
                a = {A::RespVag, std::nullopt, {}};
            } else if (kind < 9) {
                a = {A::QuesReq, std::nullopt, {}};
            } else {
                a = DialogAction::general();
            }
            if (a.da == A::StateIn) confirmed_by_user.insert(*a.req);
            if (a.da == A::RespAcc && proposed) confirmed_by_user.insert(*proposed);
            auto [next, response] = p.handle_user_action(std::move(state), a);
            state = std::move(next);
            CHECK(allowed.count(response.da) == 1);
            proposed.reset();
            if (response.da == A::QuesRec) proposed = response.req;
        }
        CHECK(state.turn_count <= p.config().max_rounds);
        CHECK(is_valid(state.tree));
        for (const auto& [id, node] : state.tree.nodes) {
            CHECK(node.status == NodeStatus::Confirmed);
            if (id != state.tree.root) CHECK(confirmed_by_user.count(node.req) == 1);
        }
    }
}
