#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "reqtree/harness.hpp"
#include "support.hpp"

using namespace reqtree;
using reqtree::testing::Rng;
using reqtree::testing::tree_of;

namespace {

using A = DialogueAct;

PopulationConfig tiny_population(std::size_t users, std::size_t goals) {
    PopulationConfig cfg;
    cfg.num_users = users;
    cfg.goals_per_user = goals;
    cfg.dialogues_per_user = 12;
    cfg.test_dialogues_per_user = 2;
    cfg.seed = 11;
    return cfg;
}

TrainingOptions quick_training() {
    TrainingOptions t;
    t.fpmc.epochs = 40;
    return t;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("reqtree_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("session scores") {
    const RTree goal = tree_of({{"travel", -1}, {"hotel", 0}, {"restaurant", 0}, {"taxi", 0}, {"duck", 2}});
    auto s = score_session(goal, goal);
    CHECK(s.node.p == 1.0);
    CHECK(s.node.r == 1.0);
    CHECK(s.node.f1 == 1.0);
    CHECK(s.slot.f1 == 1.0);

    const RTree four = tree_of({{"travel", -1}, {"hotel", 0}, {"restaurant", 0}, {"duck", 2}});
    s = score_session(goal, four);
    CHECK(s.node.p == 1.0);
    CHECK(s.node.r == doctest::Approx(0.8));
    CHECK(s.node.f1 == doctest::Approx(16.0 / 18.0));

    // Slots count alongside nodes: goal has 5 nodes + 1 slot, generated matches 5 + 0.
    const RTree with_slot = set_slot(goal, "t1", {"price", discrete("cheap")});
    s = score_session(with_slot, goal);
    CHECK(s.slot.p == 1.0);
    CHECK(s.slot.r == doctest::Approx(5.0 / 6.0));

    const RTree other = tree_of({{"city", -1}});
    s = score_session(goal, other);
    CHECK(s.node.p == 0.0);
    CHECK(s.node.f1 == 0.0);
    CHECK(f1_of(0, 0) == 0.0);
}

TEST_CASE("property: f1 matches its own p and r") {
    Rng rng(61);
    const std::vector<std::string> labels = {"travel", "hotel", "restaurant", "taxi"};
    for (int trial = 0; trial < 500; ++trial) {
        const RTree a = testing::random_tree(rng, 7, labels);
        const RTree b = testing::random_tree(rng, 7, labels);
        const auto s = score_session(a, b);
        for (const auto& prf : {s.node, s.slot}) {
            CHECK(prf.p >= 0.0);
            CHECK(prf.p <= 1.0);
            CHECK(prf.r <= 1.0);
            const double expected = prf.p + prf.r > 0 ? 2 * prf.p * prf.r / (prf.p + prf.r) : 0.0;
            CHECK(std::abs(prf.f1 - expected) <= 1e-12);
        }
    }
}

TEST_CASE("aggregation by goal size") {
    auto result = [](std::size_t nodes, std::size_t rounds, bool ok, double r) {
        SessionResult s;
        std::vector<std::pair<std::string, int>> spec = {{"travel", -1}};
        for (std::size_t i = 1; i < nodes; ++i) spec.push_back({"x" + std::to_string(i), 0});
        s.goal = tree_of(spec);
        s.rounds = rounds;
        s.success = ok;
        s.score.node = {1.0, r, f1_of(1.0, r)};
        s.score.slot = s.score.node;
        return s;
    };
    const std::vector<SessionResult> rs = {result(2, 4, true, 1.0), result(3, 6, false, 0.5), result(9, 17, false, 0.25)};
    const auto report = aggregate(rs, {2, 4, 6, 8});
    REQUIRE(report.modes.size() == 1);
    const auto& m = report.modes[0];
    REQUIRE(m.buckets.size() == 4);
    CHECK(m.buckets[0].label == "2-3");
    CHECK(m.buckets[0].count == 2);
    CHECK(m.buckets[0].avg_rounds == doctest::Approx(5.0));
    CHECK(m.buckets[0].success_rate == doctest::Approx(0.5));
    CHECK(m.buckets[0].node.r == doctest::Approx(0.75));
    CHECK(m.buckets[0].node.f1 == doctest::Approx(f1_of(1.0, 0.75)));
    CHECK(m.buckets[1].count == 0);
    CHECK(m.buckets[3].label == "8+");
    CHECK(m.buckets[3].count == 1);
    CHECK(m.overall.count == 3);
    CHECK(format_report(report).find("8+") != std::string::npos);
}

TEST_CASE("macro f1 by hand") {
    // Ques_req: tp 1 fp 1 fn 0 -> 2/3; State_out: tp 1 fn 1 -> 2/3.
    CHECK(macro_f1({A::QuesReq, A::StateOut, A::StateOut}, {A::QuesReq, A::QuesReq, A::StateOut}) ==
          doctest::Approx(2.0 / 3.0));
    CHECK(macro_f1({A::General}, {A::General}) == 1.0);
    CHECK_THROWS_AS(macro_f1({A::General}, {}), Error);
}

TEST_CASE("experiment spec parsing") {
    const auto spec = parse_experiment(json::parse(R"({"seed": 4, "modes": ["pus"], "policy": {"max_rounds": 9},
        "population": {"num_users": 3}, "training": {"fpmc": {"epochs": 5}}, "bucket_edges": [2, 5]})"));
    CHECK(spec.population.seed == 4);
    CHECK(spec.population.num_users == 3);
    CHECK(spec.modes == std::vector<PolicyMode>{PolicyMode::Pus});
    CHECK(spec.policy.max_rounds == 9);
    CHECK(spec.training.fpmc.epochs == 5);
    CHECK(experiment_to_json(parse_experiment(experiment_to_json(spec))) == experiment_to_json(spec));

    for (const char* bad : {R"([1, 2])", R"({"modes": []})", R"({"modes": ["fancy"]})", R"({"bucket_edges": [4, 2]})",
                            R"({"policy": {"max_rounds": 0}})", R"({"seed": "x"})",
                            R"({"default_style": {"proactivity": 2}})"}) {
        try {
            parse_experiment(json::parse(bad));
            FAIL("accepted " << bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InvalidSpec);
        }
    }
}

TEST_CASE("one user, one goal, two modes") {
    ExperimentSpec spec;
    spec.population = tiny_population(1, 1);
    spec.training = quick_training();
    const auto out = run_experiment(spec);
    REQUIRE(out.results.size() == 2);
    CHECK(out.results[0].mode == PolicyMode::Pus);
    CHECK(out.results[1].mode == PolicyMode::GlobalTendency);
    CHECK(out.report.modes.size() == 2);
    for (const auto& r : out.results) {
        CHECK(r.finished);
        CHECK(r.rounds <= 17);
        CHECK(r.score.node.p == 1.0);
    }
    const auto dir = scratch_dir("smoke");
    write_outputs(out, dir);
    CHECK(std::filesystem::exists(dir / "results.jsonl"));
    CHECK(std::filesystem::exists(dir / "report.txt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("results do not depend on the worker count") {
    const auto pop = generate_synthetic_population(tiny_population(6, 4));
    const auto bundle = train_models(pop.corpus, quick_training(), 3);
    CHECK(json(train_models(pop.corpus, quick_training(), 1).user_ast).dump() == json(bundle.user_ast).dump());
    const auto jobs = jobs_for_population(pop, {PolicyMode::Pus, PolicyMode::GlobalTendency});
    CHECK(jobs.size() == 48);
    const auto one = results_jsonl(run_sessions(bundle, jobs, {}, 1));
    CHECK(one == results_jsonl(run_sessions(bundle, jobs, {}, 4)));
    CHECK(one == results_jsonl(run_sessions(bundle, jobs, {}, 0)));
}

TEST_CASE("completed sessions have precision one and success matches its definition") {
    const auto pop = generate_synthetic_population(tiny_population(8, 5));
    const auto bundle = train_models(pop.corpus, quick_training());
    for (const auto& r : run_sessions(bundle, jobs_for_population(pop, {PolicyMode::Pus, PolicyMode::GlobalTendency}), {}, 0)) {
        CHECK(r.finished);
        CHECK(r.score.node.p == 1.0);
        CHECK(r.rounds <= 17);
        const bool all = tree_intersection_size(r.goal, r.generated).node_overlap == r.goal.nodes.size();
        CHECK(r.success == all);
    }
}

TEST_CASE("session transcript") {
    const auto pop = generate_synthetic_population(tiny_population(1, 1));
    const auto bundle = train_models(pop.corpus, quick_training());
    const auto jobs = jobs_for_population(pop, {PolicyMode::Pus});
    const Policy p(policy_models(bundle, PolicyMode::Pus, jobs[0].user_id), {});
    std::vector<json> transcript;
    const auto r = run_session(p, jobs[0], &transcript);
    CHECK(transcript.size() == 2 * r.rounds);
    CHECK(transcript.front().at("speaker") == "usr");
    CHECK(transcript.back().at("state").at("finished") == true);
}

TEST_CASE("models round trip through disk") {
    const auto pop = generate_synthetic_population(tiny_population(3, 1));
    const auto bundle = train_models(pop.corpus, quick_training());
    const auto dir = scratch_dir("models");
    save_models(bundle, dir);
    const auto back = load_models(dir);
    CHECK(back.fpmc == bundle.fpmc);
    CHECK(json(back.library).dump() == json(bundle.library).dump());
    CHECK(back.preferences == bundle.preferences);
    CHECK(json(back.user_ast).dump() == json(bundle.user_ast).dump());

    std::filesystem::remove(dir / "fpmc.json");
    std::filesystem::remove(dir / "ra.json");
    try {
        load_models(dir);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingModel);
        const std::string what = e.what();
        CHECK(what.find("fpmc.json") != std::string::npos);
        CHECK(what.find("ra.json") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("corpus goals become jobs") {
    const Corpus c = load_corpus(std::string(REQTREE_FIXTURES) + "/small_corpus.jsonl");
    const auto jobs = jobs_for_corpus(c, {}, {PolicyMode::Pus});
    REQUIRE(jobs.size() == 3);
    for (const auto& j : jobs) CHECK_NOTHROW(build_agenda(j.goal.goal, j.goal.order));
    // bob's dialogue never confirms attraction, so the order falls back to the goal's preorder.
    CHECK(jobs[2].goal.order == std::vector<std::string>{"attraction", "ticket"});
}
