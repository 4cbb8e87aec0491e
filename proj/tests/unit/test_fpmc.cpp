#include "doctest.h"

#include <algorithm>
#include <random>

#include "reqtree/fpmc.hpp"
#include "support.hpp"

using namespace reqtree;
using reqtree::testing::Rng;

namespace {

void set_row(Matrix& m, std::size_t r, std::vector<double> v) {
    std::copy(v.begin(), v.end(), m.row(r).begin());
}

}  // namespace

TEST_CASE("zero model scores zero and ranks lexicographically") {
    const FpmcModel m = make_fpmc({"u"}, {"taxi", "hotel", "metro"}, 4);
    CHECK(m.item_index.count(kStartItem) == 1);
    CHECK(score_next(m, "u", "hotel", "taxi") == 0.0);
    CHECK(score_next(m, "nobody", kStartItem, "metro") == 0.0);
    CHECK(rank_candidates(m, "u", std::nullopt, {"taxi", "metro", "hotel"}) ==
          std::vector<std::string>{"hotel", "metro", "taxi"});
    CHECK(rank_candidates(m, "u", "hotel", {"taxi"}) == std::vector<std::string>{"taxi"});
    CHECK_THROWS_AS(make_fpmc({"u"}, {"a"}, 0), Error);
}

TEST_CASE("k = 1 scores are hand dot products") {
    FpmcModel m = make_fpmc({"u", "v"}, {"hotel", "restaurant"}, 1);
    const auto h = m.item_index.at("hotel");
    const auto r = m.item_index.at("restaurant");
    set_row(m.user_factors, m.user_index.at("u"), {2.0});
    set_row(m.user_factors, m.user_index.at("v"), {-1.0});
    set_row(m.item_user_factors, h, {0.5});
    set_row(m.item_user_factors, r, {3.0});
    set_row(m.item_prev_factors, r, {4.0});
    set_row(m.prev_item_factors, h, {0.25});

    // u: 2*3 + 4*0.25 = 7; v: -1*3 + 1 = -2; cold user: 1.
    CHECK(score_next(m, "u", "hotel", "restaurant") == doctest::Approx(7.0));
    CHECK(score_next(m, "v", "hotel", "restaurant") == doctest::Approx(-2.0));
    CHECK(score_next(m, "w", "hotel", "restaurant") == doctest::Approx(1.0));
    CHECK(score_next(m, "u", "restaurant", "hotel") == doctest::Approx(1.0));
    CHECK(rank_candidates(m, "v", "hotel", {"restaurant", "hotel"}) == std::vector<std::string>{"hotel", "restaurant"});

    CHECK_THROWS_AS(score_next(m, "u", "hotel", "spa"), Error);
    CHECK_THROWS_AS(score_next(m, "u", "spa", "hotel"), Error);
    CHECK(score_or_zero(m, "u", "hotel", "spa") == 0.0);
    // Unknown previous label drops the transition term only.
    CHECK(score_or_zero(m, "u", "spa", "restaurant") == doctest::Approx(6.0));
}

TEST_CASE("degenerate and invalid training input") {
    CHECK_THROWS_AS(train_fpmc({{"u", {{"hotel", "hotel"}}}}, {}), Error);
    TrainConfig bad;
    bad.learning_rate = 0;
    CHECK_THROWS_AS(train_fpmc({{"u", {{"hotel", "taxi"}}}}, bad), Error);
}

TEST_CASE("zero epochs leaves the random initialization") {
    const UserSequences seqs = {{"a", {{"hotel", "taxi"}}}, {"b", {{"taxi", "metro"}}}};
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.k = 3;
    cfg.seed = 99;
    const FpmcModel m = train_fpmc(seqs, cfg);
    CHECK(m.epoch_loss.empty());

    // Draws fill the four matrices in declaration order.
    std::mt19937_64 rng(99);
    std::normal_distribution<double> init(0.0, cfg.init_stddev);
    FpmcModel expected = make_fpmc({"a", "b"}, {"hotel", "taxi", "metro"}, 3);
    for (auto* mat : {&expected.user_factors, &expected.item_user_factors, &expected.item_prev_factors,
                      &expected.prev_item_factors}) {
        for (auto& v : mat->data) v = init(rng);
    }
    CHECK(m.user_factors == expected.user_factors);
    CHECK(m.item_user_factors == expected.item_user_factors);
    CHECK(m.item_prev_factors == expected.item_prev_factors);
    CHECK(m.prev_item_factors == expected.prev_item_factors);
}

TEST_CASE("same seed gives identical models") {
    const auto f = testing::opposite_chains(10, 0, 4);
    TrainConfig cfg;
    cfg.epochs = 30;
    const auto a = train_fpmc(f.train, cfg);
    const auto b = train_fpmc(f.train, cfg);
    CHECK(a == b);
    CHECK(json(a).dump() == json(b).dump());
    CHECK(json(a).get<FpmcModel>() == a);
    cfg.seed = 43;
    CHECK_FALSE(train_fpmc(f.train, cfg) == a);
}

TEST_CASE("loss falls over the first epochs") {
    const auto f = testing::opposite_chains(20, 0, 1);
    const auto m = train_fpmc(f.train, {});
    REQUIRE(m.epoch_loss.size() == 200);
    int rises = 0;
    for (std::size_t e = 1; e < 5; ++e) rises += m.epoch_loss[e] > m.epoch_loss[e - 1];
    CHECK(rises <= 1);
    CHECK(m.epoch_loss.back() < m.epoch_loss.front());
}

TEST_CASE("always hotel then restaurant") {
    UserSequences seqs;
    for (int i = 0; i < 15; ++i) {
        seqs["u"].push_back({"hotel", "restaurant", "taxi"});
        seqs["v"].push_back({"metro", "attraction", "hotel"});
    }
    const auto m = train_fpmc(seqs, {});
    const double best = score_next(m, "u", "hotel", "restaurant");
    for (const auto& x : {"taxi", "metro", "attraction", "hotel"}) CHECK(best > score_next(m, "u", "hotel", x));
}

TEST_CASE("opposite chains are recovered per user") {
    const auto f = testing::opposite_chains(20, 10, 7);
    const auto m = train_fpmc(f.train, {});
    const auto scores = testing::ranking_scores(m, f.held_out);
    CHECK(scores.auc >= 0.95);
    CHECK(scores.top1.at("A") >= 0.9);
    CHECK(scores.top1.at("B") >= 0.9);
    // After hotel the two users go different ways.
    const std::vector<std::string> after = {"restaurant", "attraction", "taxi", "metro"};
    CHECK(rank_candidates(m, "A", "hotel", after).front() == "restaurant");
    CHECK(rank_candidates(m, "B", "hotel", after).front() == "attraction");
}

TEST_CASE("ranking agrees with brute-force score sort") {
    const auto f = testing::opposite_chains(10, 0, 2);
    TrainConfig cfg;
    cfg.epochs = 20;
    const auto m = train_fpmc(f.train, cfg);
    const std::vector<std::string> items = {"attraction", "hotel", "metro", "restaurant", "taxi"};
    for (const auto& user : {"A", "B", "cold"}) {
        for (const auto& prev : items) {
            std::vector<std::pair<double, std::string>> scored;
            for (const auto& c : items) scored.emplace_back(-score_next(m, user, prev, c), c);
            std::sort(scored.begin(), scored.end());
            std::vector<std::string> expected;
            for (const auto& [s, c] : scored) expected.push_back(c);
            CHECK(rank_candidates(m, user, prev, items) == expected);
        }
    }
}

TEST_CASE("property: user term is linear in the user row") {
    Rng rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        FpmcModel m = make_fpmc({"u"}, {"a", "b", "c"}, 5);
        for (auto* mat : {&m.user_factors, &m.item_user_factors, &m.item_prev_factors, &m.prev_item_factors}) {
            for (auto& v : mat->data) v = g(rng);
        }
        const double c = g(rng);
        const double user_term = score_next(m, "u", "a", "b") - score_next(m, "cold", "a", "b");
        for (auto& v : m.user_factors.data) v *= c;
        const double scaled = score_next(m, "u", "a", "b") - score_next(m, "cold", "a", "b");
        CHECK(scaled == doctest::Approx(c * user_term).epsilon(1e-9));
    }
}

TEST_CASE("property: ranking is a permutation of its input") {
    Rng rng(18);
    const auto f = testing::opposite_chains(5, 0, 3);
    TrainConfig cfg;
    cfg.epochs = 5;
    const auto m = train_fpmc(f.train, cfg);
    const std::vector<std::string> pool = {"hotel", "taxi", "metro", "spa", "restaurant", "attraction", "bar"};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> cands;
        for (const auto& p : pool) {
            if (testing::pick(rng, 2)) cands.push_back(p);
        }
        if (cands.empty()) continue;
        auto ranked = rank_candidates(m, testing::pick(rng, 2) ? "A" : "B", pool[testing::pick(rng, pool.size())], cands);
        std::sort(ranked.begin(), ranked.end());
        std::sort(cands.begin(), cands.end());
        CHECK(ranked == cands);
    }
}

TEST_CASE("bigram ranking") {
    const UserSequences seqs = {{"a", {{"hotel", "taxi"}, {"hotel", "metro"}}}, {"b", {{"hotel", "taxi"}}}};
    const auto b = count_bigrams(seqs);
    CHECK(b.count(kStartItem, "hotel") == 3);
    CHECK(b.count("hotel", "taxi") == 2);
    CHECK(b.argmax_after("hotel") == std::optional<std::string>("taxi"));
    CHECK_FALSE(b.argmax_after("taxi").has_value());
    CHECK(rank_by_bigram(b, "hotel", {"metro", "spa", "taxi"}) == std::vector<std::string>{"taxi", "metro", "spa"});
    CHECK(json(b).get<RequirementBigram>().counts == b.counts);
}
