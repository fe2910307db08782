#include <doctest.h>

#include <cmath>
#include <set>

#include "convexdp/stopping.hpp"
#include "helpers.hpp"

using namespace cdp;

namespace {

ScenarioTree binary() {
    return validate_tree({{"r", std::nullopt, 0, 1.0, std::nullopt}, {"a", "r", 1, 0.5, std::nullopt}, {"b", "r", 1, 0.5, std::nullopt}});
}

ScenarioTree chain(int T) {
    std::vector<RawNode> raw{{"n0", std::nullopt, 0, 1.0, std::nullopt}};
    for (int t = 1; t <= T; ++t) raw.push_back({"n" + std::to_string(t), "n" + std::to_string(t - 1), t, 1.0, std::nullopt});
    return validate_tree(raw);
}

AdaptedProcess<double> random_reward(gen::Rng& rng, const ScenarioTree& tree) {
    std::uniform_int_distribution<int> U(-4, 8);
    AdaptedProcess<double> R(tree, 0, tree.horizon(), 0.0);
    for (NodeIndex i = 0; i < tree.size(); ++i) R[i] = U(rng) / 2.0;
    return R;
}

}  // namespace

TEST_CASE("snell envelope examples") {
    auto tree = binary();
    AdaptedProcess<double> c(tree, 0, 1, 2.0);
    auto S = snell(tree, c);
    for (NodeIndex i = 0; i < 3; ++i) CHECK(S[i] == 2.0);
    auto rule = optimal_stop(tree, c, S);
    CHECK(rule.stop_set(tree) == std::vector<NodeIndex>{0});
    CHECK(stopping_value(tree, c, rule) == 2.0);

    AdaptedProcess<double> neg(tree, 0, 1, -1.0);
    auto Z = snell(tree, neg);
    for (NodeIndex i = 0; i < 3; ++i) CHECK(Z[i] == 0.0);
    CHECK(optimal_stop(tree, neg, Z).stop_set(tree).empty());

    AdaptedProcess<double> R(tree, 0, 1, 0.0);
    R[0] = 1.0;
    R[tree.index_of("a")] = 0.0;
    R[tree.index_of("b")] = 3.0;
    auto T = snell(tree, R);
    CHECK(T[tree.index_of("a")] == 0.0);
    CHECK(T[tree.index_of("b")] == 3.0);
    CHECK(T[0] == 1.5);
    auto opt = optimal_stop(tree, R, T);
    CHECK_FALSE(opt.stop[0]);
    auto set = opt.stop_set(tree);
    CHECK(std::find(set.begin(), set.end(), tree.index_of("b")) != set.end());
    CHECK(stopping_value(tree, R, opt) == 1.5);
    CHECK(is_optimal_rule(tree, R, T, opt));
}

TEST_CASE("enumeration counts") {
    auto one = validate_tree({{"r", std::nullopt, 0, 1.0, std::nullopt}});
    int n = 0;
    enumerate_stopping_times(one, [&](const StoppingTime&) { ++n; });
    CHECK(n == 2);
    n = 0;
    enumerate_stopping_times(binary(), [&](const StoppingTime&) { ++n; });
    CHECK(n == 5);
    CHECK(count_stopping_times(binary()) == 5.0);
    // Along a chain the only choice is the stopping stage or never.
    for (int T = 0; T <= 6; ++T) {
        n = 0;
        enumerate_stopping_times(chain(T), [&](const StoppingTime&) { ++n; });
        CHECK(n == T + 2);
        CHECK(count_stopping_times(chain(T)) == T + 2);
    }
    // Distinct rules are distinct stop sets.
    auto tree = testing::uniform_tree(2, 2);
    std::set<std::vector<NodeIndex>> seen;
    enumerate_stopping_times(tree, [&](const StoppingTime& r) { seen.insert(r.stop_set(tree)); });
    CHECK(seen.size() == 26);
    CHECK(count_stopping_times(tree) == 26.0);
    CHECK_THROWS_WITH_AS(enumerate_stopping_times(testing::uniform_tree(6, 2), [](const StoppingTime&) {}),
                         doctest::Contains("TreeTooLarge"), Error);
}

TEST_CASE("three-way agreement and supermartingale properties") {
    gen::Rng rng(31);
    for (int rep = 0; rep < 15; ++rep) {
        auto tree = testing::random_tree(rng, 3, 2);
        auto R = random_reward(rng, tree);
        auto S = snell(tree, R);
        auto cont = continuation_values(tree, S);
        for (NodeIndex i = 0; i < tree.size(); ++i) {
            CHECK(S[i] >= std::max(R[i], 0.0));
            CHECK(cont[i] <= S[i]);
        }
        auto rule = optimal_stop(tree, R, S);
        CHECK(is_optimal_rule(tree, R, S, rule));
        auto [best, arg] = enumerate_best(tree, R);
        CHECK(std::fabs(best - S[tree.root()]) <= 1e-12);
        auto sol = ros_as_bellman(tree, R);
        CHECK(std::fabs(-sol.value - S[tree.root()]) <= 1e-10);
        auto ext = ros_extreme_rule(sol);
        CHECK(std::fabs(stopping_value(tree, R, ext) - S[tree.root()]) <= 1e-10);
        // Closed form of h_t at probe points of the simplex.
        for (NodeIndex i = 0; i < tree.size(); ++i) {
            const std::size_t len = static_cast<std::size_t>(tree.stage(i)) + 1;
            for (int k = 0; k < 3; ++k) {
                auto x = gen::random_vector(rng, len, 0.0, 1.0);
                double s = 0.0;
                for (double v : x) s += v;
                for (double& v : x) v /= (s * (1.0 + k));
                CHECK(std::fabs(eval(sol.nodes[i].local, x) - ros_closed_form(tree, R, S, i, x)) <= 1e-10);
            }
        }
    }
}

TEST_CASE("minimality against repaired supermartingales") {
    gen::Rng rng(7);
    std::uniform_real_distribution<double> U(0.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        auto tree = testing::random_tree(rng, 3, 3);
        auto R = random_reward(rng, tree);
        auto S = snell(tree, R);
        // Random candidate, repaired bottom-up to dominate R+ and be a supermartingale.
        AdaptedProcess<double> C(tree, 0, tree.horizon(), 0.0);
        for (NodeIndex i = tree.size(); i-- > 0;) {
            double cont = 0.0;
            for (NodeIndex c : tree.children(i)) cont += tree.cond_prob<double>(c) * C[c];
            C[i] = std::max({R[i], 0.0, cont}) + U(rng);
        }
        for (NodeIndex i = 0; i < tree.size(); ++i) CHECK(C[i] >= S[i]);
    }
}

TEST_CASE("relaxation with nonpositive rewards stays at zero") {
    auto tree = testing::uniform_tree(2, 2);
    AdaptedProcess<double> R(tree, 0, 2, -1.0);
    auto sol = ros_as_bellman(tree, R);
    CHECK(sol.value == doctest::Approx(0.0));
    auto rule = ros_extreme_rule(sol);
    CHECK(rule.stop_set(tree).empty());
}

TEST_CASE("markov tables") {
    // i.i.d. rewards: every stage-t node sees the same values.
    auto tree = testing::uniform_tree(3, 2);
    AdaptedProcess<double> R(tree, 0, 3, 0.0);
    for (int t = 1; t <= 3; ++t)
        for (NodeIndex i : tree.stage_nodes(t)) R[i] = tree.id(i).back() == '0' ? 1.0 : 2.5;
    auto tab = markov_check(tree, R);
    REQUIRE(tab.psi.size() == 4);
    CHECK(tab.psi[1].size() == 2);

    // Recombining binomial walk.
    AdaptedProcess<double> W(tree, 0, 3, 0.0);
    for (NodeIndex i = 1; i < tree.size(); ++i) W[i] = W[tree.parent(i)] + (tree.id(i).back() == '0' ? 1.0 : -1.0);
    auto wt = markov_check(tree, W);
    CHECK(wt.psi[2].size() == 3);
    CHECK(wt.psi[3].size() == 4);

    // Path-dependent reward.
    AdaptedProcess<double> P(tree, 0, 3, 0.0);
    P[tree.index_of("r.0")] = 1.0;
    P[tree.index_of("r.1")] = 1.0;
    P[tree.index_of("r.0.0")] = 5.0;
    try {
        (void)markov_check(tree, P);
        FAIL("expected NotMarkov");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotMarkov);
        CHECK(e.node().has_value());
    }
}
