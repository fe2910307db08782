#include <doctest.h>

#include <cmath>
#include <random>

#include "convexdp/tree.hpp"
#include "helpers.hpp"

using namespace cdp;

namespace {

std::vector<RawNode> binary_raw(double p0, double p1) {
    return {{"root", std::nullopt, 0, 1.0, std::nullopt},
            {"up", "root", 1, p0, std::nullopt},
            {"down", "root", 1, p1, std::nullopt}};
}

ErrorCode code_of(const std::vector<RawNode>& raw) {
    try {
        (void)validate_tree(raw);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a validation error");
    return ErrorCode::Parse;
}

}  // namespace

TEST_CASE("validate_tree accepts a minimal binary tree") {
    auto tree = validate_tree(binary_raw(0.5, 0.5));
    CHECK(tree.size() == 3);
    CHECK(tree.horizon() == 1);
    CHECK(tree.children(tree.root()).size() == 2);
    CHECK(tree.probability(tree.index_of("up")) == doctest::Approx(0.5));
}

TEST_CASE("validate_tree rejects broken inputs") {
    CHECK(code_of(binary_raw(0.5, 0.6)) == ErrorCode::ProbabilityMass);

    auto raw = binary_raw(0.5, 0.5);
    raw.push_back({"x", "up", 3, 1.0, std::nullopt});
    CHECK(code_of(raw) == ErrorCode::StageGap);

    raw = binary_raw(0.5, 0.5);
    raw.push_back({"x", "nowhere", 2, 1.0, std::nullopt});
    CHECK(code_of(raw) == ErrorCode::OrphanNode);

    raw = binary_raw(0.5, 0.5);
    raw.push_back({"x", "up", 2, 1.0, std::nullopt});
    CHECK(code_of(raw) == ErrorCode::StageGap);  // "down" becomes an early leaf
}

TEST_CASE("exact probabilities are checked as rationals") {
    std::vector<RawNode> raw{{"r", std::nullopt, 0, 1.0, Rational(1)},
                             {"a", "r", 1, 0.0, Rational(1) / 3},
                             {"b", "r", 1, 0.0, Rational(2) / 3}};
    auto tree = validate_tree(raw);
    CHECK(tree.exact());
    CHECK(tree.probability<Rational>(tree.index_of("a")) == Rational(1) / 3);
}

TEST_CASE("cond_expect_scalar") {
    auto tree = validate_tree(binary_raw(0.5, 0.5));
    AdaptedProcess<double> p(tree, 1, 1);
    p[tree.index_of("up")] = 2.0;
    p[tree.index_of("down")] = 4.0;
    auto e = cond_expect_scalar(tree, p, 1, 0);
    CHECK(e[tree.root()] == doctest::Approx(3.0));
    CHECK_THROWS_AS((void)cond_expect_scalar(tree, p, 0, 1), Error);

    // Single-child chain keeps the value.
    std::vector<RawNode> chain{{"a", std::nullopt, 0, 1.0, std::nullopt},
                               {"b", "a", 1, 1.0, std::nullopt},
                               {"c", "b", 2, 1.0, std::nullopt}};
    auto ct = validate_tree(chain);
    AdaptedProcess<double> x(ct, 2, 2);
    x[ct.index_of("c")] = 7.25;
    CHECK(cond_expect_scalar(ct, x, 2, 0)[0] == 7.25);
    CHECK(cond_expect_scalar(ct, x, 2, 1)[ct.index_of("b")] == 7.25);
}

TEST_CASE("cond_expect_scalar equals leaf summation and satisfies the tower property") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        auto tree = testing::random_tree(rng, 3, 3);
        const int T = tree.horizon();
        std::uniform_int_distribution<int> val(-20, 20);
        AdaptedProcess<Rational> p(tree, T, T);
        AdaptedProcess<double> pd(tree, T, T);
        for (NodeIndex i : tree.leaves()) {
            p[i] = Rational(val(rng)) / 7;
            pd[i] = p[i].convert_to<double>();
        }
        Rational direct(0);
        for (NodeIndex i : tree.leaves()) direct += tree.probability<Rational>(i) * p[i];
        CHECK(cond_expect_scalar(tree, p, T, 0)[0] == direct);
        CHECK(std::fabs(cond_expect_scalar(tree, pd, T, 0)[0] - direct.convert_to<double>()) <= 1e-12);
        for (int t = 0; t <= T; ++t)
            for (int t2 = 0; t2 <= t; ++t2) {
                auto inner = cond_expect_scalar(tree, p, T, t);
                auto nested = cond_expect_scalar(tree, inner, t, t2);
                auto once = cond_expect_scalar(tree, p, T, t2);
                for (NodeIndex i : tree.stage_nodes(t2)) CHECK(nested[i] == once[i]);
            }
    }
}

TEST_CASE("perp_check and martingale increments") {
    auto tree = validate_tree(binary_raw(0.5, 0.5));
    AdaptedProcess<Vec<double>> s(tree, 0, 1);
    s[tree.root()] = {1.0};
    s[tree.index_of("up")] = {1.5};
    s[tree.index_of("down")] = {0.5};
    CHECK(perp_check(tree, martingale_increments(tree, s)));

    s[tree.index_of("up")] = {2.5};
    s[tree.index_of("down")] = {1.5};
    CHECK_FALSE(perp_check(tree, martingale_increments(tree, s)));

    s[tree.index_of("up")] = {1.0};
    s[tree.index_of("down")] = {1.0};
    auto v = martingale_increments(tree, s);
    for (NodeIndex i : tree.stage_nodes(1)) CHECK(v[0][i][0] == 0.0);

    CHECK(perp_check(tree, zero_dual(tree, {1, 1})));

    DualProcess bad;
    AdaptedProcess<Vec<double>> v0(tree, 0, 0);
    v0[tree.root()] = {1.0};
    bad.push_back(v0);
    CHECK_FALSE(perp_check(tree, bad));
}

TEST_CASE("perpendicular processes have zero pairing on random trees") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 30; ++rep) {
        auto tree = testing::random_tree(rng, 3, 3);
        const int T = tree.horizon();
        DualProcess v;
        for (int t = 0; t <= T; ++t) {
            AdaptedProcess<Vec<double>> raw(tree, T, T);
            for (NodeIndex i : tree.leaves()) raw[i] = {nd(rng), nd(rng)};
            auto mean = cond_expect_vector(tree, raw, T, t);
            for (NodeIndex i : tree.leaves()) raw[i] = sub(raw[i], mean[tree.ancestor(i, t)]);
            v.push_back(raw);
        }
        REQUIRE(perp_check(tree, v));
        double ex = 0.0;
        std::vector<Vec<double>> x(tree.size());
        for (NodeIndex i = 0; i < tree.size(); ++i) x[i] = {nd(rng), nd(rng)};
        for (NodeIndex leaf : tree.leaves())
            for (int t = 0; t <= T; ++t) ex += tree.probability(leaf) * dot(x[tree.ancestor(leaf, t)], v[static_cast<std::size_t>(t)][leaf]);
        CHECK(std::fabs(ex) <= 1e-10);
    }
}

TEST_CASE("is_markov") {
    // Replicated i.i.d. values.
    auto tree = testing::uniform_tree(3, 2);
    AdaptedProcess<double> R(tree, 0, 3);
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const auto& id = tree.id(i);
        R[i] = tree.stage(i) == 0 ? 0.0 : (id.back() == '0' ? 1.0 : -1.0);
    }
    CHECK(is_markov(tree, R));

    // Random walk with recombining values.
    AdaptedProcess<double> W(tree, 0, 3);
    for (NodeIndex i = 0; i < tree.size(); ++i)
        W[i] = tree.stage(i) == 0 ? 0.0 : W[tree.parent(i)] + (tree.id(i).back() == '0' ? 1.0 : -1.0);
    CHECK(is_markov(tree, W));

    // Path dependence: the stage-2 law differs between equal stage-1 values.
    AdaptedProcess<double> P(tree, 0, 3);
    for (NodeIndex i = 0; i < tree.size(); ++i) P[i] = 0.0;
    P[tree.index_of("r.0.0")] = 5.0;
    auto verdict = markov_verdict(tree, P);
    CHECK_FALSE(verdict.markov);
    CHECK(verdict.stage == 1);
}

TEST_CASE("conditional law is constant on cells of a product tree") {
    auto tree = testing::uniform_tree(2, 2);
    AdaptedProcess<double> w(tree, 2, 2);
    for (NodeIndex i : tree.stage_nodes(2)) w[i] = tree.id(i).back() == '0' ? 3.0 : -1.0;
    std::vector<std::vector<NodeIndex>> one_cell{tree.stage_nodes(1)};
    CHECK(cells_determine_law(tree, w, 1, one_cell).markov);
    w[tree.index_of("r.1.1")] = 9.0;
    CHECK_FALSE(cells_determine_law(tree, w, 1, one_cell).markov);
    std::vector<std::vector<NodeIndex>> singletons{{tree.stage_nodes(1)[0]}, {tree.stage_nodes(1)[1]}};
    CHECK(cells_determine_law(tree, w, 1, singletons).markov);
}
