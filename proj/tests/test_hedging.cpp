#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "convexdp/extensive.hpp"
#include "convexdp/hedging.hpp"
#include "helpers.hpp"

using namespace cdp;

namespace {

/// One period, one asset, s_0 = 1 and the given terminal prices.
MarketModel one_period(const std::vector<double>& s1, const std::vector<double>& probs) {
    std::vector<RawNode> raw{{"r", std::nullopt, 0, 1.0, std::nullopt}};
    std::vector<Vec<double>> s{{1.0}};
    for (std::size_t k = 0; k < s1.size(); ++k) {
        raw.push_back({"r." + std::to_string(k), "r", 1, probs[k], std::nullopt});
        s.push_back({s1[k]});
    }
    return make_market(validate_tree(raw), s);
}

/// Brute-force E V(c - w - gains) over all trading-node positions by
/// coordinate descent with golden-section line searches.
double direct_hedge_value(const MarketModel& m, const LossFn& V, double w) {
    const auto& tree = m.tree;
    std::vector<NodeIndex> nodes;
    for (NodeIndex i = 0; i < tree.size(); ++i)
        if (!tree.is_leaf(i)) nodes.push_back(i);
    std::vector<double> x(nodes.size(), 0.0);
    auto objective = [&](const std::vector<double>& pos) {
        std::vector<double> xi(tree.size(), 0.0);
        for (std::size_t k = 0; k < nodes.size(); ++k) xi[nodes[k]] = pos[k];
        double acc = 0.0;
        for (NodeIndex leaf : tree.leaves()) {
            double gains = 0.0;
            for (NodeIndex k = leaf; k != tree.root(); k = tree.parent(k))
                gains += xi[tree.parent(k)] * (m.s[k][0] - m.s[tree.parent(k)][0]);
            acc += tree.probability(leaf) * V(m.c[leaf] - w - gains);
        }
        return acc;
    };
    double cur = objective(x);
    for (int sweep = 0; sweep < 500; ++sweep) {
        const double before = cur;
        for (std::size_t k = 0; k < x.size(); ++k) {
            double a = x[k] - 20.0, b = x[k] + 20.0;
            const double g = 0.6180339887498949;
            for (int it = 0; it < 200; ++it) {
                double c1 = b - g * (b - a), c2 = a + g * (b - a);
                auto y1 = x, y2 = x;
                y1[k] = c1;
                y2[k] = c2;
                if (objective(y1) <= objective(y2))
                    b = c2;
                else
                    a = c1;
            }
            auto y = x;
            y[k] = 0.5 * (a + b);
            if (double f = objective(y); f < cur) {
                x = y;
                cur = f;
            }
        }
        if (before - cur < 1e-14) break;
    }
    return cur;
}

}  // namespace

TEST_CASE("no-arbitrage verdicts") {
    auto up = one_period({2.0, 3.0}, {0.5, 0.5});
    auto v = na_check(up);
    CHECK_FALSE(v.pass);
    CHECK(v.optimum > 0.5);
    CHECK(v.direction[0][0] > 0.0);
    for (double g : v.gains) CHECK(g >= -1e-12);

    // Martingale measure: 0.5 q + 2 (1 - q) = 1 at q = 2/3.
    const double q = 2.0 / 3.0;
    CHECK(0.5 * q + 2.0 * (1.0 - q) == doctest::Approx(1.0));
    for (double p : {0.1, 0.5, 0.9}) CHECK(na_check(one_period({0.5, 2.0}, {p, 1.0 - p})).pass);

    gen::Rng rng(7);
    for (int k = 0; k < 10; ++k) {
        auto m = gen::random_market(rng, gen::random_tree(rng, 3, 3), 1 + static_cast<std::size_t>(k % 2));
        CHECK(na_check(m).pass);
    }
}

TEST_CASE("shrinking constraint sets never creates arbitrage") {
    gen::Rng rng(19);
    std::uniform_real_distribution<double> U(-1, 1);
    int fails = 0;
    for (int k = 0; k < 20; ++k) {
        auto tree = gen::random_tree(rng, 2, 3);
        // Uncentred returns: arbitrage is possible.
        std::vector<Vec<double>> s(tree.size(), Vec<double>(2, 1.0));
        for (NodeIndex i = 1; i < tree.size(); ++i)
            for (std::size_t j = 0; j < 2; ++j) s[i][j] = s[tree.parent(i)][j] * (1.0 + 0.3 * U(rng) + 0.05);
        auto m = make_market(tree, s);
        bool prev = na_check(m).pass;
        fails += prev ? 0 : 1;
        for (int round = 0; round < 4; ++round) {
            for (NodeIndex i = 0; i < tree.size(); ++i) {
                if (tree.is_leaf(i)) continue;
                m.D[i].A.append_row(gen::random_vector(rng, 2));
                m.D[i].b.push_back(0.5);
            }
            bool now = na_check(m).pass;
            CHECK((!prev || now));
            prev = now;
        }
    }
    CHECK(fails > 0);
}

TEST_CASE("quadratic hedging matches the two-variable oracle") {
    auto m = one_period({0.5, 2.0}, {0.5, 0.5});
    m.c = {0.0, 0.0, 1.5};
    auto V = quadratic_loss(1.0);
    auto res = solve_alm(m, V, 0.0);
    // min_U sum_k 1/2 (c_k - R_k U)^2 in closed form.
    const double R[] = {-0.5, 1.0}, c[] = {0.0, 1.5};
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 2; ++k) num += 0.5 * c[k] * R[k], den += 0.5 * R[k] * R[k];
    const double U = num / den;
    double val = 0.0;
    for (int k = 0; k < 2; ++k) val += 0.5 * (c[k] - R[k] * U) * (c[k] - R[k] * U);
    CHECK(std::fabs(res.U[0][0] - U) <= 1e-8);
    CHECK(std::fabs(res.value - val) <= 1e-8);
    CHECK(std::fabs(res.positions[0][0] - U) <= 1e-8);

    auto sys = alm_system(m);
    auto ext = solve_extensive(flatten(to_stage_problem(sys, alm_costs(m, V, 0.0), Vec<double>{0.0})));
    CHECK(std::fabs(ext.value - val) <= 1e-8);
}

TEST_CASE("nothing to hedge on martingale markets") {
    gen::Rng rng(29);
    for (int k = 0; k < 5; ++k) {
        auto m = gen::random_market(rng, gen::uniform_tree(2, 2), 1);
        auto res = solve_alm(m, quadratic_loss(1.0), 0.0);
        CHECK(std::fabs(res.value) <= 1e-10);
        for (const auto& u : res.U) CHECK(std::fabs(u[0]) <= 1e-8);
    }
}

TEST_CASE("piecewise-linear loss with position limits; value nonincreasing in wealth") {
    auto m = gen::binomial_market(2, 1.0, 1.25, 0.8, 0.5);
    for (NodeIndex i = 0; i < m.tree.size(); ++i) {
        m.c[i] = m.tree.is_leaf(i) ? std::max(m.s[i][0] - 1.0, 0.0) : 0.0;
        if (!m.tree.is_leaf(i)) {
            m.D[i].A = Mat<double>{{1.0}, {-1.0}};
            m.D[i].b = {2.0, 2.0};
        }
    }
    auto V = piecewise_linear_loss({0.0, 1.0, 3.0}, {0.0, 0.0, -0.2});
    double prev = inf();
    for (double w : {-0.2, 0.0, 0.05, 0.1, 0.3}) {
        auto res = solve_alm(m, V, w);
        CHECK(res.value <= prev + 1e-10);
        prev = res.value;
        auto ext = solve_extensive(flatten(to_stage_problem(alm_system(m), alm_costs(m, V, w), Vec<double>{w})));
        CHECK(std::fabs(ext.value - res.value) <= 1e-8);
        for (NodeIndex i = 0; i < m.tree.size(); ++i) CHECK(std::fabs(res.positions[i][0]) <= 2.0 + 1e-9);
    }
}

TEST_CASE("arbitrage refusal") {
    auto up = one_period({2.0, 3.0}, {0.5, 0.5});
    CHECK_THROWS_AS((void)solve_alm(up, quadratic_loss(1.0), 0.0), Error);
    try {
        (void)solve_alm(up, quadratic_loss(1.0), 0.0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ArbitrageRefusal);
    }
}

TEST_CASE("wealth-grid driver against direct minimization") {
    auto m = gen::binomial_market(2, 1.0, 1.2, 0.9, 0.4);
    for (NodeIndex leaf : m.tree.leaves()) m.c[leaf] = std::max(m.s[leaf][0] - 1.0, 0.0);
    auto V = custom_loss("hyperbolic", [](double u) { return u + std::sqrt(1.0 + u * u); });
    GridOptions opt;
    opt.lo = -6.0;
    opt.hi = 6.0;
    opt.points = 2401;
    auto res = solve_alm_grid(m, V, 0.1, opt);
    const double direct = direct_hedge_value(m, V, 0.1);
    CHECK(std::fabs(res.value - direct) <= 1e-4 * std::fabs(direct));
    // Quadratic loss: grid agrees with the exact recursion.
    auto exact = solve_alm(m, quadratic_loss(1.0), 0.1);
    auto grid = solve_alm_grid(m, quadratic_loss(1.0), 0.1, opt);
    CHECK(std::fabs(grid.value - exact.value) <= 1e-4 * (1.0 + std::fabs(exact.value)));
}

TEST_CASE("exponential utility: two-point closed forms") {
    auto sym = one_period({0.7, 1.3}, {0.5, 0.5});
    auto r0 = exp_utility(sym, 1.0);
    CHECK(std::fabs(r0.U[0][0]) <= 1e-10);

    const double e = std::exp(1.0);
    auto m = one_period({0.5, 1.5}, {1.0 / (1.0 + e), e / (1.0 + e)});
    auto r1 = exp_utility(m, 1.0);
    CHECK(std::fabs(r1.U[0][0] - 1.0) <= 1e-8);
    // e^{2 rho r U} = p / (1 - p) for general rho.
    auto r2 = exp_utility(m, 2.5);
    CHECK(std::fabs(r2.U[0][0] - 1.0 / 2.5) <= 1e-8);

    // J_0(w) = E V(c - X_T) along the policy.
    m.c = {0.0, 0.3, -0.2};
    auto r3 = exp_utility(m, 1.5);
    const double w = 0.4;
    double direct = 0.0;
    for (NodeIndex leaf : m.tree.leaves()) {
        double XT = w + m.returns(leaf)[0] * r3.U[0][0];
        direct += m.tree.probability(leaf) * std::exp(1.5 * (m.c[leaf] - XT)) / 1.5;
    }
    CHECK(r3.J(0, w) == doctest::Approx(direct).epsilon(1e-12));

    CHECK_THROWS_AS((void)exp_utility(one_period({2.0, 3.0}, {0.5, 0.5}), 1.0), Error);
}

TEST_CASE("exponential utility: wealth independence and scale covariance") {
    gen::Rng rng(31);
    auto m = gen::random_market(rng, gen::uniform_tree(2, 3), 2);
    for (NodeIndex leaf : m.tree.leaves()) m.c[leaf] = 0.3 * m.s[leaf][0];
    auto r = exp_utility(m, 1.3);
    for (NodeIndex i = 0; i < m.tree.size(); ++i) {
        if (m.tree.is_leaf(i)) continue;
        for (int k = 0; k <= 20; ++k) {
            const double X = -5.0 + 0.5 * k;
            auto U = exp_wealth_argmin(m, r, i, X);
            for (std::size_t j = 0; j < 2; ++j) CHECK(std::fabs(U[j] - r.U[i][j]) <= 1e-8);
        }
    }

    // Deterministic c: doubling it scales alpha_T by exp(rho c) and keeps the argmin.
    auto base = gen::random_market(rng, gen::uniform_tree(2, 2), 1);
    for (NodeIndex leaf : base.tree.leaves()) base.c[leaf] = 0.4;
    auto twice = base;
    for (NodeIndex leaf : twice.tree.leaves()) twice.c[leaf] = 0.8;
    auto a = exp_utility(base, 2.0), b = exp_utility(twice, 2.0);
    for (NodeIndex i = 0; i < base.tree.size(); ++i) {
        if (base.tree.is_leaf(i))
            CHECK(b.alpha[i] == doctest::Approx(a.alpha[i] * std::exp(2.0 * 0.4)).epsilon(1e-12));
        else
            CHECK(std::fabs(a.U[i][0] - b.U[i][0]) <= 1e-8);
    }
}

TEST_CASE("exponential utility: Gaussian returns") {
    const double mu = 0.05, sigma = 0.2, rho = 2.0;
    boost::math::normal_distribution<double> N(mu, sigma);
    std::vector<double> s1, probs;
    for (int k = 0; k < 101; ++k) {
        s1.push_back(1.0 + boost::math::quantile(N, (k + 0.5) / 101.0));
        probs.push_back(1.0 / 101.0);
    }
    auto r = exp_utility(one_period(s1, probs), rho);
    const double target = mu / (sigma * sigma * rho);
    CHECK(std::fabs(r.U[0][0] - target) <= 0.02 * target);
}

TEST_CASE("asymptotic elasticity probes") {
    AEProbe probe;
    auto ex = ae_estimate(custom_loss("exp", [](double u) { return std::exp(u); }), probe);
    REQUIRE(ex.plus);
    CHECK(*ex.plus > 10.0);
    CHECK(ex.reasonable);

    auto sq = ae_estimate(custom_loss("sq+", [](double u) { return u > 0 ? u * u : 0.0; }), probe);
    REQUIRE(sq.plus);
    CHECK(std::fabs(*sq.plus - 2.0) <= 0.05);
    CHECK_FALSE(sq.minus);

    auto lin = ae_estimate(custom_loss("u+", [](double u) { return u > 0 ? u : 0.0; }), probe);
    REQUIRE(lin.plus);
    CHECK(std::fabs(*lin.plus - 1.0) <= 1e-6);
    CHECK_FALSE(lin.reasonable);

    CHECK_THROWS_AS((void)ae_estimate(custom_loss("dec", [](double u) { return -u; }), probe), Error);
}
