#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "convexdp/control.hpp"
#include "convexdp/extensive.hpp"
#include "convexdp/lagrange.hpp"
#include "helpers.hpp"

using namespace cdp;

namespace {

ScenarioTree chain(int T) {
    std::vector<RawNode> raw{{"n0", std::nullopt, 0, 1.0, std::nullopt}};
    for (int t = 1; t <= T; ++t) raw.push_back({"n" + std::to_string(t), "n" + std::to_string(t - 1), t, 1.0, std::nullopt});
    return validate_tree(raw);
}

/// Dense minimization of sum_nodes prob * K(x, x - x_parent) for quadratic K,
/// assembled directly over all node variables.
double dense_quadratic_value(const LagrangeInstance& inst) {
    const auto& tree = inst.tree;
    const auto d = static_cast<Eigen::Index>(inst.d);
    const auto n = static_cast<Eigen::Index>(tree.size()) * d;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    double c0 = 0.0;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const auto& q = inst.K[i].as<Quadratic<double>>();
        const double w = tree.probability(i);
        // (x, dx) = S z with z the stacked node variables.
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2 * d, n);
        const auto self = static_cast<Eigen::Index>(i) * d;
        for (Eigen::Index a = 0; a < d; ++a) {
            S(a, self + a) = 1.0;
            S(d + a, self + a) = 1.0;
            if (i != tree.root()) S(d + a, static_cast<Eigen::Index>(tree.parent(i)) * d + a) = -1.0;
        }
        Eigen::MatrixXd Q(2 * d, 2 * d);
        Eigen::VectorXd lin(2 * d);
        for (Eigen::Index r = 0; r < 2 * d; ++r) {
            lin(r) = q.q[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < 2 * d; ++c) Q(r, c) = q.Q(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        }
        H += w * S.transpose() * Q * S;
        g += w * S.transpose() * lin;
        c0 += w * q.c;
    }
    Eigen::VectorXd z = H.ldlt().solve(-g);
    return 0.5 * z.dot(H * z) + g.dot(z) + c0;
}

LPStage empty_stage(std::size_t d) {
    LPStage s;
    s.T = Mat<double>(0, d);
    s.W = Mat<double>(0, d);
    s.c = Vec<double>(d, 0.0);
    s.C = nonnegative_orthant(0);
    return s;
}

/// Stage-1 data for x_1 >= x_0 and x_1 >= b at cost c x_1.
LPStage kink_stage(double b, double c) {
    LPStage s;
    s.T = Mat<double>{{1.0}, {0.0}};
    s.W = Mat<double>{{0.0}, {1.0}};
    s.b = {0.0, b};
    s.c = {c};
    s.C = nonnegative_orthant(2);
    return s;
}

}  // namespace

TEST_CASE("frozen decisions: value is the best x_0 against the summed expected costs") {
    gen::Rng rng(3);
    auto tree = gen::random_tree(rng, 3, 3);
    auto inst = make_lagrange(tree, 1);
    std::uniform_real_distribution<double> U(-1, 1);
    double total = 0.0;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const double c = U(rng);
        total += tree.probability(i) * c;
        if (i == tree.root()) {
            // c x on -1 <= x <= 2.
            inst.K[i] = make_polyhedral<double>(2, Mat<double>{{c, 0.0}}, {0.0}, Mat<double>{{1.0, 0.0}, {-1.0, 0.0}}, {2.0, 1.0});
        } else {
            inst.K[i] = make_polyhedral<double>(2, Mat<double>{{c, 0.0}}, {0.0}, Mat<double>{{0.0, 1.0}, {0.0, -1.0}}, {0.0, 0.0});
        }
    }
    auto vv = solve_lagrange(inst);
    CHECK(vv.value == doctest::Approx(std::min(2.0 * total, -total)).epsilon(1e-10));
}

TEST_CASE("telescoping costs: every adapted x is optimal with value 0") {
    gen::Rng rng(5);
    auto tree = gen::uniform_tree(3, 2);
    const int T = tree.horizon();
    // y_t depends on the stage-(t-1) node only, so y_{t+1} is known at t.
    AdaptedProcess<Vec<double>> y(tree, 0, T, Vec<double>(1, 0.0));
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const int t = tree.stage(i);
        NodeIndex anchor = t == 0 ? i : tree.parent(i);
        y[i] = {std::sin(3.1 * static_cast<double>(anchor) + t)};
    }
    auto inst = make_lagrange(tree, 1);
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const int t = tree.stage(i);
        double ynext = t < T ? y[tree.children(i)[0]][0] : 0.0;
        inst.K[i] = make_quadratic<double>(Mat<double>(2, 2), {ynext - y[i][0], y[i][0]});
    }
    auto vv = solve_lagrange(inst);
    CHECK(std::fabs(vv.value) <= 1e-12);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Vec<double>> x(tree.size());
        for (auto& xi : x) xi = gen::random_vector(rng, 1, -3, 3);
        CHECK(verify_optimality(x, vv.sol, 1e-10));
        CHECK(std::fabs(objective(to_stage_problem(inst), x)) <= 1e-12);
    }
    auto rep = check_lagrange_bounds(inst, zero_dual(tree, std::vector<int>(static_cast<std::size_t>(T + 1), 1)), y);
    CHECK(rep.lower_bounds_ok);
    CHECK(rep.linearity_ok);
    for (const auto& c : rep.certificates) CHECK(std::fabs(c.m) <= 1e-12);
}

TEST_CASE("quadratic Lagrange instances match the dense oracle") {
    gen::Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
        auto tree = gen::uniform_tree(2 + trial % 2, 2);
        auto inst = make_lagrange(tree, d);
        for (auto& k : inst.K) k = make_quadratic<double>(gen::random_psd(rng, 2 * d, 0.1), gen::random_vector(rng, 2 * d), 0.3);
        auto vv = solve_lagrange(inst);
        CHECK(std::fabs(vv.value - dense_quadratic_value(inst)) <= 1e-8);
        CHECK(std::fabs(vv.value - solve_extensive(flatten(to_stage_problem(inst))).value) <= 1e-8);
        for (NodeIndex leaf : tree.leaves()) CHECK(eval(vv.V[leaf], Vec<double>(d, 0.7)) == 0.0);
    }
}

TEST_CASE("control problems encoded as Lagrange problems give the same value") {
    gen::Rng rng(23);
    for (int trial = 0; trial < 6; ++trial) {
        auto lq = gen::random_lq(rng, gen::random_tree(rng, 2, 2), 1 + trial % 2, 1);
        const std::size_t N = lq.sys.N, M = lq.sys.M, d = N + M;
        auto L = lq_costs(lq.sys, lq.costs);
        auto inst = make_lagrange(lq.sys.tree, d);
        for (NodeIndex i = 0; i < inst.tree.size(); ++i) {
            auto eq = zero_quadratic<double>(2 * d);
            eq.A = Mat<double>(N, 2 * d);
            if (i == inst.tree.root()) {
                for (std::size_t r = 0; r < N; ++r) eq.A(r, r) = 1.0;
                eq.b = lq.x0;
            } else {
                // dX = A (X - dX) + B (U - dU) + W.
                const auto& A = lq.sys.A[i];
                const auto& B = lq.sys.B[i];
                for (std::size_t r = 0; r < N; ++r) {
                    eq.A(r, d + r) = 1.0;
                    for (std::size_t c = 0; c < N; ++c) {
                        eq.A(r, c) -= A(r, c);
                        eq.A(r, d + c) += A(r, c);
                    }
                    for (std::size_t c = 0; c < M; ++c) {
                        eq.A(r, N + c) -= B(r, c);
                        eq.A(r, d + N + c) += B(r, c);
                    }
                }
                eq.b = lq.sys.W[i];
            }
            inst.K[i] = add(embed(L[i], 2 * d, 0), ConvexFn(eq));
        }
        auto rd = riccati(lq.sys, lq.costs);
        CHECK(std::fabs(solve_lagrange(inst).value - riccati_value(rd, 0, lq.x0)) <= 1e-8);
    }
}

TEST_CASE("i.i.d. costs give deterministic V_t") {
    auto tree = gen::uniform_tree(3, 3);
    auto inst = make_lagrange(tree, 1);
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const double a = i == tree.root() ? 0.0 : static_cast<double>(tree.id(i).back() - '0');
        inst.K[i] = make_quadratic<double>(Mat<double>{{1.0, 0.0}, {0.0, 2.0}}, {-a, 0.5 * a});
    }
    auto vv = solve_lagrange(inst);
    for (int t = 0; t <= tree.horizon(); ++t) {
        const auto& layer = tree.stage_nodes(t);
        for (NodeIndex i : layer)
            for (double x : {-1.0, 0.4, 2.0}) CHECK(eval(vv.V[i], {x}) == doctest::Approx(eval(vv.V[layer[0]], {x})).epsilon(1e-12));
    }
}

TEST_CASE("LP recursion: kink at b") {
    LPData data;
    data.tree = chain(1);
    data.d = 1;
    data.nodes = {empty_stage(1), kink_stage(1.5, 2.0)};
    data.nodes[0].c = {-0.5};
    auto vv = lp_recursion(data);
    for (double x : {-2.0, 0.0, 1.5, 2.0, 4.0}) CHECK(eval(vv.V[0], {x}) == doctest::Approx(2.0 * std::max(x, 1.5)));
    CHECK(vv.value == doctest::Approx(3.0 - 0.75));

    // Same cone through its generators.
    data.nodes[1].C = Cone{Cone::Form::Generators, Mat<double>{{1.0, 0.0}, {0.0, 1.0}}};
    auto vg = lp_recursion(data);
    for (double x : {-2.0, 1.5, 4.0}) CHECK(eval(vg.V[0], {x}) == doctest::Approx(eval(vv.V[0], {x})));
}

TEST_CASE("LP recursion: two-stage newsvendor") {
    // x = (order q, sales s). Buy at 1, sell at 3; demand 1, 2, 4 w.p. 0.3, 0.5, 0.2.
    const double demand[] = {1.0, 2.0, 4.0}, prob[] = {0.3, 0.5, 0.2};
    std::vector<RawNode> raw{{"r", std::nullopt, 0, 1.0, std::nullopt}};
    for (int k = 0; k < 3; ++k) raw.push_back({"d" + std::to_string(k), "r", 1, prob[k], std::nullopt});
    LPData data;
    data.tree = validate_tree(raw);
    data.d = 2;
    LPStage root;
    // q >= 0, s = 0.
    root.T = Mat<double>(3, 2);
    root.W = Mat<double>{{1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
    root.b = {0.0, 0.0, 0.0};
    root.c = {1.0, 0.0};
    root.C = nonnegative_orthant(3);
    data.nodes.push_back(root);
    for (int k = 0; k < 3; ++k) {
        LPStage s;
        // dq = 0, q - s >= 0, demand - s >= 0, s >= 0.
        s.T = Mat<double>{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
        s.W = Mat<double>{{0.0, 0.0}, {0.0, 0.0}, {1.0, -1.0}, {0.0, -1.0}, {0.0, 1.0}};
        s.b = {0.0, 0.0, 0.0, -demand[k], 0.0};
        s.c = {0.0, -3.0};
        s.C = nonnegative_orthant(5);
        data.nodes.push_back(s);
    }
    // The profit is piecewise linear in q with kinks at the demand atoms.
    double best = inf();
    for (double q : {0.0, 1.0, 2.0, 4.0}) {
        double cost = q;
        for (int k = 0; k < 3; ++k) cost -= 3.0 * prob[k] * std::min(q, demand[k]);
        best = std::min(best, cost);
    }
    auto vv = lp_recursion(data);
    CHECK(std::fabs(vv.value - best) <= 1e-9);
    auto ext = solve_extensive(flatten(to_stage_problem(lp_instance(data))));
    CHECK(ext.method == ExtensiveMethod::Simplex);
    CHECK(std::fabs(vv.value - ext.value) <= 1e-9);
}

TEST_CASE("LP recursion errors") {
    LPData data;
    data.tree = chain(1);
    data.d = 1;
    // x_1 >= 1 and -x_1 >= 0.
    LPStage bad;
    bad.T = Mat<double>(2, 1);
    bad.W = Mat<double>{{1.0}, {-1.0}};
    bad.b = {1.0, 0.0};
    bad.c = {0.0};
    bad.C = nonnegative_orthant(2);
    data.nodes = {empty_stage(1), bad};
    try {
        (void)lp_recursion(data);
        FAIL("expected Infeasible");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Infeasible);
        CHECK(e.node() == std::optional<std::string>("n1"));
    }

    data.nodes = {empty_stage(1), kink_stage(0.0, -1.0)};
    try {
        (void)lp_recursion(data);
        FAIL("expected Unbounded");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Unbounded);
    }
}

TEST_CASE("Lagrange bound diagnostics") {
    auto tree = gen::uniform_tree(2, 2);
    const int T = tree.horizon();
    auto zero_p = zero_dual(tree, std::vector<int>(static_cast<std::size_t>(T + 1), 1));
    AdaptedProcess<Vec<double>> y(tree, 0, T, Vec<double>(1, 0.0));

    auto strict = make_lagrange(tree, 1);
    for (auto& k : strict.K) k = make_quadratic<double>(Mat<double>{{2.0, 0.5}, {0.5, 1.0}}, {0.1, -0.2});
    auto rep = check_lagrange_bounds(strict, zero_p, y);
    CHECK(rep.lower_bounds_ok);
    CHECK(rep.linearity_ok);
    CHECK(rep.certificates.size() == 2 * tree.size());

    // Zero cost on x_t >= 0 at the root: a one-sided ray of zero recession cost.
    auto ray = make_lagrange(tree, 1);
    ray.K[0] = make_polyhedral<double>(2, Mat<double>{{0.0, 0.0}}, {0.0}, Mat<double>{{-1.0, 0.0}}, {0.0});
    auto rep2 = check_lagrange_bounds(ray, zero_p, y);
    CHECK_FALSE(rep2.linearity_ok);

    auto bad = zero_p;
    bad[0][tree.index_of("r.0")] = {1.0};
    CHECK_THROWS_AS((void)check_lagrange_bounds(strict, bad, y), Error);
}
