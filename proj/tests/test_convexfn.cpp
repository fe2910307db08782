#include <doctest.h>

#include <cmath>
#include <random>

#include "convexdp/convexfn.hpp"

using namespace cdp;

namespace {

ConvexFn quad1(double a, double b, double c) { return make_quadratic<double>(Mat<double>{{a}}, {b}, c); }

ConvexFn interval(double lo, double hi) {
    return polyhedral_indicator<double>(1, Mat<double>{{1.0}, {-1.0}}, {hi, -lo});
}

/// Ternary search refinement of a convex function of one variable.
double min_1d(const std::function<double(double)>& f, double lo, double hi) {
    const int n = 4001;
    double best = inf(), arg = lo;
    for (int i = 0; i < n; ++i) {
        double u = lo + (hi - lo) * i / (n - 1);
        double v = f(u);
        if (v < best) {
            best = v;
            arg = u;
        }
    }
    double step = (hi - lo) / (n - 1);
    double a = arg - step, b = arg + step;
    for (int it = 0; it < 200; ++it) {
        double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
        if (f(m1) <= f(m2))
            b = m2;
        else
            a = m1;
    }
    return std::min(best, f(0.5 * (a + b)));
}

}  // namespace

TEST_CASE("eval examples") {
    CHECK(eval(quad1(1, 0, 0), {2.0}) == doctest::Approx(2.0));
    auto p = make_polyhedral<double>(1, Mat<double>{{1.0}, {2.0}}, {0.0, 1.0}, Mat<double>{{1.0}}, {0.0});
    CHECK(std::isinf(eval(ConvexFn(p), {1.0})));
    CHECK(eval(ConvexFn(p), {-2.0}) == doctest::Approx(-2.0));
    Sampled1D<double> s{{0, 1, 2}, {0, 1, 4}, false};
    CHECK(eval(ConvexFn(s), {1.5}) == doctest::Approx(2.5));
    CHECK(std::isinf(eval(ConvexFn(s), {2.5})));
    CHECK_THROWS_AS((void)eval(quad1(1, 0, 0), {1.0, 2.0}), Error);
}

TEST_CASE("combine: add, scale, tilt") {
    auto f = add(quad1(2, 0, 0), quad1(2, -4, 4));
    const auto& q = f.as<Quadratic<double>>();
    CHECK(q.Q(0, 0) == 4.0);  // 2x^2 - 4x + 4
    CHECK(q.q[0] == -4.0);
    CHECK(q.c == 4.0);

    auto g = add(interval(0, 1), ConvexFn(make_polyhedral<double>(1, Mat<double>{{1.0}}, {0.0})));
    auto z = scale(g, 0.0);
    for (double x : {-0.5, 0.0, 0.3, 1.0, 1.5}) CHECK(eval(z, {x}) == eval(interval(0, 1), {x}));

    auto point = polyhedral_indicator<double>(1, Mat<double>{{1.0}, {-1.0}}, {0.0, 0.0});
    auto t = tilt(ConvexFn(point), {3.0});
    CHECK(eval(t, {0.0}) == 0.0);
    CHECK(std::isinf(eval(t, {0.1})));

    Sampled1D<double> s{{0, 1}, {0, 1}, false};
    CHECK_THROWS_AS((void)add(ConvexFn(s), quad1(1, 0, 0)), Error);

    // Genuine quadratic + polyhedral: evaluation-only wrapper.
    auto mix = add(quad1(1, 0, 0), interval(-1, 1));
    CHECK(mix.backend() == Backend::QuadPoly);
    CHECK(eval(mix, {0.5}) == doctest::Approx(0.125));
    CHECK(std::isinf(eval(mix, {2.0})));
    CHECK_THROWS_AS((void)partial_min(mix, 1), Error);
}

TEST_CASE("cond_expect_fn examples") {
    auto e = cond_expect_fn<double>({{0.5, quad1(2, 0, 0)}, {0.5, quad1(2, -4, 4)}});
    for (double x : {-1.0, 0.0, 2.5}) CHECK(eval(e, {x}) == doctest::Approx(x * x - 2 * x + 2));
    auto d = cond_expect_fn<double>({{0.5, interval(0, 1)}, {0.5, interval(1, 2)}});
    CHECK(eval(d, {1.0}) == 0.0);
    CHECK(std::isinf(eval(d, {0.5})));
    CHECK(std::isinf(eval(d, {1.5})));
    CHECK_THROWS_AS((void)cond_expect_fn<double>({{0.5, quad1(1, 0, 0)}, {0.6, quad1(1, 0, 0)}}), Error);

    auto q2 = cond_expect_fn<double>({{0.25, make_quadratic<double>(Mat<double>{{1, 0}, {0, 2}}, {0, 0})},
                                      {0.75, make_quadratic<double>(Mat<double>{{3, 1}, {1, 2}}, {0, 0})}});
    const auto& Q = q2.as<Quadratic<double>>().Q;
    CHECK(Q(0, 0) == doctest::Approx(2.5));
    CHECK(Q(0, 1) == doctest::Approx(0.75));
    CHECK(Q(1, 1) == doctest::Approx(2.0));

    Sampled1D<double> a{{0, 1, 2}, {0, 1, 4}, false};
    Sampled1D<double> b{{0.5, 3}, {1, 1}, false};
    auto s = cond_expect_fn<double>({{0.5, ConvexFn(a)}, {0.5, ConvexFn(b)}});
    CHECK(eval(s, {1.5}) == doctest::Approx(0.5 * 2.5 + 0.5));
    CHECK(std::isinf(eval(s, {0.25})));
}

TEST_CASE("partial_min examples") {
    // 1/2 u^2 + x u over u.
    auto f = make_quadratic<double>(Mat<double>{{0, 1}, {1, 1}}, {0, 0});
    auto pm = partial_min(f, 1);
    for (double x : {-2.0, 0.0, 1.5}) {
        CHECK(eval(pm.value, {x}) == doctest::Approx(-0.5 * x * x));
        CHECK(pm.selector({x})[0] == doctest::Approx(-x));
        // Dense-grid oracle.
        double grid = min_1d([&](double u) { return eval(ConvexFn(f), {x, u}); }, -10, 10);
        CHECK(std::fabs(grid - eval(pm.value, {x})) <= 1e-8);
    }
    // 1/2 (x - u)^2.
    auto g = partial_min(make_quadratic<double>(Mat<double>{{1, -1}, {-1, 1}}, {0, 0}), 1);
    CHECK(eval(g.value, {3.0}) == doctest::Approx(0.0));
    CHECK(g.selector({3.0})[0] == doctest::Approx(3.0));
    // 1/2 x^2 with u free.
    auto h = partial_min(make_quadratic<double>(Mat<double>{{1, 0}, {0, 0}}, {0, 0}), 1);
    CHECK(eval(h.value, {2.0}) == doctest::Approx(2.0));
    CHECK(h.selector({2.0})[0] == 0.0);
    CHECK(h.lineality.size() == 1);
    // Linear decrease in u.
    CHECK_THROWS_AS((void)partial_min(make_quadratic<double>(Mat<double>{{1, 0}, {0, 0}}, {0, -1}), 1), Error);
}

TEST_CASE("quadratic partial_min with equality constraints") {
    // min over u of 1/2 (u1^2 + u2^2) s.t. u1 + u2 = x  ->  x^2 / 4.
    Quadratic<double> f = make_quadratic<double>(Mat<double>{{0, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 0});
    f.A = Mat<double>{{-1, 1, 1}};
    f.b = {0.0};
    auto pm = partial_min(f, 2);
    CHECK(eval(pm.value, {2.0}) == doctest::Approx(1.0));
    auto u = pm.selector({2.0});
    CHECK(u[0] == doctest::Approx(1.0));
    CHECK(u[1] == doctest::Approx(1.0));
    // Constraint only on u: u1 = 1 with x unconstrained and free u2.
    Quadratic<double> g = make_quadratic<double>(Mat<double>{{1, 0, 0}, {0, 0, 0}, {0, 0, 0}}, {0, 0, 0});
    g.A = Mat<double>{{0, 1, 0}};
    g.b = {1.0};
    auto pg = partial_min(g, 2);
    auto v = pg.selector({0.3});
    CHECK(v[0] == doctest::Approx(1.0));
    CHECK(v[1] == 0.0);
    CHECK(pg.lineality.size() == 1);
    // Infeasible x-constraint: u does not enter, x must equal 2.
    Quadratic<double> k = make_quadratic<double>(Mat<double>{{0, 0}, {0, 1}}, {0, 0});
    k.A = Mat<double>{{1, 0}};
    k.b = {2.0};
    auto pk = partial_min(k, 1);
    CHECK(eval(pk.value, {2.0}) == doctest::Approx(0.0));
    CHECK(std::isinf(eval(pk.value, {1.0})));
}

TEST_CASE("polyhedral partial_min") {
    // f(x, u) = max(u - x, -u) on |u| <= 2: min over u is -x/2 at u = x/2 (for |x| <= 4).
    auto f = make_polyhedral<double>(2, Mat<double>{{-1, 1}, {0, -1}}, {0, 0}, Mat<double>{{0, 1}, {0, -1}}, {2, 2});
    auto pm = partial_min(f, 1);
    for (double x : {-3.0, -1.0, 0.0, 2.0, 3.5}) {
        double grid = min_1d([&](double u) { return eval(ConvexFn(f), {x, u}); }, -2, 2);
        CHECK(std::fabs(eval(pm.value, {x}) - grid) <= 1e-8);
        auto u = pm.selector({x});
        CHECK(eval(ConvexFn(f), {x, u[0]}) == doctest::Approx(grid));
    }
    // max(x, 2x + 1) restricted to x <= 0, minimized over everything.
    auto m = minimize(ConvexFn(make_polyhedral<double>(1, Mat<double>{{1.0}, {2.0}}, {0, 1}, Mat<double>{{-1.0}}, {3.0})));
    CHECK(m.value == doctest::Approx(-3.0));
    CHECK(m.point[0] == doctest::Approx(-3.0));
    // Free coordinate: selector returns the zero component.
    auto free = make_polyhedral<double>(2, Mat<double>{{1, 0}, {-1, 0}}, {0, 0});
    auto pf = partial_min(free, 2);
    auto u = pf.selector({});
    CHECK(u[0] == doctest::Approx(0.0));
    CHECK(u[1] == 0.0);
    CHECK(pf.lineality.size() == 1);
    // One-sided zero-cost direction.
    auto ray = make_polyhedral<double>(1, Mat<double>{{0.0}}, {0.0}, Mat<double>{{-1.0}}, {0.0});
    CHECK_THROWS_WITH_AS((void)partial_min(ray, 1), doctest::Contains("NonLinearRecession"), Error);
    auto down = make_polyhedral<double>(1, Mat<double>{{-1.0}}, {0.0}, Mat<double>{{-1.0}}, {0.0});
    CHECK_THROWS_WITH_AS((void)partial_min(down, 1), doctest::Contains("UnboundedBelow"), Error);
}

TEST_CASE("random 2-D partial minimization against a dense grid") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int rep = 0; rep < 40; ++rep) {
        // Quadratic with Quu > 0.
        double a = U(rng), b = U(rng), c = 0.2 + std::fabs(U(rng));
        Mat<double> L{{a, 0}, {b, c}};
        auto Q = matmul(L, transpose(L));
        auto f = ConvexFn(make_quadratic<double>(Q, {U(rng), U(rng)}, U(rng)));
        auto pm = partial_min(f, 1);
        // Polyhedral with bounded u-domain.
        Mat<double> G(4, 2);
        Vec<double> beta(4);
        for (std::size_t j = 0; j < 4; ++j) {
            G(j, 0) = U(rng);
            G(j, 1) = U(rng) * 2;
            beta[j] = U(rng);
        }
        auto p = ConvexFn(make_polyhedral<double>(2, G, beta, Mat<double>{{0, 1}, {0, -1}}, {1.5, 1.0}));
        auto pp = partial_min(p, 1);
        for (double x : {-1.0, -0.3, 0.4, 1.2}) {
            double gq = min_1d([&](double u) { return eval(f, {x, u}); }, -30, 30);
            CHECK(std::fabs(eval(pm.value, {x}) - gq) <= 1e-8);
            double gp = min_1d([&](double u) { return eval(p, {x, u}); }, -1.0, 1.5);
            CHECK(std::fabs(eval(pp.value, {x}) - gp) <= 1e-8);
            // Selector orthogonal to lineality.
            auto u = pp.selector({x});
            for (std::size_t k = 0; k < pp.lineality.size(); ++k) CHECK(std::fabs(u[0] * pp.lineality.basis(0, k)) <= 1e-10);
        }
    }
}

TEST_CASE("recession examples and lineality") {
    auto r = recession(quad1(1, 1, 0));
    CHECK(eval(r, {0.0}) == 0.0);
    CHECK(std::isinf(eval(r, {1.0})));
    auto p = recession(ConvexFn(make_polyhedral<double>(1, Mat<double>{{1.0}, {2.0}}, {0, 1})));
    CHECK(eval(p, {3.0}) == doctest::Approx(6.0));
    CHECK(eval(p, {-3.0}) == doctest::Approx(-3.0));
    auto i = recession(interval(0, 1));
    CHECK(eval(i, {0.0}) == 0.0);
    CHECK(std::isinf(eval(i, {0.5})));
    Sampled1D<double> s{{0, 1, 2}, {1, 0, 2}, true};
    auto rs = recession(ConvexFn(s));
    CHECK(eval(rs, {2.0}) == doctest::Approx(4.0));
    CHECK(eval(rs, {-2.0}) == doctest::Approx(2.0));

    CHECK(lineality_space(recession(quad1(1, 0, 0))).size() == 0);
    // f(d1, d2) = |d1|.
    auto abs1 = ConvexFn(make_polyhedral<double>(2, Mat<double>{{1, 0}, {-1, 0}}, {0, 0}));
    auto ls = lineality_space(recession(abs1));
    REQUIRE(ls.size() == 1);
    CHECK(std::fabs(ls.basis(0, 0)) <= 1e-12);
    CHECK(std::fabs(std::fabs(ls.basis(1, 0)) - 1.0) <= 1e-12);
}

TEST_CASE("recession of a partial minimum is the inf of the recession") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int rep = 0; rep < 20; ++rep) {
        Mat<double> G(3, 2);
        Vec<double> beta(3);
        for (std::size_t j = 0; j < 3; ++j) {
            G(j, 0) = U(rng);
            G(j, 1) = U(rng);
            beta[j] = U(rng);
        }
        // Ensure the u-direction costs in both senses.
        G(0, 1) = 1.0;
        G(1, 1) = -1.0;
        auto f = ConvexFn(make_polyhedral<double>(2, G, beta));
        auto pm = partial_min(f, 1);
        auto rg = recession(pm.value);
        auto rf = recession(f);
        for (double x : {-2.0, -0.5, 1.0, 3.0}) {
            double direct = min_1d([&](double d) { return eval(rf, {x, d}); }, -50, 50);
            CHECK(std::fabs(eval(rg, {x}) - direct) <= 1e-8);
        }
    }
}

TEST_CASE("fm_project examples") {
    InequalitySystem<double> a{Mat<double>{{1, 1}, {0, -1}}, {1, 0}};
    auto pa = fm_project(a, 1);
    REQUIRE(pa.rows() == 1);
    CHECK(pa.A(0, 0) == doctest::Approx(1.0));
    CHECK(pa.b[0] == doctest::Approx(1.0));

    // {u >= x, u >= -x, u <= 2}: the polygon's vertices are (2,2), (-2,2), (0,0),
    // so the shadow on x is [-2, 2].
    InequalitySystem<double> b{Mat<double>{{1, -1}, {-1, -1}, {0, 1}}, {0, 0, 2}};
    auto pb = fm_project(b, 1);
    REQUIRE(pb.rows() == 2);
    double lo = -inf(), hi = inf();
    for (std::size_t r = 0; r < pb.rows(); ++r) {
        if (pb.A(r, 0) > 0) hi = std::min(hi, pb.b[r] / pb.A(r, 0));
        if (pb.A(r, 0) < 0) lo = std::max(lo, pb.b[r] / pb.A(r, 0));
    }
    CHECK(lo == doctest::Approx(-2.0));
    CHECK(hi == doctest::Approx(2.0));

    InequalitySystem<double> empty{Mat<double>(0, 3), {}};
    CHECK(fm_project(empty, 2).rows() == 0);

    // Row cap.
    InequalitySystem<double> big{Mat<double>(0, 2), {}};
    for (int i = 0; i < 20; ++i) {
        big.A.append_row({double(i), 1.0});
        big.b.push_back(1.0);
        big.A.append_row({double(-i) - 0.5, -1.0});
        big.b.push_back(1.0);
    }
    CHECK_THROWS_WITH_AS((void)fm_project(big, 1, 100), doctest::Contains("RowBlowup"), Error);
}

TEST_CASE("conjugate closed forms") {
    // (1/2 x^2)* = 1/2 y^2
    CHECK(conjugate(quad1(1, 0, 0), {3.0}) == doctest::Approx(4.5));
    // linear x -> conjugate is the indicator of {1}
    CHECK(conjugate(quad1(0, 1, 0), {1.0}) == doctest::Approx(0.0));
    CHECK(std::isinf(conjugate(quad1(0, 1, 0), {2.0})));
    // |x| -> indicator of [-1, 1]
    auto abs1 = ConvexFn(make_polyhedral<double>(1, Mat<double>{{1.0}, {-1.0}}, {0, 0}));
    CHECK(conjugate(abs1, {0.5}) == doctest::Approx(0.0));
    CHECK(std::isinf(conjugate(abs1, {1.5})));
    Sampled1D<double> s{{0, 1, 2}, {0, 1, 4}, false};
    CHECK(conjugate(ConvexFn(s), {2.0}) == doctest::Approx(1.0));
}

TEST_CASE("validate catches broken invariants") {
    CHECK_THROWS_AS(validate(make_quadratic<double>(Mat<double>{{1, 2}, {2, 1}}, {0, 0})), Error);
    CHECK_THROWS_AS(validate(ConvexFn(Sampled1D<double>{{0, 1, 2}, {0, 2, 3}, false})), Error);
    CHECK_NOTHROW(validate(ConvexFn(Sampled1D<double>{{0, 1, 2}, {0, 1, 4}, false})));
}
