#include "convexdp/convexfn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convexdp/lp.hpp"
#include "eigen_util.hpp"

namespace cdp {

using detail::from_eigen;
using detail::to_eigen;

std::string_view to_string(Backend b) noexcept {
    switch (b) {
        case Backend::Quadratic: return "quadratic";
        case Backend::Polyhedral: return "polyhedral";
        case Backend::Sampled1D: return "sampled1d";
        case Backend::QuadPoly: return "quadratic+polyhedral";
    }
    return "unknown";
}

double eval(const ConvexFn& f, const Vec<double>& x) {
    auto v = eval_ext(f, x);
    return v ? *v : inf();
}

double eval(const RecessionFn& f, const Vec<double>& x) { return eval(f.fn, x); }

// ============================================================================
// Invariants
// ============================================================================

void validate(const ConvexFn& f) {
    std::visit(
        [](const auto& g) {
            using F = std::decay_t<decltype(g)>;
            auto check_quad = [](const Quadratic<double>& q) {
                const std::size_t d = q.dim();
                if (q.Q.rows() != d || q.Q.cols() != d || q.A.cols() != d || q.A.rows() != q.b.size())
                    throw Error(ErrorCode::DimensionMismatch, "quadratic shapes");
                double scale = std::max(1.0, max_abs(q.Q));
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < i; ++j)
                        if (std::fabs(q.Q(i, j) - q.Q(j, i)) > 1e-12 * scale)
                            throw Error(ErrorCode::DimensionMismatch, "Q is not symmetric");
                if (d == 0) return;
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(q.Q));
                if (es.eigenvalues().minCoeff() < -1e-10 * scale)
                    throw Error(ErrorCode::DimensionMismatch, "Q is not positive semidefinite");
            };
            auto check_poly = [](const Polyhedral<double>& p) {
                if (p.G.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "polyhedral function without pieces");
                if (p.G.cols() != p.dim || p.G.rows() != p.beta.size() || p.C.cols() != p.dim || p.C.rows() != p.e.size())
                    throw Error(ErrorCode::DimensionMismatch, "polyhedral shapes");
            };
            if constexpr (std::is_same_v<F, Quadratic<double>>) {
                check_quad(g);
            } else if constexpr (std::is_same_v<F, Polyhedral<double>>) {
                check_poly(g);
            } else if constexpr (std::is_same_v<F, Sampled1D<double>>) {
                if (g.knots.size() != g.values.size()) throw Error(ErrorCode::DimensionMismatch, "knot/value count");
                for (std::size_t i = 1; i < g.knots.size(); ++i)
                    if (!(g.knots[i] > g.knots[i - 1])) throw Error(ErrorCode::DimensionMismatch, "knots not increasing");
                for (std::size_t i = 2; i < g.knots.size(); ++i) {
                    double s0 = (g.values[i - 1] - g.values[i - 2]) / (g.knots[i - 1] - g.knots[i - 2]);
                    double s1 = (g.values[i] - g.values[i - 1]) / (g.knots[i] - g.knots[i - 1]);
                    if (s1 < s0 - 1e-12 * (1.0 + std::fabs(s0)))
                        throw Error(ErrorCode::DimensionMismatch, "sampled values are not convex");
                }
            } else {
                check_quad(g.quad);
                check_poly(g.poly);
            }
        },
        f.data());
}

// ============================================================================
// Linear algebra helpers
// ============================================================================

Mat<double> null_space(const Mat<double>& M, std::size_t cols) {
    if (M.rows() == 0) return Mat<double>::identity(cols);
    return from_eigen(detail::svd_split(to_eigen(M)).kernel);
}

namespace detail {

template <>
void reduce_hook<double>(Quadratic<double>& f) {
    if (f.A.rows() == 0) return;
    const std::size_t d = f.dim();
    auto split = svd_split(to_eigen(f.A));
    Eigen::VectorXd b = to_eigen(f.b);
    Eigen::VectorXd off = split.left_null.transpose() * b;
    Mat<double> A(0, d);
    Vec<double> rhs;
    if (off.size() && off.cwiseAbs().maxCoeff() > 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())) {
        A.append_row(Vec<double>(d, 0.0));
        rhs.push_back(1.0);
    } else {
        // Rows of pinv(A)^T span the row space; x0 = pinv(A) b is the min-norm solution.
        Eigen::VectorXd x0 = split.pinv * b;
        for (Eigen::Index k = 0; k < split.rank; ++k) {
            Eigen::VectorXd r = split.row_space.col(k);
            A.append_row(from_eigen(r));
            rhs.push_back(r.dot(x0));
        }
    }
    f.A = std::move(A);
    f.b = std::move(rhs);
}

template <>
void prune_hook<double>(Polyhedral<double>& f) {
    prune(f);
}

}  // namespace detail

bool polyhedron_nonempty(const Mat<double>& C, const Vec<double>& e) {
    if (C.rows() == 0) return true;
    lp::Problem p(C.cols());
    for (std::size_t r = 0; r < C.rows(); ++r) p.add_row(C.row(r), lp::Sense::Le, e[r]);
    return lp::minimize(p).status != lp::Status::Infeasible;
}

// ============================================================================
// Fourier-Motzkin
// ============================================================================

namespace {

struct Row {
    Vec<double> a;
    double b;
};

/// Scales so the largest coefficient is 1. Returns false for rows with no
/// variables left (those are either trivial or certify infeasibility).
bool normalize(Row& r) {
    double m = max_abs(r.a);
    if (m <= 1e-13 * (1.0 + std::fabs(r.b))) {
        std::fill(r.a.begin(), r.a.end(), 0.0);
        return false;
    }
    for (auto& v : r.a) {
        v /= m;
        if (std::fabs(v) < 1e-14) v = 0.0;
    }
    r.b /= m;
    return true;
}

/// Drops duplicate directions, keeping the tightest right-hand side.
std::vector<Row> dedupe(std::vector<Row> rows) {
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    std::vector<Row> out;
    for (auto& r : rows) {
        if (!out.empty()) {
            const auto& prev = out.back().a;
            bool same = true;
            for (std::size_t i = 0; same && i < prev.size(); ++i) same = std::fabs(prev[i] - r.a[i]) <= 1e-12;
            if (same) {
                out.back().b = std::min(out.back().b, r.b);
                continue;
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

InequalitySystem<double> infeasible_system(std::size_t d) {
    InequalitySystem<double> out{Mat<double>(1, d), Vec<double>{-1.0}};
    return out;
}

}  // namespace

namespace {

double row_violation(const Row& r, const Vec<double>& x) { return dot(r.a, x) - r.b; }

/// Constraint rows that are not implied by the others. Each candidate is
/// tested against the rows kept so far; when the test fails, the row most
/// violated at the witness point joins the kept set, so the kept set only
/// grows and every dropped row is implied by it.
std::vector<Row> irredundant_rows(std::vector<Row> rows, std::size_t d) {
    std::vector<Row> kept;
    std::vector<bool> in(rows.size(), false);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (in[i]) continue;
        while (true) {
            lp::Problem p(d);
            p.c = scaled(rows[i].a, -1.0);
            for (const auto& k : kept) p.add_row(k.a, lp::Sense::Le, k.b);
            p.add_row(rows[i].a, lp::Sense::Le, rows[i].b + 1.0);
            auto res = lp::minimize(p);
            if (res.status != lp::Status::Optimal) break;
            if (-res.objective <= rows[i].b + 1e-9 * (1.0 + std::fabs(rows[i].b))) break;
            std::size_t worst = i;
            double v = row_violation(rows[i], res.x);
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (in[j]) continue;
                double w = row_violation(rows[j], res.x);
                if (w > v + 1e-12) {
                    v = w;
                    worst = j;
                }
            }
            in[worst] = true;
            kept.push_back(rows[worst]);
            if (worst == i) break;
        }
    }
    return kept;
}

}  // namespace

InequalitySystem<double> fm_project(const InequalitySystem<double>& sys, std::size_t d2, std::size_t row_cap) {
    const std::size_t n = sys.A.cols();
    if (d2 > n) throw Error(ErrorCode::DimensionMismatch, "eliminating more coordinates than present");
    const std::size_t d1 = n - d2;
    std::vector<Row> rows;
    for (std::size_t r = 0; r < sys.rows(); ++r) {
        Row row{sys.A.row(r), sys.b[r]};
        if (!normalize(row)) {
            if (row.b < -1e-12) return infeasible_system(d1);
            continue;
        }
        rows.push_back(std::move(row));
    }
    rows = dedupe(std::move(rows));
    std::vector<bool> gone(n, false);
    for (std::size_t step = 0; step < d2; ++step) {
        // Pick the pending coordinate with the smallest combination count.
        std::size_t best = n;
        std::size_t best_cost = 0;
        for (std::size_t k = d1; k < n; ++k) {
            if (gone[k]) continue;
            std::size_t pos = 0, neg = 0;
            for (const auto& r : rows) {
                if (r.a[k] > 0) ++pos;
                if (r.a[k] < 0) ++neg;
            }
            std::size_t cost = pos * neg;
            if (best == n || cost < best_cost) {
                best = k;
                best_cost = cost;
            }
        }
        const std::size_t k = best;
        gone[k] = true;
        std::vector<Row> next, P, N;
        for (auto& r : rows) {
            if (r.a[k] > 0)
                P.push_back(std::move(r));
            else if (r.a[k] < 0)
                N.push_back(std::move(r));
            else
                next.push_back(std::move(r));
        }
        if (next.size() + P.size() * N.size() > row_cap)
            throw Error(ErrorCode::RowBlowup, "elimination would produce " + std::to_string(next.size() + P.size() * N.size()) + " rows");
        for (const auto& p : P)
            for (const auto& q : N) {
                double wp = -q.a[k], wq = p.a[k];
                Row r{Vec<double>(n, 0.0), wp * p.b + wq * q.b};
                for (std::size_t i = 0; i < n; ++i) r.a[i] = wp * p.a[i] + wq * q.a[i];
                r.a[k] = 0.0;
                if (!normalize(r)) {
                    if (r.b < -1e-12) return infeasible_system(d1);
                    continue;
                }
                next.push_back(std::move(r));
            }
        rows = dedupe(std::move(next));
        if (rows.size() > 32 && step + 1 < d2) rows = irredundant_rows(std::move(rows), n);
    }
    InequalitySystem<double> out{Mat<double>(0, d1), {}};
    for (const auto& r : rows) {
        out.A.append_row(Vec<double>(r.a.begin(), r.a.begin() + static_cast<std::ptrdiff_t>(d1)));
        out.b.push_back(r.b);
    }
    return out;
}

// ============================================================================
// Pruning
// ============================================================================

namespace {

/// Pieces (gradient a, negated offset b) that attain the maximum somewhere on
/// the domain, found with the same incremental scheme.
std::vector<Row> irredundant_pieces(const std::vector<Row>& pieces, const std::vector<Row>& domain, std::size_t d) {
    if (pieces.size() <= 1) return pieces;
    auto value = [&](std::size_t j, const Vec<double>& x) { return dot(pieces[j].a, x) - pieces[j].b; };
    std::vector<std::size_t> kept;
    std::vector<bool> in(pieces.size(), false);
    for (std::size_t j = 0; j < pieces.size(); ++j) {
        if (in[j]) continue;
        while (true) {
            // max s  s.t.  piece_i(x) + s <= piece_j(x) for kept i, x in domain, s <= 1
            lp::Problem p(d + 1);
            p.c[d] = -1.0;
            p.upper[d] = 1.0;
            for (std::size_t i : kept) {
                Vec<double> a(d + 1, 0.0);
                for (std::size_t k = 0; k < d; ++k) a[k] = pieces[i].a[k] - pieces[j].a[k];
                a[d] = 1.0;
                p.add_row(a, lp::Sense::Le, pieces[i].b - pieces[j].b);
            }
            for (const auto& r : domain) {
                Vec<double> a = r.a;
                a.push_back(0.0);
                p.add_row(a, lp::Sense::Le, r.b);
            }
            auto res = lp::minimize(p);
            if (res.status != lp::Status::Optimal || -res.objective <= 1e-11) break;
            Vec<double> x(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(d));
            std::size_t best = j;
            double bv = value(j, x);
            for (std::size_t i = 0; i < pieces.size(); ++i) {
                if (in[i]) continue;
                double w = value(i, x);
                if (w > bv + 1e-12) {
                    bv = w;
                    best = i;
                }
            }
            in[best] = true;
            kept.push_back(best);
            if (best == j) break;
        }
    }
    std::sort(kept.begin(), kept.end());
    std::vector<Row> out;
    for (std::size_t i : kept) out.push_back(pieces[i]);
    return out;
}

}  // namespace

void prune(Polyhedral<double>& f) {
    const std::size_t d = f.dim;
    if (!polyhedron_nonempty(f.C, f.e)) {
        f.G = Mat<double>(1, d);
        f.beta = {0.0};
        f.C = Mat<double>(1, d);
        f.e = {-1.0};
        return;
    }
    std::vector<Row> rows;
    for (std::size_t r = 0; r < f.C.rows(); ++r) {
        Row row{f.C.row(r), f.e[r]};
        if (normalize(row)) rows.push_back(std::move(row));
    }
    rows = irredundant_rows(dedupe(std::move(rows)), d);
    f.C = Mat<double>(0, d);
    f.e.clear();
    for (const auto& r : rows) {
        f.C.append_row(r.a);
        f.e.push_back(r.b);
    }

    // Pieces: equal gradients keep the largest offset.
    std::vector<Row> pieces;
    for (std::size_t j = 0; j < f.G.rows(); ++j) pieces.push_back({f.G.row(j), -f.beta[j]});
    pieces = irredundant_pieces(dedupe(std::move(pieces)), rows, d);
    f.G = Mat<double>(0, d);
    f.beta.clear();
    for (const auto& r : pieces) {
        f.G.append_row(r.a);
        f.beta.push_back(-r.b);
    }
}

// ============================================================================
// Recession cone tests and lineality
// ============================================================================

namespace {

Mat<double> restrict_cols(const Mat<double>& M, std::size_t c0) {
    return block(M, 0, c0, M.rows(), M.cols() - c0);
}

Mat<double> row_matrix(const Vec<double>& v) {
    Mat<double> m(1, v.size());
    m.set_row(0, v);
    return m;
}

}  // namespace

LinealitySpace lineality_space(const RecessionFn& r) {
    const std::size_t d = r.fn.dim();
    LinealitySpace out{d, Mat<double>(d, 0)};
    std::visit(
        [&](const auto& g) {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<double>>) {
                out.basis = null_space(vstack(vstack(g.Q, g.A), row_matrix(g.q)), d);
            } else if constexpr (std::is_same_v<F, Polyhedral<double>>) {
                out.basis = null_space(vstack(g.G, g.C), d);
            } else if constexpr (std::is_same_v<F, Sampled1D<double>>) {
                auto a = detail::eval_sampled(g, 1.0);
                auto b = detail::eval_sampled(g, -1.0);
                if (a && b && *a <= 1e-12 && *b <= 1e-12) out.basis = Mat<double>::identity(1);
            } else {
                Mat<double> M = vstack(vstack(vstack(g.quad.Q, g.quad.A), row_matrix(g.quad.q)), vstack(g.poly.G, g.poly.C));
                out.basis = null_space(M, d);
            }
        },
        r.fn.data());
    return out;
}

void check_recession_linear(const RecessionFn& r, std::size_t d1) {
    const std::size_t d = r.fn.dim();
    const std::size_t d2 = d - d1;
    if (d2 == 0) return;
    std::visit(
        [&](const auto& g) {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<double>>) {
                Mat<double> K = null_space(restrict_cols(vstack(g.Q, g.A), d1), d2);
                Vec<double> qu(g.q.begin() + static_cast<std::ptrdiff_t>(d1), g.q.end());
                Vec<double> proj = matvec_t(K, qu);
                if (max_abs(proj) > 1e-9 * (1.0 + max_abs(qu)))
                    throw Error(ErrorCode::UnboundedBelow, "linear decrease along a recession direction");
            } else if constexpr (std::is_same_v<F, Sampled1D<double>>) {
                auto a = detail::eval_sampled(g, 1.0);
                auto b = detail::eval_sampled(g, -1.0);
                if ((a && *a < -1e-12) || (b && *b < -1e-12))
                    throw Error(ErrorCode::UnboundedBelow, "linear decrease along a recession direction");
                bool pa = a && *a <= 1e-12, pb = b && *b <= 1e-12;
                if (pa != pb) throw Error(ErrorCode::NonLinearRecession, "one-sided recession direction");
            } else {
                Polyhedral<double> p;
                if constexpr (std::is_same_v<F, Polyhedral<double>>)
                    p = g;
                else
                    p = detail::add_poly(linear_to_polyhedral(g.quad), g.poly, false);
                Mat<double> Gu = restrict_cols(p.G, d1);
                Mat<double> Cu = restrict_cols(p.C, d1);
                auto norm_rows = [](Mat<double> M) {
                    for (std::size_t i = 0; i < M.rows(); ++i) {
                        double m = max_abs(M.row(i));
                        if (m > 0)
                            for (std::size_t j = 0; j < M.cols(); ++j) M(i, j) /= m;
                    }
                    return M;
                };
                Gu = norm_rows(Gu);
                Cu = norm_rows(Cu);
                // Strict decrease: min s with G_u d <= s, C_u d <= 0, |d| <= 1.
                lp::Problem p1(d2 + 1);
                p1.c[d2] = 1.0;
                p1.lower[d2] = -1.0;
                for (std::size_t k = 0; k < d2; ++k) {
                    p1.lower[k] = -1.0;
                    p1.upper[k] = 1.0;
                }
                for (std::size_t i = 0; i < Gu.rows(); ++i) {
                    Vec<double> a = Gu.row(i);
                    a.push_back(-1.0);
                    p1.add_row(a, lp::Sense::Le, 0.0);
                }
                for (std::size_t i = 0; i < Cu.rows(); ++i) {
                    Vec<double> a = Cu.row(i);
                    a.push_back(0.0);
                    p1.add_row(a, lp::Sense::Le, 0.0);
                }
                auto r1 = lp::minimize(p1);
                if (r1.status == lp::Status::Optimal && r1.objective < -1e-9)
                    throw Error(ErrorCode::UnboundedBelow, "linear decrease along a recession direction");
                // Linearity: every row must vanish on the cone.
                Mat<double> M = vstack(Gu, Cu);
                lp::Problem p2(d2);
                for (std::size_t k = 0; k < d2; ++k) {
                    p2.lower[k] = -1.0;
                    p2.upper[k] = 1.0;
                }
                for (std::size_t i = 0; i < M.rows(); ++i) {
                    p2.add_row(M.row(i), lp::Sense::Le, 0.0);
                    for (std::size_t k = 0; k < d2; ++k) p2.c[k] += M(i, k);
                }
                auto r2 = lp::minimize(p2);
                if (r2.status == lp::Status::Optimal && -r2.objective > 1e-9)
                    throw Error(ErrorCode::NonLinearRecession, "zero-cost recession directions form a one-sided cone");
            }
        },
        r.fn.data());
}

// ============================================================================
// Selectors
// ============================================================================

Selector Selector::affine(Mat<double> M, Vec<double> o) {
    Selector s;
    s.kind_ = Kind::Affine;
    s.M_ = std::move(M);
    s.o_ = std::move(o);
    return s;
}

Selector Selector::lp(Polyhedral<double> f, std::size_t d1, Mat<double> range_basis) {
    Selector s;
    s.kind_ = Kind::Lp;
    s.f_ = std::make_shared<const Polyhedral<double>>(std::move(f));
    s.d1_ = d1;
    s.basis_ = std::move(range_basis);
    return s;
}

Selector Selector::constant(Vec<double> u) {
    Selector s;
    s.kind_ = Kind::Constant;
    s.o_ = std::move(u);
    return s;
}

Vec<double> Selector::operator()(const Vec<double>& x) const {
    switch (kind_) {
        case Kind::Constant: return o_;
        case Kind::Affine: return add(matvec(M_, x), o_);
        case Kind::Lp: break;
    }
    const auto& f = *f_;
    const std::size_t d = f.dim, d1 = d1_, d2 = d - d1, k = basis_.cols();
    if (x.size() != d1) throw Error(ErrorCode::DimensionMismatch, "selector argument length");
    if (k == 0) return Vec<double>(d2, 0.0);
    // Rows of the function restricted to u = B w.
    auto split = [&](const Mat<double>& A, std::size_t r, Vec<double>& coeff, double& fixed) {
        const Vec<double> row = A.row(r);
        Vec<double> ax(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d1));
        Vec<double> au(row.begin() + static_cast<std::ptrdiff_t>(d1), row.end());
        coeff = matvec_t(basis_, au);
        fixed = dot(ax, x);
    };
    lp::Problem p1(k + 1);
    p1.c[k] = 1.0;
    for (std::size_t j = 0; j < f.G.rows(); ++j) {
        Vec<double> a;
        double fx;
        split(f.G, j, a, fx);
        a.push_back(-1.0);
        p1.add_row(a, lp::Sense::Le, -f.beta[j] - fx);
    }
    for (std::size_t r = 0; r < f.C.rows(); ++r) {
        Vec<double> a;
        double fx;
        split(f.C, r, a, fx);
        a.push_back(0.0);
        p1.add_row(a, lp::Sense::Le, f.e[r] - fx);
    }
    auto r1 = lp::minimize(p1);
    if (r1.status == lp::Status::Infeasible) throw Error(ErrorCode::Infeasible, "selector queried outside the domain");
    if (r1.status == lp::Status::Unbounded) throw Error(ErrorCode::UnboundedBelow, "selector problem unbounded");
    const double tau = r1.x[k];
    // Second phase: smallest l1 norm of u = B w among (near) minimizers.
    lp::Problem p2(k + d2);
    for (std::size_t i = 0; i < d2; ++i) {
        p2.c[k + i] = 1.0;
        p2.lower[k + i] = 0.0;
    }
    double slack = 1e-11 * (1.0 + std::fabs(tau));
    for (std::size_t j = 0; j < f.G.rows(); ++j) {
        Vec<double> a;
        double fx;
        split(f.G, j, a, fx);
        a.resize(k + d2, 0.0);
        p2.add_row(a, lp::Sense::Le, tau + slack - f.beta[j] - fx);
    }
    for (std::size_t r = 0; r < f.C.rows(); ++r) {
        Vec<double> a;
        double fx;
        split(f.C, r, a, fx);
        a.resize(k + d2, 0.0);
        p2.add_row(a, lp::Sense::Le, f.e[r] - fx);
    }
    for (std::size_t i = 0; i < d2; ++i) {
        Vec<double> a(k + d2, 0.0);
        for (std::size_t c = 0; c < k; ++c) a[c] = basis_(i, c);
        a[k + i] = -1.0;
        p2.add_row(a, lp::Sense::Le, 0.0);
        for (std::size_t c = 0; c < k; ++c) a[c] = -basis_(i, c);
        p2.add_row(a, lp::Sense::Le, 0.0);
    }
    auto r2 = lp::minimize(p2);
    Vec<double> w(k);
    if (r2.status == lp::Status::Optimal)
        w.assign(r2.x.begin(), r2.x.begin() + static_cast<std::ptrdiff_t>(k));
    else
        w.assign(r1.x.begin(), r1.x.begin() + static_cast<std::ptrdiff_t>(k));
    return matvec(basis_, w);
}

// ============================================================================
// Partial minimization
// ============================================================================

namespace {

Mat<double> orth_complement(const Mat<double>& basis, std::size_t d) {
    if (basis.cols() == 0) return Mat<double>::identity(d);
    return null_space(transpose(basis), d);
}

PartialMin pm_quadratic(const Quadratic<double>& f, std::size_t d2) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const std::size_t d = f.dim(), d1 = d - d2;
    const auto D1 = static_cast<Eigen::Index>(d1), D2 = static_cast<Eigen::Index>(d2);
    MatrixXd Q = to_eigen(f.Q);
    VectorXd q = to_eigen(f.q);
    MatrixXd A = f.A.rows() ? to_eigen(f.A) : MatrixXd(0, static_cast<Eigen::Index>(d));
    VectorXd b = f.b.empty() ? VectorXd(0) : to_eigen(f.b);
    MatrixXd Ax = A.leftCols(D1), Au = A.rightCols(D2);

    auto sp = detail::svd_split(Au);
    MatrixXd Z = sp.kernel;  // d2 x k
    MatrixXd P1 = -sp.pinv * Ax;
    VectorXd P0 = sp.pinv * b;
    MatrixXd Ax_new = sp.left_null.transpose() * Ax;
    VectorXd b_new = sp.left_null.transpose() * b;

    const Eigen::Index k = Z.cols();
    MatrixXd T = MatrixXd::Zero(static_cast<Eigen::Index>(d), D1 + k);
    T.topLeftCorner(D1, D1).setIdentity();
    T.bottomLeftCorner(D2, D1) = P1;
    T.bottomRightCorner(D2, k) = Z;
    VectorXd t0 = VectorXd::Zero(static_cast<Eigen::Index>(d));
    t0.tail(D2) = P0;

    MatrixXd FQ = T.transpose() * Q * T;
    VectorXd Fq = T.transpose() * (Q * t0 + q);
    double Fc = 0.5 * t0.dot(Q * t0) + q.dot(t0) + f.c;

    MatrixXd H = FQ.bottomRightCorner(k, k);
    MatrixXd G = FQ.bottomLeftCorner(k, D1);
    VectorXd h = Fq.tail(k);
    auto hs = detail::symmetric_split(H);

    PartialMin out;
    Quadratic<double> g;
    g.A = from_eigen(Ax_new);
    g.b = from_eigen(b_new);
    if (g.A.rows() == 0) g.A = Mat<double>(0, d1);
    detail::reduce_hook(g);
    bool domain_empty = false;
    for (std::size_t r = 0; r < g.A.rows(); ++r)
        if (max_abs(g.A.row(r)) == 0.0 && g.b[r] != 0.0) domain_empty = true;

    if (!domain_empty && hs.kernel.cols() > 0) {
        VectorXd leak = hs.kernel.transpose() * h;
        if (leak.cwiseAbs().maxCoeff() > 1e-9 * (1.0 + h.cwiseAbs().maxCoeff()))
            throw Error(ErrorCode::UnboundedBelow, "linear decrease along a recession direction");
    }
    MatrixXd gQ = FQ.topLeftCorner(D1, D1) - G.transpose() * hs.pinv * G;
    gQ = 0.5 * (gQ + gQ.transpose());
    VectorXd gq = Fq.head(D1) - G.transpose() * hs.pinv * h;
    double gc = Fc - 0.5 * h.dot(hs.pinv * h);
    g.Q = from_eigen(gQ);
    g.q = from_eigen(gq);
    g.c = gc;
    out.value = g;
    out.empty = domain_empty;

    MatrixXd SM = P1 - Z * hs.pinv * G;
    VectorXd so = P0 - Z * hs.pinv * h;
    out.selector = Selector::affine(from_eigen(SM), from_eigen(so));
    MatrixXd N = Z * hs.kernel;
    out.lineality = LinealitySpace{d2, N.cols() ? from_eigen(N) : Mat<double>(d2, 0)};
    if (out.lineality.basis.rows() != d2) out.lineality.basis = Mat<double>(d2, 0);
    return out;
}

PartialMin pm_polyhedral(const Polyhedral<double>& f, std::size_t d2, const PartialMinOptions& opt) {
    const std::size_t d = f.dim, d1 = d - d2;
    PartialMin out;
    if (!polyhedron_nonempty(f.C, f.e)) {
        out.value = make_polyhedral<double>(d1, Mat<double>(1, d1), {0.0}, Mat<double>(1, d1), {-1.0});
        out.selector = Selector::constant(Vec<double>(d2, 0.0));
        out.lineality = LinealitySpace{d2, Mat<double>(d2, 0)};
        out.empty = true;
        return out;
    }
    auto rec = recession(ConvexFn(f));
    check_recession_linear(rec, d1);
    Mat<double> Gu = restrict_cols(f.G, d1), Cu = restrict_cols(f.C, d1);
    out.lineality = LinealitySpace{d2, null_space(vstack(Gu, Cu), d2)};

    // Epigraph over (x, tau, u); eliminate u.
    InequalitySystem<double> epi{Mat<double>(0, d + 1), {}};
    for (std::size_t j = 0; j < f.G.rows(); ++j) {
        Vec<double> a(d + 1, 0.0);
        for (std::size_t i = 0; i < d1; ++i) a[i] = f.G(j, i);
        a[d1] = -1.0;
        for (std::size_t i = 0; i < d2; ++i) a[d1 + 1 + i] = f.G(j, d1 + i);
        epi.A.append_row(a);
        epi.b.push_back(-f.beta[j]);
    }
    for (std::size_t r = 0; r < f.C.rows(); ++r) {
        Vec<double> a(d + 1, 0.0);
        for (std::size_t i = 0; i < d1; ++i) a[i] = f.C(r, i);
        for (std::size_t i = 0; i < d2; ++i) a[d1 + 1 + i] = f.C(r, d1 + i);
        epi.A.append_row(a);
        epi.b.push_back(f.e[r]);
    }
    auto proj = fm_project(epi, d2, opt.row_cap);
    Polyhedral<double> g;
    g.dim = d1;
    g.G = Mat<double>(0, d1);
    g.C = Mat<double>(0, d1);
    for (std::size_t r = 0; r < proj.rows(); ++r) {
        Vec<double> a = proj.A.row(r);
        double tc = a[d1];
        a.pop_back();
        if (tc < -1e-12) {
            g.G.append_row(scaled(a, -1.0 / tc));
            g.beta.push_back(proj.b[r] / tc);
        } else {
            g.C.append_row(a);
            g.e.push_back(proj.b[r]);
        }
    }
    if (g.G.rows() == 0) throw Error(ErrorCode::UnboundedBelow, "no lower bound survives the projection");
    prune(g);
    out.value = g;
    out.selector = Selector::lp(f, d1, orth_complement(out.lineality.basis, d2));
    return out;
}

PartialMin pm_sampled(const Sampled1D<double>& f) {
    PartialMin out;
    out.lineality = LinealitySpace{1, Mat<double>(1, 0)};
    if (f.knots.empty()) {
        Quadratic<double> g = zero_quadratic<double>(0);
        g.A = Mat<double>(1, 0);
        g.b = {1.0};
        out.value = g;
        out.selector = Selector::constant({0.0});
        out.empty = true;
        return out;
    }
    auto rec = recession(ConvexFn(f));
    check_recession_linear(rec, 0);
    out.lineality = lineality_space(rec);
    double best = inf();
    for (double v : f.values) best = std::min(best, v);
    double lo = inf(), hi = -inf();
    for (std::size_t i = 0; i < f.knots.size(); ++i)
        if (f.values[i] <= best + 1e-12 * (1.0 + std::fabs(best))) {
            lo = std::min(lo, f.knots[i]);
            hi = std::max(hi, f.knots[i]);
        }
    double u = std::clamp(0.0, lo, hi);
    if (out.lineality.size() > 0) u = 0.0;
    Quadratic<double> g = zero_quadratic<double>(0);
    g.c = best;
    out.value = g;
    out.selector = Selector::constant({u});
    return out;
}

}  // namespace

PartialMin partial_min(const ConvexFn& f, std::size_t d2, const PartialMinOptions& opt) {
    const std::size_t d = f.dim();
    if (d2 > d) throw Error(ErrorCode::DimensionMismatch, "minimizing over more coordinates than present");
    if (d2 == 0) {
        PartialMin out;
        out.value = f;
        out.selector = Selector::constant({});
        out.lineality = LinealitySpace{0, Mat<double>(0, 0)};
        return out;
    }
    return std::visit(
        [&](const auto& g) -> PartialMin {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<double>>) {
                return pm_quadratic(g, d2);
            } else if constexpr (std::is_same_v<F, Polyhedral<double>>) {
                return pm_polyhedral(g, d2, opt);
            } else if constexpr (std::is_same_v<F, Sampled1D<double>>) {
                return pm_sampled(g);
            } else {
                throw Error(ErrorCode::BackendClash, "partial minimization of a quadratic-plus-polyhedral sum");
            }
        },
        f.data());
}

Minimum minimize(const ConvexFn& f) {
    auto pm = partial_min(f, f.dim());
    Minimum out;
    out.value = pm.empty ? inf() : eval(pm.value, {});
    out.point = pm.empty ? Vec<double>(f.dim(), 0.0) : pm.selector({});
    return out;
}

double conjugate(const ConvexFn& f, const Vec<double>& y) {
    if (y.size() != f.dim()) throw Error(ErrorCode::DimensionMismatch, "conjugate argument length");
    return std::visit(
        [&](const auto& g) -> double {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<double>>) {
                try {
                    auto m = minimize(tilt(ConvexFn(g), scaled(y, -1.0)));
                    return -m.value;
                } catch (const Error& e) {
                    if (e.code() == ErrorCode::UnboundedBelow) return inf();
                    throw;
                }
            } else if constexpr (std::is_same_v<F, Polyhedral<double>>) {
                const std::size_t d = g.dim;
                lp::Problem p(d + 1);
                for (std::size_t i = 0; i < d; ++i) p.c[i] = -y[i];
                p.c[d] = 1.0;
                for (std::size_t j = 0; j < g.G.rows(); ++j) {
                    Vec<double> a = g.G.row(j);
                    a.push_back(-1.0);
                    p.add_row(a, lp::Sense::Le, -g.beta[j]);
                }
                for (std::size_t r = 0; r < g.C.rows(); ++r) {
                    Vec<double> a = g.C.row(r);
                    a.push_back(0.0);
                    p.add_row(a, lp::Sense::Le, g.e[r]);
                }
                auto res = lp::minimize(p);
                if (res.status == lp::Status::Optimal) return -res.objective;
                if (res.status == lp::Status::Infeasible) return -inf();
                return inf();
            } else if constexpr (std::is_same_v<F, Sampled1D<double>>) {
                const auto& k = g.knots;
                const auto& v = g.values;
                if (k.empty()) return -inf();
                if (g.extrapolate && k.size() >= 2) {
                    double sl = (v[1] - v[0]) / (k[1] - k[0]);
                    double sr = (v.back() - v[v.size() - 2]) / (k.back() - k[k.size() - 2]);
                    if (y[0] < sl - 1e-12 || y[0] > sr + 1e-12) return inf();
                } else if (g.extrapolate && y[0] != 0.0) {
                    return inf();
                }
                double best = -inf();
                for (std::size_t i = 0; i < k.size(); ++i) best = std::max(best, y[0] * k[i] - v[i]);
                return best;
            } else {
                throw Error(ErrorCode::BackendClash, "conjugate of a quadratic-plus-polyhedral sum");
            }
        },
        f.data());
}

}  // namespace cdp
