#pragma once

#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "convexdp/error.hpp"
#include "convexdp/linalg.hpp"

namespace cdp {

enum class Backend { Quadratic, Polyhedral, Sampled1D, QuadPoly };

[[nodiscard]] std::string_view to_string(Backend b) noexcept;

/// ½ x·Qx + q·x + c on the affine set {A x = b}.
template <class S>
struct Quadratic {
    Mat<S> Q;
    Vec<S> q;
    S c{0};
    Mat<S> A;
    Vec<S> b;

    [[nodiscard]] std::size_t dim() const noexcept { return q.size(); }
};

/// max_j (G_j·x + beta_j) on the polyhedron {C x <= e}.
template <class S>
struct Polyhedral {
    std::size_t dim = 0;
    Mat<S> G;
    Vec<S> beta;
    Mat<S> C;
    Vec<S> e;
};

/// Piecewise-linear interpolation of (knots, values). Without `extrapolate`
/// the function is +inf outside [knots.front(), knots.back()]; with it the
/// end segments continue linearly. No knots means the empty function.
template <class S>
struct Sampled1D {
    Vec<S> knots;
    Vec<S> values;
    bool extrapolate = false;
};

/// Sum of a genuinely quadratic and a polyhedral term. Evaluation only:
/// partial minimization of this mix is rejected.
template <class S>
struct QuadPoly {
    Quadratic<S> quad;
    Polyhedral<S> poly;
};

template <class S>
class BasicConvexFn {
public:
    using Storage = std::variant<Quadratic<S>, Polyhedral<S>, Sampled1D<S>, QuadPoly<S>>;

    BasicConvexFn() : data_(Quadratic<S>{}) {}
    BasicConvexFn(Quadratic<S> f) : data_(std::move(f)) {}
    BasicConvexFn(Polyhedral<S> f) : data_(std::move(f)) {}
    BasicConvexFn(Sampled1D<S> f) : data_(std::move(f)) {}
    BasicConvexFn(QuadPoly<S> f) : data_(std::move(f)) {}

    [[nodiscard]] Backend backend() const noexcept { return static_cast<Backend>(data_.index()); }
    [[nodiscard]] std::size_t dim() const {
        return std::visit(
            [](const auto& f) -> std::size_t {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, Quadratic<S>>)
                    return f.dim();
                else if constexpr (std::is_same_v<F, Polyhedral<S>>)
                    return f.dim;
                else if constexpr (std::is_same_v<F, Sampled1D<S>>)
                    return 1;
                else
                    return f.quad.dim();
            },
            data_);
    }

    [[nodiscard]] const Storage& data() const noexcept { return data_; }
    template <class F>
    [[nodiscard]] const F& as() const {
        if (auto* p = std::get_if<F>(&data_)) return *p;
        throw Error(ErrorCode::BackendClash, "unexpected backend");
    }
    template <class F>
    [[nodiscard]] bool is() const noexcept {
        return std::holds_alternative<F>(data_);
    }

private:
    Storage data_;
};

using ConvexFn = BasicConvexFn<double>;
using ExactConvexFn = BasicConvexFn<Rational>;

/// Positively homogeneous function produced by recession(); same backends.
template <class S>
struct BasicRecessionFn {
    BasicConvexFn<S> fn;
};
using RecessionFn = BasicRecessionFn<double>;

/// Inequality system A z <= b.
template <class S>
struct InequalitySystem {
    Mat<S> A;
    Vec<S> b;
    [[nodiscard]] std::size_t rows() const noexcept { return b.size(); }
};

// ============================================================================
// Constructors
// ============================================================================

template <class S>
[[nodiscard]] Quadratic<S> make_quadratic(Mat<S> Q, Vec<S> q, S c = S(0)) {
    const std::size_t d = q.size();
    if (Q.rows() != d || Q.cols() != d) throw Error(ErrorCode::DimensionMismatch, "quadratic term shape");
    return Quadratic<S>{std::move(Q), std::move(q), c, Mat<S>(0, d), {}};
}

template <class S>
[[nodiscard]] Quadratic<S> zero_quadratic(std::size_t d) {
    return Quadratic<S>{Mat<S>(d, d), Vec<S>(d, S(0)), S(0), Mat<S>(0, d), {}};
}

template <class S>
[[nodiscard]] Polyhedral<S> make_polyhedral(std::size_t d, Mat<S> G, Vec<S> beta, Mat<S> C = {}, Vec<S> e = {}) {
    if (C.rows() == 0) C = Mat<S>(0, d);
    if (G.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "polyhedral function needs at least one piece");
    if (G.cols() != d || G.rows() != beta.size() || C.cols() != d || C.rows() != e.size())
        throw Error(ErrorCode::DimensionMismatch, "polyhedral shapes");
    return Polyhedral<S>{d, std::move(G), std::move(beta), std::move(C), std::move(e)};
}

/// Indicator of {C x <= e}.
template <class S>
[[nodiscard]] Polyhedral<S> polyhedral_indicator(std::size_t d, Mat<S> C, Vec<S> e) {
    return make_polyhedral<S>(d, Mat<S>(1, d), Vec<S>{S(0)}, std::move(C), std::move(e));
}

// ============================================================================
// Evaluation
// ============================================================================

namespace detail {

template <class S>
bool row_leq(const Vec<S>& a, const Vec<S>& x, const S& rhs) {
    if constexpr (ScalarTraits<S>::exact) {
        return dot(a, x) <= rhs;
    } else {
        double lhs = 0.0, mag = std::fabs(rhs);
        for (std::size_t i = 0; i < a.size(); ++i) {
            lhs += a[i] * x[i];
            mag += std::fabs(a[i] * x[i]);
        }
        return lhs <= rhs + 1e-9 * (1.0 + mag);
    }
}

template <class S>
bool row_eq(const Vec<S>& a, const Vec<S>& x, const S& rhs) {
    if constexpr (ScalarTraits<S>::exact) {
        return dot(a, x) == rhs;
    } else {
        double lhs = 0.0, mag = std::fabs(rhs);
        for (std::size_t i = 0; i < a.size(); ++i) {
            lhs += a[i] * x[i];
            mag += std::fabs(a[i] * x[i]);
        }
        return std::fabs(lhs - rhs) <= 1e-9 * (1.0 + mag);
    }
}

template <class S>
S quad_form(const Mat<S>& Q, const Vec<S>& x) {
    S acc(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == S(0)) continue;
        S row(0);
        for (std::size_t j = 0; j < x.size(); ++j) row += Q(i, j) * x[j];
        acc += x[i] * row;
    }
    return acc;
}

template <class S>
std::optional<S> eval_quad(const Quadratic<S>& f, const Vec<S>& x) {
    for (std::size_t r = 0; r < f.A.rows(); ++r)
        if (!row_eq(f.A.row(r), x, f.b[r])) return std::nullopt;
    return quad_form(f.Q, x) / S(2) + dot(f.q, x) + f.c;
}

template <class S>
std::optional<S> eval_poly(const Polyhedral<S>& f, const Vec<S>& x) {
    for (std::size_t r = 0; r < f.C.rows(); ++r)
        if (!row_leq(f.C.row(r), x, f.e[r])) return std::nullopt;
    S best(0);
    for (std::size_t j = 0; j < f.G.rows(); ++j) {
        S v = dot(f.G.row(j), x) + f.beta[j];
        if (j == 0 || v > best) best = v;
    }
    return best;
}

template <class S>
std::optional<S> eval_sampled(const Sampled1D<S>& f, const S& x) {
    const auto& k = f.knots;
    const auto& v = f.values;
    const std::size_t n = k.size();
    if (n == 0) return std::nullopt;
    if (n == 1) {
        if (f.extrapolate) return v[0];
        if constexpr (ScalarTraits<S>::exact) {
            return x == k[0] ? std::optional<S>(v[0]) : std::nullopt;
        } else {
            return std::fabs(x - k[0]) <= 1e-9 * (1.0 + std::fabs(k[0])) ? std::optional<S>(v[0]) : std::nullopt;
        }
    }
    auto lerp = [&](std::size_t i, const S& t) { return v[i] + (v[i + 1] - v[i]) * (t - k[i]) / (k[i + 1] - k[i]); };
    if (x < k[0]) {
        if (f.extrapolate) return lerp(0, x);
        if constexpr (!ScalarTraits<S>::exact)
            if (k[0] - x <= 1e-9 * (1.0 + std::fabs(k[0]))) return v[0];
        return std::nullopt;
    }
    if (x > k[n - 1]) {
        if (f.extrapolate) return lerp(n - 2, x);
        if constexpr (!ScalarTraits<S>::exact)
            if (x - k[n - 1] <= 1e-9 * (1.0 + std::fabs(k[n - 1]))) return v[n - 1];
        return std::nullopt;
    }
    std::size_t lo = 0, hi = n - 1;
    while (hi - lo > 1) {
        std::size_t mid = (lo + hi) / 2;
        if (k[mid] <= x)
            lo = mid;
        else
            hi = mid;
    }
    return lerp(lo, x);
}

}  // namespace detail

/// f(x), with std::nullopt standing for +inf.
template <class S>
[[nodiscard]] std::optional<S> eval_ext(const BasicConvexFn<S>& f, const Vec<S>& x) {
    if (x.size() != f.dim())
        throw Error(ErrorCode::DimensionMismatch,
                    "point of dimension " + std::to_string(x.size()) + " for function on R^" + std::to_string(f.dim()));
    return std::visit(
        [&](const auto& g) -> std::optional<S> {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<S>>)
                return detail::eval_quad(g, x);
            else if constexpr (std::is_same_v<F, Polyhedral<S>>)
                return detail::eval_poly(g, x);
            else if constexpr (std::is_same_v<F, Sampled1D<S>>)
                return detail::eval_sampled(g, x[0]);
            else {
                auto a = detail::eval_quad(g.quad, x);
                if (!a) return std::nullopt;
                auto b = detail::eval_poly(g.poly, x);
                if (!b) return std::nullopt;
                return *a + *b;
            }
        },
        f.data());
}

[[nodiscard]] double eval(const ConvexFn& f, const Vec<double>& x);
[[nodiscard]] double eval(const RecessionFn& f, const Vec<double>& x);

// ============================================================================
// Algebra (templated; exact on Rational)
// ============================================================================

/// Exact conversion of a quadratic with Q = 0 into polyhedral form.
template <class S>
[[nodiscard]] Polyhedral<S> linear_to_polyhedral(const Quadratic<S>& f) {
    const std::size_t d = f.dim();
    Mat<S> G(1, d);
    G.set_row(0, f.q);
    Mat<S> C(0, d);
    Vec<S> e;
    for (std::size_t r = 0; r < f.A.rows(); ++r) {
        auto a = f.A.row(r);
        C.append_row(a);
        e.push_back(f.b[r]);
        C.append_row(scaled(a, S(-1)));
        e.push_back(-f.b[r]);
    }
    return Polyhedral<S>{d, std::move(G), Vec<S>{f.c}, std::move(C), std::move(e)};
}

template <class S>
[[nodiscard]] bool is_linear(const Quadratic<S>& f) {
    for (const auto& v : f.Q.data())
        if (v != S(0)) return false;
    return true;
}

namespace detail {

template <class S>
void prune_hook(Polyhedral<S>&) {}
template <>
void prune_hook<double>(Polyhedral<double>& f);
template <class S>
void reduce_hook(Quadratic<S>&) {}
template <>
void reduce_hook<double>(Quadratic<double>& f);

template <class S>
Quadratic<S> add_quad(const Quadratic<S>& f, const Quadratic<S>& g) {
    Quadratic<S> out;
    out.Q = add(f.Q, g.Q);
    out.q = add(f.q, g.q);
    out.c = f.c + g.c;
    out.A = vstack(f.A, g.A);
    if (out.A.rows() == 0) out.A = Mat<S>(0, f.dim());
    out.b = concat(f.b, g.b);
    if (f.A.rows() && g.A.rows()) reduce_hook(out);
    return out;
}

template <class S>
Polyhedral<S> add_poly(const Polyhedral<S>& f, const Polyhedral<S>& g, bool prune = true) {
    Polyhedral<S> out;
    out.dim = f.dim;
    out.G = Mat<S>(0, f.dim);
    for (std::size_t i = 0; i < f.G.rows(); ++i)
        for (std::size_t j = 0; j < g.G.rows(); ++j) {
            out.G.append_row(add(f.G.row(i), g.G.row(j)));
            out.beta.push_back(f.beta[i] + g.beta[j]);
        }
    out.C = vstack(f.C, g.C);
    if (out.C.rows() == 0) out.C = Mat<S>(0, f.dim);
    out.e = concat(f.e, g.e);
    if (prune) prune_hook(out);
    return out;
}

template <class S>
std::pair<std::optional<S>, std::optional<S>> sampled_domain(const Sampled1D<S>& f) {
    if (f.extrapolate || f.knots.empty()) return {std::nullopt, std::nullopt};
    return {f.knots.front(), f.knots.back()};
}

template <class S>
Sampled1D<S> add_sampled(const Sampled1D<S>& f, const Sampled1D<S>& g) {
    if (f.knots.empty() || g.knots.empty()) return Sampled1D<S>{};
    auto [flo, fhi] = sampled_domain(f);
    auto [glo, ghi] = sampled_domain(g);
    std::optional<S> lo = flo, hi = fhi;
    if (glo && (!lo || *glo > *lo)) lo = glo;
    if (ghi && (!hi || *ghi < *hi)) hi = ghi;
    if (lo && hi && *lo > *hi) return Sampled1D<S>{};
    Vec<S> knots;
    for (const auto* src : {&f.knots, &g.knots})
        for (const auto& k : *src)
            if ((!lo || k >= *lo) && (!hi || k <= *hi)) knots.push_back(k);
    if (lo) knots.push_back(*lo);
    if (hi) knots.push_back(*hi);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    Sampled1D<S> out;
    out.extrapolate = f.extrapolate && g.extrapolate;
    for (const auto& k : knots) {
        auto a = eval_sampled(f, k);
        auto b = eval_sampled(g, k);
        if (!a || !b) continue;
        out.knots.push_back(k);
        out.values.push_back(*a + *b);
    }
    return out;
}

}  // namespace detail

/// Pointwise sum. Quadratic + Polyhedral becomes Polyhedral when the
/// quadratic part is affine, and an evaluation-only QuadPoly otherwise.
template <class S>
[[nodiscard]] BasicConvexFn<S> add(const BasicConvexFn<S>& f, const BasicConvexFn<S>& g) {
    if (f.dim() != g.dim()) throw Error(ErrorCode::DimensionMismatch, "sum of functions on different spaces");
    using Q = Quadratic<S>;
    using P = Polyhedral<S>;
    using D = Sampled1D<S>;
    using M = QuadPoly<S>;
    if (f.template is<Q>() && g.template is<Q>()) return detail::add_quad(f.template as<Q>(), g.template as<Q>());
    if (f.template is<P>() && g.template is<P>()) return detail::add_poly(f.template as<P>(), g.template as<P>());
    if (f.template is<D>() && g.template is<D>()) return detail::add_sampled(f.template as<D>(), g.template as<D>());
    if (f.template is<D>() || g.template is<D>())
        throw Error(ErrorCode::BackendClash, "sampled functions only combine with sampled functions");
    // Remaining mixes involve Quadratic, Polyhedral and QuadPoly.
    auto split = [](const BasicConvexFn<S>& h, std::size_t d) -> M {
        if (h.template is<Q>()) {
            const auto& q = h.template as<Q>();
            if (is_linear(q)) return M{zero_quadratic<S>(d), linear_to_polyhedral(q)};
            return M{q, make_polyhedral<S>(d, Mat<S>(1, d), Vec<S>{S(0)})};
        }
        if (h.template is<P>()) return M{zero_quadratic<S>(d), h.template as<P>()};
        return h.template as<M>();
    };
    const std::size_t d = f.dim();
    M a = split(f, d), b = split(g, d);
    M out{detail::add_quad(a.quad, b.quad), detail::add_poly(a.poly, b.poly)};
    if (is_linear(out.quad)) return detail::add_poly(linear_to_polyhedral(out.quad), out.poly);
    return out;
}

/// f + v·x.
template <class S>
[[nodiscard]] BasicConvexFn<S> tilt(const BasicConvexFn<S>& f, const Vec<S>& v) {
    if (v.size() != f.dim()) throw Error(ErrorCode::DimensionMismatch, "tilt vector length");
    return std::visit(
        [&](auto g) -> BasicConvexFn<S> {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<S>>) {
                g.q = add(g.q, v);
            } else if constexpr (std::is_same_v<F, Polyhedral<S>>) {
                for (std::size_t j = 0; j < g.G.rows(); ++j) g.G.set_row(j, add(g.G.row(j), v));
            } else if constexpr (std::is_same_v<F, Sampled1D<S>>) {
                for (std::size_t i = 0; i < g.knots.size(); ++i) g.values[i] += v[0] * g.knots[i];
            } else {
                g.quad.q = add(g.quad.q, v);
            }
            return g;
        },
        f.data());
}

/// alpha * f for alpha > 0; for alpha = 0 the indicator of the closed domain.
template <class S>
[[nodiscard]] BasicConvexFn<S> scale(const BasicConvexFn<S>& f, const S& alpha) {
    if (alpha < S(0)) throw Error(ErrorCode::DimensionMismatch, "negative scale factor");
    return std::visit(
        [&](auto g) -> BasicConvexFn<S> {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<S>>) {
                g.Q = scaled(g.Q, alpha);
                g.q = scaled(g.q, alpha);
                g.c *= alpha;
            } else if constexpr (std::is_same_v<F, Polyhedral<S>>) {
                if (alpha == S(0)) {
                    g.G = Mat<S>(1, g.dim);
                    g.beta = Vec<S>{S(0)};
                } else {
                    g.G = scaled(g.G, alpha);
                    g.beta = scaled(g.beta, alpha);
                }
            } else if constexpr (std::is_same_v<F, Sampled1D<S>>) {
                g.values = scaled(g.values, alpha);
            } else {
                g.quad.Q = scaled(g.quad.Q, alpha);
                g.quad.q = scaled(g.quad.q, alpha);
                g.quad.c *= alpha;
                if (alpha == S(0)) {
                    g.poly.G = Mat<S>(1, g.poly.dim);
                    g.poly.beta = Vec<S>{S(0)};
                    return detail::add_poly(linear_to_polyhedral(g.quad), g.poly);
                }
                g.poly.G = scaled(g.poly.G, alpha);
                g.poly.beta = scaled(g.poly.beta, alpha);
            }
            return g;
        },
        f.data());
}

/// Σ π_i f_i with domain the intersection of the domains.
template <class S>
[[nodiscard]] BasicConvexFn<S> cond_expect_fn(const std::vector<std::pair<S, BasicConvexFn<S>>>& children) {
    if (children.empty()) throw Error(ErrorCode::ProbabilityMass, "no children");
    S total(0);
    for (const auto& [p, f] : children) {
        if (p <= S(0)) throw Error(ErrorCode::ProbabilityMass, "nonpositive weight");
        total += p;
    }
    if constexpr (ScalarTraits<S>::exact) {
        if (total != S(1)) throw Error(ErrorCode::ProbabilityMass, "weights sum to " + total.str());
    } else {
        if (std::fabs(total - 1.0) > 1e-12) throw Error(ErrorCode::ProbabilityMass, "weights sum to " + std::to_string(total));
    }
    BasicConvexFn<S> acc = scale(children[0].second, children[0].first);
    for (std::size_t i = 1; i < children.size(); ++i) acc = add(acc, scale(children[i].second, children[i].first));
    return acc;
}

/// f(M z + o).
template <class S>
[[nodiscard]] BasicConvexFn<S> compose_affine(const BasicConvexFn<S>& f, const Mat<S>& M, const Vec<S>& o) {
    if (M.rows() != f.dim() || o.size() != f.dim()) throw Error(ErrorCode::DimensionMismatch, "affine map shape");
    const std::size_t n = M.cols();
    auto comp_quad = [&](const Quadratic<S>& g) {
        Quadratic<S> out;
        Mat<S> QM = matmul(g.Q, M);
        out.Q = matmul(transpose(M), QM);
        Vec<S> Qo = matvec(g.Q, o);
        out.q = matvec_t(M, add(Qo, g.q));
        out.c = detail::quad_form(g.Q, o) / S(2) + dot(g.q, o) + g.c;
        out.A = g.A.rows() ? matmul(g.A, M) : Mat<S>(0, n);
        out.b = g.A.rows() ? sub(g.b, matvec(g.A, o)) : Vec<S>{};
        return out;
    };
    auto comp_poly = [&](const Polyhedral<S>& g) {
        Polyhedral<S> out;
        out.dim = n;
        out.G = matmul(g.G, M);
        out.beta = add(g.beta, matvec(g.G, o));
        out.C = g.C.rows() ? matmul(g.C, M) : Mat<S>(0, n);
        out.e = g.C.rows() ? sub(g.e, matvec(g.C, o)) : Vec<S>{};
        return out;
    };
    return std::visit(
        [&](const auto& g) -> BasicConvexFn<S> {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<S>>) {
                return comp_quad(g);
            } else if constexpr (std::is_same_v<F, Polyhedral<S>>) {
                return comp_poly(g);
            } else if constexpr (std::is_same_v<F, Sampled1D<S>>) {
                if (n != 1) throw Error(ErrorCode::BackendClash, "sampled function composed with a multivariate map");
                const S m = M(0, 0);
                Sampled1D<S> out;
                out.extrapolate = g.extrapolate;
                if (m == S(0)) {
                    auto v = detail::eval_sampled(g, o[0]);
                    if (v) {
                        out.knots = {S(0)};
                        out.values = {*v};
                        out.extrapolate = true;
                    }
                    return out;
                }
                for (std::size_t i = 0; i < g.knots.size(); ++i) {
                    out.knots.push_back((g.knots[i] - o[0]) / m);
                    out.values.push_back(g.values[i]);
                }
                if (m < S(0)) {
                    std::reverse(out.knots.begin(), out.knots.end());
                    std::reverse(out.values.begin(), out.values.end());
                }
                return out;
            } else {
                return QuadPoly<S>{comp_quad(g.quad), comp_poly(g.poly)};
            }
        },
        f.data());
}

/// f viewed on R^total, acting on coordinates [offset, offset + dim).
template <class S>
[[nodiscard]] BasicConvexFn<S> embed(const BasicConvexFn<S>& f, std::size_t total, std::size_t offset) {
    Mat<S> M(f.dim(), total);
    for (std::size_t i = 0; i < f.dim(); ++i) M(i, offset + i) = S(1);
    return compose_affine(f, M, Vec<S>(f.dim(), S(0)));
}

template <class S>
[[nodiscard]] BasicRecessionFn<S> recession(const BasicConvexFn<S>& f) {
    auto rec_quad = [](const Quadratic<S>& g) {
        const std::size_t d = g.dim();
        Quadratic<S> out = zero_quadratic<S>(d);
        out.q = g.q;
        out.A = vstack(g.Q, g.A);
        out.b = Vec<S>(out.A.rows(), S(0));
        return out;
    };
    auto rec_poly = [](const Polyhedral<S>& g) {
        Polyhedral<S> out = g;
        out.beta.assign(g.beta.size(), S(0));
        out.e.assign(g.e.size(), S(0));
        return out;
    };
    BasicConvexFn<S> r = std::visit(
        [&](const auto& g) -> BasicConvexFn<S> {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<S>>) {
                return rec_quad(g);
            } else if constexpr (std::is_same_v<F, Polyhedral<S>>) {
                return rec_poly(g);
            } else if constexpr (std::is_same_v<F, Sampled1D<S>>) {
                Sampled1D<S> out;
                const std::size_t n = g.knots.size();
                if (n == 0) return out;
                if (!g.extrapolate) {
                    out.knots = {S(0)};
                    out.values = {S(0)};
                    return out;
                }
                S left(0), right(0);
                if (n >= 2) {
                    left = (g.values[1] - g.values[0]) / (g.knots[1] - g.knots[0]);
                    right = (g.values[n - 1] - g.values[n - 2]) / (g.knots[n - 1] - g.knots[n - 2]);
                }
                out.knots = {S(-1), S(0), S(1)};
                out.values = {-left, S(0), right};
                out.extrapolate = true;
                return out;
            } else {
                return detail::add_poly(linear_to_polyhedral(rec_quad(g.quad)), rec_poly(g.poly), false);
            }
        },
        f.data());
    return BasicRecessionFn<S>{std::move(r)};
}

// ============================================================================
// Floating-point algorithms
// ============================================================================

/// Throws DimensionMismatch / BackendClash style errors on broken invariants
/// (asymmetric or indefinite Q, empty piece list, nonconvex samples).
void validate(const ConvexFn& f);

struct LinealitySpace {
    std::size_t dim = 0;
    /// dim x k matrix with orthonormal columns; k = 0 means {0}.
    Mat<double> basis;
    [[nodiscard]] std::size_t size() const noexcept { return basis.cols(); }
};

[[nodiscard]] LinealitySpace lineality_space(const RecessionFn& f);

/// Orthonormal basis of the kernel of M (columns), relative tolerance 1e-10.
[[nodiscard]] Mat<double> null_space(const Mat<double>& M, std::size_t cols);

/// Minimizer map for partial minimization: u*(x).
class Selector {
public:
    Selector() = default;
    static Selector affine(Mat<double> M, Vec<double> o);
    static Selector lp(Polyhedral<double> f, std::size_t d1, Mat<double> range_basis);
    static Selector constant(Vec<double> u);

    [[nodiscard]] Vec<double> operator()(const Vec<double>& x) const;
    [[nodiscard]] bool is_affine() const noexcept { return kind_ == Kind::Affine; }
    [[nodiscard]] const Mat<double>& matrix() const noexcept { return M_; }
    [[nodiscard]] const Vec<double>& offset() const noexcept { return o_; }

private:
    enum class Kind { Affine, Lp, Constant };
    Kind kind_ = Kind::Constant;
    Mat<double> M_;
    Vec<double> o_;
    std::shared_ptr<const Polyhedral<double>> f_;
    std::size_t d1_ = 0;
    Mat<double> basis_;
};

struct PartialMin {
    ConvexFn value;  ///< g(x) = inf_u f(x, u)
    Selector selector;
    LinealitySpace lineality;
    bool empty = false;  ///< f is +inf everywhere
};

struct PartialMinOptions {
    std::size_t row_cap = 10000;
};

/// Minimizes f over its last d2 coordinates.
[[nodiscard]] PartialMin partial_min(const ConvexFn& f, std::size_t d2, const PartialMinOptions& opt = {});

struct Minimum {
    double value = 0.0;  ///< +inf when the domain is empty
    Vec<double> point;
};

/// Global minimum through partial_min over every coordinate.
[[nodiscard]] Minimum minimize(const ConvexFn& f);

/// f*(y) = sup_x y·x - f(x); +inf when unbounded.
[[nodiscard]] double conjugate(const ConvexFn& f, const Vec<double>& y);

/// Fourier-Motzkin elimination of the last d2 variables.
[[nodiscard]] InequalitySystem<double> fm_project(const InequalitySystem<double>& sys, std::size_t d2,
                                                  std::size_t row_cap = 10000);

/// Removes pieces and domain rows that never bind (LP based).
void prune(Polyhedral<double>& f);

/// Whether {x : C x <= e} is nonempty.
[[nodiscard]] bool polyhedron_nonempty(const Mat<double>& C, const Vec<double>& e);

/// Checks {d : f(0, d) <= 0} for a positively homogeneous f on R^{d1+d2}:
/// throws UnboundedBelow when some d has f(0, d) < 0 and NonLinearRecession
/// when the set is not a linear space.
void check_recession_linear(const RecessionFn& f, std::size_t d1);

}  // namespace cdp
