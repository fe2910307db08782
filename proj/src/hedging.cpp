#include "convexdp/hedging.hpp"

#include <algorithm>
#include <cmath>

#include "convexdp/lp.hpp"
#include "convexdp/parallel.hpp"
#include "eigen_util.hpp"

namespace cdp {

void MarketModel::validate() const {
    const std::size_t n = tree.size();
    if (s.size() != n || D.size() != n || c.size() != n) throw Error(ErrorCode::DimensionMismatch, "one s, D, c entry per node expected");
    for (NodeIndex i = 0; i < n; ++i) {
        if (s[i].size() != J) throw Error(ErrorCode::DimensionMismatch, "price vector length", tree.id(i));
        for (double v : s[i])
            if (!std::isfinite(v) || v == 0.0) throw Error(ErrorCode::Parse, "prices must be finite and nonzero", tree.id(i));
        if (D[i].rows() > 0 && D[i].A.cols() != J) throw Error(ErrorCode::DimensionMismatch, "constraint width", tree.id(i));
    }
}

Vec<double> MarketModel::returns(NodeIndex i) const {
    const NodeIndex p = tree.parent(i);
    Vec<double> r(J);
    for (std::size_t j = 0; j < J; ++j) r[j] = (s[i][j] - s[p][j]) / s[p][j];
    return r;
}

MarketModel make_market(ScenarioTree tree, std::vector<Vec<double>> s) {
    MarketModel m;
    m.J = s.empty() ? 1 : s[0].size();
    m.D.resize(tree.size());
    for (auto& d : m.D) d.A = Mat<double>(0, m.J);
    m.c.assign(tree.size(), 0.0);
    m.s = std::move(s);
    m.tree = std::move(tree);
    return m;
}

namespace {

std::vector<NodeIndex> trading_nodes(const ScenarioTree& tree) {
    std::vector<NodeIndex> out;
    for (NodeIndex i = 0; i < tree.size(); ++i)
        if (!tree.is_leaf(i)) out.push_back(i);
    return out;
}

/// D_t expressed on cash amounts U = s x.
InequalitySystem<double> cash_constraints(const MarketModel& m, NodeIndex i) {
    InequalitySystem<double> out = m.D[i];
    if (out.rows() == 0) out.A = Mat<double>(0, m.J);
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t j = 0; j < m.J; ++j) out.A(r, j) /= m.s[i][j];
    return out;
}

// ----------------------------------------------------------------------------
// One-dimensional and coordinate searches
// ----------------------------------------------------------------------------

constexpr double kGolden = 0.6180339887498949;

double golden(const std::function<double(double)>& f, double lo, double hi) {
    double a = lo, b = hi;
    double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 300 && (b - a) > 1e-13 * (1.0 + std::fabs(a) + std::fabs(b)); ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGolden * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGolden * (b - a);
            f2 = f(x2);
        }
    }
    double best = f1 <= f2 ? x1 : x2, fb = std::min(f1, f2);
    for (double e : {lo, hi})
        if (double fe = f(e); fe < fb) best = e, fb = fe;
    return best;
}

/// Minimizer of a convex f on [tl, tu] (tl <= 0 <= tu, possibly infinite),
/// growing the bracket while the minimizer sits on a soft edge.
double line_min(const std::function<double(double)>& f, double tl, double tu, double scale) {
    double lo = std::max(tl, -scale), hi = std::min(tu, scale);
    if (hi - lo <= 0.0) return 0.0;
    double t = 0.0;
    for (int it = 0; it < 80; ++it) {
        t = golden(f, lo, hi);
        const double w = hi - lo;
        const bool at_hi = hi < tu && hi - t < 1e-3 * w;
        const bool at_lo = lo > tl && t - lo < 1e-3 * w;
        if (!at_hi && !at_lo) return t;
        if (w > 1e15) return t;
        if (at_hi) {
            lo = std::max(tl, t - w);
            hi = std::min(tu, t + 4.0 * w);
        } else {
            hi = std::min(tu, t + w);
            lo = std::max(tl, t - 4.0 * w);
        }
    }
    return t;
}

struct Search {
    const InequalitySystem<double>* D = nullptr;
    double cap = 1e8;
};

std::pair<double, double> line_bounds(const Search& sr, const Vec<double>& U, const Vec<double>& d) {
    double tl = -inf(), tu = inf();
    for (std::size_t j = 0; j < U.size(); ++j) {
        if (d[j] > 0) {
            tu = std::min(tu, (sr.cap - U[j]) / d[j]);
            tl = std::max(tl, (-sr.cap - U[j]) / d[j]);
        } else if (d[j] < 0) {
            tu = std::min(tu, (-sr.cap - U[j]) / d[j]);
            tl = std::max(tl, (sr.cap - U[j]) / d[j]);
        }
    }
    if (sr.D)
        for (std::size_t r = 0; r < sr.D->rows(); ++r) {
            double ad = 0.0, au = 0.0;
            for (std::size_t j = 0; j < U.size(); ++j) {
                ad += sr.D->A(r, j) * d[j];
                au += sr.D->A(r, j) * U[j];
            }
            const double slack = std::max(0.0, sr.D->b[r] - au);
            if (ad > 1e-15)
                tu = std::min(tu, slack / ad);
            else if (ad < -1e-15)
                tl = std::max(tl, slack / ad);
        }
    return {std::min(tl, 0.0), std::max(tu, 0.0)};
}

/// Coordinate descent over coordinate and pairwise directions; stops when a
/// full sweep improves the value by at most 1e-10 relative.
Vec<double> coordinate_descent(const std::function<double(const Vec<double>&)>& phi, const Search& sr, Vec<double> U) {
    const std::size_t n = U.size();
    std::vector<Vec<double>> dirs;
    for (std::size_t j = 0; j < n; ++j) {
        Vec<double> d(n, 0.0);
        d[j] = 1.0;
        dirs.push_back(d);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (double sgn : {1.0, -1.0}) {
                Vec<double> d(n, 0.0);
                d[i] = 1.0;
                d[j] = sgn;
                dirs.push_back(d);
            }
    double cur = phi(U);
    for (int sweep = 0; sweep < 2000; ++sweep) {
        const double before = cur;
        for (const auto& d : dirs) {
            auto [tl, tu] = line_bounds(sr, U, d);
            double scale = 1.0 + max_abs(U);
            auto f = [&](double t) {
                Vec<double> V = U;
                for (std::size_t j = 0; j < n; ++j) V[j] += t * d[j];
                return phi(V);
            };
            double t = line_min(f, tl, tu, scale);
            if (double ft = f(t); ft < cur) {
                for (std::size_t j = 0; j < n; ++j) U[j] += t * d[j];
                cur = ft;
            }
        }
        if (before - cur <= 1e-10 * (1.0 + std::fabs(cur))) break;
    }
    return U;
}

bool strictly_inside(const Search& sr, const Vec<double>& U) {
    for (double u : U)
        if (std::fabs(u) > sr.cap * (1.0 - 1e-9)) return false;
    if (sr.D)
        for (std::size_t r = 0; r < sr.D->rows(); ++r) {
            double au = 0.0;
            for (std::size_t j = 0; j < U.size(); ++j) au += sr.D->A(r, j) * U[j];
            if (au > sr.D->b[r] - 1e-9) return false;
        }
    return true;
}

/// Newton steps for phi(U) = sum_c w_c exp(-rho R_c·U) (any positive scaling
/// of it), used when no constraint is active.
Vec<double> newton_polish(const std::vector<double>& w, const std::vector<Vec<double>>& R, double rho, const Search& sr, Vec<double> U) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const auto n = static_cast<Eigen::Index>(U.size());
    auto value = [&](const Vec<double>& V) {
        double acc = 0.0;
        for (std::size_t c = 0; c < R.size(); ++c) acc += w[c] * std::exp(-rho * dot(R[c], V));
        return acc;
    };
    auto gradient = [&](const Vec<double>& V) {
        VectorXd g = VectorXd::Zero(n);
        for (std::size_t c = 0; c < R.size(); ++c) g -= rho * w[c] * std::exp(-rho * dot(R[c], V)) * detail::to_eigen(R[c]);
        return g;
    };
    for (int it = 0; it < 30 && strictly_inside(sr, U); ++it) {
        VectorXd g = gradient(U);
        MatrixXd H = MatrixXd::Zero(n, n);
        for (std::size_t c = 0; c < R.size(); ++c) {
            const double e = w[c] * std::exp(-rho * dot(R[c], U));
            VectorXd r = detail::to_eigen(R[c]);
            H += rho * rho * e * r * r.transpose();
        }
        auto split = detail::symmetric_split(H);
        VectorXd step = -split.pinv * g;
        if (step.norm() <= 1e-16 * (1.0 + detail::to_eigen(U).norm())) break;
        Vec<double> next = U;
        const double f0 = value(U), g0 = g.norm();
        // Near the optimum value differences drown in rounding; a smaller
        // gradient is then the acceptance signal.
        auto accept = [&](const Vec<double>& V) { return strictly_inside(sr, V) && (value(V) < f0 || gradient(V).norm() < g0); };
        double alpha = 1.0;
        bool ok = false;
        for (int k = 0; k < 40 && !ok; ++k, alpha *= 0.5) {
            for (Eigen::Index j = 0; j < n; ++j) next[static_cast<std::size_t>(j)] = U[static_cast<std::size_t>(j)] + alpha * step(j);
            ok = accept(next);
        }
        if (!ok) break;
        alpha *= 2.0;
        U = next;
        if (alpha * step.norm() <= 1e-15 * (1.0 + detail::to_eigen(U).norm())) break;
    }
    return U;
}

Vec<double> feasible_start(const InequalitySystem<double>& D, std::size_t n, NodeIndex node, const std::string& id) {
    Vec<double> zero(n, 0.0);
    bool ok = true;
    for (std::size_t r = 0; r < D.rows(); ++r)
        if (D.b[r] < 0) ok = false;
    if (ok) return zero;
    lp::Problem p(n);
    for (std::size_t r = 0; r < D.rows(); ++r) p.add_row(D.A.row(r), lp::Sense::Le, D.b[r]);
    auto res = lp::minimize(p);
    (void)node;
    if (res.status != lp::Status::Optimal) throw Error(ErrorCode::Infeasible, "position constraints are empty", id);
    return res.x;
}

/// Local arbitrage LP at one node: max E[R·d] with R_c·d >= 0, d in the
/// recession cone of the cash constraints, |d| <= 1.
double local_arbitrage(const std::vector<double>& p, const std::vector<Vec<double>>& R, const InequalitySystem<double>& D) {
    const std::size_t n = R.empty() ? 0 : R[0].size();
    lp::Problem lp(n);
    lp.lower.assign(n, -1.0);
    lp.upper.assign(n, 1.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < R.size(); ++c) lp.c[j] -= p[c] * R[c][j];
    for (const auto& r : R) lp.add_row(r, lp::Sense::Ge, 0.0);
    for (std::size_t r = 0; r < D.rows(); ++r) lp.add_row(D.A.row(r), lp::Sense::Le, 0.0);
    auto res = lp::minimize(lp);
    return res.status == lp::Status::Optimal ? -res.objective : 0.0;
}

void refuse_if_arbitrage(const NAVerdict& v) {
    if (!v.pass) throw Error(ErrorCode::ArbitrageRefusal, "market admits arbitrage; expected gains " + std::to_string(v.optimum));
}

Vec<double> to_positions(const MarketModel& m, NodeIndex i, const Vec<double>& U) {
    Vec<double> x(U.size());
    for (std::size_t j = 0; j < U.size(); ++j) x[j] = U[j] / m.s[i][j];
    return x;
}

}  // namespace

// ============================================================================
// No-arbitrage
// ============================================================================

NAVerdict na_check(const MarketModel& m, double tol) {
    m.validate();
    const auto& tree = m.tree;
    const std::size_t J = m.J;
    auto nodes = trading_nodes(tree);
    std::vector<std::size_t> slot(tree.size(), 0);
    for (std::size_t k = 0; k < nodes.size(); ++k) slot[nodes[k]] = k * J;
    const std::size_t n = nodes.size() * J;

    lp::Problem p(n);
    p.lower.assign(n, -1.0);
    p.upper.assign(n, 1.0);
    for (NodeIndex i : nodes) {
        for (NodeIndex ch : tree.children(i)) {
            const double pr = tree.probability(ch);
            for (std::size_t j = 0; j < J; ++j) p.c[slot[i] + j] -= pr * (m.s[ch][j] - m.s[i][j]);
        }
        for (std::size_t r = 0; r < m.D[i].rows(); ++r) {
            Vec<double> row(n, 0.0);
            for (std::size_t j = 0; j < J; ++j) row[slot[i] + j] = m.D[i].A(r, j);
            p.add_row(row, lp::Sense::Le, 0.0);
        }
    }
    const auto leaves = tree.leaves();
    std::vector<Vec<double>> gain_rows;
    for (NodeIndex leaf : leaves) {
        Vec<double> row(n, 0.0);
        for (NodeIndex k = leaf; k != tree.root(); k = tree.parent(k)) {
            const NodeIndex par = tree.parent(k);
            for (std::size_t j = 0; j < J; ++j) row[slot[par] + j] = m.s[k][j] - m.s[par][j];
        }
        p.add_row(row, lp::Sense::Ge, 0.0);
        gain_rows.push_back(std::move(row));
    }
    auto res = lp::minimize(p);
    NAVerdict v;
    v.optimum = res.status == lp::Status::Optimal ? -res.objective : 0.0;
    v.pass = v.optimum <= tol;
    if (!v.pass) {
        v.direction.assign(tree.size(), Vec<double>(J, 0.0));
        for (NodeIndex i : nodes)
            for (std::size_t j = 0; j < J; ++j) v.direction[i][j] = res.x[slot[i] + j];
        for (const auto& row : gain_rows) v.gains.push_back(dot(row, res.x));
    }

    // Support function of D_t at E_t[Delta s_{t+1}].
    v.support.assign(tree.size(), 0.0);
    for (NodeIndex i : nodes) {
        Vec<double> drift(J, 0.0);
        for (NodeIndex ch : tree.children(i))
            for (std::size_t j = 0; j < J; ++j) drift[j] += tree.cond_prob<double>(ch) * (m.s[ch][j] - m.s[i][j]);
        lp::Problem sp(J);
        for (std::size_t j = 0; j < J; ++j) sp.c[j] = -drift[j];
        for (std::size_t r = 0; r < m.D[i].rows(); ++r) sp.add_row(m.D[i].A.row(r), lp::Sense::Le, m.D[i].b[r]);
        auto sr = lp::minimize(sp);
        v.support[i] = sr.status == lp::Status::Optimal ? -sr.objective : sr.status == lp::Status::Unbounded ? inf() : -inf();
    }
    return v;
}

// ============================================================================
// Loss functions
// ============================================================================

LossFn quadratic_loss(double a, double b) {
    return {"quadratic", ConvexFn(make_quadratic<double>(Mat<double>{{2.0 * a}}, {b})), [a, b](double u) { return a * u * u + b * u; }};
}

LossFn piecewise_linear_loss(const Vec<double>& slopes, const Vec<double>& intercepts) {
    if (slopes.size() != intercepts.size() || slopes.empty()) throw Error(ErrorCode::DimensionMismatch, "one intercept per slope");
    Mat<double> G(slopes.size(), 1);
    for (std::size_t k = 0; k < slopes.size(); ++k) G(k, 0) = slopes[k];
    return {"piecewise-linear", ConvexFn(make_polyhedral<double>(1, G, intercepts)), [slopes, intercepts](double u) {
                double best = -inf();
                for (std::size_t k = 0; k < slopes.size(); ++k) best = std::max(best, slopes[k] * u + intercepts[k]);
                return best;
            }};
}

LossFn exp_loss(double rho) {
    if (!(rho > 0)) throw Error(ErrorCode::DimensionMismatch, "rho must be positive");
    return {"exponential", std::nullopt, [rho](double u) { return std::exp(rho * u) / rho; }};
}

LossFn custom_loss(std::string name, std::function<double(double)> value) { return {std::move(name), std::nullopt, std::move(value)}; }

// ============================================================================
// Control-form hedging
// ============================================================================

ControlSystem alm_system(const MarketModel& m) {
    m.validate();
    auto sys = make_system(m.tree, 1, m.J);
    for (NodeIndex i = 1; i < m.tree.size(); ++i) {
        auto r = m.returns(i);
        for (std::size_t j = 0; j < m.J; ++j) sys.B[i](0, j) = r[j];
    }
    return sys;
}

std::vector<ConvexFn> alm_costs(const MarketModel& m, const LossFn& V, double w) {
    if (!V.fn) throw Error(ErrorCode::BackendClash, "loss '" + V.name + "' has no exact backend; use the wealth grid");
    const auto& tree = m.tree;
    const std::size_t d = 1 + m.J;
    std::vector<ConvexFn> L(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (tree.is_leaf(i)) {
            Mat<double> M(1, d);
            M(0, 0) = -1.0;
            auto closed = zero_quadratic<double>(d);
            closed.A = Mat<double>(m.J, d);
            for (std::size_t j = 0; j < m.J; ++j) closed.A(j, 1 + j) = 1.0;
            closed.b = Vec<double>(m.J, 0.0);
            L[i] = add(compose_affine(*V.fn, M, {m.c[i]}), ConvexFn(closed));
        } else {
            auto D = cash_constraints(m, i);
            if (D.rows() > 0) {
                Mat<double> C(D.rows(), d);
                set_block(C, 0, 1, D.A);
                L[i] = polyhedral_indicator<double>(d, C, D.b);
            } else {
                L[i] = zero_quadratic<double>(d);
            }
        }
        if (i == tree.root()) {
            auto pin = zero_quadratic<double>(d);
            pin.A = Mat<double>(1, d);
            pin.A(0, 0) = 1.0;
            pin.b = {w};
            L[i] = add(L[i], ConvexFn(pin));
        }
    }
    return L;
}

AlmResult solve_alm(const MarketModel& m, const LossFn& V, double w, const AlmOptions& opt) {
    AlmResult out;
    out.verdict = na_check(m);
    if (opt.refuse_on_arbitrage) refuse_if_arbitrage(out.verdict);
    auto sys = alm_system(m);
    auto vf = solve_oc(sys, alm_costs(m, V, w));
    out.value = eval(vf.J[0], {w});
    if (!std::isfinite(out.value)) throw Error(ErrorCode::Infeasible, "no admissible strategy", m.tree.id(0));
    auto path = simulate(sys, vf, {w});
    for (NodeIndex i = 0; i < m.tree.size(); ++i) {
        out.X.push_back(path.X[i][0]);
        out.U.push_back(path.U[i]);
        out.positions.push_back(to_positions(m, i, path.U[i]));
    }
    return out;
}

AlmResult solve_alm_grid(const MarketModel& m, const LossFn& V, double w, const GridOptions& opt) {
    m.validate();
    if (opt.points < 2 || !(opt.hi > opt.lo)) throw Error(ErrorCode::DimensionMismatch, "wealth grid needs two points and lo < hi");
    AlmResult out;
    out.verdict = na_check(m);
    if (opt.refuse_on_arbitrage) refuse_if_arbitrage(out.verdict);
    const auto& tree = m.tree;
    Vec<double> knots(opt.points);
    for (std::size_t k = 0; k < opt.points; ++k)
        knots[k] = opt.lo + (opt.hi - opt.lo) * static_cast<double>(k) / static_cast<double>(opt.points - 1);

    std::vector<ConvexFn> J(tree.size());
    std::vector<InequalitySystem<double>> Dc(tree.size());
    std::vector<Vec<double>> start(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i)
        if (!tree.is_leaf(i)) {
            Dc[i] = cash_constraints(m, i);
            start[i] = feasible_start(Dc[i], m.J, i, tree.id(i));
        }

    auto inner = [&](NodeIndex i, double X, const Vec<double>& U0) {
        std::vector<double> p;
        std::vector<Vec<double>> R;
        for (NodeIndex ch : tree.children(i)) {
            p.push_back(tree.cond_prob<double>(ch));
            R.push_back(m.returns(ch));
        }
        auto phi = [&](const Vec<double>& U) {
            double acc = 0.0;
            for (std::size_t c = 0; c < R.size(); ++c) acc += p[c] * eval(J[tree.children(i)[c]], {X + dot(R[c], U)});
            return acc;
        };
        Search sr{&Dc[i], opt.position_cap};
        auto U = coordinate_descent(phi, sr, U0);
        return std::make_pair(U, phi(U));
    };

    for (int t = tree.horizon(); t >= 0; --t) {
        const auto& layer = tree.stage_nodes(t);
        parallel_for(layer.size(), [&](std::size_t k) {
            const NodeIndex i = layer[k];
            try {
                Sampled1D<double> f;
                f.knots = knots;
                f.extrapolate = true;
                f.values.resize(knots.size());
                if (tree.is_leaf(i)) {
                    for (std::size_t q = 0; q < knots.size(); ++q) f.values[q] = V(m.c[i] - knots[q]);
                } else {
                    Vec<double> U = start[i];
                    for (std::size_t q = 0; q < knots.size(); ++q) {
                        auto [Uq, val] = inner(i, knots[q], U);
                        f.values[q] = val;
                        U = Uq;
                    }
                }
                J[i] = ConvexFn(std::move(f));
            } catch (const Error& e) {
                throw e.at_node(tree.id(i));
            }
        });
    }

    out.X.assign(tree.size(), 0.0);
    out.U.assign(tree.size(), Vec<double>(m.J, 0.0));
    out.positions.assign(tree.size(), Vec<double>(m.J, 0.0));
    out.X[0] = w;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (i != tree.root()) out.X[i] = out.X[tree.parent(i)] + dot(m.returns(i), out.U[tree.parent(i)]);
        if (tree.is_leaf(i)) continue;
        auto [U, val] = inner(i, out.X[i], start[i]);
        out.U[i] = U;
        out.positions[i] = to_positions(m, i, U);
        if (i == tree.root()) out.value = val;
    }
    if (tree.size() == 1) out.value = V(m.c[0] - w);
    return out;
}

// ============================================================================
// Exponential utility
// ============================================================================

double ExpUtilityResult::J(NodeIndex i, double X) const { return alpha.at(i) * std::exp(-rho * X) / rho; }

namespace {

struct ExpInner {
    std::vector<double> w;
    std::vector<Vec<double>> R;
    InequalitySystem<double> D;
};

ExpInner exp_inner(const MarketModel& m, const ExpUtilityResult& r, NodeIndex i) {
    ExpInner in;
    for (NodeIndex ch : m.tree.children(i)) {
        in.w.push_back(m.tree.cond_prob<double>(ch) * r.alpha[ch]);
        in.R.push_back(m.returns(ch));
    }
    in.D = cash_constraints(m, i);
    return in;
}

constexpr double kExpCap = 1e6;

}  // namespace

ExpUtilityResult exp_utility(const MarketModel& m, double rho) {
    m.validate();
    if (!(rho > 0)) throw Error(ErrorCode::DimensionMismatch, "rho must be positive");
    const auto& tree = m.tree;
    ExpUtilityResult out;
    out.rho = rho;
    out.alpha.assign(tree.size(), 0.0);
    out.U.assign(tree.size(), Vec<double>(m.J, 0.0));
    out.positions.assign(tree.size(), Vec<double>(m.J, 0.0));
    for (int t = tree.horizon(); t >= 0; --t) {
        const auto& layer = tree.stage_nodes(t);
        parallel_for(layer.size(), [&](std::size_t k) {
            const NodeIndex i = layer[k];
            try {
                if (tree.is_leaf(i)) {
                    out.alpha[i] = std::exp(rho * m.c[i]);
                    return;
                }
                auto in = exp_inner(m, out, i);
                std::vector<double> p;
                for (NodeIndex ch : tree.children(i)) p.push_back(tree.cond_prob<double>(ch));
                if (local_arbitrage(p, in.R, in.D) > 1e-12)
                    throw Error(ErrorCode::UnboundedExp, "inner infimum is approached along an arbitrage direction");
                auto phi = [&](const Vec<double>& U) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < in.R.size(); ++c) acc += in.w[c] * std::exp(-rho * dot(in.R[c], U));
                    return acc;
                };
                Search sr{&in.D, kExpCap};
                auto U = coordinate_descent(phi, sr, feasible_start(in.D, m.J, i, tree.id(i)));
                U = newton_polish(in.w, in.R, rho, sr, U);
                out.alpha[i] = phi(U);
                out.U[i] = U;
                out.positions[i] = to_positions(m, i, U);
            } catch (const Error& e) {
                throw e.at_node(tree.id(i));
            }
        });
    }
    return out;
}

Vec<double> exp_wealth_argmin(const MarketModel& m, const ExpUtilityResult& r, NodeIndex node, double X) {
    const auto& tree = m.tree;
    if (tree.is_leaf(node)) return Vec<double>(m.J, 0.0);
    const auto V = exp_loss(r.rho);
    std::vector<double> p, alpha;
    std::vector<Vec<double>> R;
    for (NodeIndex ch : tree.children(node)) {
        p.push_back(tree.cond_prob<double>(ch));
        alpha.push_back(r.alpha[ch]);
        R.push_back(m.returns(ch));
    }
    auto D = cash_constraints(m, node);
    auto psi = [&](const Vec<double>& U) {
        double acc = 0.0;
        for (std::size_t c = 0; c < R.size(); ++c) acc += p[c] * alpha[c] * V(-(X + dot(R[c], U)));
        return acc;
    };
    Search sr{&D, kExpCap};
    auto U = coordinate_descent(psi, sr, feasible_start(D, m.J, node, tree.id(node)));
    // psi is exp(-rho X) / rho times the alpha objective with the same weights.
    std::vector<double> w(R.size());
    for (std::size_t c = 0; c < R.size(); ++c) w[c] = p[c] * alpha[c] * std::exp(-r.rho * X) / r.rho;
    return newton_polish(w, R, r.rho, sr, U);
}

// ============================================================================
// Asymptotic elasticity
// ============================================================================

AEEstimate ae_estimate(const LossFn& V, const AEProbe& probe) {
    if (probe.points < 2 || !(probe.max_magnitude > probe.min_magnitude) || !(probe.min_magnitude > 0))
        throw Error(ErrorCode::DimensionMismatch, "probe needs 0 < min < max and two points");
    Vec<double> mags(probe.points);
    const double ratio = probe.max_magnitude / probe.min_magnitude;
    for (std::size_t k = 0; k < probe.points; ++k)
        mags[k] = probe.min_magnitude * std::pow(ratio, static_cast<double>(k) / static_cast<double>(probe.points - 1));
    mags.back() = probe.max_magnitude;

    Vec<double> us;
    for (auto it = mags.rbegin(); it != mags.rend(); ++it) us.push_back(-*it);
    for (double u : mags) us.push_back(u);

    AEEstimate out;
    double prev = -inf();
    for (double u : us) {
        const double v = V(u);
        if (v < prev - 1e-12 * (1.0 + std::fabs(prev))) throw Error(ErrorCode::NonMonotone, "loss decreases between probe points");
        prev = v;
        const double h = 1e-7 * std::max(1.0, std::fabs(u));
        const double slope = (V(u + h) - v) / h;
        if (slope < -1e-9 * (1.0 + std::fabs(v))) throw Error(ErrorCode::NonMonotone, "negative derivative at u = " + std::to_string(u));
        if (std::fabs(v) > 1e-300) out.ratios.emplace_back(u, u * slope / v);
    }
    for (const auto& [u, r] : out.ratios) {
        if (u == -probe.max_magnitude) out.minus = r;
        if (u == probe.max_magnitude) out.plus = r;
    }
    out.reasonable = (out.minus && *out.minus < 1.0) || (out.plus && *out.plus > 1.0);
    return out;
}

}  // namespace cdp
