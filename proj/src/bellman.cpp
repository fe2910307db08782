#include "convexdp/bellman.hpp"

#include <algorithm>
#include <cmath>

#include "convexdp/extensive.hpp"
#include "convexdp/parallel.hpp"

namespace cdp {

namespace {

Vec<double> concat_path(const StageProblem& p, const std::vector<Vec<double>>& x, NodeIndex i, bool include_self) {
    Vec<double> out;
    for (NodeIndex k : p.tree.path(i)) {
        if (k == i && !include_self) break;
        out.insert(out.end(), x.at(k).begin(), x.at(k).end());
    }
    return out;
}

/// Argument of the node's reduced function given decisions above the node.
Vec<double> prefix_of(const StageProblem& p, const std::vector<Vec<double>>& x, NodeIndex i) {
    if (p.mode == Mode::General) return concat_path(p, x, i, false);
    if (i == p.tree.root()) return {};
    return x.at(p.tree.parent(i));
}

Vec<double> local_arg(const StageProblem& p, const std::vector<Vec<double>>& x, NodeIndex i) {
    auto arg = prefix_of(p, x, i);
    arg.insert(arg.end(), x.at(i).begin(), x.at(i).end());
    return arg;
}

ConvexFn expectation_of_children(const StageProblem& p, const std::vector<NodeSolution>& nodes, NodeIndex i) {
    std::vector<std::pair<double, ConvexFn>> parts;
    for (NodeIndex c : p.tree.children(i)) parts.emplace_back(p.tree.cond_prob<double>(c), nodes[c].reduced);
    return cond_expect_fn(parts);
}

}  // namespace

BellmanSolution solve_be(const StageProblem& p, const BellmanOptions& opt) {
    p.validate();
    const auto& tree = p.tree;
    BellmanSolution sol;
    sol.problem = p;
    sol.nodes.resize(tree.size());
    for (int t = tree.horizon(); t >= 0; --t) {
        const auto& layer = tree.stage_nodes(t);
        parallel_for(layer.size(), [&](std::size_t k) {
            const NodeIndex i = layer[k];
            auto& ns = sol.nodes[i];
            try {
                if (p.mode == Mode::General) {
                    ns.local = tree.is_leaf(i) ? p.cost[i] : expectation_of_children(p, sol.nodes, i);
                    ns.value = ns.local;
                } else {
                    const std::size_t n = p.dim(t);
                    if (tree.is_leaf(i)) {
                        ns.value = zero_quadratic<double>(n);
                        ns.local = p.cost[i];
                    } else {
                        ns.value = expectation_of_children(p, sol.nodes, i);
                        const std::size_t total = p.cost_dim(i);
                        ns.local = add(p.cost[i], embed(ns.value, total, total - n));
                    }
                }
                auto pm = partial_min(ns.local, p.dim(t), opt.partial_min);
                ns.reduced = std::move(pm.value);
                ns.selector = std::move(pm.selector);
                ns.lineality = std::move(pm.lineality);
                ns.empty = pm.empty;
            } catch (const Error& e) {
                throw e.at_node(tree.id(i));
            }
        });
    }
    sol.value = eval(sol.nodes[tree.root()].reduced, {});
    return sol;
}

double optimum_value(const BellmanSolution& sol, int t) {
    const auto& p = sol.problem;
    const auto& tree = p.tree;
    if (t < 0 || t > tree.horizon()) throw Error(ErrorCode::StageOrder, "stage out of range");
    if (t == 0) return minimize(sol.nodes[tree.root()].local).value;
    auto fp = flatten(p, t);
    if (p.mode == Mode::General) {
        if (t < tree.horizon())
            for (NodeIndex i : tree.stage_nodes(t)) {
                FlatTerm term;
                term.weight = tree.probability(i);
                term.fn = sol.nodes[i].value;
                for (NodeIndex k : tree.path(i))
                    for (std::size_t a = 0; a < fp.block_size[k]; ++a) term.vars.push_back(fp.block_start[k] + a);
                fp.terms.push_back(std::move(term));
            }
    } else if (t < tree.horizon()) {
        for (NodeIndex i : tree.stage_nodes(t)) {
            FlatTerm term;
            term.weight = tree.probability(i);
            term.fn = sol.nodes[i].value;
            for (std::size_t a = 0; a < fp.block_size[i]; ++a) term.vars.push_back(fp.block_start[i] + a);
            fp.terms.push_back(std::move(term));
        }
    }
    return solve_extensive(fp).value;
}

Policy extract_policy(const BellmanSolution& sol) {
    const auto& p = sol.problem;
    const auto& tree = p.tree;
    Policy pol;
    pol.x.resize(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        try {
            pol.x[i] = sol.nodes[i].selector(prefix_of(p, pol.x, i));
        } catch (const Error& e) {
            throw e.at_node(tree.id(i));
        }
    }
    pol.residual = optimality_residuals(sol, pol.x);
    pol.value = objective(p, pol.x);
    return pol;
}

std::vector<double> optimality_residuals(const BellmanSolution& sol, const std::vector<Vec<double>>& x) {
    const auto& p = sol.problem;
    std::vector<double> r(p.tree.size(), 0.0);
    for (NodeIndex i = 0; i < p.tree.size(); ++i) {
        double best = eval(sol.nodes[i].reduced, prefix_of(p, x, i));
        double got = eval(sol.nodes[i].local, local_arg(p, x, i));
        if (std::isinf(got) || std::isinf(best))
            r[i] = std::isinf(got) ? inf() : 0.0;
        else
            r[i] = std::max(0.0, got - best);
    }
    return r;
}

bool verify_optimality(const std::vector<Vec<double>>& x, const BellmanSolution& sol, double tol) {
    for (double r : optimality_residuals(sol, x))
        if (!(r <= tol)) return false;
    return true;
}

// ============================================================================
// Tilting
// ============================================================================

namespace {

/// Per-node linear coefficients c_i such that the tilted cost is cost_i - c_i·arg.
std::vector<Vec<double>> tilt_vectors(const StageProblem& p, const DualProcess& v) {
    const auto& tree = p.tree;
    const int T = tree.horizon();
    if (v.size() != static_cast<std::size_t>(T + 1)) throw Error(ErrorCode::DimensionMismatch, "one dual component per stage expected");
    if (!perp_check(tree, v)) throw Error(ErrorCode::NotPerp, "dual process has nonzero conditional mean");
    std::vector<Vec<double>> out(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) out[i] = Vec<double>(p.cost_dim(i), 0.0);
    for (int t = 0; t <= T; ++t) {
        const int s = v[t].lo();
        if (s < t) throw Error(ErrorCode::StageOrder, "dual component measurable before its decision");
        for (NodeIndex i : tree.stage_nodes(s))
            if (v[t][i].size() != p.dim(t)) throw Error(ErrorCode::DimensionMismatch, "dual component length", tree.id(i));
        if (p.mode == Mode::General) {
            const std::size_t off = p.history_dim(t - 1);
            for (NodeIndex leaf : tree.leaves()) {
                const auto& val = v[t][tree.ancestor(leaf, s)];
                for (std::size_t a = 0; a < val.size(); ++a) out[leaf][off + a] += val[a];
            }
            continue;
        }
        const int target = std::min(s, std::min(t + 1, T));
        auto w = s == target ? v[t] : cond_expect_vector(tree, v[t], s, target);
        for (NodeIndex i : tree.stage_nodes(target)) {
            const std::size_t off = target == t ? p.cost_dim(i) - p.dim(t) : 0;
            for (std::size_t a = 0; a < w[i].size(); ++a) out[i][off + a] += w[i][a];
        }
    }
    return out;
}

bool any_nonzero(const Vec<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double a) { return a != 0.0; });
}

}  // namespace

StageProblem tilt_by_p(const StageProblem& p, const DualProcess& v) {
    p.validate();
    auto c = tilt_vectors(p, v);
    StageProblem out = p;
    for (NodeIndex i = 0; i < p.tree.size(); ++i)
        if (any_nonzero(c[i])) out.cost[i] = tilt(p.cost[i], scaled(c[i], -1.0));
    return out;
}

// ============================================================================
// Assumption checks
// ============================================================================

namespace {

/// Indicator of the closed domain of f as a polyhedral function.
Polyhedral<double> domain_indicator(const ConvexFn& f) {
    const std::size_t d = f.dim();
    Mat<double> C(0, d);
    Vec<double> e;
    auto add_eq = [&](const Quadratic<double>& q) {
        for (std::size_t r = 0; r < q.A.rows(); ++r) {
            C.append_row(q.A.row(r));
            e.push_back(q.b[r]);
            C.append_row(scaled(q.A.row(r), -1.0));
            e.push_back(-q.b[r]);
        }
    };
    auto add_ineq = [&](const Polyhedral<double>& g) {
        for (std::size_t r = 0; r < g.C.rows(); ++r) {
            C.append_row(g.C.row(r));
            e.push_back(g.e[r]);
        }
    };
    std::visit(
        [&](const auto& g) {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Quadratic<double>>) {
                add_eq(g);
            } else if constexpr (std::is_same_v<F, Polyhedral<double>>) {
                add_ineq(g);
            } else if constexpr (std::is_same_v<F, Sampled1D<double>>) {
                if (g.knots.empty()) {
                    C.append_row({0.0});
                    e.push_back(-1.0);
                } else if (!g.extrapolate) {
                    C.append_row({1.0});
                    e.push_back(g.knots.back());
                    C.append_row({-1.0});
                    e.push_back(-g.knots.front());
                }
            } else {
                add_eq(g.quad);
                add_ineq(g.poly);
            }
        },
        f.data());
    return polyhedral_indicator<double>(d, C, e);
}

}  // namespace

AssumptionReport check_assumptions(const StageProblem& p, const DualProcess* v, double eps) {
    p.validate();
    const auto& tree = p.tree;
    AssumptionReport rep;
    std::vector<Vec<double>> c(tree.size());
    if (v) {
        c = tilt_vectors(p, *v);
    } else {
        for (NodeIndex i = 0; i < tree.size(); ++i) c[i] = Vec<double>(p.cost_dim(i), 0.0);
    }
    auto active = [&](NodeIndex i) { return p.mode == Mode::StageAdditive || tree.is_leaf(i); };

    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (!active(i)) continue;
        for (double lambda : {1.0 - eps, 1.0, 1.0 + eps}) {
            Certificate cert;
            cert.node = i;
            cert.lambda = lambda;
            try {
                cert.m = conjugate(p.cost[i], scaled(c[i], lambda));
            } catch (const Error&) {
                cert.m = inf();
            }
            cert.finite = std::isfinite(cert.m);
            rep.lower_bounds_ok = rep.lower_bounds_ok && cert.finite;
            rep.certificates.push_back(cert);
        }
    }

    StageProblem rec = p;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (!active(i)) continue;
        auto tilted = any_nonzero(c[i]) ? tilt(p.cost[i], scaled(c[i], -1.0)) : p.cost[i];
        rec.cost[i] = recession(tilted).fn;
    }
    try {
        auto rs = solve_be(rec);
        rep.lineality_dims.resize(tree.size());
        for (NodeIndex i = 0; i < tree.size(); ++i) rep.lineality_dims[i] = rs.nodes[i].lineality.size();
        rep.linearity_detail = "zero-cost recession set is linear at every node";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NonLinearRecession && e.code() != ErrorCode::UnboundedBelow) throw;
        rep.linearity_ok = false;
        rep.linearity_detail = e.what();
        rep.linearity_node = e.node();
    }

    StageProblem dom = p;
    for (NodeIndex i = 0; i < tree.size(); ++i)
        if (active(i)) dom.cost[i] = domain_indicator(p.cost[i]);
    try {
        (void)solve_extensive(flatten(dom));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Infeasible) throw;
        rep.feasible = false;
    }
    return rep;
}

}  // namespace cdp
