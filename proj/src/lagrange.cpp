#include "convexdp/lagrange.hpp"

#include <cmath>

namespace cdp {

void LagrangeInstance::validate() const {
    if (K.size() != tree.size()) throw Error(ErrorCode::DimensionMismatch, "one K per node expected");
    for (NodeIndex i = 0; i < tree.size(); ++i)
        if (K[i].dim() != 2 * d) throw Error(ErrorCode::DimensionMismatch, "K must live on (x, dx)", tree.id(i));
}

LagrangeInstance make_lagrange(ScenarioTree tree, std::size_t d) {
    LagrangeInstance inst;
    inst.d = d;
    inst.K.assign(tree.size(), ConvexFn(zero_quadratic<double>(2 * d)));
    inst.tree = std::move(tree);
    return inst;
}

StageProblem to_stage_problem(const LagrangeInstance& inst) {
    inst.validate();
    const std::size_t d = inst.d;
    const auto& tree = inst.tree;
    auto p = make_problem(tree, Mode::StageAdditive, std::vector<std::size_t>(static_cast<std::size_t>(tree.horizon() + 1), d));
    Mat<double> root_map(2 * d, d), step_map(2 * d, 2 * d);
    for (std::size_t a = 0; a < d; ++a) {
        root_map(a, a) = 1.0;
        root_map(d + a, a) = 1.0;
        step_map(a, d + a) = 1.0;
        step_map(d + a, a) = -1.0;
        step_map(d + a, d + a) = 1.0;
    }
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (i == tree.root())
            p.cost[i] = compose_affine(inst.K[i], root_map, Vec<double>(2 * d, 0.0));
        else
            p.cost[i] = compose_affine(inst.K[i], step_map, Vec<double>(2 * d, 0.0));
    }
    return p;
}

namespace {

ValueV from_solution(BellmanSolution sol) {
    ValueV out;
    const auto& tree = sol.problem.tree;
    out.V.resize(tree.size());
    out.Vtilde.resize(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        out.V[i] = sol.nodes[i].value;
        if (i != tree.root()) out.Vtilde[i] = sol.nodes[i].reduced;
    }
    out.value = sol.value;
    out.sol = std::move(sol);
    return out;
}

}  // namespace

ValueV solve_lagrange(const LagrangeInstance& inst) { return from_solution(solve_be(to_stage_problem(inst))); }

Mat<double> cone_inequalities(const Cone& C) {
    if (C.form == Cone::Form::Inequalities) return C.M;
    // {(z, l) : z = M l, l >= 0}, then eliminate l.
    const std::size_t m = C.M.rows(), k = C.M.cols();
    InequalitySystem<double> sys;
    sys.A = Mat<double>(2 * m + k, m + k);
    sys.b = Vec<double>(2 * m + k, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        sys.A(r, r) = 1.0;
        sys.A(m + r, r) = -1.0;
        for (std::size_t j = 0; j < k; ++j) {
            sys.A(r, m + j) = -C.M(r, j);
            sys.A(m + r, m + j) = C.M(r, j);
        }
    }
    for (std::size_t j = 0; j < k; ++j) sys.A(2 * m + j, m + j) = -1.0;
    return fm_project(sys, k).A;
}

Cone nonnegative_orthant(std::size_t m) {
    Cone C;
    C.M = Mat<double>(m, m);
    for (std::size_t r = 0; r < m; ++r) C.M(r, r) = -1.0;
    return C;
}

LagrangeInstance lp_instance(const LPData& data) {
    const std::size_t d = data.d;
    const auto& tree = data.tree;
    if (data.nodes.size() != tree.size()) throw Error(ErrorCode::DimensionMismatch, "one LP stage per node expected");
    auto inst = make_lagrange(tree, d);
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        const auto& s = data.nodes[i];
        const std::size_t m = s.b.size();
        if (s.T.rows() != m || s.T.cols() != d || s.W.rows() != m || s.W.cols() != d || s.c.size() != d)
            throw Error(ErrorCode::DimensionMismatch, "LP data shapes", tree.id(i));
        Mat<double> H = cone_inequalities(s.C);
        if (H.cols() != m) throw Error(ErrorCode::DimensionMismatch, "cone dimension", tree.id(i));
        // H (W x + T dx - b) <= 0.
        Mat<double> C(H.rows(), 2 * d);
        set_block(C, 0, 0, matmul(H, s.W));
        set_block(C, 0, d, matmul(H, s.T));
        Mat<double> G(1, 2 * d);
        for (std::size_t a = 0; a < d; ++a) G(0, a) = s.c[a];
        inst.K[i] = make_polyhedral<double>(2 * d, G, {0.0}, C, matvec(H, s.b));
    }
    return inst;
}

ValueV lp_recursion(const LPData& data) {
    auto p = to_stage_problem(lp_instance(data));
    BellmanSolution sol;
    try {
        sol = solve_be(p);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnboundedBelow) throw Error(ErrorCode::Unbounded, e.what(), e.node());
        throw;
    }
    const auto& tree = p.tree;
    for (int t = tree.horizon(); t >= 0; --t)
        for (NodeIndex i : tree.stage_nodes(t))
            if (sol.nodes[i].empty) throw Error(ErrorCode::Infeasible, "local problem has empty domain", tree.id(i));
    if (!std::isfinite(sol.value)) throw Error(ErrorCode::Infeasible, "no feasible first-stage decision", tree.id(tree.root()));
    return from_solution(std::move(sol));
}

LagrangeBoundsReport check_lagrange_bounds(const LagrangeInstance& inst, const DualProcess& p,
                                           const AdaptedProcess<Vec<double>>& y, double eps) {
    inst.validate();
    const auto& tree = inst.tree;
    const std::size_t d = inst.d;
    const int T = tree.horizon();
    if (p.size() != static_cast<std::size_t>(T + 1)) throw Error(ErrorCode::DimensionMismatch, "one dual component per stage");
    if (!perp_check(tree, p)) throw Error(ErrorCode::NotPerp, "p is not orthogonal to adapted processes");
    if (y.lo() != 0 || y.hi() != T) throw Error(ErrorCode::StageOrder, "y must be adapted on every stage");

    LagrangeBoundsReport rep;
    for (int t = 0; t <= T; ++t) {
        for (NodeIndex i : tree.stage_nodes(t)) {
            for (double lambda : {1.0 - eps, 1.0 + eps}) {
                Certificate cert;
                cert.node = i;
                cert.lambda = lambda;
                cert.m = -inf();
                for (NodeIndex leaf : tree.leaves()) {
                    if (tree.ancestor(leaf, t) != i) continue;
                    const Vec<double>& pt = p[static_cast<std::size_t>(t)][tree.ancestor(leaf, p[static_cast<std::size_t>(t)].lo())];
                    const Vec<double>& yt = y[i];
                    Vec<double> ynext = t < T ? y[tree.ancestor(leaf, t + 1)] : Vec<double>(d, 0.0);
                    Vec<double> slope = concat(add(scaled(pt, lambda), sub(ynext, yt)), yt);
                    double m;
                    try {
                        m = conjugate(inst.K[i], slope);
                    } catch (const Error&) {
                        m = inf();
                    }
                    cert.m = std::max(cert.m, m);
                }
                cert.finite = std::isfinite(cert.m);
                rep.lower_bounds_ok = rep.lower_bounds_ok && cert.finite;
                rep.certificates.push_back(cert);
            }
        }
    }

    auto stage = to_stage_problem(inst);
    for (NodeIndex i = 0; i < tree.size(); ++i) stage.cost[i] = recession(stage.cost[i]).fn;
    try {
        (void)solve_be(stage);
        rep.linearity_detail = "recession set is a linear space";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NonLinearRecession && e.code() != ErrorCode::UnboundedBelow) throw;
        rep.linearity_ok = false;
        rep.linearity_detail = e.what();
        rep.linearity_node = e.node();
    }
    return rep;
}

}  // namespace cdp
