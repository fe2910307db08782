#include "convexdp/control.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "convexdp/parallel.hpp"
#include "eigen_util.hpp"

namespace cdp {

void ControlSystem::validate() const {
    const std::size_t n = tree.size();
    if (A.size() != n || B.size() != n || W.size() != n) throw Error(ErrorCode::DimensionMismatch, "one A, B, W per node expected");
    for (NodeIndex i = 1; i < n; ++i) {
        if (A[i].rows() != N || A[i].cols() != N) throw Error(ErrorCode::DimensionMismatch, "A shape", tree.id(i));
        if (B[i].rows() != N || B[i].cols() != M) throw Error(ErrorCode::DimensionMismatch, "B shape", tree.id(i));
        if (W[i].size() != N) throw Error(ErrorCode::DimensionMismatch, "W length", tree.id(i));
    }
}

ControlSystem make_system(ScenarioTree tree, std::size_t N, std::size_t M) {
    ControlSystem s;
    const std::size_t n = tree.size();
    s.tree = std::move(tree);
    s.N = N;
    s.M = M;
    s.A.assign(n, Mat<double>(N, N));
    s.B.assign(n, Mat<double>(N, M));
    s.W.assign(n, Vec<double>(N, 0.0));
    return s;
}

namespace {

/// [I + A, B] and W: the map (X_{t-1}, U_{t-1}) -> X_t at node i.
Mat<double> step_matrix(const ControlSystem& sys, NodeIndex i) {
    Mat<double> F(sys.N, sys.N + sys.M);
    for (std::size_t r = 0; r < sys.N; ++r) {
        for (std::size_t c = 0; c < sys.N; ++c) F(r, c) = sys.A[i](r, c) + (r == c ? 1.0 : 0.0);
        for (std::size_t c = 0; c < sys.M; ++c) F(r, sys.N + c) = sys.B[i](r, c);
    }
    return F;
}

Vec<double> step(const ControlSystem& sys, NodeIndex i, const Vec<double>& X, const Vec<double>& U) {
    Vec<double> xu = X;
    xu.insert(xu.end(), U.begin(), U.end());
    return add(matvec(step_matrix(sys, i), xu), sys.W[i]);
}

}  // namespace

ValueFns solve_oc(const ControlSystem& sys, const std::vector<ConvexFn>& L) {
    sys.validate();
    const auto& tree = sys.tree;
    if (L.size() != tree.size()) throw Error(ErrorCode::DimensionMismatch, "one stage cost per node expected");
    ValueFns vf;
    const std::size_t n = tree.size();
    vf.J.resize(n);
    vf.I.resize(n);
    vf.Q.resize(n);
    vf.control.resize(n);
    vf.lineality.resize(n);
    for (int t = tree.horizon(); t >= 0; --t) {
        const auto& layer = tree.stage_nodes(t);
        parallel_for(layer.size(), [&](std::size_t k) {
            const NodeIndex i = layer[k];
            try {
                if (L[i].dim() != sys.N + sys.M) throw Error(ErrorCode::DimensionMismatch, "stage cost must live on (X, U)");
                ConvexFn Q = L[i];
                if (!tree.is_leaf(i)) {
                    std::vector<std::pair<double, ConvexFn>> parts;
                    for (NodeIndex c : tree.children(i)) parts.emplace_back(tree.cond_prob<double>(c), vf.I[c]);
                    Q = add(Q, cond_expect_fn(parts));
                }
                auto pm = partial_min(Q, sys.M);
                vf.Q[i] = std::move(Q);
                vf.J[i] = std::move(pm.value);
                vf.control[i] = std::move(pm.selector);
                vf.lineality[i] = std::move(pm.lineality);
                if (i != tree.root()) vf.I[i] = compose_affine(vf.J[i], step_matrix(sys, i), sys.W[i]);
            } catch (const Error& e) {
                throw e.at_node(tree.id(i));
            }
        });
    }
    vf.notes.push_back("conditions tying E_t[A'y] to A'E_t[y] hold trivially for node-attached data");
    return vf;
}

std::vector<ConvexFn> q_factors(const ValueFns& vf) { return vf.Q; }

ControlPath simulate(const ControlSystem& sys, const ValueFns& vf, const Vec<double>& x0) {
    const auto& tree = sys.tree;
    ControlPath path;
    path.X.resize(tree.size());
    path.U.resize(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (i == tree.root())
            path.X[i] = x0;
        else {
            NodeIndex p = tree.parent(i);
            path.X[i] = step(sys, i, path.X[p], path.U[p]);
        }
        path.U[i] = vf.control[i](path.X[i]);
    }
    return path;
}

double path_cost(const ControlSystem& sys, const std::vector<ConvexFn>& L, const ControlPath& path) {
    double total = 0.0;
    for (NodeIndex i = 0; i < sys.tree.size(); ++i) {
        Vec<double> xu = path.X[i];
        xu.insert(xu.end(), path.U[i].begin(), path.U[i].end());
        total += sys.tree.probability(i) * eval(L[i], xu);
    }
    return total;
}

StageProblem to_stage_problem(const ControlSystem& sys, const std::vector<ConvexFn>& L, const std::optional<Vec<double>>& x0) {
    sys.validate();
    const auto& tree = sys.tree;
    const std::size_t d = sys.N + sys.M;
    auto p = make_problem(tree, Mode::StageAdditive, std::vector<std::size_t>(static_cast<std::size_t>(tree.horizon() + 1), d));
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (i == tree.root()) {
            p.cost[i] = L[i];
            if (x0) {
                auto pin = zero_quadratic<double>(d);
                pin.A = Mat<double>(sys.N, d);
                for (std::size_t r = 0; r < sys.N; ++r) pin.A(r, r) = 1.0;
                pin.b = *x0;
                p.cost[i] = add(p.cost[i], ConvexFn(pin));
            }
            continue;
        }
        // X_t - F (X_{t-1}, U_{t-1}) = W_t on (x_{t-1}, x_t).
        auto eq = zero_quadratic<double>(2 * d);
        eq.A = Mat<double>(sys.N, 2 * d);
        auto F = step_matrix(sys, i);
        for (std::size_t r = 0; r < sys.N; ++r) {
            for (std::size_t c = 0; c < d; ++c) eq.A(r, c) = -F(r, c);
            eq.A(r, d + r) = 1.0;
        }
        eq.b = sys.W[i];
        p.cost[i] = add(embed(L[i], 2 * d, d), ConvexFn(eq));
    }
    return p;
}

std::vector<Vec<double>> stack_path(const ControlPath& path) {
    std::vector<Vec<double>> x(path.X.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = path.X[i];
        x[i].insert(x[i].end(), path.U[i].begin(), path.U[i].end());
    }
    return x;
}

// ============================================================================
// Linear-quadratic case
// ============================================================================

std::vector<ConvexFn> lq_costs(const ControlSystem& sys, const LQCosts& c) {
    std::vector<ConvexFn> L(sys.tree.size());
    const std::size_t d = sys.N + sys.M;
    for (NodeIndex i = 0; i < sys.tree.size(); ++i) {
        Mat<double> H(d, d);
        set_block(H, 0, 0, c.Q.at(i));
        set_block(H, sys.N, sys.N, c.R.at(i));
        L[i] = make_quadratic<double>(H, Vec<double>(d, 0.0));
    }
    return L;
}

RiccatiData riccati(const ControlSystem& sys, const LQCosts& c) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    using detail::from_eigen;
    using detail::to_eigen;
    sys.validate();
    const auto& tree = sys.tree;
    const std::size_t n = tree.size();
    const auto N = static_cast<Eigen::Index>(sys.N), M = static_cast<Eigen::Index>(sys.M);
    std::vector<MatrixXd> K(n), Kh(n);
    std::vector<VectorXd> k(n);
    RiccatiData rd;
    rd.K.resize(n);
    rd.k.resize(n);
    rd.kappa.assign(n, 0.0);
    rd.Lambda.resize(n);
    rd.lambda.resize(n);
    rd.K_half_cross.resize(n);
    for (NodeIndex i = n; i-- > 0;) {
        MatrixXd Q = to_eigen(c.Q.at(i));
        MatrixXd R = to_eigen(c.R.at(i));
        if (tree.is_leaf(i)) {
            K[i] = Q;
            Kh[i] = Q;
            k[i] = VectorXd::Zero(N);
            rd.Lambda[i] = Mat<double>(sys.M, sys.N);
            rd.lambda[i] = Vec<double>(sys.M, 0.0);
        } else {
            MatrixXd H = R, G = MatrixXd::Zero(M, N), S = MatrixXd::Zero(N, N), Sh = MatrixXd::Zero(N, N);
            MatrixXd Gh = MatrixXd::Zero(M, N), Hh = R;
            VectorXd g = VectorXd::Zero(M), s = VectorXd::Zero(N);
            double kap = 0.0;
            for (NodeIndex ch : tree.children(i)) {
                const double p = tree.cond_prob<double>(ch);
                MatrixXd Abar = to_eigen(sys.A[ch]) + MatrixXd::Identity(N, N);
                MatrixXd B = to_eigen(sys.B[ch]);
                VectorXd W = to_eigen(sys.W[ch]);
                VectorXd KWk = K[ch] * W + k[ch];
                H += p * B.transpose() * K[ch] * B;
                G += p * B.transpose() * K[ch] * Abar;
                g += p * B.transpose() * KWk;
                S += p * Abar.transpose() * K[ch] * Abar;
                s += p * Abar.transpose() * KWk;
                kap += p * (0.5 * W.dot(K[ch] * W) + k[ch].dot(W) + rd.kappa[ch]);
                Hh += p * B.transpose() * Kh[ch] * B;
                Gh += p * B.transpose() * Kh[ch] * Abar;
                Sh += p * Abar.transpose() * Kh[ch] * Abar;
            }
            Eigen::JacobiSVD<MatrixXd> svd(H);
            if (M > 0 && svd.singularValues().minCoeff() < 1e-10)
                throw Error(ErrorCode::SingularRiccati, "R + E[B'KB] is singular", tree.id(i));
            MatrixXd Hinv = H.inverse();
            MatrixXd Lam = Hinv * G;
            VectorXd lam = Hinv * g;
            K[i] = Q + S - G.transpose() * Lam;
            K[i] = 0.5 * (K[i] + K[i].transpose());
            k[i] = s - G.transpose() * lam;
            rd.kappa[i] = kap - 0.5 * g.dot(lam);
            rd.Lambda[i] = from_eigen(Lam);
            rd.lambda[i] = from_eigen(lam);
            Kh[i] = Q + Sh - 0.5 * Gh.transpose() * Hh.inverse() * Gh;
        }
        rd.K[i] = from_eigen(K[i]);
        rd.k[i] = from_eigen(k[i]);
        rd.K_half_cross[i] = from_eigen(Kh[i]);
    }
    return rd;
}

double riccati_value(const RiccatiData& rd, NodeIndex node, const Vec<double>& x) {
    return 0.5 * dot(x, matvec(rd.K.at(node), x)) + dot(rd.k.at(node), x) + rd.kappa.at(node);
}

ControlPath riccati_path(const ControlSystem& sys, const RiccatiData& rd, const Vec<double>& x0) {
    const auto& tree = sys.tree;
    ControlPath path;
    path.X.resize(tree.size());
    path.U.resize(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (i == tree.root())
            path.X[i] = x0;
        else {
            NodeIndex p = tree.parent(i);
            path.X[i] = step(sys, i, path.X[p], path.U[p]);
        }
        path.U[i] = scaled(add(matvec(rd.Lambda[i], path.X[i]), rd.lambda[i]), -1.0);
    }
    return path;
}

// ============================================================================
// Independence reductions
// ============================================================================

IndependenceReport independence_reduction(const ControlSystem& sys, const ValueFns& vf,
                                          const std::vector<std::vector<std::vector<NodeIndex>>>& cells, double tol) {
    const auto& tree = sys.tree;
    std::vector<Vec<double>> probes;
    for (int k = 0; k < 7; ++k) {
        Vec<double> x(sys.N);
        for (std::size_t a = 0; a < sys.N; ++a) x[a] = std::sin(1.7 * k + 0.9 * static_cast<double>(a)) * 2.0;
        probes.push_back(x);
    }
    for (int t = 0; t <= tree.horizon(); ++t) {
        std::vector<std::vector<NodeIndex>> part;
        if (cells.empty()) {
            part.push_back(tree.stage_nodes(t));
        } else {
            part = cells.at(static_cast<std::size_t>(t));
            std::size_t count = 0;
            for (const auto& cell : part) {
                count += cell.size();
                for (NodeIndex i : cell)
                    if (tree.stage(i) != t) throw Error(ErrorCode::DimensionMismatch, "cell member at the wrong stage", tree.id(i));
            }
            if (count != tree.stage_nodes(t).size()) throw Error(ErrorCode::DimensionMismatch, "cells must partition the stage");
        }
        for (const auto& cell : part)
            for (std::size_t a = 1; a < cell.size(); ++a)
                for (const auto& x : probes) {
                    double u = eval(vf.J[cell[0]], x), v = eval(vf.J[cell[a]], x);
                    bool same = (std::isinf(u) && std::isinf(v)) || std::fabs(u - v) <= tol * (1.0 + std::fabs(u));
                    if (!same) return {false, t, cell[0], cell[a]};
                }
    }
    return {};
}

}  // namespace cdp
