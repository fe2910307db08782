#pragma once

#include <optional>
#include <string>
#include <vector>

#include "convexdp/bellman.hpp"
#include "convexdp/convexfn.hpp"
#include "convexdp/tree.hpp"

namespace cdp {

/// X_t - X_{t-1} = A_t X_{t-1} + B_t U_{t-1} + W_t. A, B, W are read at
/// non-root nodes (they describe the step into that node).
struct ControlSystem {
    ScenarioTree tree;
    std::size_t N = 1;
    std::size_t M = 1;
    std::vector<Mat<double>> A;
    std::vector<Mat<double>> B;
    std::vector<Vec<double>> W;

    void validate() const;
};

/// Zero dynamics (X_t = X_{t-1}) on the given tree.
[[nodiscard]] ControlSystem make_system(ScenarioTree tree, std::size_t N, std::size_t M);

/// Per-node value data. J is over R^N; I (non-root) and Q over R^{N+M}.
struct ValueFns {
    std::vector<ConvexFn> J;
    std::vector<ConvexFn> I;
    std::vector<ConvexFn> Q;
    std::vector<Selector> control;  ///< U_t as a function of X_t
    std::vector<LinealitySpace> lineality;
    std::vector<std::string> notes;
};

/// Backward sweep: Q_t = L_t + E_t I_{t+1}, J_t = inf_U Q_t, I_t = J_t o dynamics.
[[nodiscard]] ValueFns solve_oc(const ControlSystem& sys, const std::vector<ConvexFn>& L);

[[nodiscard]] std::vector<ConvexFn> q_factors(const ValueFns& vf);

struct ControlPath {
    std::vector<Vec<double>> X;
    std::vector<Vec<double>> U;
};

/// Forward simulation from X_0 = x0 with U_t from the value-function selectors.
[[nodiscard]] ControlPath simulate(const ControlSystem& sys, const ValueFns& vf, const Vec<double>& x0);

/// E sum_t L_t(X_t, U_t) along a path.
[[nodiscard]] double path_cost(const ControlSystem& sys, const std::vector<ConvexFn>& L, const ControlPath& path);

/// Stage-additive encoding with x_t = (X_t, U_t): L_t plus the system equation
/// as an equality constraint; with x0 the root state is pinned.
[[nodiscard]] StageProblem to_stage_problem(const ControlSystem& sys, const std::vector<ConvexFn>& L,
                                            const std::optional<Vec<double>>& x0);

/// Per-node decisions (X_t, U_t) stacked for the stage-additive encoding.
[[nodiscard]] std::vector<Vec<double>> stack_path(const ControlPath& path);

// ============================================================================
// Linear-quadratic case
// ============================================================================

/// L_t = 1/2 X'QX + 1/2 U'RU per node.
struct LQCosts {
    std::vector<Mat<double>> Q;
    std::vector<Mat<double>> R;
};

[[nodiscard]] std::vector<ConvexFn> lq_costs(const ControlSystem& sys, const LQCosts& c);

/// J_t(X) = 1/2 X'KX + k'X + kappa, U_t = -Lambda X - lambda, per node.
struct RiccatiData {
    std::vector<Mat<double>> K;
    std::vector<Vec<double>> k;
    std::vector<double> kappa;
    std::vector<Mat<double>> Lambda;
    std::vector<Vec<double>> lambda;
    /// The same recursion with a factor 1/2 on the subtracted cross term,
    /// kept to report how far it lands from the validated K.
    std::vector<Mat<double>> K_half_cross;
};

/// Node-wise Riccati recursion with exact tree sums. Throws SingularRiccati
/// when R + E[B'KB] has smallest singular value below 1e-10.
[[nodiscard]] RiccatiData riccati(const ControlSystem& sys, const LQCosts& c);

[[nodiscard]] double riccati_value(const RiccatiData& rd, NodeIndex node, const Vec<double>& x);

/// Forward simulation of U = -Lambda X - lambda.
[[nodiscard]] ControlPath riccati_path(const ControlSystem& sys, const RiccatiData& rd, const Vec<double>& x0);

// ============================================================================
// Independence reductions
// ============================================================================

struct IndependenceReport {
    bool ok = true;
    int stage = -1;
    NodeIndex first = kNoParent;
    NodeIndex second = kNoParent;
};

/// Checks J_t is constant on each cell of cells[t] (a partition of the
/// stage-t nodes) at probe points within tol. Without cells every stage is a
/// single cell, i.e. J_t must be deterministic.
[[nodiscard]] IndependenceReport independence_reduction(const ControlSystem& sys, const ValueFns& vf,
                                                        const std::vector<std::vector<std::vector<NodeIndex>>>& cells = {},
                                                        double tol = 1e-10);

}  // namespace cdp
