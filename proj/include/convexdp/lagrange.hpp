#pragma once

#include <optional>
#include <string>
#include <vector>

#include "convexdp/bellman.hpp"
#include "convexdp/convexfn.hpp"
#include "convexdp/tree.hpp"

namespace cdp {

/// Minimize E sum_t K_t(x_t, x_t - x_{t-1}) with x_{-1} = 0. K is indexed by
/// node and lives on R^{2d} = (x_t, dx_t).
struct LagrangeInstance {
    ScenarioTree tree;
    std::size_t d = 1;
    std::vector<ConvexFn> K;
    void validate() const;
};

[[nodiscard]] LagrangeInstance make_lagrange(ScenarioTree tree, std::size_t d);

/// Stage-additive encoding: g_t(x_{t-1}, x_t) = K_t(x_t, x_t - x_{t-1}),
/// g_0(x_0) = K_0(x_0, x_0).
[[nodiscard]] StageProblem to_stage_problem(const LagrangeInstance& inst);

struct ValueV {
    BellmanSolution sol;
    std::vector<ConvexFn> V;       ///< by node, over x_t; zero at leaves
    std::vector<ConvexFn> Vtilde;  ///< by non-root node, over x_{t-1}
    double value = 0.0;
};

[[nodiscard]] ValueV solve_lagrange(const LagrangeInstance& inst);

/// Polyhedral cone, either {z : M z <= 0} or the conic hull of the columns of M.
struct Cone {
    enum class Form { Inequalities, Generators };
    Form form = Form::Inequalities;
    Mat<double> M;
};

/// Inequality rows H with C = {z : H z <= 0}.
[[nodiscard]] Mat<double> cone_inequalities(const Cone& C);

[[nodiscard]] Cone nonnegative_orthant(std::size_t m);

/// c·x_t subject to T dx_t + W x_t - b in C.
struct LPStage {
    Mat<double> T;
    Mat<double> W;
    Vec<double> b;
    Vec<double> c;
    Cone C;
};

struct LPData {
    ScenarioTree tree;
    std::size_t d = 1;
    std::vector<LPStage> nodes;
};

[[nodiscard]] LagrangeInstance lp_instance(const LPData& data);

/// Polyhedral recursion for the block-diagonal LP. Throws Infeasible at the
/// first node whose local problem has empty domain and Unbounded when the
/// recursion is unbounded below.
[[nodiscard]] ValueV lp_recursion(const LPData& data);

struct LagrangeBoundsReport {
    /// One entry per (stage-t node, lambda); m is the worst case over the
    /// leaves below the node.
    std::vector<Certificate> certificates;
    bool lower_bounds_ok = true;
    bool linearity_ok = true;
    std::string linearity_detail;
    std::optional<std::string> linearity_node;
};

/// Lower bounds K_t(x, dx) >= x·(lambda p_t + y_{t+1} - y_t) + dx·y_t - m_t for
/// lambda in {1-eps, 1+eps}, with y_{T+1} = 0 and y adapted on [0, T]; plus
/// linearity of {x : sum_t K_t^inf(x_t, dx_t) <= 0}. Throws NotPerp.
[[nodiscard]] LagrangeBoundsReport check_lagrange_bounds(const LagrangeInstance& inst, const DualProcess& p,
                                                         const AdaptedProcess<Vec<double>>& y, double eps = 0.1);

}  // namespace cdp
