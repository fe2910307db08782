#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "convexdp/convexfn.hpp"
#include "convexdp/problem.hpp"

namespace cdp {

/// Per-node data of the backward sweep.
///
/// In stage-additive mode `local` is g_t(x_{t-1}, x_t) + V_t(x_t), `reduced`
/// its infimum over x_t, and `value` is V_t (zero at leaves). In general mode
/// `local` and `value` are both h_t(x^t) and `reduced` is inf over x_t.
struct NodeSolution {
    ConvexFn local;
    ConvexFn reduced;
    ConvexFn value;
    Selector selector;
    LinealitySpace lineality;
    bool empty = false;
};

struct BellmanSolution {
    StageProblem problem;
    std::vector<NodeSolution> nodes;
    double value = 0.0;
};

struct BellmanOptions {
    PartialMinOptions partial_min;
};

/// Backward sweep over the tree, stage by stage. Errors carry the node id.
[[nodiscard]] BellmanSolution solve_be(const StageProblem& p, const BellmanOptions& opt = {});

/// Infimum of E h_t over decisions up to stage t. Stage 0 reads the root;
/// later stages solve the truncated program independently.
[[nodiscard]] double optimum_value(const BellmanSolution& sol, int t);

struct Policy {
    std::vector<Vec<double>> x;      ///< by node
    std::vector<double> residual;    ///< by node, local - reduced at the decision
    double value = 0.0;              ///< E h(x)
};

/// Forward sweep applying the nodewise selectors.
[[nodiscard]] Policy extract_policy(const BellmanSolution& sol);

/// Nodewise gap between the achieved local value and the nodewise minimum.
[[nodiscard]] std::vector<double> optimality_residuals(const BellmanSolution& sol, const std::vector<Vec<double>>& x);

[[nodiscard]] bool verify_optimality(const std::vector<Vec<double>>& x, const BellmanSolution& sol, double tol);

/// Subtracts x_t · v_t from the objective. v[t] may be measurable at any
/// stage s >= t; in stage-additive mode it is first conditioned down to stage
/// min(s, t + 1).
[[nodiscard]] StageProblem tilt_by_p(const StageProblem& p, const DualProcess& v);

struct Certificate {
    NodeIndex node = 0;
    double lambda = 1.0;
    double m = 0.0;  ///< conjugate value; the cost is >= lambda x·p - m
    bool finite = true;
};

struct AssumptionReport {
    std::vector<Certificate> certificates;
    bool lower_bounds_ok = true;
    bool linearity_ok = true;
    std::string linearity_detail;
    std::optional<std::string> linearity_node;
    std::vector<std::size_t> lineality_dims;  ///< by node, from the recession recursion
    bool feasible = true;
};

/// Diagnostics only: lower-bound certificates for lambda in {1-eps, 1, 1+eps},
/// linearity of the zero-cost recession set, and a feasibility probe.
[[nodiscard]] AssumptionReport check_assumptions(const StageProblem& p, const DualProcess* v = nullptr, double eps = 0.1);

}  // namespace cdp
