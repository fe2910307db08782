#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "convexdp/bellman.hpp"
#include "convexdp/tree.hpp"

namespace cdp {

/// Stop/continue flag per node. A node is reached only if no ancestor
/// stopped; flags below a stop node are ignored. Paths that never stop have
/// tau = T + 1.
struct StoppingTime {
    std::vector<char> stop;

    /// Nodes where the rule actually stops.
    [[nodiscard]] std::vector<NodeIndex> stop_set(const ScenarioTree& tree) const;
    /// Stopping stage along the path to a leaf (T + 1 for never).
    [[nodiscard]] int tau(const ScenarioTree& tree, NodeIndex leaf) const;
};

/// S_t = max(R_t, E_t S_{t+1}) with S_{T+1} = 0.
[[nodiscard]] AdaptedProcess<double> snell(const ScenarioTree& tree, const AdaptedProcess<double>& R);

/// E_t S_{t+1} at every node (0 at the leaves).
[[nodiscard]] std::vector<double> continuation_values(const ScenarioTree& tree, const AdaptedProcess<double>& S);

/// Earliest rule stopping where R equals S.
[[nodiscard]] StoppingTime optimal_stop(const ScenarioTree& tree, const AdaptedProcess<double>& R,
                                        const AdaptedProcess<double>& S);

/// E R_tau with R_{T+1} = 0.
[[nodiscard]] double stopping_value(const ScenarioTree& tree, const AdaptedProcess<double>& R, const StoppingTime& rule);

/// True iff R = S at every node where the rule stops and the rule attains E S_0 within tol.
[[nodiscard]] bool is_optimal_rule(const ScenarioTree& tree, const AdaptedProcess<double>& R,
                                   const AdaptedProcess<double>& S, const StoppingTime& rule, double tol = 1e-12);

/// Number of distinct rules: 2 at a leaf, 1 + product over children otherwise.
[[nodiscard]] double count_stopping_times(const ScenarioTree& tree);

struct EnumerationLimits {
    std::size_t max_nodes = 63;
    double max_rules = 2e6;
};

/// Calls visit once per consistent rule. Throws TreeTooLarge past the limits.
void enumerate_stopping_times(const ScenarioTree& tree, const std::function<void(const StoppingTime&)>& visit,
                              const EnumerationLimits& limits = {});

/// Exhaustive maximum of E R_tau and one maximizing rule.
[[nodiscard]] std::pair<double, StoppingTime> enumerate_best(const ScenarioTree& tree, const AdaptedProcess<double>& R,
                                                             const EnumerationLimits& limits = {});

/// The randomized relaxation as a general-mode problem: minimize
/// E[-sum_t R_t x_t] over x_t >= 0, sum_t x_t <= 1. Needs T <= 5.
[[nodiscard]] StageProblem ros_problem(const ScenarioTree& tree, const AdaptedProcess<double>& R);

/// Runs the Bellman engine on ros_problem; the optimum is -E S_0.
[[nodiscard]] BellmanSolution ros_as_bellman(const ScenarioTree& tree, const AdaptedProcess<double>& R);

/// Forward sweep over the relaxation choosing x_t in {0, remaining mass},
/// preferring 0 on ties; the result is a stopping rule.
[[nodiscard]] StoppingTime ros_extreme_rule(const BellmanSolution& sol, double tol = 1e-10);

/// Closed form -sum_{s<=t} R_s x_s - E_t[S_{t+1}] (1 - sum_{s<=t} x_s) of h_t at node i.
[[nodiscard]] double ros_closed_form(const ScenarioTree& tree, const AdaptedProcess<double>& R,
                                     const AdaptedProcess<double>& S, NodeIndex i, const Vec<double>& x);

struct MarkovTables {
    /// psi[t] lists (R_t value, S_t value) pairs, sorted by R value.
    std::vector<std::vector<std::pair<double, double>>> psi;
};

/// Throws NotMarkov (with the witness nodes) when R is not Markov; otherwise
/// checks S_t is a function of R_t within tol and returns the tables.
[[nodiscard]] MarkovTables markov_check(const ScenarioTree& tree, const AdaptedProcess<double>& R, double tol = 1e-12);

}  // namespace cdp
