#pragma once

#include <random>
#include <vector>

#include "convexdp/control.hpp"
#include "convexdp/hedging.hpp"
#include "convexdp/lagrange.hpp"
#include "convexdp/problem.hpp"
#include "convexdp/tree.hpp"

namespace cdp::gen {

using Rng = std::mt19937_64;

/// Every non-leaf node has `branching` equally likely children. Ids are the
/// branch path ("r", "r.0", "r.0.1", ...).
[[nodiscard]] ScenarioTree uniform_tree(int horizon, int branching);

/// Branching drawn from [1, max_branching] per node, rational probabilities
/// with small denominators.
[[nodiscard]] ScenarioTree random_tree(Rng& rng, int horizon, int max_branching);

/// Tree from explicit per-stage branch probabilities, replicated at every node.
[[nodiscard]] ScenarioTree product_tree(const std::vector<std::vector<double>>& stage_probs);

/// Stage-additive problem with strictly convex quadratic costs.
[[nodiscard]] StageProblem random_quadratic_problem(Rng& rng, ScenarioTree tree, std::vector<std::size_t> dims);

/// Stage-additive problem with max-affine costs and a box on each decision.
[[nodiscard]] StageProblem random_polyhedral_problem(Rng& rng, ScenarioTree tree, std::vector<std::size_t> dims);

struct LQInstance {
    ControlSystem sys;
    LQCosts costs;
    Vec<double> x0;
};

/// Random dynamics (entries of A, B in [-0.5, 0.5], W in [-1, 1]), Q PSD and
/// R positive definite at every node.
[[nodiscard]] LQInstance random_lq(Rng& rng, ScenarioTree tree, std::size_t N, std::size_t M);

/// Quadratic Lagrange instance with strictly convex K on every node.
[[nodiscard]] LagrangeInstance random_lagrange(Rng& rng, ScenarioTree tree, std::size_t d);

/// Recombining-style binomial prices on a uniform binary tree: s moves by
/// factor `up` on branch 1 and `down` on branch 0, up-probability p.
[[nodiscard]] MarketModel binomial_market(int horizon, double s0, double up, double down, double p);

/// J assets on the given tree whose returns are centred under random
/// positive weights, so a martingale measure exists.
[[nodiscard]] MarketModel random_market(Rng& rng, ScenarioTree tree, std::size_t J);

/// Rewards R_t uniform on [0, 1) at every node.
[[nodiscard]] AdaptedProcess<double> random_rewards(Rng& rng, const ScenarioTree& tree);

[[nodiscard]] Mat<double> random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0);
[[nodiscard]] Vec<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0);
/// L L^T + shift I with L uniform in [-1, 1].
[[nodiscard]] Mat<double> random_psd(Rng& rng, std::size_t n, double shift);

}  // namespace cdp::gen
