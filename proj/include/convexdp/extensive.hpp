#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "convexdp/convexfn.hpp"
#include "convexdp/problem.hpp"

namespace cdp {

/// weight * fn(map * x[vars] + offset); without a map the argument is x[vars].
struct FlatTerm {
    double weight = 1.0;
    ConvexFn fn;
    std::vector<std::size_t> vars;
    std::optional<Mat<double>> map;
    Vec<double> offset;
};

/// Deterministic-equivalent program: one decision block per tree node.
struct FlatProgram {
    std::size_t num_vars = 0;
    std::vector<FlatTerm> terms;
    std::vector<std::size_t> block_start;  ///< by node index
    std::vector<std::size_t> block_size;

    /// Objective value; +inf outside the domain.
    [[nodiscard]] double eval(const Vec<double>& x) const;
    /// Stacks per-node decisions into one vector.
    [[nodiscard]] Vec<double> stack(const std::vector<Vec<double>>& x) const;
    /// Splits a stacked vector back into per-node decisions.
    [[nodiscard]] std::vector<Vec<double>> unstack(const Vec<double>& z) const;
};

/// Flat program of p; with stage_limit < T only costs at stages <= stage_limit
/// are kept (the caller appends terminal terms).
[[nodiscard]] FlatProgram flatten(const StageProblem& p, int stage_limit = -1);

enum class ExtensiveMethod { Kkt, Simplex, Descent };

struct ExtensiveOptions {
    double tol = 1e-10;
    std::size_t max_iterations = 100000;
    unsigned seed = 12345;
};

struct ExtensiveResult {
    double value = 0.0;
    Vec<double> point;
    ExtensiveMethod method = ExtensiveMethod::Kkt;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
};

/// Quadratic-equality programs go through a KKT solve, polyhedral ones through
/// the simplex on the epigraph LP, anything else through coordinate descent.
[[nodiscard]] ExtensiveResult solve_extensive(const FlatProgram& fp, const ExtensiveOptions& opt = {});

}  // namespace cdp
