#pragma once

#include <cstddef>
#include <vector>

#include "convexdp/convexfn.hpp"
#include "convexdp/tree.hpp"

namespace cdp {

enum class Mode {
    /// One integrand per leaf over the full decision history (x_0, ..., x_T).
    General,
    /// Per-node stage cost g_t(x_{t-1}, x_t); the root cost is g_0(x_0).
    StageAdditive,
};

/// Total decision coordinates allowed in general (full-history) mode.
inline constexpr std::size_t kMaxGeneralDim = 6;

struct StageProblem {
    ScenarioTree tree;
    Mode mode = Mode::StageAdditive;
    std::vector<std::size_t> dims;  ///< n_t per stage
    /// Indexed by node. General mode reads only the leaves.
    std::vector<ConvexFn> cost;

    [[nodiscard]] int horizon() const noexcept { return tree.horizon(); }
    [[nodiscard]] std::size_t dim(int t) const { return dims.at(static_cast<std::size_t>(t)); }
    /// n_0 + ... + n_t (0 for t < 0).
    [[nodiscard]] std::size_t history_dim(int t) const;
    /// Argument length of the cost attached at node i.
    [[nodiscard]] std::size_t cost_dim(NodeIndex i) const;
    /// Throws DimensionMismatch when a cost has the wrong argument length or
    /// a general-mode problem exceeds kMaxGeneralDim coordinates.
    void validate() const;
};

/// Stage problem with every cost set to the zero function of the right size.
[[nodiscard]] StageProblem make_problem(ScenarioTree tree, Mode mode, std::vector<std::size_t> dims);

/// E h(x) for a decision x given per node (x[i] has length n_t).
[[nodiscard]] double objective(const StageProblem& p, const std::vector<Vec<double>>& x);

}  // namespace cdp
