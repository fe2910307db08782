#include "convexdp/problem.hpp"

#include <cmath>

namespace cdp {

std::size_t StageProblem::history_dim(int t) const {
    std::size_t n = 0;
    for (int s = 0; s <= t; ++s) n += dim(s);
    return n;
}

std::size_t StageProblem::cost_dim(NodeIndex i) const {
    const int t = tree.stage(i);
    if (mode == Mode::General) return history_dim(t);
    return t == 0 ? dim(0) : dim(t - 1) + dim(t);
}

void StageProblem::validate() const {
    if (dims.size() != static_cast<std::size_t>(tree.horizon() + 1))
        throw Error(ErrorCode::DimensionMismatch, "one decision dimension per stage expected");
    if (cost.size() != tree.size()) throw Error(ErrorCode::DimensionMismatch, "one cost per node expected");
    if (mode == Mode::General && history_dim(tree.horizon()) > kMaxGeneralDim)
        throw Error(ErrorCode::DimensionMismatch, "general mode allows at most " + std::to_string(kMaxGeneralDim) + " decision coordinates in total");
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (mode == Mode::General && !tree.is_leaf(i)) continue;
        if (cost[i].dim() != cost_dim(i))
            throw Error(ErrorCode::DimensionMismatch,
                        "cost has dimension " + std::to_string(cost[i].dim()) + ", expected " + std::to_string(cost_dim(i)),
                        tree.id(i));
    }
}

StageProblem make_problem(ScenarioTree tree, Mode mode, std::vector<std::size_t> dims) {
    StageProblem p;
    p.tree = std::move(tree);
    p.mode = mode;
    p.dims = std::move(dims);
    p.cost.resize(p.tree.size());
    for (NodeIndex i = 0; i < p.tree.size(); ++i) p.cost[i] = zero_quadratic<double>(p.cost_dim(i));
    return p;
}

double objective(const StageProblem& p, const std::vector<Vec<double>>& x) {
    const auto& tree = p.tree;
    double total = 0.0;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        Vec<double> arg;
        if (p.mode == Mode::General) {
            if (!tree.is_leaf(i)) continue;
            for (NodeIndex k : tree.path(i)) arg.insert(arg.end(), x.at(k).begin(), x.at(k).end());
        } else {
            if (i != tree.root()) arg = x.at(tree.parent(i));
            arg.insert(arg.end(), x.at(i).begin(), x.at(i).end());
        }
        double v = eval(p.cost[i], arg);
        if (std::isinf(v)) return v;
        total += tree.probability(i) * v;
    }
    return total;
}

}  // namespace cdp
