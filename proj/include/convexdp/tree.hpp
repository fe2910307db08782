#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convexdp/error.hpp"
#include "convexdp/linalg.hpp"

namespace cdp {

using NodeIndex = std::size_t;
inline constexpr NodeIndex kNoParent = static_cast<NodeIndex>(-1);

struct RawNode {
    std::string id;
    std::optional<std::string> parent;
    int stage = 0;
    double prob = 1.0;
    /// Exact branch probability when the input supplied one (e.g. "1/3").
    std::optional<Rational> prob_exact;
};

struct Node {
    std::string id;
    NodeIndex parent = kNoParent;
    int stage = 0;
    double prob = 1.0;
    Rational prob_exact{1};
    std::vector<NodeIndex> children;
};

/// Finite filtered probability space. Nodes are stored stage by stage, so
/// every parent precedes its children and a reverse scan is a backward sweep.
class ScenarioTree {
public:
    ScenarioTree() = default;

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] int horizon() const noexcept { return horizon_; }
    [[nodiscard]] bool exact() const noexcept { return exact_; }
    [[nodiscard]] const Node& node(NodeIndex i) const { return nodes_.at(i); }
    [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] NodeIndex root() const noexcept { return 0; }
    [[nodiscard]] bool is_leaf(NodeIndex i) const { return nodes_.at(i).children.empty(); }
    [[nodiscard]] const std::vector<NodeIndex>& stage_nodes(int t) const { return stages_.at(static_cast<std::size_t>(t)); }
    [[nodiscard]] std::vector<NodeIndex> leaves() const { return stage_nodes(horizon_); }
    [[nodiscard]] NodeIndex index_of(const std::string& id) const;
    [[nodiscard]] const std::string& id(NodeIndex i) const { return nodes_.at(i).id; }
    [[nodiscard]] int stage(NodeIndex i) const { return nodes_.at(i).stage; }
    [[nodiscard]] NodeIndex parent(NodeIndex i) const { return nodes_.at(i).parent; }
    [[nodiscard]] const std::vector<NodeIndex>& children(NodeIndex i) const { return nodes_.at(i).children; }

    /// Ancestor of `i` at stage `t` (the node itself when t equals its stage).
    [[nodiscard]] NodeIndex ancestor(NodeIndex i, int t) const;
    /// Root-to-node path, root first.
    [[nodiscard]] std::vector<NodeIndex> path(NodeIndex i) const;

    template <class S>
    [[nodiscard]] S cond_prob(NodeIndex i) const;
    /// Unconditional probability, the product of branch probabilities on the root path.
    template <class S = double>
    [[nodiscard]] S probability(NodeIndex i) const;

    [[nodiscard]] const std::vector<int>& dims() const noexcept { return dims_; }
    [[nodiscard]] int dim(int t) const { return dims_.at(static_cast<std::size_t>(t)); }
    void set_dims(std::vector<int> dims);
    [[nodiscard]] std::vector<RawNode> raw() const;

    friend ScenarioTree validate_tree(const std::vector<RawNode>& raw, bool exact);

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<NodeIndex>> stages_;
    std::map<std::string, NodeIndex> index_;
    std::vector<int> dims_;
    int horizon_ = 0;
    bool exact_ = false;
};

template <>
inline double ScenarioTree::cond_prob<double>(NodeIndex i) const {
    return nodes_.at(i).prob;
}
template <>
inline Rational ScenarioTree::cond_prob<Rational>(NodeIndex i) const {
    return nodes_.at(i).prob_exact;
}

template <class S>
S ScenarioTree::probability(NodeIndex i) const {
    S p(1);
    for (NodeIndex k = i; k != kNoParent; k = nodes_[k].parent) p *= cond_prob<S>(k);
    return p;
}

/// Validates the invariants and builds the tree. With `exact` the branch
/// probabilities are checked to sum to one exactly as rationals; otherwise
/// within 1e-12.
[[nodiscard]] ScenarioTree validate_tree(const std::vector<RawNode>& raw, bool exact = false);

// ============================================================================
// Adapted processes
// ============================================================================

/// Node-indexed data on the stage range [lo, hi].
template <class V>
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    AdaptedProcess(const ScenarioTree& tree, int lo, int hi, const V& fill = V{})
        : lo_(lo), hi_(hi), values_(tree.size(), fill), stage_(tree.size()) {
        if (lo > hi || lo < 0 || hi > tree.horizon()) throw Error(ErrorCode::StageOrder, "bad stage range");
        for (NodeIndex i = 0; i < tree.size(); ++i) stage_[i] = tree.stage(i);
    }

    [[nodiscard]] int lo() const noexcept { return lo_; }
    [[nodiscard]] int hi() const noexcept { return hi_; }
    [[nodiscard]] bool defined_at(NodeIndex i) const { return stage_.at(i) >= lo_ && stage_.at(i) <= hi_; }

    const V& operator[](NodeIndex i) const {
        check(i);
        return values_[i];
    }
    V& operator[](NodeIndex i) {
        check(i);
        return values_[i];
    }

private:
    void check(NodeIndex i) const {
        if (!defined_at(i)) throw Error(ErrorCode::StageOrder, "process not defined at node stage");
    }

    int lo_ = 0;
    int hi_ = 0;
    std::vector<V> values_;
    std::vector<int> stage_;
};

/// v[t] holds the dual component paired with x_t; it may be measurable with
/// respect to any stage at or after t (its declared stage lo == hi).
using DualProcess = std::vector<AdaptedProcess<Vec<double>>>;

/// Probability-weighted average of the stage-s values of p over the stage-s
/// descendants of each stage-t node.
template <class S>
[[nodiscard]] AdaptedProcess<S> cond_expect_scalar(const ScenarioTree& tree, const AdaptedProcess<S>& p, int s, int t) {
    if (t > s) throw Error(ErrorCode::StageOrder, "target stage " + std::to_string(t) + " after source stage " + std::to_string(s));
    if (s < p.lo() || s > p.hi()) throw Error(ErrorCode::StageOrder, "process not defined at source stage");
    std::vector<S> cur(tree.size(), S(0));
    for (NodeIndex i : tree.stage_nodes(s)) cur[i] = p[i];
    for (int u = s - 1; u >= t; --u) {
        for (NodeIndex i : tree.stage_nodes(u)) {
            S acc(0);
            for (NodeIndex c : tree.children(i)) acc += tree.cond_prob<S>(c) * cur[c];
            cur[i] = acc;
        }
    }
    AdaptedProcess<S> out(tree, t, t, S(0));
    for (NodeIndex i : tree.stage_nodes(t)) out[i] = cur[i];
    return out;
}

/// Componentwise conditional expectation of a vector process.
[[nodiscard]] AdaptedProcess<Vec<double>> cond_expect_vector(const ScenarioTree& tree,
                                                            const AdaptedProcess<Vec<double>>& p, int s, int t);

/// True iff E_t[v_t] = 0 at every stage-t node, componentwise within tol.
[[nodiscard]] bool perp_check(const ScenarioTree& tree, const DualProcess& v, double tol = 1e-12);

/// v_t = s_{t+1} - s_t measured at stage t+1, and v_T = 0.
[[nodiscard]] DualProcess martingale_increments(const ScenarioTree& tree, const AdaptedProcess<Vec<double>>& s);

/// Zero dual process with declared stages t+1 (t < T) and T.
[[nodiscard]] DualProcess zero_dual(const ScenarioTree& tree, const std::vector<int>& dims);

struct MarkovVerdict {
    bool markov = true;
    int stage = -1;
    NodeIndex first = kNoParent;
    NodeIndex second = kNoParent;
};

/// Compares the conditional laws of the future path (R_{t+1}, ..., R_T)
/// across same-stage nodes sharing an R_t value.
[[nodiscard]] MarkovVerdict markov_verdict(const ScenarioTree& tree, const AdaptedProcess<double>& R, double tol = 1e-12);
[[nodiscard]] bool is_markov(const ScenarioTree& tree, const AdaptedProcess<double>& R, double tol = 1e-12);

/// Conditional law of a stage-(t+1) scalar given each stage-t node: sorted
/// (value, probability) pairs with equal values merged.
[[nodiscard]] std::vector<std::pair<double, double>> conditional_law(const ScenarioTree& tree,
                                                                     const AdaptedProcess<double>& w, NodeIndex node);

/// Checks that the conditional law of w (stage t+1) given the stage-t node is
/// constant on every cell of `cells` (a partition of the stage-t nodes). When
/// it is, E_t of any function of w is measurable with respect to the cells.
[[nodiscard]] MarkovVerdict cells_determine_law(const ScenarioTree& tree, const AdaptedProcess<double>& w, int t,
                                                const std::vector<std::vector<NodeIndex>>& cells, double tol = 1e-12);

}  // namespace cdp
