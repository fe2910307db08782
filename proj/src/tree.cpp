#include "convexdp/tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace cdp {

NodeIndex ScenarioTree::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::OrphanNode, "unknown node id", id);
    return it->second;
}

NodeIndex ScenarioTree::ancestor(NodeIndex i, int t) const {
    if (t > stage(i) || t < 0) throw Error(ErrorCode::StageOrder, "ancestor stage out of range", id(i));
    while (stage(i) > t) i = parent(i);
    return i;
}

std::vector<NodeIndex> ScenarioTree::path(NodeIndex i) const {
    std::vector<NodeIndex> out;
    for (NodeIndex k = i; k != kNoParent; k = parent(k)) out.push_back(k);
    std::reverse(out.begin(), out.end());
    return out;
}

void ScenarioTree::set_dims(std::vector<int> dims) {
    if (dims.size() != static_cast<std::size_t>(horizon_ + 1))
        throw Error(ErrorCode::DimensionMismatch, "need one decision dimension per stage");
    for (int d : dims)
        if (d < 0) throw Error(ErrorCode::DimensionMismatch, "negative decision dimension");
    dims_ = std::move(dims);
}

std::vector<RawNode> ScenarioTree::raw() const {
    std::vector<RawNode> out;
    out.reserve(size());
    for (const auto& n : nodes_) {
        RawNode r;
        r.id = n.id;
        if (n.parent != kNoParent) r.parent = nodes_[n.parent].id;
        r.stage = n.stage;
        r.prob = n.prob;
        if (exact_) r.prob_exact = n.prob_exact;
        out.push_back(std::move(r));
    }
    return out;
}

ScenarioTree validate_tree(const std::vector<RawNode>& raw, bool exact) {
    if (raw.empty()) throw Error(ErrorCode::OrphanNode, "tree has no nodes");
    std::map<std::string, std::size_t> by_id;
    for (std::size_t k = 0; k < raw.size(); ++k)
        if (!by_id.emplace(raw[k].id, k).second) throw Error(ErrorCode::Parse, "duplicate node id", raw[k].id);

    bool all_exact = true;
    for (const auto& r : raw) all_exact = all_exact && r.prob_exact.has_value();
    exact = exact || all_exact;

    std::optional<std::size_t> root;
    std::vector<std::vector<std::size_t>> kids(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        const auto& r = raw[k];
        if (!(r.prob > 0.0 && r.prob <= 1.0 + 1e-12) && !r.prob_exact)
            throw Error(ErrorCode::ProbabilityMass, "branch probability outside (0, 1]", r.id);
        if (r.prob_exact && (*r.prob_exact <= 0 || *r.prob_exact > 1))
            throw Error(ErrorCode::ProbabilityMass, "branch probability outside (0, 1]", r.id);
        if (!r.parent) {
            if (root) throw Error(ErrorCode::OrphanNode, "more than one root", r.id);
            root = k;
            continue;
        }
        auto it = by_id.find(*r.parent);
        if (it == by_id.end()) throw Error(ErrorCode::OrphanNode, "parent '" + *r.parent + "' not found", r.id);
        const auto& p = raw[it->second];
        if (r.stage != p.stage + 1)
            throw Error(ErrorCode::StageGap,
                        "stage " + std::to_string(r.stage) + " under parent at stage " + std::to_string(p.stage), r.id);
        kids[it->second].push_back(k);
    }
    if (!root) throw Error(ErrorCode::OrphanNode, "no root");
    const auto& rr = raw[*root];
    if (rr.stage != 0) throw Error(ErrorCode::StageGap, "root must be at stage 0", rr.id);
    bool root_one = rr.prob_exact ? (*rr.prob_exact == 1) : std::fabs(rr.prob - 1.0) <= 1e-12;
    if (!root_one) throw Error(ErrorCode::ProbabilityMass, "root probability must be 1", rr.id);

    ScenarioTree tree;
    tree.exact_ = exact;
    std::vector<NodeIndex> new_index(raw.size(), kNoParent);
    std::deque<std::size_t> queue{*root};
    while (!queue.empty()) {
        std::size_t k = queue.front();
        queue.pop_front();
        const auto& r = raw[k];
        Node n;
        n.id = r.id;
        n.stage = r.stage;
        n.prob = r.prob_exact ? r.prob_exact->convert_to<double>() : r.prob;
        n.prob_exact = r.prob_exact ? *r.prob_exact : Rational(r.prob);
        if (k == *root) {
            n.prob = 1.0;
            n.prob_exact = Rational(1);
        } else {
            n.parent = new_index[by_id.at(*r.parent)];
        }
        NodeIndex idx = tree.nodes_.size();
        new_index[k] = idx;
        if (n.parent != kNoParent) tree.nodes_[n.parent].children.push_back(idx);
        tree.nodes_.push_back(std::move(n));
        for (std::size_t c : kids[k]) queue.push_back(c);
    }
    for (std::size_t k = 0; k < raw.size(); ++k)
        if (new_index[k] == kNoParent) throw Error(ErrorCode::OrphanNode, "node unreachable from root", raw[k].id);

    int horizon = 0;
    for (const auto& n : tree.nodes_) horizon = std::max(horizon, n.stage);
    tree.horizon_ = horizon;
    tree.stages_.assign(static_cast<std::size_t>(horizon + 1), {});
    for (NodeIndex i = 0; i < tree.nodes_.size(); ++i) {
        const auto& n = tree.nodes_[i];
        tree.stages_[static_cast<std::size_t>(n.stage)].push_back(i);
        tree.index_.emplace(n.id, i);
        if (n.children.empty() && n.stage != horizon)
            throw Error(ErrorCode::StageGap, "leaf at stage " + std::to_string(n.stage) + " before horizon", n.id);
        if (n.children.empty()) continue;
        if (exact) {
            Rational sum(0);
            for (NodeIndex c : n.children) sum += tree.nodes_[c].prob_exact;
            if (sum != 1) throw Error(ErrorCode::ProbabilityMass, "children probabilities sum to " + sum.str(), n.id);
        } else {
            double sum = 0.0;
            for (NodeIndex c : n.children) sum += tree.nodes_[c].prob;
            if (std::fabs(sum - 1.0) > 1e-12)
                throw Error(ErrorCode::ProbabilityMass, "children probabilities sum to " + std::to_string(sum), n.id);
        }
    }
    tree.dims_.assign(static_cast<std::size_t>(horizon + 1), 1);
    return tree;
}

// ============================================================================
// Processes
// ============================================================================

AdaptedProcess<Vec<double>> cond_expect_vector(const ScenarioTree& tree, const AdaptedProcess<Vec<double>>& p, int s,
                                               int t) {
    if (t > s) throw Error(ErrorCode::StageOrder, "target stage after source stage");
    std::vector<Vec<double>> cur(tree.size());
    for (NodeIndex i : tree.stage_nodes(s)) cur[i] = p[i];
    for (int u = s - 1; u >= t; --u) {
        for (NodeIndex i : tree.stage_nodes(u)) {
            Vec<double> acc;
            for (NodeIndex c : tree.children(i)) {
                if (acc.empty()) acc.assign(cur[c].size(), 0.0);
                if (cur[c].size() != acc.size()) throw Error(ErrorCode::DimensionMismatch, "ragged vector process");
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += tree.cond_prob<double>(c) * cur[c][k];
            }
            cur[i] = std::move(acc);
        }
    }
    AdaptedProcess<Vec<double>> out(tree, t, t);
    for (NodeIndex i : tree.stage_nodes(t)) out[i] = cur[i];
    return out;
}

bool perp_check(const ScenarioTree& tree, const DualProcess& v, double tol) {
    for (std::size_t t = 0; t < v.size(); ++t) {
        if (v[t].lo() != v[t].hi() || v[t].lo() < static_cast<int>(t)) return false;
        auto e = cond_expect_vector(tree, v[t], v[t].lo(), static_cast<int>(t));
        for (NodeIndex i : tree.stage_nodes(static_cast<int>(t)))
            for (double x : e[i])
                if (std::fabs(x) > tol) return false;
    }
    return true;
}

DualProcess martingale_increments(const ScenarioTree& tree, const AdaptedProcess<Vec<double>>& s) {
    const int T = tree.horizon();
    if (s.lo() > 0 || s.hi() < T) throw Error(ErrorCode::StageOrder, "price process must cover every stage");
    DualProcess v;
    for (int t = 0; t < T; ++t) {
        AdaptedProcess<Vec<double>> vt(tree, t + 1, t + 1);
        for (NodeIndex i : tree.stage_nodes(t + 1)) vt[i] = sub(s[i], s[tree.parent(i)]);
        v.push_back(std::move(vt));
    }
    AdaptedProcess<Vec<double>> last(tree, T, T);
    for (NodeIndex i : tree.stage_nodes(T)) last[i] = Vec<double>(s[i].size(), 0.0);
    v.push_back(std::move(last));
    return v;
}

DualProcess zero_dual(const ScenarioTree& tree, const std::vector<int>& dims) {
    const int T = tree.horizon();
    DualProcess v;
    for (int t = 0; t <= T; ++t) {
        int st = std::min(t + 1, T);
        AdaptedProcess<Vec<double>> vt(tree, st, st);
        for (NodeIndex i : tree.stage_nodes(st)) vt[i] = Vec<double>(static_cast<std::size_t>(dims.at(static_cast<std::size_t>(t))), 0.0);
        v.push_back(std::move(vt));
    }
    return v;
}

// ============================================================================
// Markov and conditional-independence checks
// ============================================================================

namespace {

using PathLaw = std::vector<std::pair<std::vector<double>, double>>;

void collect_paths(const ScenarioTree& tree, const AdaptedProcess<double>& R, NodeIndex node, std::vector<double>& prefix,
                   double prob, PathLaw& out) {
    if (tree.is_leaf(node)) {
        out.emplace_back(prefix, prob);
        return;
    }
    for (NodeIndex c : tree.children(node)) {
        prefix.push_back(R[c]);
        collect_paths(tree, R, c, prefix, prob * tree.cond_prob<double>(c), out);
        prefix.pop_back();
    }
}

bool close_seq(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (std::fabs(a[k] - b[k]) > tol) return false;
    return true;
}

PathLaw future_law(const ScenarioTree& tree, const AdaptedProcess<double>& R, NodeIndex node, double tol) {
    PathLaw raw;
    std::vector<double> prefix;
    collect_paths(tree, R, node, prefix, 1.0, raw);
    std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    PathLaw merged;
    for (auto& entry : raw) {
        if (!merged.empty() && close_seq(merged.back().first, entry.first, tol))
            merged.back().second += entry.second;
        else
            merged.push_back(std::move(entry));
    }
    return merged;
}

bool same_law(const PathLaw& a, const PathLaw& b, double tol) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!close_seq(a[k].first, b[k].first, tol)) return false;
        if (std::fabs(a[k].second - b[k].second) > tol) return false;
    }
    return true;
}

}  // namespace

MarkovVerdict markov_verdict(const ScenarioTree& tree, const AdaptedProcess<double>& R, double tol) {
    if (R.lo() > 0 || R.hi() < tree.horizon()) throw Error(ErrorCode::StageOrder, "reward must cover every stage");
    for (int t = 0; t <= tree.horizon(); ++t) {
        const auto& nodes = tree.stage_nodes(t);
        std::vector<PathLaw> laws;
        laws.reserve(nodes.size());
        for (NodeIndex i : nodes) laws.push_back(future_law(tree, R, i, tol));
        for (std::size_t a = 0; a < nodes.size(); ++a)
            for (std::size_t b = a + 1; b < nodes.size(); ++b) {
                if (std::fabs(R[nodes[a]] - R[nodes[b]]) > tol) continue;
                if (!same_law(laws[a], laws[b], tol)) return {false, t, nodes[a], nodes[b]};
            }
    }
    return {};
}

bool is_markov(const ScenarioTree& tree, const AdaptedProcess<double>& R, double tol) {
    return markov_verdict(tree, R, tol).markov;
}

std::vector<std::pair<double, double>> conditional_law(const ScenarioTree& tree, const AdaptedProcess<double>& w,
                                                       NodeIndex node) {
    std::vector<std::pair<double, double>> law;
    for (NodeIndex c : tree.children(node)) law.emplace_back(w[c], tree.cond_prob<double>(c));
    std::sort(law.begin(), law.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& e : law) {
        if (!merged.empty() && merged.back().first == e.first)
            merged.back().second += e.second;
        else
            merged.push_back(e);
    }
    return merged;
}

MarkovVerdict cells_determine_law(const ScenarioTree& tree, const AdaptedProcess<double>& w, int t,
                                  const std::vector<std::vector<NodeIndex>>& cells, double tol) {
    for (const auto& cell : cells) {
        if (cell.empty()) continue;
        auto ref = conditional_law(tree, w, cell.front());
        for (std::size_t k = 1; k < cell.size(); ++k) {
            auto law = conditional_law(tree, w, cell[k]);
            bool same = law.size() == ref.size();
            for (std::size_t j = 0; same && j < law.size(); ++j)
                same = std::fabs(law[j].first - ref[j].first) <= tol && std::fabs(law[j].second - ref[j].second) <= tol;
            if (!same) return {false, t, cell.front(), cell[k]};
        }
    }
    return {};
}

}  // namespace cdp
