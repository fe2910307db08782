#include "convexdp/stopping.hpp"

#include <algorithm>
#include <cmath>

namespace cdp {

std::vector<NodeIndex> StoppingTime::stop_set(const ScenarioTree& tree) const {
    std::vector<NodeIndex> out;
    std::vector<char> reached(tree.size(), 0);
    reached[tree.root()] = 1;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (!reached[i]) continue;
        if (stop.at(i)) {
            out.push_back(i);
            continue;
        }
        for (NodeIndex c : tree.children(i)) reached[c] = 1;
    }
    return out;
}

int StoppingTime::tau(const ScenarioTree& tree, NodeIndex leaf) const {
    for (NodeIndex k : tree.path(leaf))
        if (stop.at(k)) return tree.stage(k);
    return tree.horizon() + 1;
}

AdaptedProcess<double> snell(const ScenarioTree& tree, const AdaptedProcess<double>& R) {
    AdaptedProcess<double> S(tree, 0, tree.horizon(), 0.0);
    for (NodeIndex i = tree.size(); i-- > 0;) {
        double cont = 0.0;
        for (NodeIndex c : tree.children(i)) cont += tree.cond_prob<double>(c) * S[c];
        S[i] = std::max(R[i], cont);
    }
    return S;
}

std::vector<double> continuation_values(const ScenarioTree& tree, const AdaptedProcess<double>& S) {
    std::vector<double> out(tree.size(), 0.0);
    for (NodeIndex i = 0; i < tree.size(); ++i)
        for (NodeIndex c : tree.children(i)) out[i] += tree.cond_prob<double>(c) * S[c];
    return out;
}

StoppingTime optimal_stop(const ScenarioTree& tree, const AdaptedProcess<double>& R, const AdaptedProcess<double>& S) {
    StoppingTime rule;
    rule.stop.assign(tree.size(), 0);
    auto cont = continuation_values(tree, S);
    for (NodeIndex i = 0; i < tree.size(); ++i) rule.stop[i] = R[i] >= cont[i] ? 1 : 0;
    return rule;
}

double stopping_value(const ScenarioTree& tree, const AdaptedProcess<double>& R, const StoppingTime& rule) {
    double v = 0.0;
    for (NodeIndex i : rule.stop_set(tree)) v += tree.probability(i) * R[i];
    return v;
}

bool is_optimal_rule(const ScenarioTree& tree, const AdaptedProcess<double>& R, const AdaptedProcess<double>& S,
                     const StoppingTime& rule, double tol) {
    for (NodeIndex i : rule.stop_set(tree))
        if (R[i] != S[i]) return false;
    return std::fabs(stopping_value(tree, R, rule) - S[tree.root()]) <= tol * (1.0 + std::fabs(S[tree.root()]));
}

double count_stopping_times(const ScenarioTree& tree) {
    std::vector<double> c(tree.size(), 0.0);
    for (NodeIndex i = tree.size(); i-- > 0;) {
        if (tree.is_leaf(i)) {
            c[i] = 2.0;
            continue;
        }
        double prod = 1.0;
        for (NodeIndex ch : tree.children(i)) prod *= c[ch];
        c[i] = 1.0 + prod;
    }
    return c[tree.root()];
}

namespace {

void check_limits(const ScenarioTree& tree, const EnumerationLimits& limits) {
    if (tree.size() > limits.max_nodes)
        throw Error(ErrorCode::TreeTooLarge, std::to_string(tree.size()) + " nodes exceed the enumeration cap of " +
                                                 std::to_string(limits.max_nodes));
    if (count_stopping_times(tree) > limits.max_rules)
        throw Error(ErrorCode::TreeTooLarge, "too many stopping rules to enumerate");
}

}  // namespace

void enumerate_stopping_times(const ScenarioTree& tree, const std::function<void(const StoppingTime&)>& visit,
                              const EnumerationLimits& limits) {
    check_limits(tree, limits);
    StoppingTime rule;
    rule.stop.assign(tree.size(), 0);
    std::vector<NodeIndex> pending{tree.root()};
    std::function<void()> rec = [&]() {
        if (pending.empty()) {
            visit(rule);
            return;
        }
        const NodeIndex i = pending.back();
        pending.pop_back();
        rule.stop[i] = 1;
        rec();
        rule.stop[i] = 0;
        const auto& ch = tree.children(i);
        pending.insert(pending.end(), ch.begin(), ch.end());
        rec();
        pending.resize(pending.size() - ch.size());
        pending.push_back(i);
    };
    rec();
}

std::pair<double, StoppingTime> enumerate_best(const ScenarioTree& tree, const AdaptedProcess<double>& R,
                                               const EnumerationLimits& limits) {
    double best = -inf();
    StoppingTime arg;
    enumerate_stopping_times(
        tree,
        [&](const StoppingTime& rule) {
            double v = stopping_value(tree, R, rule);
            if (v > best) {
                best = v;
                arg = rule;
            }
        },
        limits);
    return {best, arg};
}

StageProblem ros_problem(const ScenarioTree& tree, const AdaptedProcess<double>& R) {
    const int T = tree.horizon();
    if (T > 5) throw Error(ErrorCode::TreeTooLarge, "the relaxation runs in full-history mode and needs T <= 5");
    auto p = make_problem(tree, Mode::General, std::vector<std::size_t>(static_cast<std::size_t>(T + 1), 1));
    const std::size_t n = static_cast<std::size_t>(T + 1);
    for (NodeIndex leaf : tree.leaves()) {
        Mat<double> G(1, n);
        for (NodeIndex k : tree.path(leaf)) G(0, static_cast<std::size_t>(tree.stage(k))) = -R[k];
        Mat<double> C(0, n);
        Vec<double> e;
        for (std::size_t s = 0; s < n; ++s) {
            Vec<double> row(n, 0.0);
            row[s] = -1.0;
            C.append_row(row);
            e.push_back(0.0);
        }
        C.append_row(Vec<double>(n, 1.0));
        e.push_back(1.0);
        p.cost[leaf] = make_polyhedral<double>(n, G, {0.0}, C, e);
    }
    return p;
}

BellmanSolution ros_as_bellman(const ScenarioTree& tree, const AdaptedProcess<double>& R) {
    return solve_be(ros_problem(tree, R));
}

StoppingTime ros_extreme_rule(const BellmanSolution& sol, double tol) {
    const auto& tree = sol.problem.tree;
    StoppingTime rule;
    rule.stop.assign(tree.size(), 0);
    std::vector<Vec<double>> x(tree.size());
    std::vector<double> used(tree.size(), 0.0);
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        Vec<double> prefix;
        for (NodeIndex k : tree.path(i))
            if (k != i) prefix.push_back(x[k][0]);
        const double before = i == tree.root() ? 0.0 : used[tree.parent(i)];
        const double mass = std::max(0.0, 1.0 - before);
        auto at = [&](double v) {
            auto arg = prefix;
            arg.push_back(v);
            return eval(sol.nodes[i].local, arg);
        };
        double h0 = at(0.0), hm = at(mass);
        double choice = (mass > 0.0 && hm < h0 - tol * (1.0 + std::fabs(h0))) ? mass : 0.0;
        x[i] = {choice};
        used[i] = before + choice;
        rule.stop[i] = (choice > 0.0 && before == 0.0) ? 1 : 0;
    }
    return rule;
}

double ros_closed_form(const ScenarioTree& tree, const AdaptedProcess<double>& R, const AdaptedProcess<double>& S,
                       NodeIndex i, const Vec<double>& x) {
    auto cont = continuation_values(tree, S);
    double sum = 0.0, lin = 0.0;
    auto path = tree.path(i);
    for (std::size_t k = 0; k < path.size(); ++k) {
        sum += x.at(k);
        lin -= R[path[k]] * x.at(k);
    }
    return lin - cont[i] * (1.0 - sum);
}

MarkovTables markov_check(const ScenarioTree& tree, const AdaptedProcess<double>& R, double tol) {
    auto verdict = markov_verdict(tree, R, tol);
    if (!verdict.markov)
        throw Error(ErrorCode::NotMarkov, "nodes '" + tree.id(verdict.first) + "' and '" + tree.id(verdict.second) +
                                              "' share R_" + std::to_string(verdict.stage) + " but not the future law",
                    tree.id(verdict.first));
    auto S = snell(tree, R);
    MarkovTables out;
    for (int t = 0; t <= tree.horizon(); ++t) {
        std::vector<std::pair<double, double>> table;
        for (NodeIndex i : tree.stage_nodes(t)) {
            auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return std::fabs(e.first - R[i]) <= tol; });
            if (it == table.end()) {
                table.emplace_back(R[i], S[i]);
            } else if (std::fabs(it->second - S[i]) > tol) {
                throw Error(ErrorCode::NotMarkov, "S is not a function of R at stage " + std::to_string(t), tree.id(i));
            }
        }
        std::sort(table.begin(), table.end());
        out.psi.push_back(std::move(table));
    }
    return out;
}

}  // namespace cdp
