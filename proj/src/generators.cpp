#include "convexdp/generators.hpp"

#include <string>

namespace cdp::gen {

ScenarioTree uniform_tree(int horizon, int branching) {
    std::vector<RawNode> raw;
    raw.push_back({"r", std::nullopt, 0, 1.0, Rational(1)});
    std::vector<std::string> layer{"r"};
    for (int t = 1; t <= horizon; ++t) {
        std::vector<std::string> next;
        for (const auto& p : layer)
            for (int b = 0; b < branching; ++b) {
                std::string id = p + "." + std::to_string(b);
                raw.push_back({id, p, t, 1.0 / branching, Rational(1) / branching});
                next.push_back(id);
            }
        layer = std::move(next);
    }
    return validate_tree(raw, true);
}

ScenarioTree random_tree(Rng& rng, int horizon, int max_branching) {
    std::uniform_int_distribution<int> nb(1, max_branching);
    std::uniform_int_distribution<int> w(1, 5);
    std::vector<RawNode> raw;
    raw.push_back({"r", std::nullopt, 0, 1.0, Rational(1)});
    std::vector<std::string> layer{"r"};
    for (int t = 1; t <= horizon; ++t) {
        std::vector<std::string> next;
        for (const auto& p : layer) {
            int k = nb(rng);
            std::vector<int> weights(static_cast<std::size_t>(k));
            int total = 0;
            for (auto& x : weights) total += (x = w(rng));
            for (int b = 0; b < k; ++b) {
                std::string id = p + "." + std::to_string(b);
                Rational pr = Rational(weights[static_cast<std::size_t>(b)]) / total;
                raw.push_back({id, p, t, pr.convert_to<double>(), pr});
                next.push_back(id);
            }
        }
        layer = std::move(next);
    }
    return validate_tree(raw, true);
}

ScenarioTree product_tree(const std::vector<std::vector<double>>& stage_probs) {
    std::vector<RawNode> raw;
    raw.push_back({"r", std::nullopt, 0, 1.0, std::nullopt});
    std::vector<std::string> layer{"r"};
    for (std::size_t t = 0; t < stage_probs.size(); ++t) {
        std::vector<std::string> next;
        for (const auto& p : layer)
            for (std::size_t b = 0; b < stage_probs[t].size(); ++b) {
                std::string id = p + "." + std::to_string(b);
                raw.push_back({id, p, static_cast<int>(t) + 1, stage_probs[t][b], std::nullopt});
                next.push_back(id);
            }
        layer = std::move(next);
    }
    return validate_tree(raw);
}

Mat<double> random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
    std::uniform_real_distribution<double> U(lo, hi);
    Mat<double> M(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) M(i, j) = U(rng);
    return M;
}

Vec<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> U(lo, hi);
    Vec<double> v(n);
    for (auto& x : v) x = U(rng);
    return v;
}

Mat<double> random_psd(Rng& rng, std::size_t n, double shift) {
    auto L = random_matrix(rng, n, n);
    auto Q = matmul(L, transpose(L));
    for (std::size_t i = 0; i < n; ++i) Q(i, i) += shift;
    return Q;
}

LQInstance random_lq(Rng& rng, ScenarioTree tree, std::size_t N, std::size_t M) {
    LQInstance out;
    out.sys = make_system(std::move(tree), N, M);
    const std::size_t n = out.sys.tree.size();
    out.costs.Q.resize(n);
    out.costs.R.resize(n);
    for (NodeIndex i = 0; i < n; ++i) {
        if (i != out.sys.tree.root()) {
            out.sys.A[i] = random_matrix(rng, N, N, -0.5, 0.5);
            out.sys.B[i] = random_matrix(rng, N, M, -0.5, 0.5);
            out.sys.W[i] = random_vector(rng, N);
        }
        out.costs.Q[i] = random_psd(rng, N, 0.0);
        out.costs.R[i] = random_psd(rng, M, 0.2);
    }
    out.x0 = random_vector(rng, N);
    return out;
}

LagrangeInstance random_lagrange(Rng& rng, ScenarioTree tree, std::size_t d) {
    auto inst = make_lagrange(std::move(tree), d);
    std::uniform_real_distribution<double> U(-1, 1);
    for (auto& k : inst.K) k = make_quadratic<double>(random_psd(rng, 2 * d, 0.1), random_vector(rng, 2 * d), U(rng));
    return inst;
}

MarketModel binomial_market(int horizon, double s0, double up, double down, double p) {
    std::vector<RawNode> raw{{"r", std::nullopt, 0, 1.0, std::nullopt}};
    std::vector<Vec<double>> s{{s0}};
    std::vector<std::pair<std::string, double>> layer{{"r", s0}};
    for (int t = 1; t <= horizon; ++t) {
        std::vector<std::pair<std::string, double>> next;
        for (const auto& [id, price] : layer)
            for (int b = 0; b < 2; ++b) {
                std::string child = id + "." + std::to_string(b);
                raw.push_back({child, id, t, b == 1 ? p : 1.0 - p, std::nullopt});
                s.push_back({price * (b == 1 ? up : down)});
                next.emplace_back(child, s.back()[0]);
            }
        layer = std::move(next);
    }
    return make_market(validate_tree(raw), std::move(s));
}

MarketModel random_market(Rng& rng, ScenarioTree tree, std::size_t J) {
    std::vector<Vec<double>> s(tree.size(), Vec<double>(J, 1.0));
    std::uniform_real_distribution<double> W(0.2, 1.0), R(-0.5, 0.5), S0(0.5, 2.0);
    for (auto& v : s[0]) v = S0(rng);
    for (int t = 0; t < tree.horizon(); ++t)
        for (NodeIndex i : tree.stage_nodes(t)) {
            const auto& ch = tree.children(i);
            std::vector<double> q(ch.size());
            double total = 0.0;
            for (auto& v : q) total += v = W(rng);
            for (std::size_t j = 0; j < J; ++j) {
                std::vector<double> r(ch.size());
                double mean = 0.0;
                for (std::size_t k = 0; k < ch.size(); ++k) mean += q[k] / total * (r[k] = R(rng));
                for (std::size_t k = 0; k < ch.size(); ++k) s[ch[k]][j] = s[i][j] * (1.0 + 0.8 * (r[k] - mean));
            }
        }
    return make_market(std::move(tree), std::move(s));
}

AdaptedProcess<double> random_rewards(Rng& rng, const ScenarioTree& tree) {
    AdaptedProcess<double> R(tree, 0, tree.horizon(), 0.0);
    std::uniform_real_distribution<double> U(0, 1);
    for (NodeIndex i = 0; i < tree.size(); ++i) R[i] = U(rng);
    return R;
}

StageProblem random_quadratic_problem(Rng& rng, ScenarioTree tree, std::vector<std::size_t> dims) {
    auto p = make_problem(std::move(tree), Mode::StageAdditive, std::move(dims));
    std::uniform_real_distribution<double> U(-1, 1);
    for (NodeIndex i = 0; i < p.tree.size(); ++i) {
        const std::size_t d = p.cost_dim(i);
        p.cost[i] = make_quadratic<double>(random_psd(rng, d, 0.1), random_vector(rng, d), U(rng));
    }
    return p;
}

StageProblem random_polyhedral_problem(Rng& rng, ScenarioTree tree, std::vector<std::size_t> dims) {
    auto p = make_problem(std::move(tree), Mode::StageAdditive, std::move(dims));
    std::uniform_int_distribution<int> pieces(2, 4);
    for (NodeIndex i = 0; i < p.tree.size(); ++i) {
        const std::size_t d = p.cost_dim(i);
        const std::size_t n = p.dim(p.tree.stage(i));
        const std::size_t k = static_cast<std::size_t>(pieces(rng));
        Mat<double> C(0, d);
        Vec<double> e;
        for (std::size_t a = d - n; a < d; ++a) {
            Vec<double> row(d, 0.0);
            row[a] = 1.0;
            C.append_row(row);
            e.push_back(2.0);
            row[a] = -1.0;
            C.append_row(row);
            e.push_back(2.0);
        }
        p.cost[i] = make_polyhedral<double>(d, random_matrix(rng, k, d), random_vector(rng, k), C, e);
    }
    return p;
}

}  // namespace cdp::gen
