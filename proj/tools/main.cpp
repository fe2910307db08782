#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "convexdp/bellman.hpp"
#include "convexdp/control.hpp"
#include "convexdp/extensive.hpp"
#include "convexdp/generators.hpp"
#include "convexdp/hedging.hpp"
#include "convexdp/io.hpp"
#include "convexdp/lagrange.hpp"
#include "convexdp/parallel.hpp"
#include "convexdp/stopping.hpp"

using namespace cdp;
using io::Json;

namespace {

struct RunConfig {
    std::string input;
    std::string output;
    std::string format = "text";
    double tol = 1e-8;
    std::uint64_t seed = 1;
    std::size_t threads = 0;
    // hedge
    std::string loss = "quad";
    double rho = 1.0;
    double wealth = 0.0;
    // gen
    std::string kind = "lagrange";
    int horizon = 3;
    int branching = 2;
    std::size_t dim = 2;
    std::size_t controls = 1;
    bool allow_arbitrage = false;
};

/// Reports may carry a nonzero exit status under this key; it is removed
/// before output.
const char* const kExitKey = "__exit";

/// JSON numbers cannot be infinite; such values are written as strings.
Json num(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

Json nums(const Vec<double>& v) {
    Json out = Json::array();
    for (double x : v) out.push_back(num(x));
    return out;
}

Json mat(const Mat<double>& m) {
    Json out = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(nums(m.row(r)));
    return out;
}

Json report(const std::string& command) {
    Json r;
    r["schema"] = 1;
    r["command"] = command;
    return r;
}

// ----------------------------------------------------------------------------
// Output
// ----------------------------------------------------------------------------

std::string scalar_text(const Json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_float()) {
        std::ostringstream ss;
        ss << std::setprecision(12) << j.get<double>();
        return ss.str();
    }
    return j.dump();
}

void write_text(std::ostream& os, const Json& j, const std::string& prefix = "") {
    for (const auto& [key, value] : j.items()) {
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object()) {
            write_text(os, value, name);
        } else if (value.is_array() && !value.empty() && value.front().is_object()) {
            os << name << ":\n";
            for (const auto& item : value) {
                os << " ";
                for (const auto& [k, v] : item.items()) os << " " << k << "=" << (v.is_array() ? v.dump() : scalar_text(v));
                os << "\n";
            }
        } else {
            os << name << ": " << (value.is_array() ? value.dump() : scalar_text(value)) << "\n";
        }
    }
}

/// Policy rows as (node_id, stage, x_0..x_{n-1}, residual).
void write_csv(std::ostream& os, const Json& j) {
    if (!j.contains("policy")) throw Error(ErrorCode::Parse, "csv output needs a policy; use --format text or structured");
    const auto& pol = j.at("policy");
    std::size_t width = 0;
    for (const auto& row : pol) width = std::max(width, row.at("x").size());
    os << "node_id,stage";
    for (std::size_t k = 0; k < width; ++k) os << ",x_" << k;
    os << ",residual\n";
    os << std::setprecision(17);
    for (const auto& row : pol) {
        os << row.at("node").get<std::string>() << "," << row.at("stage").get<int>();
        const auto& x = row.at("x");
        for (std::size_t k = 0; k < width; ++k) {
            os << ",";
            if (k < x.size()) os << scalar_text(x[k]);
        }
        os << ",";
        if (row.contains("residual")) os << scalar_text(row.at("residual"));
        os << "\n";
    }
}

void emit(const RunConfig& cfg, const Json& j) {
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!cfg.output.empty()) {
        file.open(cfg.output);
        if (!file) throw Error(ErrorCode::Parse, "cannot write '" + cfg.output + "'");
        os = &file;
    }
    if (cfg.format == "structured")
        *os << j.dump(2) << "\n";
    else if (cfg.format == "csv")
        write_csv(*os, j);
    else
        write_text(*os, j);
}

Json policy_rows(const ScenarioTree& tree, const std::vector<Vec<double>>& x, const std::vector<double>* residual) {
    Json rows = Json::array();
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        Json r;
        r["node"] = tree.id(i);
        r["stage"] = tree.stage(i);
        r["x"] = nums(x[i]);
        if (residual) r["residual"] = num((*residual)[i]);
        rows.push_back(std::move(r));
    }
    return rows;
}

Json assumption_json(const ScenarioTree& tree, const AssumptionReport& a) {
    Json j;
    j["lower_bounds_ok"] = a.lower_bounds_ok;
    j["linearity_ok"] = a.linearity_ok;
    j["linearity_detail"] = a.linearity_detail;
    if (a.linearity_node) j["linearity_node"] = *a.linearity_node;
    j["feasible"] = a.feasible;
    Json certs = Json::array();
    for (const auto& c : a.certificates) certs.push_back({{"node", tree.id(c.node)}, {"lambda", c.lambda}, {"m", num(c.m)}});
    j["certificates"] = certs;
    return j;
}

// ----------------------------------------------------------------------------
// Subcommands
// ----------------------------------------------------------------------------

Json run_solve(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    if (f.kind() == "lagrange" || f.kind() == "lp") throw Error(ErrorCode::Parse, "use the lagrange subcommand for kind '" + f.kind() + "'");
    auto p = io::stage_problem(f);
    auto sol = solve_be(p);
    auto pol = extract_policy(sol);
    auto res = optimality_residuals(sol, pol.x);
    Json r = report("solve");
    r["value"] = num(sol.value);
    Json stages = Json::array();
    for (int t = 0; t <= p.tree.horizon(); ++t) stages.push_back(num(optimum_value(sol, t)));
    r["per_stage_values"] = stages;
    r["policy"] = policy_rows(p.tree, pol.x, &res);
    r["residual_max"] = num(res.empty() ? 0.0 : *std::max_element(res.begin(), res.end()));
    r["verified"] = verify_optimality(pol.x, sol, cfg.tol);
    r["assumption_report"] = assumption_json(p.tree, check_assumptions(p));
    return r;
}

Json compare(double dp, double ext, const std::string& method) {
    return {{"dp_value", num(dp)}, {"extensive_value", num(ext)}, {"delta", num(std::fabs(dp - ext))}, {"extensive_method", method}};
}

std::string method_name(ExtensiveMethod m) {
    switch (m) {
        case ExtensiveMethod::Kkt: return "kkt";
        case ExtensiveMethod::Simplex: return "simplex";
        case ExtensiveMethod::Descent: return "descent";
    }
    return "?";
}

Json run_oracle(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    Json r = report("oracle");
    r["kind"] = f.kind();
    ExtensiveOptions eo;
    eo.seed = cfg.seed;
    const auto k = f.kind();
    if (k == "stage" || k == "lagrange" || k == "lp") {
        StageProblem p;
        double dp = 0.0;
        if (k == "stage") {
            p = io::stage_problem(f);
            dp = solve_be(p).value;
        } else if (k == "lagrange") {
            auto inst = io::lagrange(f);
            p = to_stage_problem(inst);
            dp = solve_lagrange(inst).value;
        } else {
            auto data = io::lp_data(f);
            p = to_stage_problem(lp_instance(data));
            dp = lp_recursion(data).value;
        }
        auto ext = solve_extensive(flatten(p), eo);
        r["compare"] = compare(dp, ext.value, method_name(ext.method));
    } else if (k == "control") {
        auto lq = io::lq_control(f);
        auto L = lq_costs(lq.sys, lq.costs);
        auto vf = solve_oc(lq.sys, L);
        auto rd = riccati(lq.sys, lq.costs);
        auto ext = solve_extensive(flatten(to_stage_problem(lq.sys, L, lq.x0)), eo);
        const double dp = eval(vf.J[0], lq.x0);
        r["compare"] = compare(dp, ext.value, method_name(ext.method));
        r["compare"]["riccati_value"] = num(riccati_value(rd, 0, lq.x0));
        r["compare"]["riccati_delta"] = num(std::fabs(riccati_value(rd, 0, lq.x0) - ext.value));
    } else if (k == "rewards") {
        auto R = io::rewards(f);
        const double snell_value = snell(f.tree, R)[0];
        const double ros_value = -ros_as_bellman(f.tree, R).value;
        r["compare"] = compare(ros_value, snell_value, "snell");
        try {
            r["compare"]["enumeration_value"] = num(enumerate_best(f.tree, R).first);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::TreeTooLarge) throw;
            r["compare"]["enumeration_value"] = "skipped: tree too large";
        }
    } else if (k == "market") {
        auto m = io::market(f);
        auto V = quadratic_loss(1.0);
        auto res = solve_alm(m, V, cfg.wealth);
        auto ext = solve_extensive(flatten(to_stage_problem(alm_system(m), alm_costs(m, V, cfg.wealth), Vec<double>{cfg.wealth})), eo);
        r["compare"] = compare(res.value, ext.value, method_name(ext.method));
    } else {
        throw Error(ErrorCode::Parse, "unknown document kind '" + k + "'");
    }
    return r;
}

Json run_stop(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    auto R = io::rewards(f);
    auto S = snell(f.tree, R);
    auto rule = optimal_stop(f.tree, R, S);
    Json r = report("stop");
    r["value"] = num(S[0]);
    Json ids = Json::array();
    for (NodeIndex i : rule.stop_set(f.tree)) ids.push_back(f.tree.id(i));
    r["stop_set"] = ids;
    Json snell_rows = Json::array();
    for (NodeIndex i = 0; i < f.tree.size(); ++i) snell_rows.push_back({{"node", f.tree.id(i)}, {"R", num(R[i])}, {"S", num(S[i])}});
    r["snell"] = snell_rows;
    try {
        auto tables = markov_check(f.tree, R, std::max(cfg.tol, 1e-12));
        r["markov"] = true;
        Json psi = Json::array();
        for (std::size_t t = 0; t < tables.psi.size(); ++t)
            for (const auto& [rv, sv] : tables.psi[t]) psi.push_back({{"stage", t}, {"R", num(rv)}, {"S", num(sv)}});
        r["psi"] = psi;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NotMarkov) throw;
        r["markov"] = false;
        r["markov_detail"] = e.what();
    }
    return r;
}

Json run_control(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    auto lq = io::lq_control(f);
    auto rd = riccati(lq.sys, lq.costs);
    auto vf = solve_oc(lq.sys, lq_costs(lq.sys, lq.costs));
    const auto& tree = lq.sys.tree;
    Json r = report("control");
    r["value"] = num(riccati_value(rd, 0, lq.x0));
    r["solve_oc_value"] = num(eval(vf.J[0], lq.x0));
    Json rows = Json::array();
    double half_delta = 0.0;
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        double d = max_abs(add(rd.K_half_cross[i], scaled(rd.K[i], -1.0)));
        half_delta = std::max(half_delta, d);
        rows.push_back({{"node", tree.id(i)},
                        {"stage", tree.stage(i)},
                        {"K", mat(rd.K[i])},
                        {"k", nums(rd.k[i])},
                        {"kappa", num(rd.kappa[i])},
                        {"Lambda", mat(rd.Lambda[i])},
                        {"lambda", nums(rd.lambda[i])}});
    }
    r["riccati"] = rows;
    r["half_cross_term_variant"] = {{"root_K", mat(rd.K_half_cross[0])}, {"max_abs_delta_vs_K", num(half_delta)}};
    auto path = riccati_path(lq.sys, rd, lq.x0);
    auto x = stack_path(path);
    auto sol = solve_be(to_stage_problem(lq.sys, lq_costs(lq.sys, lq.costs), lq.x0));
    auto res = optimality_residuals(sol, x);
    r["policy"] = policy_rows(tree, x, &res);
    r["verified"] = verify_optimality(x, sol, cfg.tol);
    auto ind = independence_reduction(lq.sys, vf);
    r["deterministic_value_functions"] = ind.ok;
    if (!ind.ok) r["independence_witness"] = {tree.id(ind.first), tree.id(ind.second)};
    for (const auto& n : vf.notes) r["notes"].push_back(n);
    return r;
}

Json run_lagrange(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    ValueV vv;
    if (f.kind() == "lp")
        vv = lp_recursion(io::lp_data(f));
    else
        vv = solve_lagrange(io::lagrange(f));
    Json r = report("lagrange");
    r["value"] = num(vv.value);
    auto pol = extract_policy(vv.sol);
    auto res = optimality_residuals(vv.sol, pol.x);
    r["policy"] = policy_rows(f.tree, pol.x, &res);
    r["residual_max"] = num(res.empty() ? 0.0 : *std::max_element(res.begin(), res.end()));
    return r;
}

LossFn grid_loss(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, "cannot open loss file '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::Parse, std::string("malformed loss file: ") + e.what());
    }
    auto fn = io::fn_from_json(j);
    if (fn.dim() != 1) throw Error(ErrorCode::DimensionMismatch, "loss must be one-dimensional");
    return custom_loss("grid:" + path, [fn](double u) { return eval(fn, {u}); });
}

void verdict_json(Json& r, const MarketModel& m, const NAVerdict& verdict) {
    r["no_arbitrage"] = verdict.pass;
    r["arbitrage_expected_gains"] = num(verdict.optimum);
    if (!verdict.pass) {
        Json dir = Json::array();
        for (NodeIndex i = 0; i < m.tree.size(); ++i)
            if (!m.tree.is_leaf(i)) dir.push_back({{"node", m.tree.id(i)}, {"x", nums(verdict.direction[i])}});
        r["arbitrage_direction"] = dir;
        Json gains = Json::array();
        const auto leaves = m.tree.leaves();
        for (std::size_t k = 0; k < leaves.size(); ++k) gains.push_back({{"node", m.tree.id(leaves[k])}, {"gain", num(verdict.gains[k])}});
        r["arbitrage_gains"] = gains;
    }
}

Json run_hedge(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    auto m = io::market(f);
    Json r = report("hedge");
    auto verdict = na_check(m, cfg.tol);
    verdict_json(r, m, verdict);
    if (!verdict.pass && !cfg.allow_arbitrage) {
        r["refused"] = "ArbitrageRefusal: pass --allow-arbitrage to solve anyway";
        r[kExitKey] = 3;
        return r;
    }
    Json support = Json::array();
    for (NodeIndex i = 0; i < m.tree.size(); ++i)
        if (!m.tree.is_leaf(i)) support.push_back({{"node", m.tree.id(i)}, {"sigma_D", num(verdict.support[i])}});
    r["support_function"] = support;
    r["wealth"] = cfg.wealth;

    auto rows_from = [&](const std::vector<Vec<double>>& pos) {
        std::vector<Vec<double>> x(pos);
        return policy_rows(m.tree, x, nullptr);
    };
    if (cfg.loss == "exp") {
        auto e = exp_utility(m, cfg.rho);
        r["loss"] = "exp";
        r["rho"] = cfg.rho;
        r["value"] = num(e.J(0, cfg.wealth));
        Json alpha = Json::array();
        for (NodeIndex i = 0; i < m.tree.size(); ++i) alpha.push_back({{"node", m.tree.id(i)}, {"alpha", num(e.alpha[i])}});
        r["alpha"] = alpha;
        r["policy"] = rows_from(e.positions);
    } else {
        AlmResult res;
        if (cfg.loss == "quad") {
            r["loss"] = "quad";
            res = solve_alm(m, quadratic_loss(1.0), cfg.wealth, AlmOptions{!cfg.allow_arbitrage});
        } else if (cfg.loss.rfind("grid:", 0) == 0) {
            r["loss"] = cfg.loss;
            GridOptions go;
            go.refuse_on_arbitrage = !cfg.allow_arbitrage;
            res = solve_alm_grid(m, grid_loss(cfg.loss.substr(5)), cfg.wealth, go);
        } else {
            throw Error(ErrorCode::Parse, "--loss must be quad, exp or grid:<file>");
        }
        r["value"] = num(res.value);
        r["policy"] = rows_from(res.positions);
        Json wealth = Json::array();
        for (NodeIndex i = 0; i < m.tree.size(); ++i) wealth.push_back({{"node", m.tree.id(i)}, {"X", num(res.X[i])}});
        r["wealth_path"] = wealth;
    }
    return r;
}

Json run_check(const RunConfig& cfg) {
    auto f = io::read_tree_file(cfg.input);
    Json r = report("check");
    const auto k = f.kind();
    r["kind"] = k;
    if (k == "stage") {
        auto p = io::stage_problem(f);
        r["assumption_report"] = assumption_json(p.tree, check_assumptions(p));
    } else if (k == "lagrange" || k == "lp") {
        auto inst = k == "lp" ? lp_instance(io::lp_data(f)) : io::lagrange(f);
        const int T = inst.tree.horizon();
        auto p0 = zero_dual(inst.tree, std::vector<int>(static_cast<std::size_t>(T + 1), static_cast<int>(inst.d)));
        AdaptedProcess<Vec<double>> y(inst.tree, 0, T, Vec<double>(inst.d, 0.0));
        auto rep = check_lagrange_bounds(inst, p0, y);
        r["lower_bounds_ok"] = rep.lower_bounds_ok;
        r["linearity_ok"] = rep.linearity_ok;
        r["linearity_detail"] = rep.linearity_detail;
        if (rep.linearity_node) r["linearity_node"] = *rep.linearity_node;
    } else if (k == "rewards") {
        auto R = io::rewards(f);
        try {
            (void)markov_check(f.tree, R, std::max(cfg.tol, 1e-12));
            r["markov"] = true;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotMarkov) throw;
            r["markov"] = false;
            r["markov_detail"] = e.what();
        }
    } else if (k == "market") {
        auto m = io::market(f);
        verdict_json(r, m, na_check(m, cfg.tol));

    } else if (k == "control") {
        auto lq = io::lq_control(f);
        auto vf = solve_oc(lq.sys, lq_costs(lq.sys, lq.costs));
        auto ind = independence_reduction(lq.sys, vf);
        r["deterministic_value_functions"] = ind.ok;
        if (!ind.ok) r["independence_witness"] = {lq.sys.tree.id(ind.first), lq.sys.tree.id(ind.second)};
    } else {
        throw Error(ErrorCode::Parse, "unknown document kind '" + k + "'");
    }
    return r;
}

Json run_gen(const RunConfig& cfg) {
    gen::Rng rng(cfg.seed);
    auto tree = gen::uniform_tree(cfg.horizon, cfg.branching);
    io::TreeFile f;
    if (cfg.kind == "lagrange") {
        f = io::to_file(gen::random_lagrange(rng, tree, cfg.dim));
    } else if (cfg.kind == "control") {
        auto lq = gen::random_lq(rng, tree, cfg.dim, cfg.controls);
        f = io::to_file(lq.sys, lq.costs, lq.x0);
    } else if (cfg.kind == "market") {
        f = io::to_file(gen::binomial_market(cfg.horizon, 1.0, 1.2, 0.9, 0.5));
        auto m = io::market(f);
        for (NodeIndex leaf : m.tree.leaves()) m.c[leaf] = std::max(m.s[leaf][0] - 1.0, 0.0);
        f = io::to_file(m);
    } else if (cfg.kind == "rewards") {
        f = io::to_file(tree, gen::random_rewards(rng, tree));
    } else if (cfg.kind == "stage") {
        std::vector<std::size_t> dims(static_cast<std::size_t>(cfg.horizon + 1), cfg.dim);
        f = io::to_file(gen::random_quadratic_problem(rng, tree, dims));
    } else {
        throw Error(ErrorCode::Parse, "--kind must be lagrange, control, market, rewards or stage");
    }
    f.meta["seed"] = cfg.seed;
    return io::to_json(f);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convex multistage stochastic dynamic programming on scenario trees"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::optional<std::size_t> threads;

    auto common = [&](CLI::App* sub, bool needs_input) {
        auto* in = sub->add_option("-i,--input", cfg.input, "Tree file");
        if (needs_input) in->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output", cfg.output, "Write the report here instead of stdout");
        sub->add_option("--format", cfg.format, "text, csv or structured")->check(CLI::IsMember({"text", "csv", "structured"}));
        sub->add_option("--tol", cfg.tol, "Verification tolerance");
        sub->add_option("--seed", cfg.seed, "Random seed");
        sub->add_option("--threads", threads, "Worker threads (default: STOCH_BELLMAN_THREADS, then all cores)");
    };

    std::map<std::string, std::function<Json(const RunConfig&)>> handlers{
        {"solve", run_solve}, {"oracle", run_oracle}, {"stop", run_stop},   {"control", run_control},
        {"lagrange", run_lagrange}, {"hedge", run_hedge}, {"check", run_check}, {"gen", run_gen}};
    std::map<std::string, CLI::App*> subs;
    subs["solve"] = app.add_subcommand("solve", "Backward recursion, policy and assumption report");
    subs["oracle"] = app.add_subcommand("oracle", "Dynamic programming against the extensive form");
    subs["stop"] = app.add_subcommand("stop", "Optimal stopping via the Snell envelope");
    subs["control"] = app.add_subcommand("control", "Linear-quadratic control via the Riccati recursion");
    subs["lagrange"] = app.add_subcommand("lagrange", "Lagrange-form problems and block-diagonal LPs");
    subs["hedge"] = app.add_subcommand("hedge", "Hedging: no-arbitrage check and optimal positions");
    subs["check"] = app.add_subcommand("check", "Assumption diagnostics");
    subs["gen"] = app.add_subcommand("gen", "Seeded random instances");
    for (auto& [name, sub] : subs) common(sub, name != "gen");
    subs["hedge"]->add_option("--loss", cfg.loss, "quad, exp or grid:<file>");
    subs["hedge"]->add_option("--rho", cfg.rho, "Risk aversion for --loss exp");
    subs["hedge"]->add_option("--wealth", cfg.wealth, "Initial wealth");
    subs["hedge"]->add_flag("--allow-arbitrage", cfg.allow_arbitrage, "Solve even when the no-arbitrage check fails");
    subs["oracle"]->add_option("--wealth", cfg.wealth, "Initial wealth for market documents");
    subs["gen"]->add_option("--kind", cfg.kind, "lagrange, control, market, rewards or stage");
    subs["gen"]->add_option("--horizon", cfg.horizon, "Number of periods T");
    subs["gen"]->add_option("--branching", cfg.branching, "Children per node");
    subs["gen"]->add_option("--dim", cfg.dim, "Decision or state dimension");
    subs["gen"]->add_option("--controls", cfg.controls, "Control dimension for --kind control");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (threads) set_thread_count(*threads);

    try {
        for (auto& [name, sub] : subs)
            if (sub->parsed()) {
                RunConfig run = cfg;
                // Generated instances are always documents.
                if (name == "gen") run.format = "structured";
                Json out = handlers.at(name)(run);
                int code = 0;
                if (out.contains(kExitKey)) {
                    code = out.at(kExitKey).get<int>();
                    out.erase(kExitKey);
                }
                emit(run, out);
                if (code != 0) return code;
            }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
