#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "convexdp/control.hpp"
#include "convexdp/convexfn.hpp"
#include "convexdp/hedging.hpp"
#include "convexdp/lagrange.hpp"
#include "convexdp/problem.hpp"
#include "convexdp/tree.hpp"

namespace cdp::io {

using Json = nlohmann::ordered_json;

/// A parsed tree document: the tree, per-node `data` objects (indexed like
/// the tree) and every other top-level field.
struct TreeFile {
    ScenarioTree tree;
    std::vector<Json> data;
    Json meta = Json::object();

    [[nodiscard]] const Json* entry(NodeIndex i, const std::string& name) const;
    [[nodiscard]] std::string kind() const;
};

/// Throws Parse on malformed documents and the tree validation errors on
/// inconsistent trees.
[[nodiscard]] TreeFile parse_tree_file(const std::string& text);
[[nodiscard]] TreeFile read_tree_file(const std::string& path);
[[nodiscard]] Json to_json(const TreeFile& f);

[[nodiscard]] Vec<double> vec_from_json(const Json& j);
[[nodiscard]] Mat<double> mat_from_json(const Json& j, std::size_t cols_if_empty = 0);
[[nodiscard]] Json to_json(const Vec<double>& v);
[[nodiscard]] Json to_json(const Mat<double>& m);

/// Tagged records: {"type": "quadratic" | "polyhedral" | "sampled", ...}.
[[nodiscard]] ConvexFn fn_from_json(const Json& j);
[[nodiscard]] Json to_json(const ConvexFn& f);

// Instance documents. `kind` names the record layout.

[[nodiscard]] StageProblem stage_problem(const TreeFile& f);  ///< kind "stage": dims, mode, node "cost"
[[nodiscard]] TreeFile to_file(const StageProblem& p);

[[nodiscard]] AdaptedProcess<double> rewards(const TreeFile& f);  ///< kind "rewards": node "R"
[[nodiscard]] TreeFile to_file(const ScenarioTree& tree, const AdaptedProcess<double>& R);

struct LQFile {
    ControlSystem sys;
    LQCosts costs;
    Vec<double> x0;
};
[[nodiscard]] LQFile lq_control(const TreeFile& f);  ///< kind "control": N, M, x0, node A B W Q R
[[nodiscard]] TreeFile to_file(const ControlSystem& sys, const LQCosts& c, const Vec<double>& x0);

[[nodiscard]] LagrangeInstance lagrange(const TreeFile& f);  ///< kind "lagrange": d, node "K"
[[nodiscard]] TreeFile to_file(const LagrangeInstance& inst);

[[nodiscard]] LPData lp_data(const TreeFile& f);  ///< kind "lp": d, node T W b c C
[[nodiscard]] TreeFile to_file(const LPData& data);

[[nodiscard]] MarketModel market(const TreeFile& f);  ///< kind "market": node s, D, c
[[nodiscard]] TreeFile to_file(const MarketModel& m);

}  // namespace cdp::io
