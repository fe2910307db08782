#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "convexdp/control.hpp"
#include "convexdp/convexfn.hpp"
#include "convexdp/tree.hpp"

namespace cdp {

/// Prices s (by node, R^J, nonzero), position constraints D_t = {x : A x <= b}
/// (by node; no rows means unconstrained; leaves are forced to {0}) and the
/// liability c (read at leaves).
struct MarketModel {
    ScenarioTree tree;
    std::size_t J = 1;
    std::vector<Vec<double>> s;
    std::vector<InequalitySystem<double>> D;
    std::vector<double> c;
    void validate() const;
    /// Delta s / s_parent at a non-root node.
    [[nodiscard]] Vec<double> returns(NodeIndex i) const;
};

/// Unconstrained market with zero liability.
[[nodiscard]] MarketModel make_market(ScenarioTree tree, std::vector<Vec<double>> s);

struct NAVerdict {
    bool pass = true;
    double optimum = 0.0;                         ///< max expected gains under the cap
    std::vector<Vec<double>> direction;           ///< positions by node when FAIL
    std::vector<double> gains;                    ///< terminal gains by leaf (index into leaves())
    std::vector<double> support;                  ///< sup over D_t of x·E_t[Delta s], by non-leaf node
};

/// LP test: maximize E[sum x_t·Delta s_{t+1}] subject to nonnegative pathwise
/// gains, x_t in the recession cone of D_t and |x|_inf <= 1.
[[nodiscard]] NAVerdict na_check(const MarketModel& m, double tol = 1e-9);

/// Nondecreasing convex loss. `fn` is the exact 1-D ConvexFn when one exists
/// (quadratic or piecewise linear); `value` evaluates the loss anywhere.
struct LossFn {
    std::string name;
    std::optional<ConvexFn> fn;
    std::function<double(double)> value;
    double operator()(double u) const { return value(u); }
};

[[nodiscard]] LossFn quadratic_loss(double a, double b = 0.0);  ///< a u^2 + b u
[[nodiscard]] LossFn piecewise_linear_loss(const Vec<double>& slopes, const Vec<double>& intercepts);
[[nodiscard]] LossFn exp_loss(double rho);                       ///< exp(rho u) / rho
[[nodiscard]] LossFn custom_loss(std::string name, std::function<double(double)> value);

struct AlmOptions {
    bool refuse_on_arbitrage = true;
};

struct AlmResult {
    double value = 0.0;
    std::vector<double> X;               ///< wealth by node
    std::vector<Vec<double>> U;          ///< cash in each asset by node
    std::vector<Vec<double>> positions;  ///< units x = U / s by node
    NAVerdict verdict;
};

/// Control-form encoding: N = 1, M = J, B_t = R_t, L_T = V(c - X_T).
[[nodiscard]] ControlSystem alm_system(const MarketModel& m);
[[nodiscard]] std::vector<ConvexFn> alm_costs(const MarketModel& m, const LossFn& V, double w);

/// Exact recursion through solve_oc; V needs an exact backend. Throws
/// ArbitrageRefusal (unless overridden) and UnboundedBelow.
[[nodiscard]] AlmResult solve_alm(const MarketModel& m, const LossFn& V, double w, const AlmOptions& opt = {});

struct GridOptions {
    double lo = -10.0;
    double hi = 10.0;
    std::size_t points = 401;
    double position_cap = 1e3;  ///< |U_j| bound during the inner search
    bool refuse_on_arbitrage = true;
};

/// Wealth-grid driver: J_t stored as Sampled1D on the grid (linear
/// extrapolation), inner minimization by coordinate descent with
/// golden-section line searches.
[[nodiscard]] AlmResult solve_alm_grid(const MarketModel& m, const LossFn& V, double w, const GridOptions& opt = {});

struct ExpUtilityResult {
    double rho = 1.0;
    std::vector<double> alpha;       ///< by node
    std::vector<Vec<double>> U;      ///< wealth-independent cash positions by node
    std::vector<Vec<double>> positions;
    /// J_t(X) = alpha_t exp(-rho X) / rho.
    [[nodiscard]] double J(NodeIndex i, double X) const;
};

/// alpha_T = exp(rho c), alpha_t = inf_U E_t[alpha_{t+1} exp(-rho R_{t+1}·U)].
/// Throws UnboundedExp when the inner infimum is approached along an
/// arbitrage direction.
[[nodiscard]] ExpUtilityResult exp_utility(const MarketModel& m, double rho);

/// Minimizes E_t[J_{t+1}(X + R_{t+1}·U)] over U at a given wealth level,
/// evaluating J_{t+1} through the loss itself.
[[nodiscard]] Vec<double> exp_wealth_argmin(const MarketModel& m, const ExpUtilityResult& r, NodeIndex node, double X);

struct AEProbe {
    double min_magnitude = 10.0;
    double max_magnitude = 30.0;
    std::size_t points = 8;
};

struct AEEstimate {
    std::optional<double> minus;  ///< unset when V vanishes on the negative probes
    std::optional<double> plus;
    bool reasonable = false;      ///< AE_- < 1 or AE_+ > 1
    std::vector<std::pair<double, double>> ratios;  ///< (u, u V'(u) / V(u)) on the grid
};

/// Probes u V'(u) / V(u) on geometric grids toward -inf and +inf and reports
/// the extreme points. Throws NonMonotone when V decreases anywhere on the grid.
[[nodiscard]] AEEstimate ae_estimate(const LossFn& V, const AEProbe& probe = {});

}  // namespace cdp
