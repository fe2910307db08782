#include "convexdp/extensive.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "convexdp/lp.hpp"
#include "eigen_util.hpp"

namespace cdp {

namespace {

Vec<double> gather(const Vec<double>& x, const std::vector<std::size_t>& vars) {
    Vec<double> out(vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) out[k] = x[vars[k]];
    return out;
}

Vec<double> term_argument(const FlatTerm& t, const Vec<double>& x) {
    auto z = gather(x, t.vars);
    if (!t.map) return z;
    return add(matvec(*t.map, z), t.offset);
}

/// The term as a function of x[vars] when the backend supports composition.
std::optional<ConvexFn> direct_fn(const FlatTerm& t) {
    if (!t.map) return t.fn;
    if (t.fn.is<Sampled1D<double>>() || t.fn.is<QuadPoly<double>>()) return std::nullopt;
    return compose_affine(t.fn, *t.map, t.offset);
}

}  // namespace

double FlatProgram::eval(const Vec<double>& x) const {
    if (x.size() != num_vars) throw Error(ErrorCode::DimensionMismatch, "flat point length");
    double total = 0.0;
    for (const auto& t : terms) {
        double v = cdp::eval(t.fn, term_argument(t, x));
        if (std::isinf(v)) return v;
        total += t.weight * v;
    }
    return total;
}

Vec<double> FlatProgram::stack(const std::vector<Vec<double>>& x) const {
    Vec<double> z(num_vars, 0.0);
    if (x.size() != block_start.size()) throw Error(ErrorCode::DimensionMismatch, "one block per node expected");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].size() != block_size[i]) throw Error(ErrorCode::DimensionMismatch, "block length");
        std::copy(x[i].begin(), x[i].end(), z.begin() + static_cast<std::ptrdiff_t>(block_start[i]));
    }
    return z;
}

std::vector<Vec<double>> FlatProgram::unstack(const Vec<double>& z) const {
    std::vector<Vec<double>> x(block_start.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto b = z.begin() + static_cast<std::ptrdiff_t>(block_start[i]);
        x[i].assign(b, b + static_cast<std::ptrdiff_t>(block_size[i]));
    }
    return x;
}

FlatProgram flatten(const StageProblem& p, int stage_limit) {
    p.validate();
    const auto& tree = p.tree;
    if (stage_limit < 0 || stage_limit > tree.horizon()) stage_limit = tree.horizon();
    FlatProgram fp;
    fp.block_start.resize(tree.size());
    fp.block_size.resize(tree.size());
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        fp.block_start[i] = fp.num_vars;
        fp.block_size[i] = p.dim(tree.stage(i));
        fp.num_vars += fp.block_size[i];
    }
    auto block = [&](NodeIndex i, std::vector<std::size_t>& vars) {
        for (std::size_t k = 0; k < fp.block_size[i]; ++k) vars.push_back(fp.block_start[i] + k);
    };
    for (NodeIndex i = 0; i < tree.size(); ++i) {
        if (tree.stage(i) > stage_limit) continue;
        FlatTerm t;
        t.weight = tree.probability(i);
        t.fn = p.cost[i];
        if (p.mode == Mode::General) {
            if (!tree.is_leaf(i)) continue;
            for (NodeIndex k : tree.path(i)) block(k, t.vars);
        } else {
            if (i != tree.root()) block(tree.parent(i), t.vars);
            block(i, t.vars);
        }
        fp.terms.push_back(std::move(t));
    }
    return fp;
}

// ============================================================================
// KKT path
// ============================================================================

namespace {

ExtensiveResult solve_kkt(const FlatProgram& fp, const std::vector<ConvexFn>& fns) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const std::size_t n = fp.num_vars;
    MatrixXd Q = MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    VectorXd q = VectorXd::Zero(static_cast<Eigen::Index>(n));
    double c = 0.0;
    std::vector<VectorXd> rows;
    std::vector<double> rhs;
    for (std::size_t k = 0; k < fns.size(); ++k) {
        const auto& f = fns[k].as<Quadratic<double>>();
        const auto& vars = fp.terms[k].vars;
        const double w = fp.terms[k].weight;
        for (std::size_t a = 0; a < vars.size(); ++a) {
            q(static_cast<Eigen::Index>(vars[a])) += w * f.q[a];
            for (std::size_t b = 0; b < vars.size(); ++b)
                Q(static_cast<Eigen::Index>(vars[a]), static_cast<Eigen::Index>(vars[b])) += w * f.Q(a, b);
        }
        c += w * f.c;
        for (std::size_t r = 0; r < f.A.rows(); ++r) {
            VectorXd row = VectorXd::Zero(static_cast<Eigen::Index>(n));
            for (std::size_t a = 0; a < vars.size(); ++a) row(static_cast<Eigen::Index>(vars[a])) += f.A(r, a);
            rows.push_back(row);
            rhs.push_back(f.b[r]);
        }
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    const auto N = static_cast<Eigen::Index>(n);
    MatrixXd A(m, N);
    VectorXd b(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        A.row(r) = rows[static_cast<std::size_t>(r)].transpose();
        b(r) = rhs[static_cast<std::size_t>(r)];
    }
    if (m > 0) {
        VectorXd x0 = A.completeOrthogonalDecomposition().solve(b);
        if ((A * x0 - b).norm() > 1e-9 * (1.0 + b.norm()))
            throw Error(ErrorCode::Infeasible, "equality constraints of the flat program are inconsistent");
    }
    MatrixXd K = MatrixXd::Zero(N + m, N + m);
    K.topLeftCorner(N, N) = Q;
    if (m > 0) {
        K.topRightCorner(N, m) = A.transpose();
        K.bottomLeftCorner(m, N) = A;
    }
    VectorXd r(N + m);
    r.head(N) = -q;
    if (m > 0) r.tail(m) = b;
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(K);
    cod.setThreshold(1e-13);
    VectorXd z = cod.solve(r);
    VectorXd x = z.head(N);
    VectorXd grad = Q * x + q;
    if (m > 0) grad += A.transpose() * z.tail(m);
    double feas = m > 0 ? (A * x - b).norm() : 0.0;
    double scale = 1.0 + Q.cwiseAbs().maxCoeff() + q.cwiseAbs().maxCoeff();
    double residual = std::max(grad.norm(), feas);
    if (grad.norm() > 1e-8 * scale * (1.0 + x.norm())) throw Error(ErrorCode::Unbounded, "flat quadratic program is unbounded below");
    // Curvature must be nonnegative on the feasible directions.
    MatrixXd Z = m > 0 ? detail::svd_split(A).kernel : MatrixXd::Identity(N, N);
    if (Z.cols() > 0) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(Z.transpose() * Q * Z);
        if (es.eigenvalues().minCoeff() < -1e-10 * scale) throw Error(ErrorCode::Unbounded, "negative curvature in the flat program");
    }
    ExtensiveResult out;
    out.method = ExtensiveMethod::Kkt;
    out.point = detail::from_eigen(x);
    out.value = 0.5 * x.dot(Q * x) + q.dot(x) + c;
    out.kkt_residual = residual;
    out.iterations = 1;
    return out;
}

// ============================================================================
// Simplex path
// ============================================================================

ExtensiveResult solve_simplex(const FlatProgram& fp, const std::vector<ConvexFn>& fns, std::size_t max_iterations) {
    const std::size_t n = fp.num_vars;
    std::size_t extra = 0;
    std::vector<std::size_t> tau(fns.size(), 0);
    for (std::size_t k = 0; k < fns.size(); ++k)
        if (fns[k].is<Polyhedral<double>>() && fns[k].as<Polyhedral<double>>().G.rows() > 1) tau[k] = n + extra++;
    lp::Problem prob(n + extra);
    double constant = 0.0;
    for (std::size_t k = 0; k < fns.size(); ++k) {
        const auto& vars = fp.terms[k].vars;
        const double w = fp.terms[k].weight;
        auto scatter = [&](const Vec<double>& local) {
            Vec<double> row(n + extra, 0.0);
            for (std::size_t a = 0; a < vars.size(); ++a) row[vars[a]] += local[a];
            return row;
        };
        if (fns[k].is<Quadratic<double>>()) {
            const auto& f = fns[k].as<Quadratic<double>>();
            for (std::size_t a = 0; a < vars.size(); ++a) prob.c[vars[a]] += w * f.q[a];
            constant += w * f.c;
            for (std::size_t r = 0; r < f.A.rows(); ++r) prob.add_row(scatter(f.A.row(r)), lp::Sense::Eq, f.b[r]);
            continue;
        }
        const auto& f = fns[k].as<Polyhedral<double>>();
        for (std::size_t r = 0; r < f.C.rows(); ++r) prob.add_row(scatter(f.C.row(r)), lp::Sense::Le, f.e[r]);
        if (f.G.rows() == 1) {
            for (std::size_t a = 0; a < vars.size(); ++a) prob.c[vars[a]] += w * f.G(0, a);
            constant += w * f.beta[0];
            continue;
        }
        prob.c[tau[k]] = w;
        for (std::size_t j = 0; j < f.G.rows(); ++j) {
            auto row = scatter(f.G.row(j));
            row[tau[k]] = -1.0;
            prob.add_row(row, lp::Sense::Le, -f.beta[j]);
        }
    }
    auto res = lp::minimize(prob, max_iterations);
    if (res.status == lp::Status::Infeasible) throw Error(ErrorCode::Infeasible, "flat linear program is infeasible");
    if (res.status == lp::Status::Unbounded) throw Error(ErrorCode::Unbounded, "flat linear program is unbounded below");
    ExtensiveResult out;
    out.method = ExtensiveMethod::Simplex;
    out.point.assign(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(n));
    out.value = res.objective + constant;
    out.iterations = res.iterations;
    return out;
}

// ============================================================================
// Descent path
// ============================================================================

/// Minimizes phi over the real line starting from phi(0) finite; returns the step.
double line_min(const std::function<double(double)>& phi, double f0, double h0) {
    double h = h0;
    double fp = phi(h), fm = phi(-h);
    double dir;
    if (fp < f0)
        dir = 1.0;
    else if (fm < f0)
        dir = -1.0;
    else {
        // Minimum lies in [-h, h]; shrink only through golden section below.
        dir = 0.0;
    }
    double a, c;
    if (dir == 0.0) {
        a = -h;
        c = h;
    } else {
        double prev = 0.0, cur = h, fcur = dir > 0 ? fp : fm;
        double fprev = f0;
        while (true) {
            double next = 2.0 * cur;
            if (next > 1e15) throw Error(ErrorCode::Unbounded, "objective keeps decreasing along a line");
            double fnext = phi(dir * next);
            if (!(fnext < fcur)) {
                a = dir * prev;
                c = dir * next;
                break;
            }
            prev = cur;
            fprev = fcur;
            cur = next;
            fcur = fnext;
        }
        (void)fprev;
        if (a > c) std::swap(a, c);
    }
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = c - g * (c - a), x2 = a + g * (c - a);
    double f1 = phi(x1), f2 = phi(x2);
    for (int it = 0; it < 200 && c - a > 1e-13 * (1.0 + std::fabs(a) + std::fabs(c)); ++it) {
        if (f1 <= f2) {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - g * (c - a);
            f1 = phi(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (c - a);
            f2 = phi(x2);
        }
    }
    double best = f1 <= f2 ? x1 : x2;
    double fbest = std::min(f1, f2);
    return fbest < f0 ? best : 0.0;
}

ExtensiveResult solve_descent(const FlatProgram& fp, const ExtensiveOptions& opt) {
    const std::size_t n = fp.num_vars;
    Vec<double> x(n, 0.0);
    double f = fp.eval(x);
    if (std::isinf(f)) throw Error(ErrorCode::Infeasible, "descent needs the origin in the domain");
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> N01;
    std::vector<Vec<double>> dirs;
    for (std::size_t i = 0; i < n; ++i) {
        Vec<double> d(n, 0.0);
        d[i] = 1.0;
        dirs.push_back(d);
    }
    if (n <= 24)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                Vec<double> d(n, 0.0);
                d[i] = 1.0;
                d[j] = -1.0;
                dirs.push_back(d);
                d[j] = 1.0;
                dirs.push_back(d);
            }
    std::size_t it = 0;
    int quiet = 0;
    for (; it < opt.max_iterations; ++it) {
        const double before = f;
        auto sweep = dirs;
        for (std::size_t r = 0; r < n; ++r) {
            Vec<double> d(n);
            for (auto& v : d) v = N01(rng);
            sweep.push_back(d);
        }
        for (const auto& d : sweep) {
            auto phi = [&](double s) {
                Vec<double> y(x);
                for (std::size_t i = 0; i < n; ++i) y[i] += s * d[i];
                return fp.eval(y);
            };
            double scale = 0.0;
            for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(x[i]) * std::fabs(d[i]));
            double s = line_min(phi, f, std::max(1e-3, 0.1 * scale));
            if (s != 0.0) {
                double fs = phi(s);
                if (fs < f) {
                    for (std::size_t i = 0; i < n; ++i) x[i] += s * d[i];
                    f = fs;
                }
            }
        }
        if (before - f < opt.tol * (1.0 + std::fabs(f))) {
            if (++quiet >= 3) break;
        } else {
            quiet = 0;
        }
    }
    if (it >= opt.max_iterations) throw Error(ErrorCode::IterationLimit, "coordinate descent did not settle");
    ExtensiveResult out;
    out.method = ExtensiveMethod::Descent;
    out.point = x;
    out.value = f;
    out.iterations = it + 1;
    return out;
}

}  // namespace

ExtensiveResult solve_extensive(const FlatProgram& fp, const ExtensiveOptions& opt) {
    std::vector<ConvexFn> fns;
    bool quadratic = true, polyhedral = true;
    for (const auto& t : fp.terms) {
        auto f = direct_fn(t);
        if (!f) {
            quadratic = polyhedral = false;
            break;
        }
        if (f->is<Quadratic<double>>()) {
            if (!is_linear(f->as<Quadratic<double>>())) polyhedral = false;
        } else if (f->is<Polyhedral<double>>()) {
            quadratic = false;
        } else {
            quadratic = polyhedral = false;
            break;
        }
        fns.push_back(std::move(*f));
    }
    if (quadratic && !fns.empty()) {
        bool all_linear = true;
        for (const auto& f : fns) all_linear = all_linear && is_linear(f.as<Quadratic<double>>());
        if (!all_linear) return solve_kkt(fp, fns);
    }
    if (polyhedral) return solve_simplex(fp, fns, 200000);
    return solve_descent(fp, opt);
}

}  // namespace cdp
