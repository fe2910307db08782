#include "convexdp/lp.hpp"

#include <cmath>
#include <limits>

namespace cdp::lp {

Problem::Problem(std::size_t n_)
    : n(n_), c(n_, 0.0), A(0, n_), lower(n_, -inf()), upper(n_, inf()) {}

void Problem::add_row(const Vec<double>& a, Sense s, double rhs) {
    if (a.size() != n) throw Error(ErrorCode::DimensionMismatch, "LP row length");
    A.append_row(a);
    b.push_back(rhs);
    sense.push_back(s);
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-10;

struct Column {
    std::size_t var;
    double coef;
};

class Tableau {
public:
    Tableau(std::size_t m, std::size_t ncols) : m_(m), n_(ncols), t_(m + 1, ncols + 1), basis_(m, 0) {}

    double& at(std::size_t r, std::size_t c) { return t_(r, c); }
    double rhs(std::size_t r) const { return t_(r, n_); }
    std::size_t rows() const { return m_; }
    std::size_t cols() const { return n_; }
    std::vector<std::size_t>& basis() { return basis_; }

    void pivot(std::size_t r, std::size_t c) {
        double p = t_(r, c);
        for (std::size_t j = 0; j <= n_; ++j) t_(r, j) /= p;
        for (std::size_t i = 0; i <= m_; ++i) {
            if (i == r) continue;
            double f = t_(i, c);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= n_; ++j) t_(i, j) -= f * t_(r, j);
            t_(i, c) = 0.0;
        }
        basis_[r] = c;
    }

    /// Loads the objective row for costs `cost` (reduced against the basis).
    void set_objective(const Vec<double>& cost) {
        for (std::size_t j = 0; j <= n_; ++j) t_(m_, j) = j < n_ ? cost[j] : 0.0;
        for (std::size_t i = 0; i < m_; ++i) {
            double cb = cost[basis_[i]];
            if (cb == 0.0) continue;
            for (std::size_t j = 0; j <= n_; ++j) t_(m_, j) -= cb * t_(i, j);
        }
    }

    /// Returns false on unboundedness.
    bool run(const std::vector<bool>& allowed, std::size_t& iterations, std::size_t max_iterations) {
        for (;;) {
            std::size_t enter = n_;
            double scale = 1.0;
            for (std::size_t j = 0; j < n_; ++j) scale = std::max(scale, std::fabs(t_(m_, j)));
            for (std::size_t j = 0; j < n_; ++j)
                if (allowed[j] && t_(m_, j) < -kCostTol * scale) {
                    enter = j;
                    break;
                }
            if (enter == n_) return true;
            std::size_t leave = m_;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m_; ++i) {
                double a = t_(i, enter);
                if (a <= kPivotTol) continue;
                double ratio = std::max(0.0, t_(i, n_)) / a;
                double tie = 1e-12 * (1.0 + std::fabs(best));
                if (leave == m_ || ratio < best - tie) {
                    best = ratio;
                    leave = i;
                } else if (ratio <= best + tie && basis_[i] < basis_[leave]) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave == m_) return false;
            pivot(leave, enter);
            if (++iterations > max_iterations) throw Error(ErrorCode::IterationLimit, "simplex pivot limit reached");
        }
    }

    double objective_value() const { return -t_(m_, n_); }

    void drop_row(std::size_t r) {
        Mat<double> next(m_, n_ + 1);
        std::size_t k = 0;
        for (std::size_t i = 0; i <= m_; ++i) {
            if (i == r) continue;
            for (std::size_t j = 0; j <= n_; ++j) next(k, j) = t_(i, j);
            ++k;
        }
        t_ = std::move(next);
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(r));
        --m_;
    }

private:
    std::size_t m_;
    std::size_t n_;
    Mat<double> t_;
    std::vector<std::size_t> basis_;
};

}  // namespace

Result minimize(const Problem& p, std::size_t max_iterations) {
    // Substitute x_j = shift_j + sum coef * y.
    std::vector<std::vector<Column>> map(p.n);
    Vec<double> shift(p.n, 0.0);
    std::size_t ny = 0;
    struct UpperRow {
        std::size_t col;
        double bound;
    };
    std::vector<UpperRow> upper_rows;
    for (std::size_t j = 0; j < p.n; ++j) {
        bool lo = std::isfinite(p.lower[j]);
        bool hi = std::isfinite(p.upper[j]);
        if (lo && hi && p.upper[j] < p.lower[j]) return Result{Status::Infeasible, 0.0, {}, 0};
        if (lo) {
            shift[j] = p.lower[j];
            map[j].push_back({ny, 1.0});
            if (hi) upper_rows.push_back({ny, p.upper[j] - p.lower[j]});
            ++ny;
        } else if (hi) {
            shift[j] = p.upper[j];
            map[j].push_back({ny++, -1.0});
        } else {
            map[j].push_back({ny++, 1.0});
            map[j].push_back({ny++, -1.0});
        }
    }

    struct Row {
        Vec<double> a;
        Sense s;
        double rhs;
    };
    std::vector<Row> rows;
    rows.reserve(p.rows() + upper_rows.size());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        Row r{Vec<double>(ny, 0.0), p.sense[i], p.b[i]};
        for (std::size_t j = 0; j < p.n; ++j) {
            double a = p.A(i, j);
            if (a == 0.0) continue;
            r.rhs -= a * shift[j];
            for (const auto& col : map[j]) r.a[col.var] += a * col.coef;
        }
        rows.push_back(std::move(r));
    }
    for (const auto& u : upper_rows) {
        Row r{Vec<double>(ny, 0.0), Sense::Le, u.bound};
        r.a[u.col] = 1.0;
        rows.push_back(std::move(r));
    }
    for (auto& r : rows) {
        if (r.rhs < 0.0) {
            for (auto& v : r.a) v = -v;
            r.rhs = -r.rhs;
            if (r.s == Sense::Le)
                r.s = Sense::Ge;
            else if (r.s == Sense::Ge)
                r.s = Sense::Le;
        }
    }

    const std::size_t m = rows.size();
    std::size_t nslack = 0, nart = 0;
    for (const auto& r : rows) {
        if (r.s != Sense::Eq) ++nslack;
        if (r.s != Sense::Le) ++nart;
    }
    const std::size_t ncols = ny + nslack + nart;
    Tableau tab(m, ncols);
    std::vector<bool> is_art(ncols, false);
    std::size_t slack = ny, art = ny + nslack;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& r = rows[i];
        for (std::size_t j = 0; j < ny; ++j) tab.at(i, j) = r.a[j];
        tab.at(i, ncols) = r.rhs;
        if (r.s == Sense::Le) {
            tab.at(i, slack) = 1.0;
            tab.basis()[i] = slack++;
        } else {
            if (r.s == Sense::Ge) tab.at(i, slack++) = -1.0;
            tab.at(i, art) = 1.0;
            is_art[art] = true;
            tab.basis()[i] = art++;
        }
    }

    Result res;
    std::vector<bool> allowed(ncols, true);
    if (nart > 0) {
        Vec<double> cost(ncols, 0.0);
        for (std::size_t j = 0; j < ncols; ++j)
            if (is_art[j]) cost[j] = 1.0;
        tab.set_objective(cost);
        tab.run(allowed, res.iterations, max_iterations);
        double scale = 1.0;
        for (const auto& r : rows) scale = std::max(scale, std::fabs(r.rhs));
        if (tab.objective_value() > 1e-8 * scale) {
            res.status = Status::Infeasible;
            return res;
        }
        for (std::size_t i = 0; i < tab.rows();) {
            if (!is_art[tab.basis()[i]]) {
                ++i;
                continue;
            }
            std::size_t col = ncols;
            double best = kPivotTol;
            for (std::size_t j = 0; j < ncols; ++j)
                if (!is_art[j] && std::fabs(tab.at(i, j)) > best) {
                    best = std::fabs(tab.at(i, j));
                    col = j;
                }
            if (col == ncols) {
                tab.drop_row(i);
            } else {
                tab.pivot(i, col);
                ++i;
            }
        }
        for (std::size_t j = 0; j < ncols; ++j)
            if (is_art[j]) allowed[j] = false;
    }

    Vec<double> cost(ncols, 0.0);
    for (std::size_t j = 0; j < p.n; ++j) {
        for (const auto& col : map[j]) cost[col.var] += p.c[j] * col.coef;
    }
    tab.set_objective(cost);
    if (!tab.run(allowed, res.iterations, max_iterations)) {
        res.status = Status::Unbounded;
        return res;
    }
    Vec<double> y(ncols, 0.0);
    for (std::size_t i = 0; i < tab.rows(); ++i) y[tab.basis()[i]] = tab.rhs(i);
    res.x.assign(p.n, 0.0);
    for (std::size_t j = 0; j < p.n; ++j) {
        res.x[j] = shift[j];
        for (const auto& col : map[j]) res.x[j] += col.coef * y[col.var];
    }
    res.objective = 0.0;
    for (std::size_t j = 0; j < p.n; ++j) res.objective += p.c[j] * res.x[j];
    res.status = Status::Optimal;
    return res;
}

}  // namespace cdp::lp
