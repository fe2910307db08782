#pragma once

#include <cstddef>
#include <vector>

#include "convexdp/linalg.hpp"

namespace cdp::lp {

enum class Sense { Le, Eq, Ge };
enum class Status { Optimal, Infeasible, Unbounded };

/// min c·x subject to row constraints and simple bounds (default: free).
struct Problem {
    explicit Problem(std::size_t n = 0);

    std::size_t n;
    Vec<double> c;
    Mat<double> A;
    Vec<double> b;
    std::vector<Sense> sense;
    Vec<double> lower;
    Vec<double> upper;

    void add_row(const Vec<double>& a, Sense s, double rhs);
    [[nodiscard]] std::size_t rows() const noexcept { return b.size(); }
};

struct Result {
    Status status = Status::Infeasible;
    double objective = 0.0;
    Vec<double> x;
    std::size_t iterations = 0;
};

/// Two-phase dense tableau simplex with Bland's rule. Throws IterationLimit
/// if the pivot count exceeds max_iterations.
[[nodiscard]] Result minimize(const Problem& p, std::size_t max_iterations = 200000);

}  // namespace cdp::lp
