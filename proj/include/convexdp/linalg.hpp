#pragma once

// Small dense containers shared by the floating-point and exact-rational
// code paths. Heavy factorizations live in the .cpp files and go through
// Eigen; everything here is plain arithmetic so it works for any field.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "convexdp/error.hpp"

namespace cdp {

using Rational = boost::multiprecision::number<boost::multiprecision::cpp_rational_backend,
                                               boost::multiprecision::et_off>;

template <class S>
using Vec = std::vector<S>;

template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
    static constexpr bool exact = false;
    static double tol() { return 1e-9; }
    static double to_double(double v) { return v; }
    static double abs(double v) { return std::fabs(v); }
};

template <>
struct ScalarTraits<Rational> {
    static constexpr bool exact = true;
    static Rational tol() { return Rational(0); }
    static double to_double(const Rational& v) { return v.convert_to<double>(); }
    static Rational abs(const Rational& v) { return v < 0 ? Rational(-v) : v; }
};

/// Row-major dense matrix.
template <class S>
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, const S& fill = S(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::initializer_list<std::initializer_list<S>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged matrix literal");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1);
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    S& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const S& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    [[nodiscard]] Vec<S> row(std::size_t r) const {
        return Vec<S>(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                      data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_));
    }
    void set_row(std::size_t r, const Vec<S>& v) {
        for (std::size_t c = 0; c < cols_; ++c) (*this)(r, c) = v[c];
    }
    void append_row(const Vec<S>& v) {
        if (rows_ == 0 && cols_ == 0) cols_ = v.size();
        if (v.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "row length");
        data_.insert(data_.end(), v.begin(), v.end());
        ++rows_;
    }

    [[nodiscard]] const std::vector<S>& data() const noexcept { return data_; }
    [[nodiscard]] std::vector<S>& data() noexcept { return data_; }

    template <class T>
    [[nodiscard]] Mat<T> cast() const {
        Mat<T> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = T(data_[i]);
        return out;
    }

    bool operator==(const Mat&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<S> data_;
};

// ============================================================================
// Elementwise helpers
// ============================================================================

template <class S>
[[nodiscard]] S dot(const Vec<S>& a, const Vec<S>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "dot product length");
    S s(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

template <class S>
[[nodiscard]] Vec<S> matvec(const Mat<S>& m, const Vec<S>& x) {
    if (m.cols() != x.size()) throw Error(ErrorCode::DimensionMismatch, "matrix-vector product");
    Vec<S> y(m.rows(), S(0));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) y[r] += m(r, c) * x[c];
    return y;
}

template <class S>
[[nodiscard]] Vec<S> matvec_t(const Mat<S>& m, const Vec<S>& x) {
    if (m.rows() != x.size()) throw Error(ErrorCode::DimensionMismatch, "transposed matrix-vector product");
    Vec<S> y(m.cols(), S(0));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) y[c] += m(r, c) * x[r];
    return y;
}

template <class S>
[[nodiscard]] Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
    if (a.cols() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matrix product");
    Mat<S> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const S& aik = a(i, k);
            if (aik == S(0)) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

template <class S>
[[nodiscard]] Mat<S> transpose(const Mat<S>& a) {
    Mat<S> out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

template <class S>
[[nodiscard]] Mat<S> add(const Mat<S>& a, const Mat<S>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::DimensionMismatch, "matrix sum");
    Mat<S> out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

template <class S>
[[nodiscard]] Mat<S> scaled(const Mat<S>& a, const S& alpha) {
    Mat<S> out = a;
    for (auto& v : out.data()) v *= alpha;
    return out;
}

template <class S>
[[nodiscard]] Vec<S> add(const Vec<S>& a, const Vec<S>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "vector sum");
    Vec<S> out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
    return out;
}

template <class S>
[[nodiscard]] Vec<S> sub(const Vec<S>& a, const Vec<S>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "vector difference");
    Vec<S> out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
    return out;
}

template <class S>
[[nodiscard]] Vec<S> scaled(const Vec<S>& a, const S& alpha) {
    Vec<S> out = a;
    for (auto& v : out) v *= alpha;
    return out;
}

template <class S>
[[nodiscard]] Vec<S> concat(const Vec<S>& a, const Vec<S>& b) {
    Vec<S> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

template <class S>
[[nodiscard]] Mat<S> vstack(const Mat<S>& a, const Mat<S>& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    if (a.cols() != b.cols()) throw Error(ErrorCode::DimensionMismatch, "vertical stack");
    Mat<S> out(a.rows() + b.rows(), a.cols());
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.data().size()));
    return out;
}

/// Copy of `src` placed at (r0, c0) of `dst`.
template <class S>
void set_block(Mat<S>& dst, std::size_t r0, std::size_t c0, const Mat<S>& src) {
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst(r0 + i, c0 + j) = src(i, j);
}

template <class S>
[[nodiscard]] Mat<S> block(const Mat<S>& src, std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols) {
    Mat<S> out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out(i, j) = src(r0 + i, c0 + j);
    return out;
}

[[nodiscard]] inline double inf() { return std::numeric_limits<double>::infinity(); }

[[nodiscard]] inline double max_abs(const Vec<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

[[nodiscard]] inline double max_abs(const Mat<double>& m) { return max_abs(m.data()); }

}  // namespace cdp
