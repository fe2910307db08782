#pragma once

#include <Eigen/Dense>

#include "convexdp/linalg.hpp"

namespace cdp::detail {

inline Eigen::MatrixXd to_eigen(const Mat<double>& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    return out;
}

inline Eigen::VectorXd to_eigen(const Vec<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Mat<double> from_eigen(const Eigen::MatrixXd& m) {
    Mat<double> out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
    return out;
}

inline Vec<double> from_eigen(const Eigen::VectorXd& v) { return Vec<double>(v.data(), v.data() + v.size()); }

/// Rank threshold shared by every decomposition in the library.
inline double rank_tol(double largest) { return 1e-10 * std::max(1.0, largest); }

struct SymmetricSplit {
    Eigen::MatrixXd pinv;
    Eigen::MatrixXd kernel;  ///< orthonormal columns
};

/// Pseudoinverse and kernel of a symmetric PSD matrix.
inline SymmetricSplit symmetric_split(const Eigen::MatrixXd& H) {
    const Eigen::Index k = H.rows();
    SymmetricSplit out{Eigen::MatrixXd::Zero(k, k), Eigen::MatrixXd(k, 0)};
    if (k == 0) return out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    const auto& ev = es.eigenvalues();
    double tol = rank_tol(ev.cwiseAbs().maxCoeff());
    std::vector<Eigen::Index> null_idx;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::fabs(ev(i)) > tol) {
            out.pinv += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose() / ev(i);
        } else {
            null_idx.push_back(i);
        }
    }
    out.kernel.resize(k, static_cast<Eigen::Index>(null_idx.size()));
    for (std::size_t j = 0; j < null_idx.size(); ++j) out.kernel.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(null_idx[j]);
    return out;
}

struct SvdSplit {
    Eigen::MatrixXd pinv;
    Eigen::MatrixXd range;       ///< orthonormal basis of the column space
    Eigen::MatrixXd left_null;   ///< orthonormal basis of its complement
    Eigen::MatrixXd row_space;
    Eigen::MatrixXd kernel;
    Eigen::Index rank = 0;
};

inline SvdSplit svd_split(const Eigen::MatrixXd& A) {
    const Eigen::Index m = A.rows(), n = A.cols();
    SvdSplit out;
    if (m == 0 || n == 0) {
        out.pinv = Eigen::MatrixXd::Zero(n, m);
        out.range = Eigen::MatrixXd(m, 0);
        out.left_null = Eigen::MatrixXd::Identity(m, m);
        out.row_space = Eigen::MatrixXd(n, 0);
        out.kernel = Eigen::MatrixXd::Identity(n, n);
        return out;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    double tol = rank_tol(s.size() ? s(0) : 0.0);
    Eigen::Index r = 0;
    while (r < s.size() && s(r) > tol) ++r;
    out.rank = r;
    const auto& U = svd.matrixU();
    const auto& V = svd.matrixV();
    out.range = U.leftCols(r);
    out.left_null = U.rightCols(m - r);
    out.row_space = V.leftCols(r);
    out.kernel = V.rightCols(n - r);
    out.pinv = V.leftCols(r) * s.head(r).cwiseInverse().asDiagonal() * U.leftCols(r).transpose();
    return out;
}

}  // namespace cdp::detail
