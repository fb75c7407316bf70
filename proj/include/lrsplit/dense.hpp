#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace lrsplit {

using Index = Eigen::Index;

template <class Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using RealOf = typename Eigen::NumTraits<Scalar>::Real;

template <class Scalar>
using RealVector = Eigen::Matrix<RealOf<Scalar>, Eigen::Dynamic, 1>;

/// Frobenius distance between two equally shaped dense matrices.
template <class Scalar>
RealOf<Scalar> frob_distance(const DenseMatrix<Scalar>& X, const DenseMatrix<Scalar>& Y)
{
    if (X.rows() != Y.rows() || X.cols() != Y.cols())
        throw std::invalid_argument("frob_distance: shape mismatch");
    return (X - Y).norm();
}

/// Orthonormal basis of the numerical column span of M.
///
/// Column-pivoted QR; pivot columns whose residual against the previously
/// accepted ones is <= tol * ||M||_F are dropped, so the returned matrix has
/// between 1 and min(rows, cols) columns. An all-zero input has no span to
/// represent and is rejected.
template <class Scalar>
DenseMatrix<Scalar> orth(const DenseMatrix<Scalar>& M, RealOf<Scalar> tol = RealOf<Scalar>(1e-12))
{
    if (M.rows() == 0 || M.cols() == 0)
        throw std::invalid_argument("orth: empty input");
    if (!M.allFinite())
        throw std::invalid_argument("orth: non-finite input");

    const RealOf<Scalar> scale = M.norm();
    if (scale == RealOf<Scalar>(0))
        throw std::runtime_error("orth: degenerate basis");

    Eigen::ColPivHouseholderQR<DenseMatrix<Scalar>> qr(M);
    const auto rdiag = qr.matrixQR().diagonal();
    const RealOf<Scalar> cutoff = tol * scale;

    const Index kmax = std::min(M.rows(), M.cols());
    Index keep = 0;
    while (keep < kmax && std::abs(rdiag(keep)) > cutoff)
        ++keep;
    if (keep == 0)
        throw std::runtime_error("orth: degenerate basis");

    return qr.householderQ() * DenseMatrix<Scalar>::Identity(M.rows(), keep);
}

template <class Scalar>
struct SvdTriplet {
    DenseMatrix<Scalar> U;     // rows x k, orthonormal columns
    RealVector<Scalar> sigma;  // k, descending, nonnegative
    DenseMatrix<Scalar> V;     // cols x k, orthonormal columns
};

/// Thin SVD with singular values sorted descending, k = min(rows, cols).
template <class Scalar>
SvdTriplet<Scalar> svd_full(const DenseMatrix<Scalar>& M)
{
    if (M.rows() == 0 || M.cols() == 0)
        throw std::invalid_argument("svd_full: empty input");
    if (!M.allFinite())
        throw std::invalid_argument("svd_full: non-finite input");

    SvdTriplet<Scalar> out;
    // Jacobi is the accuracy workhorse for small blocks; divide-and-conquer
    // takes over once the cross-over cost favors it.
    if (std::max(M.rows(), M.cols()) <= 16) {
        Eigen::JacobiSVD<DenseMatrix<Scalar>> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        out.U = svd.matrixU();
        out.sigma = svd.singularValues();
        out.V = svd.matrixV();
    } else {
        Eigen::BDCSVD<DenseMatrix<Scalar>> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        out.U = svd.matrixU();
        out.sigma = svd.singularValues();
        out.V = svd.matrixV();
    }
    return out;
}

/// Dense matrix exponential (scaling and squaring).
template <class Scalar>
DenseMatrix<Scalar> dense_expm(const DenseMatrix<Scalar>& A)
{
    if (A.rows() != A.cols())
        throw std::invalid_argument("dense_expm: matrix must be square");
    if (!A.allFinite())
        throw std::invalid_argument("dense_expm: non-finite input");
    return A.exp();
}

/// ||Q^* Q - I||_F, the departure of Q's columns from orthonormality.
template <class Scalar>
RealOf<Scalar> orthonormality_defect(const DenseMatrix<Scalar>& Q)
{
    return (Q.adjoint() * Q - DenseMatrix<Scalar>::Identity(Q.cols(), Q.cols())).norm();
}

template <class Scalar>
DenseMatrix<Scalar> horizontal_concat(const DenseMatrix<Scalar>& A, const DenseMatrix<Scalar>& B)
{
    if (A.rows() != B.rows())
        throw std::invalid_argument("horizontal_concat: row mismatch");
    DenseMatrix<Scalar> H(A.rows(), A.cols() + B.cols());
    H << A, B;
    return H;
}

template <class Scalar>
struct ThinQR {
    DenseMatrix<Scalar> Q;  // rows x k, orthonormal columns
    DenseMatrix<Scalar> R;  // k x cols, upper trapezoidal
};

/// Unpivoted thin QR, k = min(rows, cols). The Q factor has exactly
/// orthonormal columns even when the input is rank deficient.
template <class Scalar>
ThinQR<Scalar> thin_qr(const DenseMatrix<Scalar>& M)
{
    if (M.rows() == 0 || M.cols() == 0)
        throw std::invalid_argument("thin_qr: empty input");
    Eigen::HouseholderQR<DenseMatrix<Scalar>> qr(M);
    const Index k = std::min(M.rows(), M.cols());
    ThinQR<Scalar> out;
    out.Q = qr.householderQ() * DenseMatrix<Scalar>::Identity(M.rows(), k);
    out.R = qr.matrixQR().topRows(k);
    for (Index j = 0; j < out.R.cols(); ++j)
        for (Index i = j + 1; i < out.R.rows(); ++i)
            out.R(i, j) = Scalar(0);
    return out;
}

}  // namespace lrsplit
