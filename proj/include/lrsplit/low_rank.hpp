#pragma once

#include "lrsplit/dense.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lrsplit {

/// Factored representation Y = U S V^* with orthonormal U (m x r) and
/// V (n x r) and a general square core S (r x r). The rank r is the core
/// size, 1 <= r <= min(m, n); zero matrices are carried as rank one with a
/// zero core rather than as an empty factor.
template <class Scalar>
struct LowRankFactor {
    DenseMatrix<Scalar> U;
    DenseMatrix<Scalar> S;
    DenseMatrix<Scalar> V;

    Index rows() const { return U.rows(); }
    Index cols() const { return V.rows(); }
    Index rank() const { return S.rows(); }

    DenseMatrix<Scalar> dense() const { return U * S * V.adjoint(); }

    /// Frobenius norm, valid under the orthonormal-basis invariant.
    RealOf<Scalar> norm() const { return S.norm(); }
};

/// Largest orthonormality defect of the two bases.
template <class Scalar>
RealOf<Scalar> factor_defect(const LowRankFactor<Scalar>& Y)
{
    return std::max(orthonormality_defect<Scalar>(Y.U), orthonormality_defect<Scalar>(Y.V));
}

/// Validates shapes and the orthonormality invariant (defect <= tol).
template <class Scalar>
void check_factor(const LowRankFactor<Scalar>& Y, RealOf<Scalar> tol = RealOf<Scalar>(1e-10))
{
    const Index r = Y.S.rows();
    if (r < 1)
        throw std::invalid_argument("LowRankFactor: rank must be at least one");
    if (Y.S.cols() != r)
        throw std::invalid_argument("LowRankFactor: core must be square");
    if (Y.U.cols() != r || Y.V.cols() != r)
        throw std::invalid_argument("LowRankFactor: basis column counts must equal the core size");
    if (r > Y.U.rows() || r > Y.V.rows())
        throw std::invalid_argument("LowRankFactor: rank exceeds the ambient dimension");
    if (!Y.U.allFinite() || !Y.S.allFinite() || !Y.V.allFinite())
        throw std::invalid_argument("LowRankFactor: non-finite entries");
    if (factor_defect(Y) > tol)
        throw std::runtime_error("LowRankFactor: bases are not orthonormal");
}

/// Rank-one representation of the m x n zero matrix.
template <class Scalar>
LowRankFactor<Scalar> zero_factor(Index m, Index n)
{
    if (m < 1 || n < 1)
        throw std::invalid_argument("zero_factor: dimensions must be positive");
    LowRankFactor<Scalar> Y;
    Y.U = DenseMatrix<Scalar>::Identity(m, 1);
    Y.S = DenseMatrix<Scalar>::Zero(1, 1);
    Y.V = DenseMatrix<Scalar>::Identity(n, 1);
    return Y;
}

/// Square shorthand for zero_factor(m, m).
template <class Scalar>
LowRankFactor<Scalar> zero_factor(Index m)
{
    return zero_factor<Scalar>(m, m);
}

/// How a factored state is compressed after each step.
struct TruncationMode {
    enum class Kind { fixed_rank, adaptive };

    Kind kind = Kind::fixed_rank;
    Index r_target = 1;  // fixed_rank: keep min(r_target, current rank)
    double theta = 0;    // adaptive: absolute Frobenius tail threshold

    static TruncationMode fixed(Index r)
    {
        if (r < 1)
            throw std::invalid_argument("TruncationMode: target rank must be at least one");
        TruncationMode m;
        m.kind = Kind::fixed_rank;
        m.r_target = r;
        return m;
    }

    static TruncationMode adaptive(double theta)
    {
        if (!(theta >= 0))
            throw std::invalid_argument("TruncationMode: theta must be nonnegative");
        TruncationMode m;
        m.kind = Kind::adaptive;
        m.theta = theta;
        return m;
    }
};

template <class Scalar>
struct Truncated {
    LowRankFactor<Scalar> factor;
    RealOf<Scalar> tail_norm = RealOf<Scalar>(0);  // exact Frobenius distance to the input
    bool rank_floor = false;  // adaptive mode kept rank one although every sigma fit under theta
};

/// Compresses a factor by an SVD of its small core.
///
/// The kept rank is min(r_target, r) in fixed mode; in adaptive mode it is the
/// smallest r1 >= 1 whose discarded tail satisfies sqrt(sum_{j>r1} sigma_j^2)
/// <= theta. When even the full spectrum fits under theta the factor is still
/// returned at rank one (never empty) and the floor flag is set. The
/// densified result differs from the input by exactly tail_norm.
template <class Scalar>
Truncated<Scalar> svd_truncate(const LowRankFactor<Scalar>& Y, const TruncationMode& mode)
{
    const auto core = svd_full<Scalar>(Y.S);
    const Index rbar = core.sigma.size();

    // suffix_sq(j) = sum of sigma_i^2 for i >= j, accumulated smallest-first
    RealVector<Scalar> suffix_sq(rbar + 1);
    suffix_sq(rbar) = RealOf<Scalar>(0);
    for (Index j = rbar - 1; j >= 0; --j)
        suffix_sq(j) = suffix_sq(j + 1) + core.sigma(j) * core.sigma(j);

    Index r1 = rbar;
    bool floor = false;
    if (mode.kind == TruncationMode::Kind::fixed_rank) {
        r1 = std::min(mode.r_target, rbar);
    } else {
        using std::sqrt;
        if (sqrt(suffix_sq(0)) <= mode.theta) {
            r1 = 1;
            floor = true;
        } else {
            r1 = rbar;
            for (Index r = 1; r < rbar; ++r) {
                if (sqrt(suffix_sq(r)) <= mode.theta) {
                    r1 = r;
                    break;
                }
            }
        }
    }

    Truncated<Scalar> out;
    out.tail_norm = std::sqrt(suffix_sq(r1));
    out.rank_floor = floor;
    out.factor.U = Y.U * core.U.leftCols(r1);
    out.factor.V = Y.V * core.V.leftCols(r1);
    out.factor.S = core.sigma.head(r1).template cast<Scalar>().asDiagonal();
    return out;
}

/// Factored representation of A + B at rank rank(A) + rank(B).
///
/// The stacked bases are re-orthonormalized by thin QR (no column dropping,
/// so the core stays square even for strongly overlapping spans) and both
/// triangular factors are folded into the new core.
template <class Scalar>
LowRankFactor<Scalar> factored_sum(const LowRankFactor<Scalar>& A, const LowRankFactor<Scalar>& B)
{
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw std::invalid_argument("factored_sum: shape mismatch");

    const Index ra = A.rank(), rb = B.rank();
    DenseMatrix<Scalar> blk = DenseMatrix<Scalar>::Zero(ra + rb, ra + rb);
    blk.topLeftCorner(ra, ra) = A.S;
    blk.bottomRightCorner(rb, rb) = B.S;

    const auto qu = thin_qr(horizontal_concat<Scalar>(A.U, B.U));
    const auto qv = thin_qr(horizontal_concat<Scalar>(A.V, B.V));

    LowRankFactor<Scalar> out;
    out.U = qu.Q;
    out.V = qv.Q;
    out.S = qu.R * blk * qv.R.adjoint();
    return out;
}

/// Frobenius distance between two factored states without densifying.
///
/// The difference is [U1 U2] blkdiag(S1, -S2) [V1 V2]^*; thin QR of the two
/// stacks reduces the norm to that of a small core, which is backward stable
/// even when the factors nearly coincide.
template <class Scalar>
RealOf<Scalar> factored_distance(const LowRankFactor<Scalar>& A, const LowRankFactor<Scalar>& B)
{
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw std::invalid_argument("factored_distance: shape mismatch");

    const Index ra = A.rank(), rb = B.rank();
    DenseMatrix<Scalar> blk = DenseMatrix<Scalar>::Zero(ra + rb, ra + rb);
    blk.topLeftCorner(ra, ra) = A.S;
    blk.bottomRightCorner(rb, rb) = -B.S;

    const auto qu = thin_qr(horizontal_concat<Scalar>(A.U, B.U));
    const auto qv = thin_qr(horizontal_concat<Scalar>(A.V, B.V));
    return (qu.R * blk * qv.R.adjoint()).norm();
}

/// Frobenius distance between a factored state and a dense matrix.
template <class Scalar>
RealOf<Scalar> factored_distance(const LowRankFactor<Scalar>& A, const DenseMatrix<Scalar>& X)
{
    if (A.rows() != X.rows() || A.cols() != X.cols())
        throw std::invalid_argument("factored_distance: shape mismatch");
    return (A.dense() - X).norm();
}

/// Deterministically extends Q's columns to `count` orthonormal columns by
/// orthogonalizing canonical unit vectors against the accepted ones.
template <class Scalar>
DenseMatrix<Scalar> complete_basis(const DenseMatrix<Scalar>& Q, Index count)
{
    const Index m = Q.rows();
    if (count > m)
        throw std::invalid_argument("complete_basis: more columns than rows");
    DenseMatrix<Scalar> out(m, count);
    out.leftCols(Q.cols()) = Q;
    Index have = Q.cols();
    for (Index j = 0; j < m && have < count; ++j) {
        DenseVector<Scalar> v = DenseVector<Scalar>::Unit(m, j);
        // two rounds of classical Gram-Schmidt keep the defect at eps level
        v -= out.leftCols(have) * (out.leftCols(have).adjoint() * v).eval();
        v -= out.leftCols(have) * (out.leftCols(have).adjoint() * v).eval();
        const RealOf<Scalar> nv = v.norm();
        if (nv > RealOf<Scalar>(1e-8)) {
            out.col(have) = v / Scalar(nv);
            ++have;
        }
    }
    if (have < count)
        throw std::runtime_error("complete_basis: could not extend basis");
    return out;
}

/// Pads a factor to a larger rank with extra orthonormal directions carrying
/// singular value sigma_fill (zero by default). Represents the same matrix
/// when sigma_fill = 0.
template <class Scalar>
LowRankFactor<Scalar> pad_rank(const LowRankFactor<Scalar>& Y, Index r, RealOf<Scalar> sigma_fill = RealOf<Scalar>(0))
{
    if (r <= Y.rank())
        return Y;
    if (r > std::min(Y.rows(), Y.cols()))
        throw std::invalid_argument("pad_rank: rank exceeds the ambient dimension");
    LowRankFactor<Scalar> out;
    out.U = complete_basis<Scalar>(Y.U, r);
    out.V = complete_basis<Scalar>(Y.V, r);
    out.S = DenseMatrix<Scalar>::Zero(r, r);
    out.S.topLeftCorner(Y.rank(), Y.rank()) = Y.S;
    for (Index j = Y.rank(); j < r; ++j)
        out.S(j, j) = Scalar(sigma_fill);
    return out;
}

}  // namespace lrsplit
