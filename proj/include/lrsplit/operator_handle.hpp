#pragma once

#include "lrsplit/dense.hpp"

#include <map>
#include <mutex>
#include <stdexcept>

namespace lrsplit {

/// Square linear operator with an attached scalar factor and a memoized dense
/// exponential. Storage is either a full dense matrix or the (diagonal,
/// off-diagonal) pair of a symmetric tridiagonal matrix.
///
/// exponential(t) computes e^{t * scale * A} once per distinct t and hands out
/// the cached copy afterwards; the memo is guarded by a mutex so a handle can
/// be shared across concurrent sweep workers. Copies share the operator data
/// but start with an empty memo.
template <class Scalar>
class OperatorHandle {
public:
    using Matrix = DenseMatrix<Scalar>;
    using Vector = DenseVector<Scalar>;
    using Real = RealOf<Scalar>;

    static OperatorHandle dense(Matrix A, Scalar scale = Scalar(1))
    {
        if (A.rows() != A.cols())
            throw std::invalid_argument("OperatorHandle: matrix must be square");
        if (A.rows() < 1)
            throw std::invalid_argument("OperatorHandle: empty operator");
        if (!A.allFinite())
            throw std::invalid_argument("OperatorHandle: non-finite entries");
        OperatorHandle h;
        h.m_ = A.rows();
        h.dense_ = std::move(A);
        h.scale_ = scale;
        h.symmetric_ = (h.dense_ - h.dense_.adjoint()).norm() == Real(0);
        h.zero_ = scale == Scalar(0) || h.dense_.isZero(Real(0));
        return h;
    }

    static OperatorHandle tridiagonal(Vector diag, Vector off, Scalar scale = Scalar(1))
    {
        if (diag.size() < 1 || off.size() != diag.size() - 1)
            throw std::invalid_argument("OperatorHandle: tridiagonal bands must have sizes m and m-1");
        if (!diag.allFinite() || !(off.size() == 0 || off.allFinite()))
            throw std::invalid_argument("OperatorHandle: non-finite entries");
        OperatorHandle h;
        h.m_ = diag.size();
        h.diag_ = std::move(diag);
        h.off_ = std::move(off);
        h.scale_ = scale;
        h.symmetric_ = true;  // one band stored, mirrored on both sides
        h.zero_ = scale == Scalar(0) || (h.diag_.isZero(Real(0)) && (h.off_.size() == 0 || h.off_.isZero(Real(0))));
        return h;
    }

    static OperatorHandle zero(Index m)
    {
        return tridiagonal(Vector::Zero(m), Vector::Zero(m > 0 ? m - 1 : 0));
    }

    OperatorHandle(const OperatorHandle& o)
        : m_(o.m_), dense_(o.dense_), diag_(o.diag_), off_(o.off_),
          scale_(o.scale_), symmetric_(o.symmetric_), zero_(o.zero_) {}
    OperatorHandle& operator=(const OperatorHandle& o)
    {
        if (this != &o) {
            m_ = o.m_; dense_ = o.dense_; diag_ = o.diag_; off_ = o.off_;
            scale_ = o.scale_; symmetric_ = o.symmetric_; zero_ = o.zero_;
            std::lock_guard<std::mutex> lock(cache_mutex_);
            exp_cache_.clear();
        }
        return *this;
    }

    Index rows() const { return m_; }
    Scalar scale() const { return scale_; }
    bool is_symmetric() const { return symmetric_; }
    bool is_zero() const { return zero_; }
    bool is_tridiagonal() const { return dense_.size() == 0; }

    /// Materializes scale * A.
    Matrix to_dense() const
    {
        if (!is_tridiagonal())
            return scale_ * dense_;
        Matrix A = Matrix::Zero(m_, m_);
        A.diagonal() = diag_;
        if (m_ > 1) {
            A.template diagonal<1>() = off_;
            A.template diagonal<-1>() = off_;
        }
        return scale_ * A;
    }

    /// (scale * A) * X
    Matrix apply(const Matrix& X) const
    {
        if (X.rows() != m_)
            throw std::invalid_argument("OperatorHandle::apply: row mismatch");
        if (!is_tridiagonal())
            return scale_ * (dense_ * X);
        Matrix Y = diag_.asDiagonal() * X;
        if (m_ > 1) {
            Y.topRows(m_ - 1) += off_.asDiagonal() * X.bottomRows(m_ - 1);
            Y.bottomRows(m_ - 1) += off_.asDiagonal() * X.topRows(m_ - 1);
        }
        return scale_ * Y;
    }

    /// X * (scale * A)^*
    Matrix apply_adjoint_right(const Matrix& X) const
    {
        if (X.cols() != m_)
            throw std::invalid_argument("OperatorHandle::apply_adjoint_right: column mismatch");
        return apply(X.adjoint()).adjoint();
    }

    /// Cached e^{t * scale * A}.
    const Matrix& exponential(Real t) const
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = exp_cache_.find(t);
        if (it == exp_cache_.end()) {
            Matrix E;
            if (zero_ || t == Real(0))
                E = Matrix::Identity(m_, m_);
            else
                E = dense_expm<Scalar>((Scalar(t) * to_dense()).eval());
            it = exp_cache_.emplace(t, std::move(E)).first;
        }
        return it->second;  // map nodes are stable; entries are never erased
    }

private:
    OperatorHandle() = default;

    Index m_ = 0;
    Matrix dense_;        // empty when tridiagonal
    Vector diag_, off_;   // empty when dense
    Scalar scale_ = Scalar(1);
    bool symmetric_ = false;
    bool zero_ = false;

    mutable std::mutex cache_mutex_;
    mutable std::map<Real, Matrix> exp_cache_;
};

/// e^{t * scale * A} * M through the handle's exponential memo.
template <class Scalar>
DenseMatrix<Scalar> expm_action(const OperatorHandle<Scalar>& A, RealOf<Scalar> t, const DenseMatrix<Scalar>& M)
{
    if (M.rows() != A.rows())
        throw std::invalid_argument("expm_action: row mismatch");
    return A.exponential(t) * M;
}

}  // namespace lrsplit
