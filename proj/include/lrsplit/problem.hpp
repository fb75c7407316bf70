#pragma once

#include "lrsplit/low_rank.hpp"
#include "lrsplit/operator_handle.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace lrsplit {

/// Right-hand-side evaluator for the non-stiff term: (t, Y) -> G(t, Y), dense
/// in and dense out.
template <class Scalar>
using MatrixRhs = std::function<DenseMatrix<Scalar>(double, const DenseMatrix<Scalar>&)>;

/// One instance of the matrix differential equation
///     X'(t) = A X + X A^* + G(t, X),   X(t0) = X0,
/// carried in the factored form the integrators consume. The operator handle
/// is shared and immutable; its exponential memo makes it safe to reuse
/// across runs and threads.
template <class Scalar>
struct Problem {
    std::shared_ptr<const OperatorHandle<Scalar>> A;
    MatrixRhs<Scalar> G;
    bool constant_source = false;   // G does not depend on t or X
    bool symmetric = false;         // A, G and X0 all symmetric
    LowRankFactor<Scalar> X0;
    std::optional<DenseMatrix<Scalar>> X0_dense;  // overrides densify(X0) when present
    double t0 = 0.0;
    double T = 0.3;
    std::string label;
    std::string signature;  // canonical parameter string, keys reference checkpoints

    Index rows() const { return A ? A->rows() : 0; }

    DenseMatrix<Scalar> initial_dense() const
    {
        return X0_dense ? *X0_dense : X0.dense();
    }

    /// Full right-hand side A Y + Y A^* + G(t, Y).
    DenseMatrix<Scalar> full_rhs(double t, const DenseMatrix<Scalar>& Y) const
    {
        DenseMatrix<Scalar> out = A->apply(Y);
        out += A->apply(Y.adjoint()).adjoint();
        out += G(t, Y);
        return out;
    }

    void validate() const
    {
        if (!A)
            throw std::invalid_argument("Problem: missing operator");
        if (A->rows() < 2)
            throw std::invalid_argument("Problem: operator must be at least 2 x 2");
        if (!G)
            throw std::invalid_argument("Problem: missing source evaluator");
        if (!(T >= t0))
            throw std::invalid_argument("Problem: final time precedes the initial time");
        if (X0.rows() != A->rows() || X0.cols() != A->rows())
            throw std::invalid_argument("Problem: initial factor shape disagrees with the operator");
        check_factor(X0);
    }
};

}  // namespace lrsplit
