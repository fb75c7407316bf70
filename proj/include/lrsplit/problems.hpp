#pragma once

#include "lrsplit/matrix_market.hpp"
#include "lrsplit/problem.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

namespace lrsplit {

/// Uniform grid of m interior points on (lo, hi) with Dirichlet boundary;
/// the mesh width is h = (hi - lo) / (m + 1).
struct GridSpec {
    Index m = 0;
    double lo = 0;
    double hi = 1;

    double h() const { return (hi - lo) / static_cast<double>(m + 1); }
    double node(Index i) const { return lo + static_cast<double>(i + 1) * h(); }

    DenseVector<double> nodes() const
    {
        DenseVector<double> x(m);
        for (Index i = 0; i < m; ++i)
            x(i) = node(i);
        return x;
    }

    void validate() const
    {
        if (m < 1)
            throw std::invalid_argument("GridSpec: need at least one interior point");
        if (!(hi > lo))
            throw std::invalid_argument("GridSpec: empty interval");
    }
};

/// Second-difference Dirichlet Laplacian on the grid: -2/h^2 on the diagonal,
/// 1/h^2 on both off-diagonals, times `scale`.
inline OperatorHandle<double> build_laplacian_1d(const GridSpec& grid, double scale = 1.0)
{
    grid.validate();
    const double h2 = grid.h() * grid.h();
    DenseVector<double> diag = DenseVector<double>::Constant(grid.m, -2.0 / h2);
    DenseVector<double> off = DenseVector<double>::Constant(grid.m > 0 ? grid.m - 1 : 0, 1.0 / h2);
    return OperatorHandle<double>::tridiagonal(std::move(diag), std::move(off), scale);
}

namespace detail {

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Symmetric positive semidefinite unit-Frobenius factor Z Z^T / ||Z Z^T||_F.
inline LowRankFactor<double> normalized_gram_factor(const DenseMatrix<double>& Z)
{
    const auto qr = thin_qr<double>(Z);
    LowRankFactor<double> Y;
    Y.U = qr.Q;
    Y.V = qr.Q;
    Y.S = qr.R * qr.R.adjoint();
    const double nrm = Y.S.norm();
    if (nrm == 0)
        throw std::runtime_error("normalized_gram_factor: zero sample");
    Y.S /= nrm;
    return Y;
}

}  // namespace detail

/// Diffusion with a fixed separable source on (-pi, pi):
///     X' = A X + X A^T + G,
/// where A is the Dirichlet Laplacian and G_ij = sum_k c_k sin(k x_i) sin(k x_j).
/// The default coefficient sequence keeps only the first term. The initial
/// state is the ten-term sum of Gaussian bump outer products with weights
/// 10^{-(k-1)}, assembled by factored sums and compressed at machine tail.
inline Problem<double> heat_source_problem(const GridSpec& grid, double T_final = 0.3,
                                           const std::vector<double>& source_coefficients = {1.0})
{
    grid.validate();
    const DenseVector<double> x = grid.nodes();
    const Index m = grid.m;

    DenseMatrix<double> Gd = DenseMatrix<double>::Zero(m, m);
    for (std::size_t k = 0; k < source_coefficients.size(); ++k) {
        if (source_coefficients[k] == 0.0)
            continue;
        const DenseVector<double> s = (static_cast<double>(k + 1) * x.array()).sin().matrix();
        Gd += source_coefficients[k] * (s * s.transpose());
    }

    LowRankFactor<double> X0 = zero_factor<double>(m);
    for (int k = 1; k <= 10; ++k) {
        const DenseVector<double> u = (-static_cast<double>(k) * x.array().square()).exp().matrix();
        const double nu = u.norm();
        LowRankFactor<double> term;
        term.U = u / nu;
        term.V = term.U;
        term.S = DenseMatrix<double>::Constant(1, 1, std::pow(10.0, -(k - 1)) * nu * nu);
        X0 = (k == 1) ? term : factored_sum(X0, term);
    }
    X0 = svd_truncate(X0, TruncationMode::adaptive(1e-14 * X0.norm())).factor;

    Problem<double> P;
    P.A = std::make_shared<const OperatorHandle<double>>(build_laplacian_1d(grid));
    P.G = [Gd](double, const DenseMatrix<double>&) { return Gd; };
    P.constant_source = true;
    P.symmetric = true;
    P.X0 = std::move(X0);
    P.t0 = 0.0;
    P.T = T_final;
    P.label = "heat";

    std::ostringstream sig;
    sig << "heat|m=" << m << "|lo=" << detail::format_double(grid.lo)
        << "|hi=" << detail::format_double(grid.hi) << "|T=" << detail::format_double(T_final) << "|coeffs=";
    for (double c : source_coefficients)
        sig << detail::format_double(c) << ",";
    P.signature = sig.str();
    return P;
}

/// Lyapunov equation with random positive semidefinite data on (-pi, pi):
/// X0 = Z1 Z1^T (rank 10) and constant source Q = Z2 Z2^T (rank 5), both
/// normalized to unit Frobenius norm, drawn from a seeded generator.
inline Problem<double> lyapunov_random_problem(Index m, std::uint64_t seed, double T_final = 0.3)
{
    if (m < 16)
        throw std::invalid_argument("lyapunov_random_problem: m must be at least 16");
    const GridSpec grid{m, -std::numbers::pi, std::numbers::pi};

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix<double> Z1(m, 10), Z2(m, 5);
    for (Index j = 0; j < Z1.cols(); ++j)
        for (Index i = 0; i < m; ++i)
            Z1(i, j) = gauss(rng);
    for (Index j = 0; j < Z2.cols(); ++j)
        for (Index i = 0; i < m; ++i)
            Z2(i, j) = gauss(rng);

    LowRankFactor<double> X0 = detail::normalized_gram_factor(Z1);
    const DenseMatrix<double> Qd = detail::normalized_gram_factor(Z2).dense();

    Problem<double> P;
    P.A = std::make_shared<const OperatorHandle<double>>(build_laplacian_1d(grid));
    P.G = [Qd](double, const DenseMatrix<double>&) { return Qd; };
    P.constant_source = true;
    P.symmetric = true;
    P.X0 = std::move(X0);
    P.t0 = 0.0;
    P.T = T_final;
    P.label = "lyap-random";

    std::ostringstream sig;
    sig << "lyap-random|m=" << m << "|seed=" << seed << "|T=" << detail::format_double(T_final);
    P.signature = sig.str();
    return P;
}

/// Cubic reaction-diffusion on (0, 1) with a weak diffusion alpha * Laplacian
/// and entrywise-cubed source G(X) = X .^ 3; rank-one polynomial bump initial
/// state u_i = 4 x_i (1 - x_i).
inline Problem<double> cubic_problem(const GridSpec& grid, double alpha = 0.02, double T_final = 0.3)
{
    grid.validate();
    if (!(alpha > 0) || !std::isfinite(alpha))
        throw std::invalid_argument("cubic_problem: alpha must be positive and finite");
    const DenseVector<double> x = grid.nodes();

    DenseVector<double> u = (4.0 * x.array() * (1.0 - x.array())).matrix();
    const double nu = u.norm();

    LowRankFactor<double> X0;
    X0.U = u / nu;
    X0.V = X0.U;
    X0.S = DenseMatrix<double>::Constant(1, 1, nu * nu);

    Problem<double> P;
    P.A = std::make_shared<const OperatorHandle<double>>(build_laplacian_1d(grid, alpha));
    P.G = [](double, const DenseMatrix<double>& Y) -> DenseMatrix<double> {
        return Y.array().cube().matrix();
    };
    P.constant_source = false;
    P.symmetric = true;
    P.X0 = std::move(X0);
    P.t0 = 0.0;
    P.T = T_final;
    P.label = "cubic";

    std::ostringstream sig;
    sig << "cubic|m=" << grid.m << "|lo=" << detail::format_double(grid.lo)
        << "|hi=" << detail::format_double(grid.hi) << "|alpha=" << detail::format_double(alpha)
        << "|T=" << detail::format_double(T_final);
    P.signature = sig.str();
    return P;
}

/// Reads a square operator from a Matrix Market file (array or coordinate)
/// into a dense handle; exact symmetry is detected and flagged on the handle.
inline OperatorHandle<double> load_operator(const std::string& path, double scale = 1.0)
{
    DenseMatrix<double> A = read_matrix_market(path);
    if (A.rows() != A.cols())
        throw std::runtime_error("load_operator: " + path + " is not square");
    return OperatorHandle<double>::dense(std::move(A), scale);
}

}  // namespace lrsplit
