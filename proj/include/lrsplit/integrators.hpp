#pragma once

#include "lrsplit/low_rank.hpp"
#include "lrsplit/problem.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lrsplit {

/// The nonlinearity produced a non-finite value; `time` is where it happened.
struct BlowUpError : std::runtime_error {
    double time;

    explicit BlowUpError(double t) : std::runtime_error(format(t)), time(t) {}

private:
    static std::string format(double t)
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "nonlinearity blow-up at t = %.12g", t);
        return buf;
    }
};

/// Step-size, substep and truncation policy for one integration run.
struct SchemeConfig {
    double tau = 1e-2;
    int inner_substeps = 1;  // Heun substeps inside the K/L/S solves
    TruncationMode truncation = TruncationMode::fixed(1);

    void validate() const
    {
        if (!(tau > 0) || !std::isfinite(tau))
            throw std::invalid_argument("SchemeConfig: tau must be positive and finite");
        if (inner_substeps < 1)
            throw std::invalid_argument("SchemeConfig: inner_substeps must be at least one");
    }
};

/// One explicit trapezoidal (Heun) step; exactly two rhs evaluations.
template <class Scalar, class Rhs>
DenseMatrix<Scalar> heun_step(Rhs&& f, double t0, double tau, const DenseMatrix<Scalar>& Y0)
{
    DenseMatrix<Scalar> k1 = f(t0, Y0);
    if (!k1.allFinite())
        throw BlowUpError(t0);
    DenseMatrix<Scalar> k2 = f(t0 + tau, DenseMatrix<Scalar>(Y0 + Scalar(tau) * k1));
    if (!k2.allFinite())
        throw BlowUpError(t0 + tau);
    return Y0 + Scalar(tau / 2) * (k1 + k2);
}

/// Heun over [t0, t0 + tau] in `substeps` equal pieces.
template <class Scalar, class Rhs>
DenseMatrix<Scalar> heun_integrate(Rhs&& f, double t0, double tau, int substeps, DenseMatrix<Scalar> Y)
{
    const double h = tau / substeps;
    for (int i = 0; i < substeps; ++i)
        Y = heun_step<Scalar>(f, t0 + i * h, h, Y);
    return Y;
}

/// Intermediate quantities of one basis-update step, exposed for inspection.
template <class Scalar>
struct BugWorkspace {
    DenseMatrix<Scalar> K1, L1;       // propagated range / corange states
    DenseMatrix<Scalar> U_hat, V_hat; // augmented bases, at most 2r columns
    DenseMatrix<Scalar> S_hat;        // Galerkin core after the prediction interval
    DenseMatrix<Scalar> U_bar, V_bar; // doubly augmented bases, at most 4r columns
    DenseMatrix<Scalar> S_bar;        // Galerkin core after the full step
};

/// Per-step metadata reported by the rank-adaptive steps.
struct StepInfo {
    Index rank = 0;       // rank after truncation
    Index rank_hat = 0;   // augmented basis size of the prediction
    Index rank_bar = 0;   // doubly augmented basis size
    double tail_norm = 0;
    bool rank_floor = false;
};

/// One augmented basis-update step for Y' = F(t, Y) over [t0, t0 + tau].
///
/// Range and corange are propagated with the opposite factor frozen (K and L
/// solves), the old bases are appended before re-orthonormalization, and the
/// core is obtained from a Galerkin solve in the fixed augmented bases. The
/// result is returned untruncated at rank <= 2 rank(Y0).
template <class Scalar, class Rhs>
LowRankFactor<Scalar> bug_augmented_step(Rhs&& F, double t0, double tau, const LowRankFactor<Scalar>& Y0,
                                         int substeps = 1, BugWorkspace<Scalar>* ws = nullptr)
{
    using Mat = DenseMatrix<Scalar>;
    const Mat& U0 = Y0.U;
    const Mat& V0 = Y0.V;
    const Mat& S0 = Y0.S;

    // K solve: corange frozen at V0
    auto rhsK = [&](double t, const Mat& K) -> Mat { return F(t, Mat(K * V0.adjoint())) * V0; };
    Mat K1 = heun_integrate<Scalar>(rhsK, t0, tau, substeps, Mat(U0 * S0));

    // L solve: range frozen at U0
    auto rhsL = [&](double t, const Mat& L) -> Mat { return F(t, Mat(U0 * L.adjoint())).adjoint() * U0; };
    Mat L1 = heun_integrate<Scalar>(rhsL, t0, tau, substeps, Mat(V0 * S0.adjoint()));

    // Entries can stay finite while their squares overflow, which would poison
    // the orthonormalizations below; treat leaving the representable range as
    // a blow-up, same as a non-finite rhs.
    if (!std::isfinite(K1.norm()) || !std::isfinite(L1.norm()))
        throw BlowUpError(t0 + tau);

    Mat U_hat = orth(horizontal_concat<Scalar>(U0, K1));
    Mat V_hat = orth(horizontal_concat<Scalar>(V0, L1));

    // Galerkin core solve in the augmented bases
    Mat S_hat = (U_hat.adjoint() * U0) * S0 * (V_hat.adjoint() * V0).adjoint();
    auto rhsS = [&](double t, const Mat& S) -> Mat {
        return U_hat.adjoint() * F(t, Mat(U_hat * S * V_hat.adjoint())) * V_hat;
    };
    S_hat = heun_integrate<Scalar>(rhsS, t0, tau, substeps, std::move(S_hat));

    if (ws) {
        ws->K1 = K1;
        ws->L1 = L1;
        ws->U_hat = U_hat;
        ws->V_hat = V_hat;
        ws->S_hat = S_hat;
    }
    return LowRankFactor<Scalar>{std::move(U_hat), std::move(S_hat), std::move(V_hat)};
}

/// One second-order basis-update step for Y' = F(t, Y) over [t0, t0 + tau].
///
/// An untruncated augmented step over half the interval predicts the
/// midpoint; the bases are enriched with the rhs directions at that midpoint
/// (rank at most 4 rank(Y0)), the core is integrated over the whole interval
/// by a Galerkin Heun solve, and the result is compressed per `cfg.truncation`.
template <class Scalar, class Rhs>
LowRankFactor<Scalar> bug2_midpoint_step(Rhs&& F, double t0, double tau, const LowRankFactor<Scalar>& Y0,
                                         const SchemeConfig& cfg, StepInfo* info = nullptr,
                                         BugWorkspace<Scalar>* ws = nullptr)
{
    using Mat = DenseMatrix<Scalar>;

    LowRankFactor<Scalar> Y_half = bug_augmented_step(F, t0, tau / 2, Y0, cfg.inner_substeps, ws);

    const double t_mid = t0 + tau / 2;
    Mat F_mid = F(t_mid, Y_half.dense());
    if (!F_mid.allFinite())
        throw BlowUpError(t_mid);

    Mat range_aug = Scalar(tau) * (F_mid * Y_half.V);
    Mat corange_aug = Scalar(tau) * (F_mid.adjoint() * Y_half.U);
    // Same overflow guard as in the prediction step: finite entries whose
    // squared sum overflows would defeat the orthonormalizations.
    if (!std::isfinite(range_aug.norm()) || !std::isfinite(corange_aug.norm()))
        throw BlowUpError(t_mid);

    Mat U_bar = orth(horizontal_concat<Scalar>(Y_half.U, std::move(range_aug)));
    Mat V_bar = orth(horizontal_concat<Scalar>(Y_half.V, std::move(corange_aug)));

    Mat S_bar = (U_bar.adjoint() * Y0.U) * Y0.S * (V_bar.adjoint() * Y0.V).adjoint();
    auto rhsS = [&](double t, const Mat& S) -> Mat {
        return U_bar.adjoint() * F(t, Mat(U_bar * S * V_bar.adjoint())) * V_bar;
    };
    S_bar = heun_integrate<Scalar>(rhsS, t0, tau, cfg.inner_substeps, std::move(S_bar));

    auto truncated = svd_truncate(LowRankFactor<Scalar>{U_bar, S_bar, V_bar}, cfg.truncation);
    if (info) {
        info->rank = truncated.factor.rank();
        info->rank_hat = Y_half.rank();
        info->rank_bar = U_bar.cols();
        info->tail_norm = truncated.tail_norm;
        info->rank_floor = truncated.rank_floor;
    }
    if (ws) {
        ws->U_bar = std::move(U_bar);
        ws->V_bar = std::move(V_bar);
        ws->S_bar = std::move(S_bar);
    }
    return truncated.factor;
}

/// Exact linear flow Z -> e^{tA} Z e^{tA^*} on a factored state. Both bases
/// are propagated by the cached exponential and re-orthonormalized by thin
/// QR, folding the triangular factors into the core; the rank is unchanged.
template <class Scalar>
LowRankFactor<Scalar> linear_flow(const OperatorHandle<Scalar>& A, RealOf<Scalar> t, const LowRankFactor<Scalar>& Y)
{
    if (t == RealOf<Scalar>(0) || A.is_zero())
        return Y;
    if (Y.rows() != A.rows() || Y.cols() != A.rows())
        throw std::invalid_argument("linear_flow: shape mismatch");
    const auto& E = A.exponential(t);
    const auto qu = thin_qr<Scalar>(E * Y.U);
    const auto qv = thin_qr<Scalar>(E * Y.V);
    return LowRankFactor<Scalar>{qu.Q, qu.R * Y.S * qv.R.adjoint(), qv.Q};
}

/// Dense counterpart of linear_flow.
template <class Scalar>
DenseMatrix<Scalar> linear_flow_dense(const OperatorHandle<Scalar>& A, RealOf<Scalar> t, const DenseMatrix<Scalar>& X)
{
    if (t == RealOf<Scalar>(0) || A.is_zero())
        return X;
    if (X.rows() != A.rows() || X.cols() != A.rows())
        throw std::invalid_argument("linear_flow_dense: shape mismatch");
    const auto& E = A.exponential(t);
    return E * X * E.adjoint();
}

/// One low-rank Strang step: half a linear flow, a full bug2 step on the
/// source term alone, half a linear flow. The source solve runs on the
/// global clock [t0, t0 + tau].
template <class Scalar>
LowRankFactor<Scalar> strang_lowrank_step(const Problem<Scalar>& P, double t0, const LowRankFactor<Scalar>& Y0,
                                          const SchemeConfig& cfg, StepInfo* info = nullptr)
{
    LowRankFactor<Scalar> Y = linear_flow(*P.A, RealOf<Scalar>(cfg.tau / 2), Y0);
    Y = bug2_midpoint_step(P.G, t0, cfg.tau, Y, cfg, info);
    return linear_flow(*P.A, RealOf<Scalar>(cfg.tau / 2), Y);
}

/// One dense full-rank Strang step; the source substep is a Heun solve over
/// the whole interval.
template <class Scalar>
DenseMatrix<Scalar> strang_fullrank_step(const Problem<Scalar>& P, double t0, const DenseMatrix<Scalar>& X0,
                                         const SchemeConfig& cfg)
{
    DenseMatrix<Scalar> X = linear_flow_dense(*P.A, RealOf<Scalar>(cfg.tau / 2), X0);
    X = heun_integrate<Scalar>(P.G, t0, cfg.tau, cfg.inner_substeps, std::move(X));
    return linear_flow_dense(*P.A, RealOf<Scalar>(cfg.tau / 2), X);
}

enum class Scheme {
    lowrank_strang,   // splitting with exact linear flows and bug2 source steps
    fullrank_strang,  // dense reference scheme
    bug2_only         // bug2 on the unsplit right-hand side
};

/// Per-step rank trace of an integration run.
struct RankHistory {
    struct Entry {
        double t = 0;
        Index rank = 0;
        double tail_norm = 0;
        bool rank_floor = false;
    };
    std::vector<Entry> entries;
};

template <class Scalar>
struct IntegrateOptions {
    bool record_history = false;
    /// Truncate (or zero-pad) the initial state to exactly this rank instead
    /// of applying the scheme's truncation mode to it.
    std::optional<Index> initial_rank;
    /// Called after the initial preparation (step 0) and after every step.
    std::function<void(Index step, double t, const LowRankFactor<Scalar>&)> observer;
};

template <class Scalar>
struct IntegrationResult {
    bool dense = false;
    LowRankFactor<Scalar> Y;  // factored schemes
    DenseMatrix<Scalar> X;    // fullrank_strang
    double initial_tail = 0;  // Frobenius distance committed when preparing Y0
    long long steps = 0;
    RankHistory history;
};

/// Number of full steps of size tau covering `span`, plus the length of the
/// shortened final step (zero when span is an integer multiple of tau).
inline std::pair<long long, double> step_schedule(double span, double tau)
{
    if (span < 0 || !std::isfinite(span))
        throw std::invalid_argument("step_schedule: invalid time span");
    if (span == 0)
        return {0, 0.0};
    const double nf = span / tau;
    if (nf > 1e8)
        throw std::invalid_argument("step_schedule: step count exceeds the 1e8 guard");
    const double nr = std::round(nf);
    if (nr >= 1 && std::abs(nf - nr) <= 32 * std::numeric_limits<double>::epsilon() * nf)
        return {static_cast<long long>(nr), 0.0};
    const long long n = static_cast<long long>(std::floor(nf));
    return {n, span - static_cast<double>(n) * tau};
}

/// Runs `scheme` from P.t0 to P.T in steps of cfg.tau, shortening the last
/// step to land on P.T exactly. Factored schemes first bring the initial
/// state to the configured rank and record the committed distance.
template <class Scalar>
IntegrationResult<Scalar> integrate(const Problem<Scalar>& P, Scheme scheme, const SchemeConfig& cfg,
                                    const IntegrateOptions<Scalar>& opts = {})
{
    P.validate();
    cfg.validate();
    const auto [n_full, tau_last] = step_schedule(P.T - P.t0, cfg.tau);

    IntegrationResult<Scalar> out;
    out.steps = n_full + (tau_last > 0 ? 1 : 0);

    if (scheme == Scheme::fullrank_strang) {
        out.dense = true;
        out.X = P.initial_dense();
        for (long long k = 0; k < n_full; ++k)
            out.X = strang_fullrank_step(P, P.t0 + k * cfg.tau, out.X, cfg);
        if (tau_last > 0) {
            SchemeConfig last = cfg;
            last.tau = tau_last;
            out.X = strang_fullrank_step(P, P.t0 + n_full * cfg.tau, out.X, last);
        }
        return out;
    }

    LowRankFactor<Scalar> Y = P.X0;
    if (opts.initial_rank) {
        const Index r0 = *opts.initial_rank;
        if (r0 > Y.rank()) {
            Y = pad_rank(Y, r0);
        } else {
            auto tr = svd_truncate(Y, TruncationMode::fixed(r0));
            Y = std::move(tr.factor);
            out.initial_tail = tr.tail_norm;
        }
    } else if (out.steps > 0) {
        // A fixed-rank run works at exactly r_target columns: initial data of
        // lower rank is zero-padded so the projected solves start with a full
        // set of directions (the committed distance is zero in that case).
        if (cfg.truncation.kind == TruncationMode::Kind::fixed_rank && cfg.truncation.r_target > Y.rank()) {
            Y = pad_rank(Y, cfg.truncation.r_target);
        } else {
            auto tr = svd_truncate(Y, cfg.truncation);
            Y = std::move(tr.factor);
            out.initial_tail = tr.tail_norm;
        }
    }

    if (opts.record_history)
        out.history.entries.push_back({P.t0, Y.rank(), out.initial_tail, false});
    if (opts.observer)
        opts.observer(0, P.t0, Y);

    auto rhs_full = [&P](double t, const DenseMatrix<Scalar>& Z) -> DenseMatrix<Scalar> {
        return P.full_rhs(t, Z);
    };

    for (long long k = 0; k < out.steps; ++k) {
        const bool short_step = (k == n_full);
        SchemeConfig step_cfg = cfg;
        if (short_step)
            step_cfg.tau = tau_last;
        const double tk = P.t0 + k * cfg.tau;
        const double t_next = short_step || k + 1 == out.steps ? P.T : tk + cfg.tau;

        StepInfo si;
        if (scheme == Scheme::lowrank_strang)
            Y = strang_lowrank_step(P, tk, Y, step_cfg, &si);
        else
            Y = bug2_midpoint_step(rhs_full, tk, step_cfg.tau, Y, step_cfg, &si);

        if (opts.record_history)
            out.history.entries.push_back({t_next, si.rank, si.tail_norm, si.rank_floor});
        if (opts.observer)
            opts.observer(k + 1, t_next, Y);
    }

    out.Y = std::move(Y);
    return out;
}

}  // namespace lrsplit
