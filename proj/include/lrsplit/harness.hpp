#pragma once

#include "lrsplit/integrators.hpp"
#include "lrsplit/problems.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lrsplit::harness {

/// Knobs shared by every experiment entry point.
struct RunSettings {
    Index m = 128;
    double T = 0.3;
    std::uint64_t seed = 42;     // lyap-random data
    double alpha = 0.02;         // cubic diffusion strength
    int inner_substeps = 1;
    int workers = 0;             // sweep cell concurrency; 0 = hardware
    double tau_ref = 1e-5;       // reference scheme step size
    std::string checkpoint_dir;  // empty = never touch disk for references
};

/// Builds one of the named benchmark problems: heat | lyap-random | cubic.
Problem<double> make_problem(const std::string& label, const RunSettings& settings);

struct ReferenceResult {
    DenseMatrix<double> X;
    bool from_cache = false;
    std::string path;  // checkpoint directory when one was used
    double tau_ref = 0;
};

/// Dense full-rank Strang solve at tau_ref, checkpointed under a content hash
/// of the problem parameters. A matching checkpoint is reloaded instead of
/// recomputed; a stale one triggers a warning and a rebuild.
ReferenceResult reference_solution(const Problem<double>& P, double tau_ref, const std::string& checkpoint_dir);

/// log2 of the ratio of successive solution differences. Empty when the fine
/// difference has collapsed below 1e-15 and the ratio is meaningless.
std::optional<double> runge_order_estimate(double d_coarse, double d_fine);
std::optional<double> runge_order_estimate(const LowRankFactor<double>& sol_tau,
                                           const LowRankFactor<double>& sol_half,
                                           const LowRankFactor<double>& sol_quarter);

struct ConvergenceCell {
    double tau = 0;
    bool adaptive = false;
    Index rank = 0;    // fixed truncation
    double theta = 0;  // adaptive truncation
    double error = 0;  // absolute Frobenius error against the reference
    bool diverged = false;
    double runtime_ms = 0;
    std::optional<double> order;  // attached to the largest tau of its halving triple
    double initial_tail = 0;      // distance committed when truncating X0

    std::string rank_mode_label() const;
};

struct ConvergenceReport {
    std::string problem;
    Index m = 0;
    double T = 0;
    std::uint64_t seed = 0;
    int inner_substeps = 1;
    double reference_norm = 0;
    std::string reference_descr;
    std::vector<ConvergenceCell> cells;  // rank-mode major, tau descending
};

struct SweepConfig {
    std::string problem;
    std::vector<double> taus;      // sorted descending internally
    std::vector<Index> ranks;      // fixed-rank modes
    std::optional<double> theta;   // appends one adaptive mode
    RunSettings run;
    std::string out_dir;           // empty = no CSV written
};

/// Runs the low-rank scheme over every (rank mode, tau) cell, measures final
/// errors against the reference, and estimates Runge orders along halving
/// chains. Blow-ups are recorded as diverged cells, not failures.
ConvergenceReport convergence_sweep(const SweepConfig& cfg);

/// Fixed-schema CSV: problem,m,scheme,tau,rank_or_theta,error,order,runtime_ms,seed.
/// Every column except runtime_ms is byte-deterministic for a given config.
void write_report_csv(const ConvergenceReport& report, const std::string& path);

/// Integrates with the given scheme and dumps the leading `count` singular
/// values of the final state (descending) to CSV. `rank` bounds the factored
/// run; it is ignored by the dense scheme.
RealVector<double> singular_value_dump(const Problem<double>& P, Scheme scheme, double tau, Index count,
                                       Index rank, const std::string& out_path, const RunSettings& settings);

/// Leading singular values of the checkpointed reference solution.
RealVector<double> reference_singular_values(const Problem<double>& P, Index count,
                                             const std::string& out_path, const RunSettings& settings);

struct AdaptiveRunResult {
    RankHistory history;
    LowRankFactor<double> final_state;
    Index max_rank = 0;
    double theta = 0;
};

/// Rank-adaptive run starting from the initial state forced to rank r_init;
/// records the per-step rank trace and writes it as CSV when out_path is set.
AdaptiveRunResult adaptive_rank_run(const Problem<double>& P, double tau, double theta, Index r_init,
                                    const std::string& out_path, const RunSettings& settings);

}  // namespace lrsplit::harness
