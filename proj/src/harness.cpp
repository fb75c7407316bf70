#include "lrsplit/harness.hpp"

#include "lrsplit/matrix_market.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace lrsplit::harness {

namespace fs = std::filesystem;

namespace {

std::string format_g17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Executes body(0..n-1) on up to `workers` threads; results are indexed, so
/// the assembly stays deterministic regardless of scheduling. The first
/// non-divergence exception wins and is rethrown on the calling thread.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body)
{
    int w = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
    w = std::max(1, std::min<int>(w, static_cast<int>(n)));
    if (w == 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err)
                    err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (int i = 0; i < w; ++i)
        pool.emplace_back(run);
    for (auto& th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

bool is_halving(double coarse, double fine)
{
    return std::abs(fine - coarse / 2) <= 1e-9 * coarse;
}

}  // namespace

Problem<double> make_problem(const std::string& label, const RunSettings& s)
{
    if (label == "heat")
        return heat_source_problem(GridSpec{s.m, -std::numbers::pi, std::numbers::pi}, s.T);
    if (label == "lyap-random")
        return lyapunov_random_problem(s.m, s.seed, s.T);
    if (label == "cubic")
        return cubic_problem(GridSpec{s.m, 0.0, 1.0}, s.alpha, s.T);
    throw std::invalid_argument("make_problem: unknown problem '" + label + "'");
}

ReferenceResult reference_solution(const Problem<double>& P, double tau_ref, const std::string& checkpoint_dir)
{
    if (!(tau_ref > 0) || !std::isfinite(tau_ref))
        throw std::invalid_argument("reference_solution: tau_ref must be positive and finite");

    const std::string signature =
        P.signature + "|scheme=fullrank_strang|tau_ref=" + format_g17(tau_ref) + "|substeps=1";

    ReferenceResult out;
    out.tau_ref = tau_ref;

    fs::path dir;
    if (!checkpoint_dir.empty()) {
        dir = fs::path(checkpoint_dir) / ("ref-" + P.label + "-" + hex16(fnv1a64(signature)));
        out.path = dir.string();
        const fs::path manifest_path = dir / "manifest.json";
        if (fs::exists(manifest_path)) {
            std::ifstream in(manifest_path);
            nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
            if (!manifest.is_discarded() && manifest.value("signature", "") == signature) {
                out.X = read_matrix_market((dir / "X.mtx").string());
                out.from_cache = true;
                return out;
            }
            std::cerr << "warning: reference checkpoint " << dir.string()
                      << " does not match the requested parameters; recomputing\n";
        }
    }

    SchemeConfig cfg;
    cfg.tau = tau_ref;
    cfg.inner_substeps = 1;
    auto result = integrate(P, Scheme::fullrank_strang, cfg);
    out.X = std::move(result.X);

    if (!checkpoint_dir.empty()) {
        const fs::path tmp = fs::path(checkpoint_dir) /
            (".tmp-" + hex16(fnv1a64(signature)) + "-" + std::to_string(::getpid()));
        fs::create_directories(tmp);
        write_matrix_market((tmp / "X.mtx").string(), out.X);
        nlohmann::json manifest;
        manifest["signature"] = signature;
        manifest["tau_ref"] = tau_ref;
        manifest["m"] = P.rows();
        manifest["frobenius_norm"] = out.X.norm();
        {
            std::ofstream mf(tmp / "manifest.json");
            mf << manifest.dump(2) << "\n";
        }
        std::error_code ec;
        fs::remove_all(dir, ec);
        fs::rename(tmp, dir, ec);
        if (ec) {
            // a concurrent writer got there first; our in-memory copy is equivalent
            fs::remove_all(tmp, ec);
        }
    }
    return out;
}

std::optional<double> runge_order_estimate(double d_coarse, double d_fine)
{
    if (!(d_fine > 1e-15) || !(d_coarse > 0) || !std::isfinite(d_coarse) || !std::isfinite(d_fine))
        return std::nullopt;
    return std::log2(d_coarse / d_fine);
}

std::optional<double> runge_order_estimate(const LowRankFactor<double>& sol_tau,
                                           const LowRankFactor<double>& sol_half,
                                           const LowRankFactor<double>& sol_quarter)
{
    return runge_order_estimate(factored_distance(sol_tau, sol_half), factored_distance(sol_half, sol_quarter));
}

std::string ConvergenceCell::rank_mode_label() const
{
    if (adaptive) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "theta=%.3g", theta);
        return buf;
    }
    return "r=" + std::to_string(rank);
}

ConvergenceReport convergence_sweep(const SweepConfig& cfg)
{
    if (cfg.taus.empty())
        throw std::invalid_argument("convergence_sweep: no step sizes given");
    if (cfg.ranks.empty() && !cfg.theta)
        throw std::invalid_argument("convergence_sweep: no rank modes given");

    std::vector<double> taus = cfg.taus;
    std::sort(taus.begin(), taus.end(), std::greater<double>());

    std::vector<TruncationMode> modes;
    for (Index r : cfg.ranks)
        modes.push_back(TruncationMode::fixed(r));
    if (cfg.theta)
        modes.push_back(TruncationMode::adaptive(*cfg.theta));

    const Problem<double> P = make_problem(cfg.problem, cfg.run);
    const ReferenceResult ref = reference_solution(P, cfg.run.tau_ref, cfg.run.checkpoint_dir);

    ConvergenceReport report;
    report.problem = cfg.problem;
    report.m = cfg.run.m;
    report.T = cfg.run.T;
    report.seed = cfg.run.seed;
    report.inner_substeps = cfg.run.inner_substeps;
    report.reference_norm = ref.X.norm();
    report.reference_descr = "fullrank_strang tau_ref=" + format_g17(cfg.run.tau_ref) +
                             (ref.from_cache ? " (checkpoint)" : " (computed)");

    const std::size_t n_cells = modes.size() * taus.size();
    std::vector<ConvergenceCell> cells(n_cells);
    std::vector<LowRankFactor<double>> finals(n_cells);
    std::vector<char> usable(n_cells, 0);

    parallel_for(n_cells, cfg.run.workers, [&](std::size_t job) {
        const std::size_t mi = job / taus.size();
        const std::size_t ti = job % taus.size();
        ConvergenceCell& cell = cells[job];
        cell.tau = taus[ti];
        cell.adaptive = modes[mi].kind == TruncationMode::Kind::adaptive;
        cell.rank = modes[mi].r_target;
        cell.theta = modes[mi].theta;

        SchemeConfig scheme_cfg;
        scheme_cfg.tau = taus[ti];
        scheme_cfg.inner_substeps = cfg.run.inner_substeps;
        scheme_cfg.truncation = modes[mi];

        const auto t_start = std::chrono::steady_clock::now();
        try {
            auto result = integrate(P, Scheme::lowrank_strang, scheme_cfg);
            cell.error = factored_distance(result.Y, ref.X);
            cell.initial_tail = result.initial_tail;
            finals[job] = std::move(result.Y);
            usable[job] = 1;
        } catch (const BlowUpError&) {
            cell.diverged = true;
            cell.error = std::numeric_limits<double>::quiet_NaN();
        }
        cell.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    });

    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        for (std::size_t ti = 0; ti + 2 < taus.size(); ++ti) {
            if (!is_halving(taus[ti], taus[ti + 1]) || !is_halving(taus[ti + 1], taus[ti + 2]))
                continue;
            const std::size_t a = mi * taus.size() + ti;
            if (!usable[a] || !usable[a + 1] || !usable[a + 2])
                continue;
            cells[a].order = runge_order_estimate(finals[a], finals[a + 1], finals[a + 2]);
        }
    }

    report.cells = std::move(cells);
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        write_report_csv(report, (fs::path(cfg.out_dir) / "convergence.csv").string());
    }
    return report;
}

void write_report_csv(const ConvergenceReport& report, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("write_report_csv: cannot open " + path);
    out << "problem,m,scheme,tau,rank_or_theta,error,order,runtime_ms,seed\n";
    for (const auto& cell : report.cells) {
        out << report.problem << "," << report.m << ",lowrank_strang," << format_g17(cell.tau) << ",";
        if (cell.adaptive)
            out << format_g17(cell.theta);
        else
            out << cell.rank;
        out << ",";
        if (cell.diverged)
            out << "diverged";
        else
            out << format_g17(cell.error);
        out << ",";
        if (cell.order)
            out << format_g17(*cell.order);
        out << "," << format_g17(cell.runtime_ms) << "," << report.seed << "\n";
    }
    if (!out)
        throw std::runtime_error("write_report_csv: write failed for " + path);
}

namespace {

RealVector<double> leading_singulars_of_dense(const DenseMatrix<double>& X, Index count)
{
    auto svd = svd_full<double>(X);
    RealVector<double> out = RealVector<double>::Zero(count);
    const Index k = std::min<Index>(count, svd.sigma.size());
    out.head(k) = svd.sigma.head(k);
    return out;
}

void write_sigma_csv(const RealVector<double>& sigma, const std::string& path)
{
    if (path.empty())
        return;
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("singular_value_dump: cannot open " + path);
    out << "index,sigma\n";
    for (Index i = 0; i < sigma.size(); ++i)
        out << (i + 1) << "," << format_g17(sigma(i)) << "\n";
}

}  // namespace

RealVector<double> singular_value_dump(const Problem<double>& P, Scheme scheme, double tau, Index count,
                                       Index rank, const std::string& out_path, const RunSettings& settings)
{
    if (count < 1 || count > P.rows())
        throw std::invalid_argument("singular_value_dump: count must lie in [1, m]");

    SchemeConfig cfg;
    cfg.tau = tau;
    cfg.inner_substeps = settings.inner_substeps;
    cfg.truncation = TruncationMode::fixed(std::max<Index>(rank, 1));

    auto result = integrate(P, scheme, cfg);
    RealVector<double> sigma;
    if (result.dense) {
        sigma = leading_singulars_of_dense(result.X, count);
    } else {
        // bases are orthonormal, so the core carries the singular values
        auto core = svd_full<double>(result.Y.S);
        sigma = RealVector<double>::Zero(count);
        const Index k = std::min<Index>(count, core.sigma.size());
        sigma.head(k) = core.sigma.head(k);
    }
    write_sigma_csv(sigma, out_path);
    return sigma;
}

RealVector<double> reference_singular_values(const Problem<double>& P, Index count,
                                             const std::string& out_path, const RunSettings& settings)
{
    if (count < 1 || count > P.rows())
        throw std::invalid_argument("reference_singular_values: count must lie in [1, m]");
    const ReferenceResult ref = reference_solution(P, settings.tau_ref, settings.checkpoint_dir);
    RealVector<double> sigma = leading_singulars_of_dense(ref.X, count);
    write_sigma_csv(sigma, out_path);
    return sigma;
}

AdaptiveRunResult adaptive_rank_run(const Problem<double>& P, double tau, double theta, Index r_init,
                                    const std::string& out_path, const RunSettings& settings)
{
    SchemeConfig cfg;
    cfg.tau = tau;
    cfg.inner_substeps = settings.inner_substeps;
    cfg.truncation = TruncationMode::adaptive(theta);

    IntegrateOptions<double> opts;
    opts.record_history = true;
    opts.initial_rank = r_init;

    auto result = integrate(P, Scheme::lowrank_strang, cfg, opts);

    AdaptiveRunResult out;
    out.history = std::move(result.history);
    out.final_state = std::move(result.Y);
    out.theta = theta;
    for (const auto& e : out.history.entries)
        out.max_rank = std::max(out.max_rank, e.rank);

    if (!out_path.empty()) {
        std::ofstream file(out_path);
        if (!file)
            throw std::runtime_error("adaptive_rank_run: cannot open " + out_path);
        file << "t,rank,tail_norm,rank_floor\n";
        for (const auto& e : out.history.entries)
            file << format_g17(e.t) << "," << e.rank << "," << format_g17(e.tail_norm) << ","
                 << (e.rank_floor ? 1 : 0) << "\n";
    }
    return out;
}

}  // namespace lrsplit::harness
