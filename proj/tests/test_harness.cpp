#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lrsplit/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace lrsplit;
namespace hn = lrsplit::harness;
namespace fs = std::filesystem;
using Mat = DenseMatrix<double>;

namespace {

fs::path fresh_dir(const std::string& name)
{
    auto dir = fs::temp_directory_path() / "lrsplit-harness-tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

LowRankFactor<double> spsd_factor(std::mt19937_64& rng, Index m, Index r)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat Z(m, r);
    for (Index j = 0; j < r; ++j)
        for (Index i = 0; i < m; ++i)
            Z(i, j) = dist(rng);
    auto qr = thin_qr<double>(Z);
    LowRankFactor<double> Y;
    Y.U = qr.Q;
    Y.V = qr.Q;
    Y.S = qr.R * qr.R.adjoint();
    Y.S /= Y.S.norm();
    return Y;
}

Problem<double> pure_linear_problem(Index m, Index r)
{
    std::mt19937_64 rng(2024);
    GridSpec grid{m, 0.0, 1.0};
    Problem<double> P;
    P.A = std::make_shared<OperatorHandle<double>>(build_laplacian_1d(grid, 0.01));
    P.G = [](double, const Mat& Y) { return Mat(Mat::Zero(Y.rows(), Y.cols())); };
    P.constant_source = true;
    P.X0 = spsd_factor(rng, m, r);
    P.T = 0.1;
    P.label = "lin-test";
    P.signature = "lin-test|m=" + std::to_string(m) + "|r=" + std::to_string(r);
    return P;
}

std::vector<std::string> read_lines(const fs::path& path)
{
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ','))
        fields.push_back(item);
    if (!line.empty() && line.back() == ',')
        fields.push_back("");
    return fields;
}

std::string drop_runtime_column(const std::string& line)
{
    auto fields = split_csv(line);
    REQUIRE(fields.size() == 9);
    fields.erase(fields.begin() + 7);
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i)
        out += (i ? "," : "") + fields[i];
    return out;
}

}  // namespace

TEST_CASE("runge_order_estimate recovers the exponent of a clean halving chain")
{
    auto p = hn::runge_order_estimate(4e-4, 1e-4);
    REQUIRE(p.has_value());
    CHECK(*p == doctest::Approx(2.0).epsilon(1e-12));

    CHECK(hn::runge_order_estimate(8e-4, 1e-4).value() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK_FALSE(hn::runge_order_estimate(1e-3, 0.0).has_value());
    CHECK_FALSE(hn::runge_order_estimate(1e-3, 5e-16).has_value());
    CHECK_FALSE(hn::runge_order_estimate(0.0, 1e-4).has_value());
    CHECK_FALSE(hn::runge_order_estimate(std::numeric_limits<double>::quiet_NaN(), 1e-4).has_value());
}

TEST_CASE("runge_order_estimate on factors follows a synthetic c*tau^2 family")
{
    // Y(tau) = base + tau^2 * bump in a shared pair of bases
    std::mt19937_64 rng(5);
    auto base = spsd_factor(rng, 12, 3);
    Mat bump = Mat::Zero(3, 3);
    bump(1, 1) = 0.7;

    auto at = [&](double tau) {
        LowRankFactor<double> Y = base;
        Y.S += tau * tau * bump;
        return Y;
    };
    auto p = hn::runge_order_estimate(at(0.1), at(0.05), at(0.025));
    REQUIRE(p.has_value());
    CHECK(*p == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("make_problem maps labels and settings onto the benchmark constructors")
{
    hn::RunSettings s;
    s.m = 24;
    s.T = 0.2;
    s.seed = 7;
    s.alpha = 0.04;

    auto Ph = hn::make_problem("heat", s);
    CHECK(Ph.label == "heat");
    CHECK(Ph.rows() == 24);
    CHECK(Ph.T == 0.2);

    auto Pl = hn::make_problem("lyap-random", s);
    CHECK(Pl.label == "lyap-random");
    CHECK(Pl.signature.find("seed=7") != std::string::npos);

    auto Pc = hn::make_problem("cubic", s);
    CHECK(Pc.label == "cubic");
    CHECK(Pc.A->scale() == 0.04);

    CHECK_THROWS_AS((void)hn::make_problem("burgers", s), std::invalid_argument);
}

TEST_CASE("reference_solution matches the exact flow of a source-free problem")
{
    auto P = pure_linear_problem(12, 3);
    auto ref = hn::reference_solution(P, 1e-3, "");
    CHECK_FALSE(ref.from_cache);
    CHECK(ref.path.empty());
    CHECK(ref.tau_ref == 1e-3);

    const Mat& E = P.A->exponential(P.T);
    Mat oracle = E * P.X0.dense() * E.adjoint();
    CHECK((ref.X - oracle).norm() <= 1e-9 * (1 + oracle.norm()));

    CHECK_THROWS_AS((void)hn::reference_solution(P, 0.0, ""), std::invalid_argument);
    CHECK_THROWS_AS((void)hn::reference_solution(P, -1e-3, ""), std::invalid_argument);
}

TEST_CASE("reference_solution round-trips through its checkpoint bit for bit")
{
    auto dir = fresh_dir("ref-cache");
    auto P = pure_linear_problem(10, 2);

    auto first = hn::reference_solution(P, 2e-3, dir.string());
    CHECK_FALSE(first.from_cache);
    CHECK(fs::exists(fs::path(first.path) / "manifest.json"));
    CHECK(fs::exists(fs::path(first.path) / "X.mtx"));

    auto second = hn::reference_solution(P, 2e-3, dir.string());
    CHECK(second.from_cache);
    CHECK(second.path == first.path);
    CHECK((second.X - first.X).norm() == 0.0);

    // a different step size claims a different checkpoint
    auto other = hn::reference_solution(P, 1e-3, dir.string());
    CHECK_FALSE(other.from_cache);
    CHECK(other.path != first.path);
}

TEST_CASE("reference_solution recomputes when the checkpoint manifest is unusable")
{
    auto dir = fresh_dir("ref-corrupt");
    auto P = pure_linear_problem(10, 2);

    auto first = hn::reference_solution(P, 2e-3, dir.string());
    const fs::path manifest = fs::path(first.path) / "manifest.json";

    {
        std::ofstream out(manifest, std::ios::trunc);
        out << "{ this is not json";
    }
    auto after_corruption = hn::reference_solution(P, 2e-3, dir.string());
    CHECK_FALSE(after_corruption.from_cache);
    CHECK((after_corruption.X - first.X).norm() == 0.0);

    // the recompute healed the checkpoint
    auto healed = hn::reference_solution(P, 2e-3, dir.string());
    CHECK(healed.from_cache);

    {
        std::ofstream out(manifest, std::ios::trunc);
        out << "{\"signature\": \"something else entirely\"}\n";
    }
    auto after_mismatch = hn::reference_solution(P, 2e-3, dir.string());
    CHECK_FALSE(after_mismatch.from_cache);
}

TEST_CASE("convergence_sweep: one cell reproduces a by-hand error computation")
{
    hn::SweepConfig cfg;
    cfg.problem = "cubic";
    cfg.taus = {1e-3};
    cfg.ranks = {4};
    cfg.run.m = 16;
    cfg.run.T = 0.05;
    cfg.run.tau_ref = 1e-4;

    auto report = hn::convergence_sweep(cfg);
    REQUIRE(report.cells.size() == 1);
    const auto& cell = report.cells[0];
    CHECK(cell.tau == 1e-3);
    CHECK(cell.rank == 4);
    CHECK_FALSE(cell.adaptive);
    CHECK_FALSE(cell.diverged);
    CHECK_FALSE(cell.order.has_value());
    CHECK(cell.rank_mode_label() == "r=4");

    auto P = hn::make_problem("cubic", cfg.run);
    auto ref = hn::reference_solution(P, cfg.run.tau_ref, "");
    SchemeConfig sc;
    sc.tau = 1e-3;
    sc.truncation = TruncationMode::fixed(4);
    auto mine = integrate(P, Scheme::lowrank_strang, sc);
    const double err = factored_distance(mine.Y, ref.X);
    CHECK(cell.error == doctest::Approx(err).epsilon(1e-13));
    CHECK(report.reference_norm == doctest::Approx(ref.X.norm()).epsilon(1e-13));
}

TEST_CASE("convergence_sweep attaches orders to full halving triples only")
{
    hn::SweepConfig cfg;
    cfg.problem = "cubic";
    cfg.taus = {1e-3, 2.5e-3, 5e-3, 1e-2};  // intentionally unsorted
    cfg.ranks = {5};
    cfg.run.m = 16;
    cfg.run.T = 0.05;
    cfg.run.tau_ref = 1e-4;

    auto report = hn::convergence_sweep(cfg);
    REQUIRE(report.cells.size() == 4);
    // sorted tau-descending: 1e-2, 5e-3, 2.5e-3, 1e-3
    CHECK(report.cells[0].tau == 1e-2);
    CHECK(report.cells[3].tau == 1e-3);
    CHECK(report.cells[0].order.has_value());      // 1e-2, 5e-3, 2.5e-3 halve twice
    CHECK_FALSE(report.cells[1].order.has_value());  // 2.5e-3 -> 1e-3 is not a halving
    CHECK_FALSE(report.cells[2].order.has_value());
    CHECK_FALSE(report.cells[3].order.has_value());
}

TEST_CASE("convergence_sweep CSV output is deterministic apart from runtimes")
{
    auto dir_a = fresh_dir("sweep-a");
    auto dir_b = fresh_dir("sweep-b");
    auto ckpt = fresh_dir("sweep-ckpt");

    hn::SweepConfig cfg;
    cfg.problem = "cubic";
    cfg.taus = {2e-3, 1e-3};
    cfg.ranks = {2, 4};
    cfg.run.m = 16;
    cfg.run.T = 0.05;
    cfg.run.tau_ref = 1e-4;
    cfg.run.checkpoint_dir = ckpt.string();

    cfg.out_dir = dir_a.string();
    (void)hn::convergence_sweep(cfg);
    cfg.out_dir = dir_b.string();
    (void)hn::convergence_sweep(cfg);

    auto lines_a = read_lines(dir_a / "convergence.csv");
    auto lines_b = read_lines(dir_b / "convergence.csv");
    REQUIRE(lines_a.size() == 5);  // header + 4 cells
    REQUIRE(lines_b.size() == lines_a.size());
    CHECK(lines_a[0] == "problem,m,scheme,tau,rank_or_theta,error,order,runtime_ms,seed");
    for (std::size_t i = 1; i < lines_a.size(); ++i)
        CHECK(drop_runtime_column(lines_a[i]) == drop_runtime_column(lines_b[i]));
}

TEST_CASE("write_report_csv spells out diverged cells and adaptive modes")
{
    hn::ConvergenceReport report;
    report.problem = "toy";
    report.m = 8;
    report.seed = 3;

    hn::ConvergenceCell ok;
    ok.tau = 0.01;
    ok.rank = 5;
    ok.error = 0.125;
    ok.order = 2.0;
    report.cells.push_back(ok);

    hn::ConvergenceCell bad;
    bad.tau = 0.02;
    bad.rank = 5;
    bad.diverged = true;
    bad.error = std::numeric_limits<double>::quiet_NaN();
    report.cells.push_back(bad);

    hn::ConvergenceCell ad;
    ad.tau = 0.01;
    ad.adaptive = true;
    ad.theta = 1e-6;
    ad.error = 0.5;
    report.cells.push_back(ad);
    CHECK(ad.rank_mode_label() == "theta=1e-06");

    auto dir = fresh_dir("csv-writer");
    const auto path = dir / "report.csv";
    hn::write_report_csv(report, path.string());
    auto lines = read_lines(path);
    REQUIRE(lines.size() == 4);

    auto okf = split_csv(lines[1]);
    REQUIRE(okf.size() == 9);
    CHECK(okf[0] == "toy");
    CHECK(okf[1] == "8");
    CHECK(okf[2] == "lowrank_strang");
    CHECK(okf[3] == "0.01");
    CHECK(okf[4] == "5");
    CHECK(okf[5] == "0.125");
    CHECK(okf[6] == "2");
    CHECK(okf[8] == "3");

    auto badf = split_csv(lines[2]);
    CHECK(badf[5] == "diverged");
    CHECK(badf[6] == "");  // no order on a diverged cell

    auto adf = split_csv(lines[3]);
    CHECK(std::stod(adf[4]) == 1e-6);  // theta round-trips through the CSV
    CHECK(adf[5] == "0.5");
}

TEST_CASE("singular_value_dump zero-pads past the factored rank")
{
    GridSpec grid{16, 0.0, 1.0};
    auto P = cubic_problem(grid, 0.02, 0.05);
    hn::RunSettings s;
    s.m = 16;

    auto dir = fresh_dir("svdump");
    const auto path = dir / "sigma.csv";
    auto sigma = hn::singular_value_dump(P, Scheme::lowrank_strang, 1e-3, 8, 3, path.string(), s);
    REQUIRE(sigma.size() == 8);
    CHECK(sigma(0) > 0);
    for (Index i = 0; i + 1 < sigma.size(); ++i)
        CHECK(sigma(i) >= sigma(i + 1));
    CHECK(sigma.tail(5).norm() == 0.0);  // rank-3 run has exactly three values

    auto lines = read_lines(path);
    REQUIRE(lines.size() == 9);
    CHECK(lines[0] == "index,sigma");
    CHECK(split_csv(lines[1])[0] == "1");

    // dense scheme agrees on the dominant singular value
    auto sigma_dense = hn::singular_value_dump(P, Scheme::fullrank_strang, 1e-3, 8, 3, "", s);
    CHECK(sigma_dense(0) == doctest::Approx(sigma(0)).epsilon(1e-4));

    CHECK_THROWS_AS((void)hn::singular_value_dump(P, Scheme::lowrank_strang, 1e-3, 99, 3, "", s),
                    std::invalid_argument);
}

TEST_CASE("reference_singular_values agrees with a direct decomposition of the reference")
{
    auto P = pure_linear_problem(12, 3);
    hn::RunSettings s;
    s.tau_ref = 1e-3;

    auto sigma = hn::reference_singular_values(P, 6, "", s);
    REQUIRE(sigma.size() == 6);

    auto ref = hn::reference_solution(P, s.tau_ref, "");
    auto direct = svd_full<double>(ref.X).sigma;
    for (Index i = 0; i < 6; ++i)
        CHECK(sigma(i) == doctest::Approx(direct(i)).epsilon(1e-12));
}

TEST_CASE("adaptive_rank_run records a rank trace consistent with its threshold")
{
    GridSpec grid{16, 0.0, 1.0};
    auto P = cubic_problem(grid, 0.02, 0.05);
    hn::RunSettings s;

    auto dir = fresh_dir("adaptive");
    const auto path = dir / "trace.csv";
    auto run = hn::adaptive_rank_run(P, 1e-2, 1e-6, 3, path.string(), s);

    REQUIRE(run.history.entries.size() == 6);  // initial entry + 5 steps
    CHECK(run.history.entries.front().rank == 3);
    CHECK(run.theta == 1e-6);
    CHECK(run.max_rank >= 1);
    for (const auto& e : run.history.entries)
        CHECK((e.tail_norm <= 1e-6 || e.rank_floor));

    auto lines = read_lines(path);
    CHECK(lines.size() == 7);
    CHECK(lines[0] == "t,rank,tail_norm,rank_floor");

    // an enormous threshold floors every step at rank one
    auto floored = hn::adaptive_rank_run(P, 1e-2, 1e9, 3, "", s);
    for (std::size_t i = 1; i < floored.history.entries.size(); ++i) {
        CHECK(floored.history.entries[i].rank == 1);
        CHECK(floored.history.entries[i].rank_floor);
    }

    // a zero threshold never commits a truncation error: every tail is exactly
    // zero and the rank grows to whatever the augmented bases support
    auto greedy = hn::adaptive_rank_run(P, 1e-2, 0.0, 1, "", s);
    CHECK(greedy.max_rank >= 6);
    CHECK(greedy.max_rank <= 16);
    for (const auto& e : greedy.history.entries)
        CHECK(e.tail_norm == 0.0);
}

TEST_CASE("reference solutions are self-consistent under step refinement")
{
    GridSpec grid{32, 0.0, 1.0};
    auto P = cubic_problem(grid, 0.02, 0.3);
    auto coarse = hn::reference_solution(P, 1e-4, "");
    auto fine = hn::reference_solution(P, 5e-5, "");
    CHECK((coarse.X - fine.X).norm() <= 1e-6 * fine.X.norm());
}
