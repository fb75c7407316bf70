// lrsplit — command-line driver for the low-rank splitting integrator.
//
// Subcommands:
//   converge   rank/step-size convergence sweep against a fine reference
//   svdump     leading singular values of a computed (or reference) solution
//   adaptive   rank history of an adaptive-truncation run
//   reference  compute (or reuse) a checkpointed reference solution
//   run        execute any of the above from a JSON config file
//
// Exit codes: 0 success, 2 configuration error, 3 divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lrsplit/harness.hpp"
#include "lrsplit/version.hpp"

namespace {

using nlohmann::json;
using namespace lrsplit;
using namespace lrsplit::harness;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::string eigen_version_string()
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%d.%d.%d", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
    return buf;
}

// One manifest per invocation so every output directory records how it was produced.
void write_manifest(const std::string& dir, const std::string& command, const json& config, double wall_s)
{
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    json j;
    j["tool"] = "lrsplit";
    j["version"] = LRSPLIT_VERSION;
    j["eigen"] = eigen_version_string();
    j["command"] = command;
    j["config"] = config;
    j["wall_time_s"] = wall_s;
    std::ofstream out(dir + "/run_manifest.json");
    out << j.dump(2) << "\n";
}

struct CommonArgs {
    std::string problem = "heat";
    RunSettings run;
};

void add_common(CLI::App* cmd, CommonArgs& a)
{
    cmd->add_option("--problem", a.problem, "Benchmark problem: heat, lyap-random, cubic")
        ->check(CLI::IsMember({"heat", "lyap-random", "cubic"}));
    cmd->add_option("--m", a.run.m, "Spatial resolution (matrix dimension)");
    cmd->add_option("--T", a.run.T, "Integration horizon");
    cmd->add_option("--seed", a.run.seed, "RNG seed for randomized problem data");
    cmd->add_option("--alpha", a.run.alpha, "Diffusion strength of the cubic problem");
    cmd->add_option("--substeps", a.run.inner_substeps, "Inner substeps of the projected solves");
    cmd->add_option("--workers", a.run.workers, "Sweep concurrency (0 = hardware)");
    cmd->add_option("--tau-ref", a.run.tau_ref, "Reference scheme step size");
    cmd->add_option("--checkpoint-dir", a.run.checkpoint_dir, "Directory for reference checkpoints");
}

json common_json(const CommonArgs& a)
{
    return json{{"problem", a.problem},
                {"m", a.run.m},
                {"T", a.run.T},
                {"seed", a.run.seed},
                {"alpha", a.run.alpha},
                {"substeps", a.run.inner_substeps},
                {"workers", a.run.workers},
                {"tau_ref", a.run.tau_ref},
                {"checkpoint_dir", a.run.checkpoint_dir}};
}

int do_converge(const CommonArgs& common, const std::vector<double>& taus, const std::vector<long long>& ranks,
                std::optional<double> theta, const std::string& out_dir)
{
    const auto start = std::chrono::steady_clock::now();
    SweepConfig cfg;
    cfg.problem = common.problem;
    cfg.taus = taus;
    for (long long r : ranks) cfg.ranks.push_back(static_cast<Index>(r));
    cfg.theta = theta;
    cfg.run = common.run;
    cfg.out_dir = out_dir;

    const ConvergenceReport report = convergence_sweep(cfg);

    std::printf("problem=%s m=%lld reference: %s (|X|_F = %.6g)\n", report.problem.c_str(),
                static_cast<long long>(report.m), report.reference_descr.c_str(), report.reference_norm);
    std::printf("%12s  %12s  %14s  %8s  %10s\n", "tau", "mode", "error", "order", "time[ms]");
    bool any_diverged = false;
    for (const auto& c : report.cells) {
        const std::string err = c.diverged ? std::string("diverged") : [&] {
            char b[32];
            std::snprintf(b, sizeof(b), "%.6e", c.error);
            return std::string(b);
        }();
        const std::string ord = c.order ? [&] {
            char b[32];
            std::snprintf(b, sizeof(b), "%.3f", *c.order);
            return std::string(b);
        }()
                                        : std::string("-");
        std::printf("%12.6g  %12s  %14s  %8s  %10.1f\n", c.tau, c.rank_mode_label().c_str(), err.c_str(),
                    ord.c_str(), c.runtime_ms);
        any_diverged = any_diverged || c.diverged;
    }

    json cfg_json = common_json(common);
    cfg_json["taus"] = taus;
    cfg_json["ranks"] = ranks;
    if (theta) cfg_json["theta"] = *theta;
    cfg_json["out"] = out_dir;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(out_dir, "converge", cfg_json, wall);

    if (any_diverged) {
        std::fprintf(stderr, "error: at least one sweep cell diverged\n");
        return kExitDiverged;
    }
    return kExitOk;
}

int do_svdump(const CommonArgs& common, const std::string& scheme, double tau, long long count, long long rank,
              const std::string& out_path)
{
    const auto start = std::chrono::steady_clock::now();
    const Problem<double> P = make_problem(common.problem, common.run);
    RealVector<double> sigma;
    if (scheme == "reference") {
        sigma = reference_singular_values(P, static_cast<Index>(count), out_path, common.run);
    } else {
        const Scheme s = (scheme == "fullrank") ? Scheme::fullrank_strang : Scheme::lowrank_strang;
        sigma = singular_value_dump(P, s, tau, static_cast<Index>(count), static_cast<Index>(rank), out_path,
                                    common.run);
    }
    for (Index i = 0; i < sigma.size(); ++i) std::printf("sigma_%lld = %.12e\n", static_cast<long long>(i + 1), sigma[i]);

    json cfg_json = common_json(common);
    cfg_json["scheme"] = scheme;
    cfg_json["tau"] = tau;
    cfg_json["k"] = count;
    cfg_json["rank"] = rank;
    cfg_json["out"] = out_path;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(std::filesystem::path(out_path).parent_path().string(), "svdump", cfg_json, wall);
    return kExitOk;
}

int do_adaptive(const CommonArgs& common, double tau, double theta, long long r_init, const std::string& out_path)
{
    const auto start = std::chrono::steady_clock::now();
    const Problem<double> P = make_problem(common.problem, common.run);
    const AdaptiveRunResult res = adaptive_rank_run(P, tau, theta, static_cast<Index>(r_init), out_path, common.run);
    std::printf("steps=%zu max_rank=%lld final_rank=%lld theta=%.3e\n", res.history.entries.size(),
                static_cast<long long>(res.max_rank), static_cast<long long>(res.final_state.rank()), res.theta);

    json cfg_json = common_json(common);
    cfg_json["tau"] = tau;
    cfg_json["theta"] = theta;
    cfg_json["rank"] = r_init;
    cfg_json["out"] = out_path;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(std::filesystem::path(out_path).parent_path().string(), "adaptive", cfg_json, wall);
    return kExitOk;
}

int do_reference(const CommonArgs& common, const std::string& out_dir)
{
    const auto start = std::chrono::steady_clock::now();
    const Problem<double> P = make_problem(common.problem, common.run);
    const ReferenceResult ref = reference_solution(P, common.run.tau_ref, out_dir);
    std::printf("reference %s: tau_ref=%.3e |X|_F=%.9e %s\n", common.problem.c_str(), ref.tau_ref, ref.X.norm(),
                ref.from_cache ? "(reused checkpoint)" : "(computed)");
    if (!ref.path.empty()) std::printf("checkpoint: %s\n", ref.path.c_str());

    json cfg_json = common_json(common);
    cfg_json["out"] = out_dir;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(out_dir, "reference", cfg_json, wall);
    return kExitOk;
}

// Shared flag bundle so `run` configs mirror the command line exactly.
struct AllArgs {
    CommonArgs common;
    std::vector<double> taus;
    std::vector<long long> ranks;
    std::optional<double> theta;
    std::string scheme = "lowrank";
    double tau = 1e-2;
    long long count = 10;
    long long rank = 10;
    std::string out;
};

void apply_config(const json& j, AllArgs& a)
{
    if (j.contains("problem")) a.common.problem = j.at("problem").get<std::string>();
    if (j.contains("m")) a.common.run.m = j.at("m").get<Index>();
    if (j.contains("T")) a.common.run.T = j.at("T").get<double>();
    if (j.contains("seed")) a.common.run.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("alpha")) a.common.run.alpha = j.at("alpha").get<double>();
    if (j.contains("substeps")) a.common.run.inner_substeps = j.at("substeps").get<int>();
    if (j.contains("workers")) a.common.run.workers = j.at("workers").get<int>();
    if (j.contains("tau_ref")) a.common.run.tau_ref = j.at("tau_ref").get<double>();
    if (j.contains("checkpoint_dir")) a.common.run.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
    if (j.contains("taus")) a.taus = j.at("taus").get<std::vector<double>>();
    if (j.contains("ranks")) a.ranks = j.at("ranks").get<std::vector<long long>>();
    if (j.contains("theta")) a.theta = j.at("theta").get<double>();
    if (j.contains("scheme")) a.scheme = j.at("scheme").get<std::string>();
    if (j.contains("tau")) a.tau = j.at("tau").get<double>();
    if (j.contains("k")) a.count = j.at("k").get<long long>();
    if (j.contains("rank")) a.rank = j.at("rank").get<long long>();
    if (j.contains("out")) a.out = j.at("out").get<std::string>();
}

int do_run(const std::string& config_path)
{
    std::ifstream in(config_path);
    if (!in) {
        std::fprintf(stderr, "error: cannot open config file '%s'\n", config_path.c_str());
        return kExitConfig;
    }
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: invalid JSON in '%s': %s\n", config_path.c_str(), e.what());
        return kExitConfig;
    }
    if (!j.contains("command")) {
        std::fprintf(stderr, "error: config must contain a \"command\" field\n");
        return kExitConfig;
    }
    const std::string command = j.at("command").get<std::string>();
    AllArgs a;
    try {
        apply_config(j, a);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: bad config value: %s\n", e.what());
        return kExitConfig;
    }
    if (command == "converge") return do_converge(a.common, a.taus, a.ranks, a.theta, a.out);
    if (command == "svdump") return do_svdump(a.common, a.scheme, a.tau, a.count, a.rank, a.out);
    if (command == "adaptive") return do_adaptive(a.common, a.tau, a.theta.value_or(1e-8), a.rank, a.out);
    if (command == "reference") return do_reference(a.common, a.out);
    std::fprintf(stderr, "error: unknown command '%s'\n", command.c_str());
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Low-rank splitting integrator for stiff matrix differential equations"};
    app.require_subcommand(1);

    // converge
    auto* conv = app.add_subcommand("converge", "Step-size convergence sweep against a fine reference");
    CommonArgs conv_common;
    std::vector<double> taus;
    std::vector<long long> ranks;
    double theta_val = 0;
    std::string out_dir;
    add_common(conv, conv_common);
    conv->add_option("--taus", taus, "Step sizes to sweep")->required();
    conv->add_option("--ranks", ranks, "Fixed truncation ranks");
    auto* theta_opt = conv->add_option("--theta", theta_val, "Adaptive truncation tolerance (adds one adaptive mode)");
    conv->add_option("--out", out_dir, "Output directory for convergence.csv and manifest");

    // svdump
    auto* svd = app.add_subcommand("svdump", "Dump leading singular values of a computed solution");
    CommonArgs svd_common;
    std::string scheme = "lowrank";
    double svd_tau = 1e-2;
    long long svd_count = 10;
    long long svd_rank = 10;
    std::string svd_out;
    add_common(svd, svd_common);
    svd->add_option("--scheme", scheme, "lowrank, fullrank, or reference")
        ->check(CLI::IsMember({"lowrank", "fullrank", "reference"}));
    svd->add_option("--tau", svd_tau, "Step size (lowrank/fullrank schemes)");
    svd->add_option("--k", svd_count, "Number of leading singular values");
    svd->add_option("--rank", svd_rank, "Truncation rank of the low-rank scheme");
    svd->add_option("--out", svd_out, "Output CSV path");

    // adaptive
    auto* ada = app.add_subcommand("adaptive", "Record the rank history of an adaptive-truncation run");
    CommonArgs ada_common;
    double ada_tau = 5e-3;
    double ada_theta = 1e-8;
    long long ada_rank = 3;
    std::string ada_out;
    add_common(ada, ada_common);
    ada->add_option("--tau", ada_tau, "Step size");
    ada->add_option("--theta", ada_theta, "Adaptive truncation tolerance");
    ada->add_option("--rank", ada_rank, "Initial rank");
    ada->add_option("--out", ada_out, "Output CSV path");

    // reference
    auto* ref = app.add_subcommand("reference", "Compute or reuse a checkpointed reference solution");
    CommonArgs ref_common;
    std::string ref_out;
    add_common(ref, ref_common);
    ref->add_option("--out", ref_out, "Checkpoint directory");

    // run
    auto* runc = app.add_subcommand("run", "Execute a subcommand described by a JSON config file");
    std::string config_path;
    runc->add_option("--config", config_path, "JSON config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (conv->parsed()) {
            std::optional<double> theta;
            if (theta_opt->count() > 0) theta = theta_val;
            return do_converge(conv_common, taus, ranks, theta, out_dir);
        }
        if (svd->parsed()) return do_svdump(svd_common, scheme, svd_tau, svd_count, svd_rank, svd_out);
        if (ada->parsed()) return do_adaptive(ada_common, ada_tau, ada_theta, ada_rank, ada_out);
        if (ref->parsed()) return do_reference(ref_common, ref_out);
        if (runc->parsed()) return do_run(config_path);
    } catch (const BlowUpError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
