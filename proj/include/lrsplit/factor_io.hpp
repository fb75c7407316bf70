#pragma once

#include "lrsplit/low_rank.hpp"
#include "lrsplit/matrix_market.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace lrsplit {

/// Writes a factor as a directory holding U.mtx, S.mtx, V.mtx (Matrix Market
/// array layout) next to a small manifest.json with the shape metadata.
inline void save_factor(const std::filesystem::path& dir, const LowRankFactor<double>& Y)
{
    check_factor(Y);
    std::filesystem::create_directories(dir);
    write_matrix_market((dir / "U.mtx").string(), Y.U);
    write_matrix_market((dir / "S.mtx").string(), Y.S);
    write_matrix_market((dir / "V.mtx").string(), Y.V);

    nlohmann::json manifest;
    manifest["m"] = Y.rows();
    manifest["n"] = Y.cols();
    manifest["r"] = Y.rank();
    manifest["scalar"] = "real-double";
    std::ofstream out(dir / "manifest.json");
    if (!out)
        throw std::runtime_error("save_factor: cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

/// Reads a factor directory written by save_factor and revalidates it.
inline LowRankFactor<double> load_factor(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw std::runtime_error("load_factor: missing manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("scalar", "") != "real-double")
        throw std::runtime_error("load_factor: unsupported scalar field in " + dir.string());

    LowRankFactor<double> Y;
    Y.U = read_matrix_market((dir / "U.mtx").string());
    Y.S = read_matrix_market((dir / "S.mtx").string());
    Y.V = read_matrix_market((dir / "V.mtx").string());
    if (Y.rows() != manifest.value("m", Index(-1)) || Y.rank() != manifest.value("r", Index(-1)))
        throw std::runtime_error("load_factor: manifest disagrees with matrix files in " + dir.string());
    check_factor(Y);
    return Y;
}

}  // namespace lrsplit
