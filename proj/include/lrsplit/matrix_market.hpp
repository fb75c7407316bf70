#pragma once

#include "lrsplit/dense.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lrsplit {

/// Parse failure with the offending file position attached.
struct MatrixMarketError : std::runtime_error {
    long line;  // 1-based line number of the offending input line

    MatrixMarketError(const std::string& path, long line_number, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line_number) + ": " + what), line(line_number) {}
};

namespace detail {

inline std::string lowercase(std::string s)
{
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

/// Reads a real Matrix Market file, array or coordinate layout, into a dense
/// matrix. Symmetric and skew-symmetric coordinate files are expanded.
inline DenseMatrix<double> read_matrix_market(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("read_matrix_market: cannot open " + path);

    long lineno = 0;
    std::string line;
    if (!std::getline(in, line))
        throw MatrixMarketError(path, 1, "empty file");
    ++lineno;

    std::istringstream header(line);
    std::string banner, object, layout, field, symmetry;
    header >> banner >> object >> layout >> field >> symmetry;
    if (banner != "%%MatrixMarket")
        throw MatrixMarketError(path, lineno, "missing %%MatrixMarket banner");
    object = detail::lowercase(object);
    layout = detail::lowercase(layout);
    field = detail::lowercase(field);
    symmetry = detail::lowercase(symmetry);
    if (object != "matrix")
        throw MatrixMarketError(path, lineno, "unsupported object '" + object + "'");
    if (layout != "array" && layout != "coordinate")
        throw MatrixMarketError(path, lineno, "unsupported layout '" + layout + "'");
    if (field != "real" && field != "integer" && field != "double")
        throw MatrixMarketError(path, lineno, "unsupported field '" + field + "'");
    if (symmetry != "general" && symmetry != "symmetric" && symmetry != "skew-symmetric")
        throw MatrixMarketError(path, lineno, "unsupported symmetry '" + symmetry + "'");

    auto next_data_line = [&](std::string& out) -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            const auto pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos) continue;
            if (line[pos] == '%') continue;
            out = line;
            return true;
        }
        return false;
    };

    std::string sizes;
    if (!next_data_line(sizes))
        throw MatrixMarketError(path, lineno, "missing size line");
    std::istringstream size_stream(sizes);

    if (layout == "array") {
        long rows = 0, cols = 0;
        if (!(size_stream >> rows >> cols) || rows < 1 || cols < 1)
            throw MatrixMarketError(path, lineno, "invalid array size line");
        DenseMatrix<double> M(rows, cols);
        const bool general = symmetry == "general";
        for (long j = 0; j < cols; ++j) {
            const long istart = general ? 0 : j;  // symmetric array files store the lower triangle
            for (long i = istart; i < rows; ++i) {
                std::string data;
                if (!next_data_line(data))
                    throw MatrixMarketError(path, lineno, "unexpected end of file in array data");
                std::istringstream v(data);
                double value = 0;
                if (!(v >> value))
                    throw MatrixMarketError(path, lineno, "invalid numeric entry");
                M(i, j) = value;
                if (!general) {
                    M(j, i) = symmetry == "symmetric" ? value : -value;
                    if (symmetry == "skew-symmetric" && i == j)
                        M(i, j) = value;
                }
            }
        }
        return M;
    }

    long rows = 0, cols = 0, nnz = 0;
    if (!(size_stream >> rows >> cols >> nnz) || rows < 1 || cols < 1 || nnz < 0)
        throw MatrixMarketError(path, lineno, "invalid coordinate size line");
    DenseMatrix<double> M = DenseMatrix<double>::Zero(rows, cols);
    for (long e = 0; e < nnz; ++e) {
        std::string data;
        if (!next_data_line(data))
            throw MatrixMarketError(path, lineno, "unexpected end of file in coordinate data");
        std::istringstream v(data);
        long i = 0, j = 0;
        double value = 0;
        if (!(v >> i >> j >> value))
            throw MatrixMarketError(path, lineno, "invalid coordinate entry");
        if (i < 1 || i > rows || j < 1 || j > cols)
            throw MatrixMarketError(path, lineno, "coordinate out of range");
        M(i - 1, j - 1) = value;
        if (symmetry != "general" && i != j)
            M(j - 1, i - 1) = symmetry == "symmetric" ? value : -value;
    }
    return M;
}

/// Writes a dense matrix in Matrix Market array format with full precision.
inline void write_matrix_market(const std::string& path, const DenseMatrix<double>& M)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("write_matrix_market: cannot open " + path);
    out << "%%MatrixMarket matrix array real general\n";
    out << M.rows() << " " << M.cols() << "\n";
    char buf[48];
    for (Index j = 0; j < M.cols(); ++j) {
        for (Index i = 0; i < M.rows(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", M(i, j));
            out << buf << "\n";
        }
    }
    if (!out)
        throw std::runtime_error("write_matrix_market: write failed for " + path);
}

}  // namespace lrsplit
