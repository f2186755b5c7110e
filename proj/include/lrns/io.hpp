#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lrns/fem.hpp"
#include "lrns/lowrank.hpp"
#include "lrns/matrix.hpp"

namespace lrns {

/// Round-trip-safe decimal for every number emitted to CSV.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline void put_u64_le(std::ofstream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

inline std::uint64_t get_u64_le(std::ifstream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

inline void put_f64_le(std::ofstream& out, double d) {
    put_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

inline double get_f64_le(std::ifstream& in) { return std::bit_cast<double>(get_u64_le(in)); }

}  // namespace detail

/// Binary matrix layout: two little-endian 64-bit counts (rows, cols), then
/// row-major little-endian 64-bit floats.
inline void write_matrix_file(const std::filesystem::path& path, const DenseMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_matrix_file: cannot open " + path.string());
    detail::put_u64_le(out, m.rows);
    detail::put_u64_le(out, m.cols);
    for (double v : m.data) detail::put_f64_le(out, v);
    if (!out) throw std::runtime_error("write_matrix_file: write failed for " + path.string());
}

inline DenseMatrix read_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_matrix_file: cannot open " + path.string());
    const std::uint64_t rows = detail::get_u64_le(in);
    const std::uint64_t cols = detail::get_u64_le(in);
    if (!in || rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
        throw std::runtime_error("read_matrix_file: bad header in " + path.string());
    DenseMatrix m(rows, cols);
    for (double& v : m.data) v = detail::get_f64_le(in);
    if (!in) throw std::runtime_error("read_matrix_file: truncated data in " + path.string());
    if (!m.all_finite())
        throw std::runtime_error("read_matrix_file: non-finite entries in " + path.string());
    return m;
}

/// Collection directory: manifest.txt lists member files in order, one
/// relative filename per line.
inline void write_collection(const std::filesystem::path& dir, const MatrixCollection& coll) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("write_collection: cannot open manifest");
    for (std::size_t m = 0; m < coll.count(); ++m) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05zu.mat", m);
        write_matrix_file(dir / name, coll.samples[m]);
        manifest << name << "\n";
    }
}

inline MatrixCollection read_collection(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest)
        throw std::runtime_error("read_collection: missing manifest.txt in " + dir.string());
    std::vector<DenseMatrix> samples;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        samples.push_back(read_matrix_file(dir / line));
    }
    if (samples.empty()) throw std::runtime_error("read_collection: manifest lists no files");
    return MatrixCollection(std::move(samples));
}

/// Minimal CSV writer; every value is rendered with format_number.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : out_(path) {
        if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << format_number(values[i]);
        out_ << "\n";
    }

  private:
    std::ofstream out_;
};

/// Nodal field CSV: x, y, value per node in row-major node order.
inline void write_nodal_csv(const std::filesystem::path& path, const StructuredMesh& mesh,
                            std::span<const double> values) {
    detail::require(values.size() == mesh.node_count(), "write_nodal_csv: size mismatch");
    CsvWriter csv(path, {"x", "y", "value"});
    for (std::size_t i = 0; i < values.size(); ++i)
        csv.row({mesh.node_x[i], mesh.node_y[i], values[i]});
}

}  // namespace lrns
