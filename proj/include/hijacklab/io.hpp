#pragma once

// Little-endian binary primitives and CSV formatting shared by the artifact
// readers/writers. All binary artifacts are explicitly little-endian so files
// are portable across hosts.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hijacklab/errors.hpp"

namespace hijacklab::io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw ParseError(std::string("truncated file while reading ") + what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw ParseError(std::string("truncated file while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2))
        throw ParseError(std::string("truncated file while reading ") + what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline double read_f64(std::istream& is, const char* what) {
    std::uint64_t bits = read_u64(is, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

/// Big-endian u32, as used by the IDX format.
inline std::uint32_t read_u32_be(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw ParseError(std::string("truncated file while reading ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_magic(std::ostream& os, const char magic[4]) {
    os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char b[4];
    if (!is.read(b, 4)) throw ParseError(std::string("truncated file while reading ") + what);
    if (std::memcmp(b, magic, 4) != 0)
        throw ParseError(std::string("bad magic for ") + what + ": expected '" +
                         std::string(magic, 4) + "', got '" + std::string(b, 4) + "'");
}

/// Shortest round-trip decimal form of a double ("0.1", "21.27", "1e-06").
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(std::string("bad number '") + std::string(s) + "' in " + what);
    return v;
}

inline long long parse_int(std::string_view s, const char* what) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(std::string("bad integer '") + std::string(s) + "' in " + what);
    return v;
}

/// Splits one CSV record; fields in this project never contain commas.
std::vector<std::string> split_csv_line(const std::string& line);

/// Reads a CSV file: skips '#'-prefixed provenance lines, returns the header
/// fields and one vector per record.
struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;
};
CsvFile read_csv(const std::filesystem::path& path);

/// Writes bytes to `path` atomically (temp file + rename).
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace hijacklab::io
