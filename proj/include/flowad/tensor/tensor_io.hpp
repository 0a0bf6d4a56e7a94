#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/tensor/tensor.hpp"

namespace flowad {

// Tensor file layout: magic "FLT1", u32 rank, u32 per-dim sizes, then the
// row-major f64 payload. All integers and doubles little-endian.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

inline void put_f64(std::ostream& os, double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_f64(std::istream& is, double& d) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&d, &u, 8);
    return true;
}

} // namespace detail

inline void write_tensor_file(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write("FLT1", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_f64(os, v);
    if (!os) throw IoError("write failed: " + path.string());
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FLT1", 4) != 0)
        throw FormatError("bad tensor magic in " + path.string());
    std::uint32_t rank;
    if (!detail::get_u32(is, rank)) throw FormatError("truncated tensor header in " + path.string());
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank) +
                                    " in " + path.string());
    Shape shape(rank);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint32_t d;
        if (!detail::get_u32(is, d)) throw FormatError("truncated tensor dims in " + path.string());
        if (d > (1u << 28)) throw FormatError("implausible dimension in " + path.string());
        shape[i] = static_cast<int>(d);
        n *= d;
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!detail::get_f64(is, data[i]))
            throw FormatError("truncated tensor payload in " + path.string());
    return Tensor(std::move(shape), std::move(data));
}

} // namespace flowad
