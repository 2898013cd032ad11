#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "firescar/grid.hpp"

namespace firescar::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError(std::string("truncated file while reading ") + what);
    return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 24) {
    const auto n = get<std::uint32_t>(in, what);
    if (n > max_len) throw FormatError(std::string("implausible string length for ") + what);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw FormatError(std::string("truncated file while reading ") + what);
    return s;
}

template <typename T>
void put_array(std::ostream& out, const T* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void get_array(std::istream& in, T* data, std::size_t n, const char* what) {
    if (n && !in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T))))
        throw FormatError(std::string("truncated file while reading ") + what);
}

}  // namespace firescar::io
