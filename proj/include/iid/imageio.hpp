#pragma once

#include "iid/ccr.hpp"
#include "iid/core.hpp"
#include "iid/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace iid {

// Binary PNM (P5/P6) at 8- or 16-bit depth. 16-bit linear files are the
// canonical interchange format; 8-bit files are for display only. Samples
// are big-endian at 16 bits, per the format.

inline void write_pnm(const std::string& path, const Image& img, int bits = 16) {
    if (bits != 8 && bits != 16) throw ConfigError("write_pnm: bits must be 8 or 16");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_pnm: cannot open " + path);
    const int maxval = bits == 8 ? 255 : 65535;
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n"
        << maxval << "\n";
    for (double v : img.data) {
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * maxval);
        if (bits == 8) {
            out.put(static_cast<char>(q));
        } else {
            out.put(static_cast<char>((q >> 8) & 0xff));
            out.put(static_cast<char>(q & 0xff));
        }
    }
    if (!out) throw IoError("write_pnm: write failed for " + path);
}

namespace detail {

inline int pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments, then reads one unsigned integer.
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    if (c == EOF) throw IoError("read_pnm: unexpected end of header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

} // namespace detail

inline Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pnm: cannot open " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        throw IoError("read_pnm: not a binary PGM/PPM file: " + path);
    const int channels = magic[1] == '5' ? 1 : 3;
    const int width = detail::pnm_token(in);
    const int height = detail::pnm_token(in);
    const int maxval = detail::pnm_token(in);
    if (width <= 0 || height <= 0 || (maxval != 255 && maxval != 65535))
        throw IoError("read_pnm: unsupported header in " + path);
    Image img(height, width, channels);
    const std::size_t n = img.size();
    if (maxval == 255) {
        std::string buf(n, '\0');
        in.read(buf.data(), static_cast<std::streamsize>(n));
        if (!in) throw IoError("read_pnm: truncated pixel data in " + path);
        for (std::size_t i = 0; i < n; ++i)
            img.data[i] = static_cast<unsigned char>(buf[i]) / 255.0;
    } else {
        std::string buf(2 * n, '\0');
        in.read(buf.data(), static_cast<std::streamsize>(2 * n));
        if (!in) throw IoError("read_pnm: truncated pixel data in " + path);
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned hi = static_cast<unsigned char>(buf[2 * i]);
            const unsigned lo = static_cast<unsigned char>(buf[2 * i + 1]);
            img.data[i] = ((hi << 8) | lo) / 65535.0;
        }
    }
    return img;
}

// Raw descriptor dump: "CCR6" magic, u32le height and width, then float64
// little-endian samples in (row, col, channel) order.
inline void write_ccr_raw(const std::string& path, const CcrMap& map) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_ccr_raw: cannot open " + path);
    out.write("CCR6", 4);
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(map.height),
                                   static_cast<std::uint32_t>(map.width)};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(map.data.data()),
              static_cast<std::streamsize>(map.data.size() * sizeof(double)));
    if (!out) throw IoError("write_ccr_raw: write failed for " + path);
}

inline CcrMap read_ccr_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ccr_raw: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CCR6", 4) != 0)
        throw IoError("read_ccr_raw: bad magic in " + path);
    std::uint32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in) throw IoError("read_ccr_raw: truncated header in " + path);
    CcrMap map(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    in.read(reinterpret_cast<char*>(map.data.data()),
            static_cast<std::streamsize>(map.data.size() * sizeof(double)));
    if (!in) throw IoError("read_ccr_raw: truncated data in " + path);
    return map;
}

} // namespace iid
