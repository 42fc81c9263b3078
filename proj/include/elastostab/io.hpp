#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "elastostab/grid.hpp"

namespace elastostab {

struct IoError : Error {
    using Error::Error;
};

namespace io {

using json = nlohmann::ordered_json;

inline const char* kind_name(int nc) {
    switch (nc) {
        case 1: return "scalar";
        case 3: return "vector";
        case 6: return "symtensor";
    }
    throw IoError("unknown field kind");
}

/// Round to 12 significant digits; used before JSON serialization so that
/// repeated runs with a fixed seed emit byte-identical files.
inline double round_sig(double x, int digits = 12) {
    if (x == 0.0 || !std::isfinite(x)) return x;
    std::ostringstream os;
    os.precision(digits);
    os << x;
    return std::stod(os.str());
}

inline json rounded(double x) { return json(round_sig(x)); }

/// Field file: 8-byte little-endian header length, JSON header, then the
/// flat float64 payload in x-fastest order (component, then snapshot,
/// slowest).
template <int NC>
void write_field(const FieldT<NC>& f, const std::filesystem::path& path) {
    const Grid& g = f.grid();
    json hdr;
    hdr["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
    hdr["spacing"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
    hdr["origin"] = {g.origin[0], g.origin[1], g.origin[2]};
    hdr["snapshots"] = g.snapshots;
    hdr["dt"] = g.dt;
    hdr["kind"] = kind_name(NC);
    hdr["dtype"] = "f64le";
    const std::string htxt = hdr.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const std::uint64_t hlen = htxt.size();
    unsigned char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = (unsigned char)((hlen >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(lenbuf), 8);
    out.write(htxt.data(), std::streamsize(htxt.size()));
    out.write(reinterpret_cast<const char*>(f.raw().data()),
              std::streamsize(f.raw().size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path.string());
}

inline json read_field_header(std::ifstream& in, const std::string& name) {
    unsigned char lenbuf[8];
    in.read(reinterpret_cast<char*>(lenbuf), 8);
    if (!in) throw IoError("truncated field file: " + name);
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= std::uint64_t(lenbuf[i]) << (8 * i);
    if (hlen > (1u << 20)) throw IoError("implausible header length in " + name);
    std::string htxt(hlen, '\0');
    in.read(htxt.data(), std::streamsize(hlen));
    if (!in) throw IoError("truncated field header: " + name);
    return json::parse(htxt);
}

template <int NC>
FieldT<NC> read_field(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    json hdr = read_field_header(in, path.string());
    if (hdr.at("kind").get<std::string>() != kind_name(NC))
        throw IoError("field kind mismatch in " + path.string());
    if (hdr.at("dtype").get<std::string>() != "f64le")
        throw IoError("unsupported dtype in " + path.string());
    Grid g({hdr.at("dims")[0].get<index_t>(), hdr.at("dims")[1].get<index_t>(),
            hdr.at("dims")[2].get<index_t>()},
           {hdr.at("spacing")[0].get<double>(), hdr.at("spacing")[1].get<double>(),
            hdr.at("spacing")[2].get<double>()},
           {hdr.at("origin")[0].get<double>(), hdr.at("origin")[1].get<double>(),
            hdr.at("origin")[2].get<double>()},
           hdr.at("snapshots").get<index_t>(), hdr.at("dt").get<double>());
    FieldT<NC> f(g);
    in.read(reinterpret_cast<char*>(f.raw().data()),
            std::streamsize(f.raw().size() * sizeof(double)));
    if (!in) throw IoError("truncated field payload: " + path.string());
    return f;
}

/// CSV export: one row per (point, snapshot), coordinates then components.
template <int NC>
void write_csv(const FieldT<NC>& f, const std::filesystem::path& path) {
    const Grid& g = f.grid();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "x1,x2,x3";
    if (g.dynamic()) out << ",t";
    for (int c = 0; c < NC; ++c) out << ",v" << c;
    out << "\n";
    char buf[64];
    for (index_t s = 0; s < g.snapshot_count(); ++s)
        for (index_t p = 0; p < g.points(); ++p) {
            auto x = g.point(p);
            std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g", x[0], x[1], x[2]);
            out << buf;
            if (g.dynamic()) {
                std::snprintf(buf, sizeof buf, ",%.12g", g.time_of(s));
                out << buf;
            }
            for (int c = 0; c < NC; ++c) {
                std::snprintf(buf, sizeof buf, ",%.12g", f.at(p, c, s));
                out << buf;
            }
            out << "\n";
        }
}

inline void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace io
}  // namespace elastostab
