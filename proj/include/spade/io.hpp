#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spade/errors.hpp"
#include "spade/tensor.hpp"

namespace spade {

// .spa container:
//   bytes 0-7    magic "SPAIMG01"
//   bytes 8-11   header length N, unsigned 32-bit little-endian
//   bytes 12..   UTF-8 JSON header
//   payload      L*H*W IEEE-754 binary32 little-endian, wavelength-major
//
// Values are converted to binary32 on write, so read(write(x)) is bit-exact
// whenever the in-memory doubles are binary32-representable (always true for
// data that came from a .spa file).

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr char kSpaMagic[8] = {'S', 'P', 'A', 'I', 'M', 'G', '0', '1'};

inline std::string encode_spa(const SpectralImage& img) {
    validate(img);
    nlohmann::json header;
    header["dims"] = {img.lambda, img.rows, img.cols};
    header["dtype"] = "f32le";
    header["order"] = "wavelength,row,col";
    header["wavelengths_nm"] = img.wavelengths_nm;
    header["pitch_mm"] = {{"axial", img.pitch_axial_mm}, {"lateral", img.pitch_lateral_mm}};
    if (!img.channels.empty()) header["channels"] = img.channels;
    const std::string hdr = header.dump();

    std::string out;
    out.reserve(12 + hdr.size() + img.data.size() * 4);
    out.append(kSpaMagic, 8);
    detail::put_u32_le(out, static_cast<std::uint32_t>(hdr.size()));
    out += hdr;
    for (double d : img.data) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d));
        detail::put_u32_le(out, bits);
    }
    return out;
}

inline SpectralImage decode_spa(const std::string& bytes, const std::string& origin = "<memory>") {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kSpaMagic, 8) != 0)
        throw BadMagic(origin + " is not a .spa container");
    const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t hdr_len = detail::get_u32_le(u + 8);
    if (bytes.size() < 12ull + hdr_len) throw HeaderMismatch(origin + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, hdr_len));
    } catch (const nlohmann::json::exception& e) {
        throw HeaderMismatch(origin + ": bad JSON header: " + e.what());
    }

    SpectralImage img;
    try {
        const auto dims = header.at("dims");
        if (dims.size() != 3) throw HeaderMismatch(origin + ": dims must have 3 entries");
        img.lambda = dims[0].get<int>();
        img.rows = dims[1].get<int>();
        img.cols = dims[2].get<int>();
        const std::string dtype = header.at("dtype").get<std::string>();
        if (dtype != "f32le") throw UnsupportedDtype(origin + ": dtype " + dtype);
        const std::string order = header.value("order", "wavelength,row,col");
        if (order != "wavelength,row,col")
            throw UnsupportedDtype(origin + ": unsupported order " + order);
        img.wavelengths_nm = header.at("wavelengths_nm").get<std::vector<double>>();
        img.pitch_axial_mm = header.at("pitch_mm").at("axial").get<double>();
        img.pitch_lateral_mm = header.at("pitch_mm").at("lateral").get<double>();
        if (header.contains("channels"))
            img.channels = header["channels"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw HeaderMismatch(origin + ": header field error: " + e.what());
    }
    if (img.lambda < 1 || img.rows < 1 || img.cols < 1)
        throw HeaderMismatch(origin + ": non-positive dims");

    const std::size_t count =
        static_cast<std::size_t>(img.lambda) * img.rows * img.cols;
    const std::size_t payload = bytes.size() - 12 - hdr_len;
    if (payload != count * 4)
        throw HeaderMismatch(origin + ": payload holds " + std::to_string(payload / 4) +
                             " values, header declares " + std::to_string(count));

    img.data.resize(count);
    const unsigned char* p = u + 12 + hdr_len;
    for (std::size_t i = 0; i < count; ++i, p += 4) {
        const std::uint32_t bits = detail::get_u32_le(p);
        img.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    validate(img, origin);
    return img;
}

inline void write_spa(const std::string& path, const SpectralImage& img) {
    const std::string bytes = encode_spa(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FileError("short write to " + path);
}

inline SpectralImage read_spa(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_spa(bytes, path);
}

// Binary PGM (P5, 16-bit, max-scaled) for visual inspection.
inline void write_pgm(const std::string& path, const Plane& p) {
    validate(p, "pgm source");
    double lo = p.v[0], hi = p.v[0];
    for (double x : p.v) {
        if (x < lo) lo = x;
        if (x > hi) hi = x;
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open " + path + " for writing");
    f << "P5\n" << p.cols << " " << p.rows << "\n65535\n";
    for (double x : p.v) {
        const auto q = static_cast<std::uint16_t>(std::lround(65535.0 * (x - lo) / span));
        // P5 16-bit samples are big-endian.
        f.put(static_cast<char>(q >> 8));
        f.put(static_cast<char>(q & 0xff));
    }
    if (!f) throw FileError("short write to " + path);
}

}  // namespace spade
