// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "semsplat/core/image.hpp"
#include "semsplat/io/binary.hpp"

namespace semsplat {

/// 8-bit binary PPM (P6) for 3-channel images; values clamped to [0, 1].
inline void write_ppm(const std::string& path, const ImageBuffer& img) {
    if (img.channels != 3) throw std::invalid_argument("write_ppm: image must have 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline ImageBuffer read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error(path + ": bad PPM magic at byte offset 0");
    const auto next_token = [&]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error(path + ": truncated PPM header");
    };
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error(path + ": unsupported PPM header");
    in.get(); // single whitespace after maxval
    ImageBuffer img(w, h, 3);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw std::runtime_error(path + ": truncated PPM payload");
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

/// Raw float maps: "FMAP" magic, u32 width/height/channels, then f32 data
/// row-major with interleaved channels, all little-endian.
inline void write_fmap(const std::string& path, const ImageBuffer& img) {
    BinaryWriter w(path);
    w.write_magic("FMAP");
    w.write_u32(static_cast<std::uint32_t>(img.width));
    w.write_u32(static_cast<std::uint32_t>(img.height));
    w.write_u32(static_cast<std::uint32_t>(img.channels));
    for (double v : img.data) w.write_f32(static_cast<float>(v));
}

inline ImageBuffer read_fmap(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("FMAP", "FMAP");
    const std::uint32_t w = r.read_u32();
    const std::uint32_t h = r.read_u32();
    const std::uint32_t c = r.read_u32();
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20) || c > (1u << 16))
        throw std::runtime_error(path + ": implausible FMAP header at byte offset 4");
    ImageBuffer img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    for (auto& v : img.data) v = static_cast<double>(r.read_f32());
    if (!r.at_eof()) throw std::runtime_error(path + ": trailing bytes at offset " + std::to_string(r.offset()));
    return img;
}

} // namespace semsplat
