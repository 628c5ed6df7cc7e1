// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace semsplat {

/// Little-endian binary writer with explicit byte packing (host-endianness
/// independent).
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error(path + ": cannot open for writing");
    }

    void write_bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw std::runtime_error(path_ + ": write failed");
    }

    void write_magic(const char magic[4]) { write_bytes(magic, 4); }

    void write_u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        write_bytes(b, 4);
    }

    void write_f32(float v) { write_u32(std::bit_cast<std::uint32_t>(v)); }

    void write_f64(double v) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        write_bytes(b, 8);
    }

private:
    std::string path_;
    std::ofstream out_;
};

/// Reader with byte-offset error reporting for malformed files.
class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error(path + ": cannot open for reading");
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

    void read_bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw std::runtime_error(path_ + ": truncated at byte offset " + std::to_string(offset_));
        offset_ += n;
    }

    void expect_magic(const char magic[4], const std::string& what) {
        char buf[4];
        read_bytes(buf, 4);
        if (std::memcmp(buf, magic, 4) != 0)
            throw std::runtime_error(path_ + ": bad " + what + " magic at byte offset 0");
    }

    std::uint32_t read_u32() {
        unsigned char b[4];
        read_bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    float read_f32() { return std::bit_cast<float>(read_u32()); }

    double read_f64() {
        unsigned char b[8];
        read_bytes(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return std::bit_cast<double>(u);
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

} // namespace semsplat
