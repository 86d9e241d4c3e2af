#pragma once

// Little-endian encoding helpers shared by the key, checkpoint, and dataset
// file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "casii/error.hpp"

namespace casii::detail {

class ByteWriter {
public:
    void magic(std::string_view tag) { bytes_.append(tag); }

    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) bytes_.push_back(static_cast<char>((v >> shift) & 0xFFu));
    }

    void u64(std::uint64_t v) {
        for (int shift = 0; shift < 64; shift += 8) bytes_.push_back(static_cast<char>((v >> shift) & 0xFFu));
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    const std::string& bytes() const noexcept { return bytes_; }

private:
    std::string bytes_;
};

class ByteReader {
public:
    ByteReader(std::string bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

    void expect_magic(std::string_view tag) {
        need(tag.size());
        if (std::string_view(bytes_).substr(pos_, tag.size()) != tag) {
            fail(Errc::bad_magic, what_ + ": bad magic bytes (expected \"" + std::string(tag) + "\")");
        }
        pos_ += tag.size();
    }

    void expect_version(std::uint32_t expected) {
        const std::uint32_t v = u32();
        if (v != expected) {
            fail(Errc::version_mismatch,
                 what_ + ": unsupported version " + std::to_string(v) + " (expected " + std::to_string(expected) + ")");
        }
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    /// Fails with Errc::truncated unless `count` more bytes are available.
    void need(std::size_t count) const {
        if (bytes_.size() - pos_ < count) fail(Errc::truncated, what_ + ": file is truncated");
    }

    void expect_end() const {
        if (pos_ != bytes_.size()) fail(Errc::malformed, what_ + ": trailing bytes after payload");
    }

    const std::string& what() const noexcept { return what_; }

private:
    std::string bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path.string() + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io, "write to " + path.string() + " failed");
}

}  // namespace casii::detail
