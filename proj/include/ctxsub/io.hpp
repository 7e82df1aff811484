#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ctxsub/error.hpp"

namespace ctxsub {

// Byte-level little-endian packing so files read back identically on any
// host byte order.

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_u64(std::string& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
  public:
    ByteReader(const std::string& bytes, std::string origin)
        : bytes_(bytes), origin_(std::move(origin)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string tag(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

  private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size())
            raise(ErrorCode::TruncatedPayload,
                  origin_ + ": need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                      ", file has " + std::to_string(bytes_.size()));
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::filesystem::path& path);

/// Write via "<path>.tmp" then rename, so readers never observe a partial
/// file and failed runs leave the previous output intact.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

/// Shortest round-trip decimal form of a double (via std::to_chars); used
/// everywhere text output must be bitwise reproducible.
std::string format_double(double v);

}  // namespace ctxsub
