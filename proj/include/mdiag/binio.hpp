#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdiag::binio {

/// Accumulates a little-endian byte image in memory; flush() writes it in one go.
class Writer {
public:
    void magic(std::string_view four_cc);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void f32s(std::span<const float> vs);
    void f64s(std::span<const double> vs);

    const std::vector<unsigned char>& bytes() const { return bytes_; }
    /// Throws IoError on failure.
    void flush(const std::filesystem::path& path) const;

private:
    std::vector<unsigned char> bytes_;
};

/// Bounds-checked little-endian reader. Every overrun raises FormatError naming the source.
class Reader {
public:
    Reader(std::vector<unsigned char> bytes, std::string source);
    static Reader open(const std::filesystem::path& path);

    std::string magic();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    void f32s(std::span<float> out);
    void f64s(std::span<double> out);

    bool at_end() const { return pos_ == bytes_.size(); }
    /// FormatError if unread bytes remain.
    void expect_end() const;
    const std::string& source() const { return source_; }

private:
    void need(std::size_t n) const;

    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
    std::string source_;
};

/// Reads the first four bytes of a file (empty string if shorter).
std::string peek_magic(const std::filesystem::path& path);

}  // namespace mdiag::binio
