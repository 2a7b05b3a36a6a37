#include "mdiag/binio.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "mdiag/error.hpp"

namespace mdiag::binio {

namespace {

template <typename U>
void put_le(std::vector<unsigned char>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

template <typename U>
U get_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void Writer::magic(std::string_view four_cc) {
    for (std::size_t i = 0; i < 4; ++i)
        bytes_.push_back(static_cast<unsigned char>(i < four_cc.size() ? four_cc[i] : ' '));
}

void Writer::u32(std::uint32_t v) { put_le(bytes_, v); }
void Writer::u64(std::uint64_t v) { put_le(bytes_, v); }
void Writer::f32(float v) { put_le(bytes_, std::bit_cast<std::uint32_t>(v)); }
void Writer::f64(double v) { put_le(bytes_, std::bit_cast<std::uint64_t>(v)); }

void Writer::f32s(std::span<const float> vs) {
    bytes_.reserve(bytes_.size() + 4 * vs.size());
    for (float v : vs) f32(v);
}

void Writer::f64s(std::span<const double> vs) {
    bytes_.reserve(bytes_.size() + 8 * vs.size());
    for (double v : vs) f64(v);
}

void Writer::flush(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Reader::Reader(std::vector<unsigned char> bytes, std::string source)
    : bytes_(std::move(bytes)), source_(std::move(source)) {}

Reader Reader::open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(bytes), path.string());
}

void Reader::need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated file");
}

std::string Reader::magic() {
    need(4);
    std::string m(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return m;
}

std::uint32_t Reader::u32() {
    need(4);
    const auto v = get_le<std::uint32_t>(bytes_.data() + pos_);
    pos_ += 4;
    return v;
}

std::uint64_t Reader::u64() {
    need(8);
    const auto v = get_le<std::uint64_t>(bytes_.data() + pos_);
    pos_ += 8;
    return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

void Reader::f32s(std::span<float> out) {
    need(4 * out.size());
    for (auto& v : out) v = f32();
}

void Reader::f64s(std::span<double> out) {
    need(8 * out.size());
    for (auto& v : out) v = f64();
}

void Reader::expect_end() const {
    if (!at_end()) throw FormatError(source_ + ": unexpected trailing bytes");
}

std::string peek_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char buf[4] = {};
    in.read(buf, 4);
    if (in.gcount() < 4) return {};
    return std::string(buf, 4);
}

}  // namespace mdiag::binio
