#include "vimu/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace vimu {

namespace {
constexpr std::uint8_t kMagic[4] = {'V', 'I', 'M', 'U'};
// Guards against absurd dims in corrupt files before any allocation.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;
}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong c = crc32(0L, Z_NULL, 0);
    c = crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(c);
}

void ByteWriter::u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw TruncatedError("unexpected end of data at byte " + std::to_string(pos_));
}

std::uint8_t ByteReader::u8() {
    need(1);
    return b_[pos_++];
}

std::uint16_t ByteReader::u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::str(std::size_t max_len) {
    const std::uint32_t n = u32();
    if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
}

void ByteReader::expect_bytes(std::span<const std::uint8_t> magic, const char* what) {
    need(magic.size());
    if (std::memcmp(b_.data() + pos_, magic.data(), magic.size()) != 0) throw FormatError(std::string("bad magic for ") + what);
    pos_ += magic.size();
}

std::vector<std::uint8_t> encode_checkpoint(const ParamSet<float>& ps) {
    ByteWriter w;
    w.bytes(kMagic);
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ps.entries().size()));
    for (const auto& [name, e] : ps.entries()) {
        w.str(name);
        w.u8(e.trainable ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : e.value.values()) w.f32(v);
    }
    const std::uint32_t crc = crc32_of(w.buffer());
    w.u32(crc);
    return std::move(w.buffer());
}

ParamSet<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4) throw TruncatedError("checkpoint truncated");
    ByteReader r(bytes);
    r.expect_bytes(kMagic, "checkpoint");
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    ParamSet<float> ps;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const bool trainable = r.u8() != 0;
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw FormatError("bad tensor rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t total = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const std::uint32_t d = r.u32();
            if (d == 0) throw FormatError("zero dimension in tensor '" + name + "'");
            total *= d;
            if (total > kMaxElements) throw FormatError("tensor '" + name + "' dims overflow");
            shape.push_back(d);
        }
        if (r.remaining() < total * 4 + 4) throw TruncatedError("checkpoint truncated in tensor '" + name + "'");
        std::vector<float> values(total);
        for (auto& v : values) v = r.f32();
        ps.add(name, Tensor<float>(std::move(shape), std::move(values)), trainable);
    }
    const std::size_t body = r.position();
    const std::uint32_t stored = r.u32();
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
    if (crc32_of(bytes.subspan(0, body)) != stored) throw ChecksumError("checkpoint CRC mismatch");
    return ps;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& ps) {
    write_file_bytes(path, encode_checkpoint(ps));
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace vimu
