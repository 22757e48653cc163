#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vimu/network.hpp"

namespace vimu {

// Parameter checkpoint layout (all integers little-endian):
//
//   "VIMU"            4 bytes magic
//   u16               format version (1)
//   u32               record count
//   per record:
//     u32 + bytes     tensor name
//     u8              1 = trainable, 0 = running statistic
//     u32             rank
//     u32 x rank      dims
//     f32 x prod      values, row-major
//   u32               CRC-32 of every preceding byte
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamSet<float>& ps);
ParamSet<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& ps);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Little-endian byte writer/reader shared by the binary formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void str(const std::string& s);
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    float f32();
    std::string str(std::size_t max_len = 4096);
    void expect_bytes(std::span<const std::uint8_t> magic, const char* what);
    std::size_t remaining() const { return b_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const;
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace vimu
