#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mexit/network.hpp"

namespace mexit {

/// Little-endian byte sink used by every binary format in the library.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string& s);
  void raw(std::span<const unsigned char> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }

  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::vector<unsigned char> take() { return std::move(bytes_); }

 private:
  std::vector<unsigned char> bytes_;
};

/// Bounds-checked reader; errors carry the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  void expect(std::span<const unsigned char> magic, const std::string& what);

  std::size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == data_.size(); }

 private:
  void need(std::size_t n, const char* what) const;

  std::span<const unsigned char> data_;
  std::size_t offset_ = 0;
};

/// Network checkpoint layout (all integers little-endian):
///   magic "MEXTNET\0" | u32 version
///   str name | u32 rank, u64 dims... (input shape)
///   u32 layer count | per layer: u8 kind, u64 units, u64 filters, u64 kernel,
///                                u64 stride, u8 padding, f64 rate
///   u64 optimizer step
///   u32 tensor count | per tensor: str name, u8 frozen, u32 rank, u64 dims...,
///                                  f64 values...
/// where str is u32 length followed by the bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_network(ByteWriter& out, const Network& net);
Network read_network(ByteReader& in);

std::vector<unsigned char> serialize_network(const Network& net);
Network deserialize_network(std::span<const unsigned char> bytes);

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);
std::vector<unsigned char> read_file(const std::filesystem::path& path);

void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

}  // namespace mexit
