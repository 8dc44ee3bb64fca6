#include "mexit/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "mexit/error.hpp"

namespace mexit {

namespace {

constexpr std::array<unsigned char, 8> kNetworkMagic{'M', 'E', 'X', 'T', 'N', 'E', 'T', '\0'};

void write_shape(ByteWriter& out, const Shape& s) {
  out.u32(static_cast<std::uint32_t>(s.size()));
  for (std::size_t d : s) out.u64(d);
}

Shape read_shape(ByteReader& in) {
  const std::uint32_t rank = in.u32();
  if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank) + " at byte " + std::to_string(in.offset()));
  Shape s(rank);
  for (auto& d : s) d = in.u64();
  return s;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n, const char* what) const {
  if (data_.size() - offset_ < n) {
    throw FormatError(std::string("truncated data reading ") + what + " at byte " + std::to_string(offset_));
  }
}

std::uint8_t ByteReader::u8() {
  need(1, "u8");
  return data_[offset_++];
}

std::uint32_t ByteReader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[offset_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[offset_++]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n, "string");
  std::string s(reinterpret_cast<const char*>(data_.data() + offset_), n);
  offset_ += n;
  return s;
}

void ByteReader::expect(std::span<const unsigned char> magic, const std::string& what) {
  need(magic.size(), "magic");
  if (std::memcmp(data_.data() + offset_, magic.data(), magic.size()) != 0) {
    throw FormatError("bad magic at byte " + std::to_string(offset_) + ": not a " + what);
  }
  offset_ += magic.size();
}

void write_network(ByteWriter& out, const Network& net) {
  out.raw(kNetworkMagic);
  out.u32(kCheckpointVersion);
  out.str(net.name);
  write_shape(out, net.input_shape);
  out.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const LayerSpec& l : net.layers) {
    out.u8(static_cast<std::uint8_t>(l.kind));
    out.u64(l.units);
    out.u64(l.filters);
    out.u64(l.kernel);
    out.u64(l.stride);
    out.u8(static_cast<std::uint8_t>(l.padding));
    out.f64(l.rate);
  }
  out.u64(net.params.optimizer_step());
  out.u32(static_cast<std::uint32_t>(net.params.size()));
  for (const auto& [name, p] : net.params) {
    out.str(name);
    out.u8(p.frozen ? 1 : 0);
    write_shape(out, p.value.shape());
    for (double v : p.value.data()) out.f64(v);
  }
}

Network read_network(ByteReader& in) {
  in.expect(kNetworkMagic, "network checkpoint");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported network checkpoint version " + std::to_string(version));
  }
  Network net;
  net.name = in.str();
  net.input_shape = read_shape(in);
  const std::uint32_t layers = in.u32();
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSpec l;
    const std::size_t at = in.offset();
    const std::uint8_t kind = in.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::softmax)) throw FormatError("bad layer kind at byte " + std::to_string(at));
    l.kind = static_cast<LayerKind>(kind);
    l.units = in.u64();
    l.filters = in.u64();
    l.kernel = in.u64();
    l.stride = in.u64();
    l.padding = in.u8() ? Padding::valid : Padding::same;
    l.rate = in.f64();
    net.layers.push_back(l);
  }
  const std::uint64_t step = in.u64();
  const std::uint32_t tensors = in.u32();
  for (std::uint32_t i = 0; i < tensors; ++i) {
    std::string name = in.str();
    const bool frozen = in.u8() != 0;
    Shape shape = read_shape(in);
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = in.f64();
    net.params.add(name, Tensor(std::move(shape), std::move(values)), frozen);
  }
  net.params.set_optimizer_step(step);

  // The stored parameter table must match what the layer chain expects.
  const ParameterStore expected = init_parameters(net.name, net.input_shape, net.layers, 0);
  if (expected.size() != net.params.size()) throw FormatError("checkpoint parameter table does not match its layers");
  for (const auto& [name, p] : expected) {
    if (!net.params.contains(name) || net.params.value(name).shape() != p.value.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' missing or misshapen");
    }
  }
  return net;
}

std::vector<unsigned char> serialize_network(const Network& net) {
  ByteWriter w;
  write_network(w, net);
  return w.take();
}

Network deserialize_network(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  Network net = read_network(r);
  if (!r.at_end()) throw FormatError("trailing bytes after network checkpoint at byte " + std::to_string(r.offset()));
  return net;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void save_network(const std::filesystem::path& path, const Network& net) { write_file(path, serialize_network(net)); }

Network load_network(const std::filesystem::path& path) { return deserialize_network(read_file(path)); }

}  // namespace mexit
