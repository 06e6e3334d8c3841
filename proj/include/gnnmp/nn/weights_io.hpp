#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "gnnmp/errors.hpp"
#include "gnnmp/nn/layers.hpp"

namespace gnnmp::nn {

// Weight container layout (all integers little-endian):
//   "GNNW" | u32 version | u32 n_meta | n_meta x (str key, str value)
//   | u32 n_blocks | n_blocks x (str name, u8 trainable, u32 ndim, ndim x u64 dim, f64 payload)
//   | u64 FNV-1a checksum of every preceding byte
// where str = u32 length followed by the bytes.

inline constexpr std::uint32_t kWeightFormatVersion = 1;

using WeightMeta = std::map<std::string, std::string>;

namespace detail {

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw FormatError("weight file truncated");
  }
  const std::uint8_t* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct WeightBlock {
  std::string name;
  bool trainable = true;
  Matrix value;
};

struct WeightFile {
  WeightMeta meta;
  std::vector<WeightBlock> blocks;
};

inline std::vector<std::uint8_t> serialize_weights(const ParameterStore& store, const WeightMeta& meta) {
  detail::Writer w;
  for (char c : std::string("GNNW")) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store.at(i);
    w.str(p.name);
    w.u8(p.trainable ? 1 : 0);
    w.u32(2);
    w.u64(p.value.rows);
    w.u64(p.value.cols);
    for (double v : p.value.data) w.f64(v);
  }
  const std::uint64_t sum = detail::fnv1a(w.bytes.data(), w.bytes.size());
  w.u64(sum);
  return std::move(w.bytes);
}

inline WeightFile parse_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "GNNW", 4) != 0) throw FormatError("not a weight file");
  const std::size_t body = bytes.size() - 8;
  detail::Reader tail(bytes.data() + body, 8);
  if (tail.u64() != detail::fnv1a(bytes.data(), body)) throw FormatError("weight file checksum mismatch");
  detail::Reader r(bytes.data() + 4, body - 4);
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) throw FormatError("unsupported weight format version " + std::to_string(version));
  WeightFile f;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    f.meta[k] = r.str();
  }
  const std::uint32_t n_blocks = r.u32();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    WeightBlock b;
    b.name = r.str();
    b.trainable = r.u8() != 0;
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) throw FormatError("only rank-2 blocks are supported");
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    b.value = Matrix(rows, cols);
    for (double& v : b.value.data) v = r.f64();
    f.blocks.push_back(std::move(b));
  }
  return f;
}

/// Copies blocks into a store with the same layout; every store entry must be present with a matching shape.
inline void apply_weights(const WeightFile& f, ParameterStore& store) {
  std::map<std::string, const WeightBlock*> by_name;
  for (const auto& b : f.blocks) by_name[b.name] = &b;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store.at(i);
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("weight file is missing block " + p.name);
    if (!it->second->value.same_shape(p.value)) throw FormatError("shape mismatch for block " + p.name);
    p.value = it->second->value;
  }
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace gnnmp::nn
