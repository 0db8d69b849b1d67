#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "collafuse/errors.hpp"
#include "collafuse/types.hpp"

namespace collafuse {

// Little-endian primitive serialization shared by the protocol, checkpoints
// and dataset containers. The build targets little-endian hosts; values are
// memcpy'd in native order.

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) { raw(&v, sizeof v); }
  void u64(uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  const std::vector<uint8_t>& buffer() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8() { return *take(1); }
  uint32_t u32() { return read_as<uint32_t>(); }
  uint64_t u64() { return read_as<uint64_t>(); }
  float f32() { return read_as<float>(); }
  double f64() { return read_as<double>(); }
  std::string str() {
    uint32_t n = u32();
    const uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::span<const uint8_t> bytes(size_t n) { return {take(n), n}; }

  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }

 private:
  template <typename T>
  T read_as() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const uint8_t* take(size_t n) {
    if (pos_ + n > data_.size()) throw Truncated("read past end of buffer");
    const uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

// FNV-1a; any single-byte substitution provably changes the digest.
inline uint32_t fnv1a32(std::span<const uint8_t> data) {
  uint32_t h = 2166136261u;
  for (uint8_t b : data) {
    h ^= b;
    h *= 16777619u;
  }
  return h;
}

inline uint64_t fnv1a64(std::span<const uint8_t> data) {
  uint64_t h = 14695981039346656037ull;
  for (uint8_t b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

std::vector<uint8_t> read_file(const std::string& path);   // throws IoError
void write_file_atomic(const std::string& path, std::span<const uint8_t> data);
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace collafuse
