// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary tensor container. A file is a sequence of records:
//
//   magic     4 bytes  "MMWT"
//   version   u16      (currently 1)
//   dtype     u8       see DType
//   reserved  u8       0
//   rank      u32
//   dims      rank x u64
//   name_len  u32, name bytes (UTF-8)
//   meta_len  u32, meta bytes (JSON text)
//   payload_len u64
//   payload_crc u32    CRC-32 of the payload bytes
//   header_crc  u32    CRC-32 of every header byte before this field
//   payload   payload_len bytes
//
// All integers and floats are little-endian. Complex values are interleaved
// (re, im) pairs of IEEE-754 doubles.

#include "mmwcs/types.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmwcs {

enum class DType : std::uint8_t { f64 = 1, c128 = 2, i64 = 3, u8 = 4 };

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64: return 8;
    case DType::c128: return 16;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  throw std::invalid_argument("unknown dtype");
}

struct Tensor {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> shape;
  std::string meta;  // JSON text, may be empty
  std::vector<std::uint8_t> payload;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

class TensorFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr char kTensorMagic[4] = {'M', 'M', 'W', 'T'};

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

inline std::uint32_t crc32_bytes(const std::uint8_t* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

namespace detail {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  void read(void* dst, std::size_t n, std::vector<std::uint8_t>* header = nullptr) {
    in_.read(static_cast<char*>(dst), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n) throw TensorFormatError("tensor file truncated");
    if (header) {
      const auto* p = static_cast<const std::uint8_t*>(dst);
      header->insert(header->end(), p, p + n);
    }
  }

  template <class T>
  T get(std::vector<std::uint8_t>* header) {
    T v;
    read(&v, sizeof(T), header);
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.payload.size() != t.element_count() * dtype_size(t.dtype))
    throw std::length_error("tensor '" + t.name + "': payload size does not match shape");
  std::vector<std::uint8_t> h;
  h.insert(h.end(), kTensorMagic, kTensorMagic + 4);
  detail::put<std::uint16_t>(h, kTensorVersion);
  detail::put<std::uint8_t>(h, static_cast<std::uint8_t>(t.dtype));
  detail::put<std::uint8_t>(h, 0);
  detail::put<std::uint32_t>(h, std::uint32_t(t.shape.size()));
  for (auto d : t.shape) detail::put<std::uint64_t>(h, d);
  detail::put<std::uint32_t>(h, std::uint32_t(t.name.size()));
  h.insert(h.end(), t.name.begin(), t.name.end());
  detail::put<std::uint32_t>(h, std::uint32_t(t.meta.size()));
  h.insert(h.end(), t.meta.begin(), t.meta.end());
  detail::put<std::uint64_t>(h, std::uint64_t(t.payload.size()));
  detail::put<std::uint32_t>(h, crc32_bytes(t.payload.data(), t.payload.size()));
  const std::uint32_t hcrc = crc32_bytes(h.data(), h.size());
  detail::put<std::uint32_t>(h, hcrc);
  h.insert(h.end(), t.payload.begin(), t.payload.end());
  return h;
}

inline void write_tensors(const std::string& path, const std::vector<Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const auto& t : tensors) {
    const auto bytes = encode_tensor(t);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline Tensor read_tensor(std::istream& in) {
  detail::Reader r(in);
  std::vector<std::uint8_t> h;
  char magic[4];
  r.read(magic, 4, &h);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw TensorFormatError("bad tensor magic");
  const auto version = r.get<std::uint16_t>(&h);
  if (version != kTensorVersion) throw TensorFormatError("unsupported tensor version " + std::to_string(version));
  Tensor t;
  const auto dtype = r.get<std::uint8_t>(&h);
  if (dtype < 1 || dtype > 4) throw TensorFormatError("unknown dtype tag " + std::to_string(dtype));
  t.dtype = static_cast<DType>(dtype);
  r.get<std::uint8_t>(&h);
  const auto rank = r.get<std::uint32_t>(&h);
  if (rank > 16) throw TensorFormatError("tensor rank too large");
  for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.get<std::uint64_t>(&h));
  const auto name_len = r.get<std::uint32_t>(&h);
  if (name_len > (1u << 16)) throw TensorFormatError("tensor name too long");
  t.name.resize(name_len);
  r.read(t.name.data(), name_len, &h);
  const auto meta_len = r.get<std::uint32_t>(&h);
  if (meta_len > (1u << 24)) throw TensorFormatError("tensor metadata too long");
  t.meta.resize(meta_len);
  r.read(t.meta.data(), meta_len, &h);
  const auto payload_len = r.get<std::uint64_t>(&h);
  const auto payload_crc = r.get<std::uint32_t>(&h);
  const auto header_crc = r.get<std::uint32_t>(nullptr);
  if (crc32_bytes(h.data(), h.size()) != header_crc) throw TensorFormatError("tensor header checksum mismatch");
  if (payload_len != t.element_count() * dtype_size(t.dtype))
    throw TensorFormatError("tensor '" + t.name + "': payload length does not match shape");
  t.payload.resize(std::size_t(payload_len));
  r.read(t.payload.data(), t.payload.size());
  if (crc32_bytes(t.payload.data(), t.payload.size()) != payload_crc)
    throw TensorFormatError("tensor '" + t.name + "': payload checksum mismatch");
  return t;
}

inline std::vector<Tensor> read_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<Tensor> out;
  detail::Reader probe(in);
  while (!probe.at_end()) out.push_back(read_tensor(in));
  return out;
}

inline const Tensor& find_tensor(const std::vector<Tensor>& ts, const std::string& name) {
  for (const auto& t : ts)
    if (t.name == name) return t;
  throw TensorFormatError("tensor '" + name + "' not found");
}

// ---------------------------------------------------------------------------
// Conversions. Matrices are stored column-major with shape {rows, cols}.

namespace detail {

template <class T>
Tensor make_tensor(std::string name, DType dt, std::vector<std::uint64_t> shape, const T* data,
                   std::size_t count, std::string meta) {
  Tensor t{std::move(name), dt, std::move(shape), std::move(meta), {}};
  const auto* p = reinterpret_cast<const std::uint8_t*>(data);
  t.payload.assign(p, p + count * sizeof(T));
  return t;
}

inline void expect(const Tensor& t, DType dt, std::size_t rank) {
  if (t.dtype != dt) throw TensorFormatError("tensor '" + t.name + "': unexpected dtype");
  if (t.shape.size() != rank) throw TensorFormatError("tensor '" + t.name + "': unexpected rank");
}

}  // namespace detail

inline Tensor to_tensor(std::string name, const CMat& m, std::string meta = {}) {
  return detail::make_tensor(std::move(name), DType::c128, {std::uint64_t(m.rows()), std::uint64_t(m.cols())},
                             m.data(), std::size_t(m.size()), std::move(meta));
}

inline Tensor to_tensor(std::string name, const RMat& m, std::string meta = {}) {
  return detail::make_tensor(std::move(name), DType::f64, {std::uint64_t(m.rows()), std::uint64_t(m.cols())},
                             m.data(), std::size_t(m.size()), std::move(meta));
}

inline Tensor to_tensor(std::string name, const std::vector<double>& v, std::string meta = {}) {
  return detail::make_tensor(std::move(name), DType::f64, {std::uint64_t(v.size())}, v.data(), v.size(),
                             std::move(meta));
}

inline Tensor to_tensor(std::string name, const std::vector<std::int64_t>& v, std::string meta = {}) {
  return detail::make_tensor(std::move(name), DType::i64, {std::uint64_t(v.size())}, v.data(), v.size(),
                             std::move(meta));
}

inline Tensor to_tensor(std::string name, const std::vector<std::uint8_t>& v, std::string meta = {}) {
  return detail::make_tensor(std::move(name), DType::u8, {std::uint64_t(v.size())}, v.data(), v.size(),
                             std::move(meta));
}

inline CMat as_cmat(const Tensor& t) {
  detail::expect(t, DType::c128, 2);
  CMat m(Index(t.shape[0]), Index(t.shape[1]));
  std::memcpy(m.data(), t.payload.data(), t.payload.size());
  return m;
}

inline RMat as_rmat(const Tensor& t) {
  detail::expect(t, DType::f64, 2);
  RMat m(Index(t.shape[0]), Index(t.shape[1]));
  std::memcpy(m.data(), t.payload.data(), t.payload.size());
  return m;
}

inline std::vector<double> as_f64(const Tensor& t) {
  detail::expect(t, DType::f64, 1);
  std::vector<double> v(t.shape[0]);
  std::memcpy(v.data(), t.payload.data(), t.payload.size());
  return v;
}

inline std::vector<std::int64_t> as_i64(const Tensor& t) {
  detail::expect(t, DType::i64, 1);
  std::vector<std::int64_t> v(t.shape[0]);
  std::memcpy(v.data(), t.payload.data(), t.payload.size());
  return v;
}

inline std::vector<std::uint8_t> as_u8(const Tensor& t) {
  detail::expect(t, DType::u8, 1);
  return t.payload;
}

}  // namespace mmwcs
