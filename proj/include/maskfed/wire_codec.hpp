// Copyright 2026 The maskfed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Wire format for parameter exchange. Payload layout, all multi-byte fields
// big-endian:
//
//   "FMC1" | u16 version=1 | u32 tensor_count |
//   per tensor: u16 name_len | name bytes | u8 dtype | u8 ndim | u32 dims[ndim]
//               | values in row-major order
//
// dtype 1 is IEEE 754 binary16 (the compressed path); dtype 2 is binary32,
// used when compression is switched off. The payload is deflated with zlib.

#ifndef MASKFED_WIRE_CODEC_HPP_
#define MASKFED_WIRE_CODEC_HPP_

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "maskfed/error.hpp"
#include "maskfed/tensors.hpp"

namespace maskfed {

enum class WireDtype : std::uint8_t { kFloat16 = 1, kFloat32 = 2 };

inline constexpr char kWireMagic[4] = {'F', 'M', 'C', '1'};
inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr int kDeflateLevel = 6;
inline constexpr double kHalfMax = 65504.0;

struct WirePacket {
  std::vector<std::uint8_t> bytes;  // zlib stream
  std::size_t raw_size = 0;         // payload length before deflate
};

// Round-to-nearest-even conversion to binary16; magnitudes above the largest
// finite half saturate to +/-65504.
inline std::uint16_t DoubleToHalf(double x) {
  const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
  const double a = std::abs(x);
  if (a >= kHalfMax) return sign | 0x7BFFu;
  if (a < 0x1.0p-14) {
    // Subnormal: units of 2^-24. A result of 1024 is the smallest normal,
    // which has the same bit pattern.
    const auto q = static_cast<std::uint16_t>(std::nearbyint(a * 0x1.0p24));
    return sign | q;
  }
  int exp2 = 0;
  std::frexp(a, &exp2);
  int e = exp2 - 1;  // a in [2^e, 2^(e+1))
  double q = std::nearbyint(std::ldexp(a, 10 - e));
  if (q >= 2048.0) {
    q = 1024.0;
    ++e;
  }
  if (e > 15) return sign | 0x7BFFu;
  return sign | static_cast<std::uint16_t>(((e + 15) << 10) |
                                           (static_cast<int>(q) - 1024));
}

inline double HalfToDouble(std::uint16_t h) {
  const double sign = (h & 0x8000u) ? -1.0 : 1.0;
  const int exponent = (h >> 10) & 0x1F;
  const int mantissa = h & 0x3FF;
  if (exponent == 0) return sign * std::ldexp(mantissa, -24);
  if (exponent == 31) {
    return mantissa == 0 ? sign * INFINITY : NAN;
  }
  return sign * std::ldexp(1024 + mantissa, exponent - 25);
}

// Value after one trip through the binary16 wire representation.
inline double QuantizeHalf(double x) { return HalfToDouble(DoubleToHalf(x)); }

namespace wire_detail {

class Writer {
 public:
  void U8(std::uint8_t v) { out_.push_back(v); }
  void U16(std::uint16_t v) {
    U8(static_cast<std::uint8_t>(v >> 8));
    U8(static_cast<std::uint8_t>(v));
  }
  void U32(std::uint32_t v) {
    U16(static_cast<std::uint16_t>(v >> 16));
    U16(static_cast<std::uint16_t>(v));
  }
  void Bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t U8() {
    Need(1);
    return in_[pos_++];
  }
  std::uint16_t U16() {
    const std::uint16_t hi = U8();
    return static_cast<std::uint16_t>((hi << 8) | U8());
  }
  std::uint32_t U32() {
    const std::uint32_t hi = U16();
    return (hi << 16) | U16();
  }
  std::string String(std::size_t n) {
    Need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw Error(ErrorCode::kProtocol, "truncated payload");
    }
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace wire_detail

// Uncompressed payload for `tensors`.
inline std::vector<std::uint8_t> SerializePayload(
    const TensorList& tensors, WireDtype dtype = WireDtype::kFloat16) {
  wire_detail::Writer w;
  w.Bytes(kWireMagic, 4);
  w.U16(kWireVersion);
  w.U32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    Require(t.name.size() <= 0xFFFF, ErrorCode::kSerialization,
            "tensor name too long");
    Require(t.shape.size() <= 0xFF, ErrorCode::kSerialization,
            "tensor '" + t.name + "' has too many dimensions");
    Require(t.element_count() == t.values.size(), ErrorCode::kSerialization,
            "tensor '" + t.name + "' shape does not match its values");
    for (double v : t.values) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kSerialization,
                    "non-finite value in tensor '" + t.name + "'");
      }
    }
    w.U16(static_cast<std::uint16_t>(t.name.size()));
    w.Bytes(t.name.data(), t.name.size());
    w.U8(static_cast<std::uint8_t>(dtype));
    w.U8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.U32(d);
    if (dtype == WireDtype::kFloat16) {
      for (double v : t.values) w.U16(DoubleToHalf(v));
    } else {
      for (double v : t.values) {
        const double clamped = std::clamp(v, -3.4028234663852886e38,
                                          3.4028234663852886e38);
        w.U32(std::bit_cast<std::uint32_t>(static_cast<float>(clamped)));
      }
    }
  }
  return w.Take();
}

// `dtypes`, when given, receives the stored dtype of each tensor.
inline TensorList ParsePayload(std::span<const std::uint8_t> payload,
                               std::vector<WireDtype>* dtypes = nullptr) {
  wire_detail::Reader r(payload);
  const std::string magic = r.String(4);
  Require(magic == std::string(kWireMagic, 4), ErrorCode::kProtocol,
          "bad magic");
  const auto version = r.U16();
  Require(version == kWireVersion, ErrorCode::kProtocol,
          "unsupported version " + std::to_string(version));
  const std::uint32_t count = r.U32();
  TensorList out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.String(r.U16());
    const auto dtype = r.U8();
    Require(dtype == static_cast<std::uint8_t>(WireDtype::kFloat16) ||
                dtype == static_cast<std::uint8_t>(WireDtype::kFloat32),
            ErrorCode::kProtocol,
            "unknown dtype " + std::to_string(dtype) + " in tensor '" + t.name +
                "'");
    if (dtypes != nullptr) dtypes->push_back(static_cast<WireDtype>(dtype));
    const auto ndim = r.U8();
    std::uint64_t elements = 1;
    for (int d = 0; d < ndim; ++d) {
      t.shape.push_back(r.U32());
      elements *= t.shape.back();
    }
    const std::size_t width = dtype == 1 ? 2 : 4;
    Require(elements <= r.remaining() / width, ErrorCode::kProtocol,
            "truncated payload in tensor '" + t.name + "'");
    t.values.resize(elements);
    for (auto& v : t.values) {
      v = dtype == 1 ? HalfToDouble(r.U16())
                     : static_cast<double>(std::bit_cast<float>(r.U32()));
    }
    out.push_back(std::move(t));
  }
  Require(r.AtEnd(), ErrorCode::kProtocol,
          "tensor count mismatch: trailing bytes after declared tensors");
  return out;
}

inline std::vector<std::uint8_t> Deflate(std::span<const std::uint8_t> raw,
                                         int level = kDeflateLevel) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  const int rc = compress2(out.data(), &bound, raw.data(),
                           static_cast<uLong>(raw.size()), level);
  Require(rc == Z_OK, ErrorCode::kSerialization,
          "zlib compression failed (" + std::to_string(rc) + ")");
  out.resize(bound);
  return out;
}

inline std::vector<std::uint8_t> Inflate(std::span<const std::uint8_t> packed) {
  z_stream zs{};
  Require(inflateInit(&zs) == Z_OK, ErrorCode::kProtocol,
          "zlib initialization failed");
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 15];
  zs.next_in = const_cast<Bytef*>(packed.data());
  zs.avail_in = static_cast<uInt>(packed.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto total_out = zs.total_out;
      inflateEnd(&zs);
      zs.total_out = total_out;
      const bool at_start = zs.total_out == 0 && rc == Z_DATA_ERROR;
      throw Error(ErrorCode::kProtocol,
                  at_start ? "bad magic (not a zlib stream)"
                  : rc == Z_BUF_ERROR ? "truncated compressed stream"
                                      : "corrupt compressed stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
  }
  const bool trailing = zs.avail_in != 0;
  inflateEnd(&zs);
  Require(!trailing, ErrorCode::kProtocol, "trailing bytes after zlib stream");
  return out;
}

inline WirePacket Pack(const TensorList& tensors, bool compress = true) {
  const auto payload = SerializePayload(
      tensors, compress ? WireDtype::kFloat16 : WireDtype::kFloat32);
  WirePacket packet;
  packet.raw_size = payload.size();
  packet.bytes = Deflate(payload, compress ? kDeflateLevel : 0);
  return packet;
}

inline TensorList Unpack(const WirePacket& packet) {
  return ParsePayload(Inflate(packet.bytes));
}

inline TensorList Unpack(std::span<const std::uint8_t> bytes) {
  return ParsePayload(Inflate(bytes));
}

// Baseline for compression ratios: 4 bytes per value.
inline std::size_t Float32Bytes(const TensorList& tensors) {
  return 4 * TotalElements(tensors);
}

inline void WritePacketFile(const std::string& path, const WirePacket& packet) {
  std::ofstream out(path, std::ios::binary);
  Require(static_cast<bool>(out), ErrorCode::kInvalidInput,
          "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(packet.bytes.data()),
            static_cast<std::streamsize>(packet.bytes.size()));
  Require(static_cast<bool>(out), ErrorCode::kInvalidInput,
          "failed writing " + path);
}

inline WirePacket ReadPacketFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kInvalidInput,
          "cannot open " + path);
  WirePacket packet;
  packet.bytes.assign(std::istreambuf_iterator<char>(in), {});
  return packet;
}

}  // namespace maskfed

#endif  // MASKFED_WIRE_CODEC_HPP_
