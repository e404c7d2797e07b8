// Copyright 2026 The wsel Authors
// SPDX-License-Identifier: Apache-2.0
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

// Tensor container (.wsck):
//
//   [u64 little-endian header length N][N bytes UTF-8 JSON header][payload]
//
// The header maps tensor name -> {"data_offsets": [begin, end], "dtype",
// "shape"}, with offsets relative to the first payload byte, plus an optional
// "__metadata__" object of string values. Keys are written in lexicographic
// order, the JSON is compact and right-padded with spaces to a multiple of
// eight bytes. Payloads are laid out back to back in Checkpoint order, so a
// reader recovers tensor order by sorting on the begin offset.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wsel/error.hpp"
#include "wsel/hash.hpp"

namespace wsel {

using Shape = std::vector<std::size_t>;

enum class DType { kF32, kF16, kF64 };

inline constexpr std::string_view kMetadataKey = "__metadata__";

inline std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF16: return 2;
    case DType::kF32: return 4;
    case DType::kF64: return 8;
  }
  return 0;
}

inline std::string_view dtype_tag(DType dtype) {
  switch (dtype) {
    case DType::kF16: return "F16";
    case DType::kF32: return "F32";
    case DType::kF64: return "F64";
  }
  return "?";
}

inline DType parse_dtype(std::string_view tag) {
  if (tag == "F32") return DType::kF32;
  if (tag == "F16") return DType::kF16;
  if (tag == "F64") return DType::kF64;
  throw Error(ErrorCode::kUnknownDtype,
              "unsupported dtype tag '" + std::string(tag) + "' (expected F16, F32 or F64)");
}

inline float half_to_float(std::uint16_t h) {
  const bool negative = (h & 0x8000u) != 0;
  const int exponent = (h >> 10) & 0x1f;
  const int mantissa = h & 0x3ff;
  float magnitude;
  if (exponent == 0) {
    magnitude = std::ldexp(static_cast<float>(mantissa), -24);
  } else if (exponent == 31) {
    magnitude = mantissa == 0 ? std::numeric_limits<float>::infinity()
                              : std::numeric_limits<float>::quiet_NaN();
  } else {
    magnitude = std::ldexp(static_cast<float>(mantissa + 1024), exponent - 25);
  }
  return negative ? -magnitude : magnitude;
}

/// Round-to-nearest-even float -> binary16.
inline std::uint16_t float_to_half(float f) {
  const std::uint16_t sign = std::signbit(f) ? 0x8000u : 0u;
  if (std::isnan(f)) return static_cast<std::uint16_t>(sign | 0x7e00u);
  const double a = std::abs(static_cast<double>(f));
  if (a >= 65520.0) return static_cast<std::uint16_t>(sign | 0x7c00u);
  if (a < 0x1.0p-14) {
    // Subnormal range; a result of 1024 lands exactly on the smallest normal.
    return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(std::nearbyint(a * 0x1.0p24)));
  }
  int exp2 = 0;
  const double fraction = std::frexp(a, &exp2);  // a = fraction * 2^exp2, fraction in [0.5, 1)
  int exponent = exp2 - 1;
  auto mantissa = static_cast<int>(std::nearbyint((2.0 * fraction - 1.0) * 1024.0));
  if (mantissa == 1024) {
    mantissa = 0;
    ++exponent;
  }
  if (exponent > 15) return static_cast<std::uint16_t>(sign | 0x7c00u);
  return static_cast<std::uint16_t>(sign | ((exponent + 15) << 10) | mantissa);
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Encodes doubles into the on-disk representation of `dtype`.
inline std::vector<std::byte> encode_values(DType dtype, std::span<const double> values) {
  std::vector<std::byte> out(values.size() * dtype_size(dtype));
  std::byte* dst = out.data();
  for (double v : values) {
    switch (dtype) {
      case DType::kF32: {
        const auto f = static_cast<float>(v);
        std::memcpy(dst, &f, 4);
        dst += 4;
        break;
      }
      case DType::kF16: {
        const std::uint16_t h = float_to_half(static_cast<float>(v));
        std::memcpy(dst, &h, 2);
        dst += 2;
        break;
      }
      case DType::kF64:
        std::memcpy(dst, &v, 8);
        dst += 8;
        break;
    }
  }
  return out;
}

/// One named, typed, shaped tensor with its raw row-major payload.
struct TensorRecord {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<std::byte> data;

  std::size_t numel() const { return shape_numel(shape); }
  std::size_t element_size() const { return dtype_size(dtype); }

  double value_at(std::size_t flat) const {
    const std::byte* p = data.data() + flat * element_size();
    switch (dtype) {
      case DType::kF32: {
        float f;
        std::memcpy(&f, p, 4);
        return f;
      }
      case DType::kF16: {
        std::uint16_t h;
        std::memcpy(&h, p, 2);
        return half_to_float(h);
      }
      case DType::kF64: {
        double d;
        std::memcpy(&d, p, 8);
        return d;
      }
    }
    return 0.0;
  }

  /// Raw bit pattern of one element, zero-extended. Two elements are
  /// bitwise equal iff their keys are equal.
  std::uint64_t bits_at(std::size_t flat) const {
    std::uint64_t key = 0;
    std::memcpy(&key, data.data() + flat * element_size(), element_size());
    return key;
  }

  std::vector<double> values() const {
    std::vector<double> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = value_at(i);
    return out;
  }

  void validate() const {
    if (name.empty()) throw Error(ErrorCode::kInvariant, "tensor with empty name");
    if (name == kMetadataKey) {
      throw Error(ErrorCode::kInvariant, "tensor name '__metadata__' is reserved");
    }
    if (shape.empty()) throw Error(ErrorCode::kInvariant, "tensor '" + name + "' has rank 0");
    for (std::size_t d : shape) {
      if (d == 0) {
        throw Error(ErrorCode::kInvariant,
                    "tensor '" + name + "' has a zero-length dimension " + shape_to_string(shape));
      }
    }
    if (data.size() != numel() * element_size()) {
      throw Error(ErrorCode::kInvariant, "tensor '" + name + "' payload is " +
                                             std::to_string(data.size()) + " bytes, expected " +
                                             std::to_string(numel() * element_size()));
    }
  }

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

inline TensorRecord make_tensor(std::string name, DType dtype, Shape shape,
                                std::span<const double> values) {
  TensorRecord rec{std::move(name), dtype, std::move(shape), encode_values(dtype, values)};
  rec.validate();
  return rec;
}

/// Ordered collection of tensors plus string metadata.
class Checkpoint {
 public:
  using Metadata = std::map<std::string, std::string>;

  void add(TensorRecord record) {
    record.validate();
    if (index_.contains(record.name)) {
      throw Error(ErrorCode::kDuplicateName, "duplicate tensor name '" + record.name + "'");
    }
    index_.emplace(record.name, tensors_.size());
    tensors_.push_back(std::move(record));
  }

  const TensorRecord* find(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &tensors_[it->second];
  }

  const TensorRecord& at(std::string_view name) const {
    if (const TensorRecord* rec = find(name)) return *rec;
    throw Error(ErrorCode::kMissingTensor, "no tensor named '" + std::string(name) + "'");
  }

  const std::vector<TensorRecord>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  Metadata& metadata() { return metadata_; }
  const Metadata& metadata() const { return metadata_; }

  std::size_t payload_bytes() const {
    std::size_t total = 0;
    for (const auto& t : tensors_) total += t.data.size();
    return total;
  }

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.tensors_ == b.tensors_ && a.metadata_ == b.metadata_;
  }

 private:
  std::vector<TensorRecord> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  Metadata metadata_;
};

namespace detail {

inline std::string encode_header(const Checkpoint& ckpt) {
  nlohmann::json header = nlohmann::json::object();
  if (!ckpt.metadata().empty()) {
    header[std::string(kMetadataKey)] = ckpt.metadata();
  }
  std::size_t offset = 0;
  for (const auto& t : ckpt) {
    t.validate();
    header[t.name] = {{"dtype", dtype_tag(t.dtype)},
                      {"shape", t.shape},
                      {"data_offsets", {offset, offset + t.data.size()}}};
    offset += t.data.size();
  }
  std::string text = header.dump();
  text.append((8 - text.size() % 8) % 8, ' ');
  return text;
}

inline std::array<char, 8> encode_u64_le(std::uint64_t v) {
  std::array<char, 8> out{};
  for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  return out;
}

inline std::uint64_t decode_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

struct HeaderEntry {
  std::string name;
  DType dtype;
  Shape shape;
  std::uint64_t begin;
  std::uint64_t end;
};

struct ParsedHeader {
  std::vector<HeaderEntry> entries;  // sorted by begin offset
  Checkpoint::Metadata metadata;
};

inline constexpr std::uint64_t kMaxHeaderBytes = 256ULL << 20;

/// Validates the JSON header against a payload of `payload_size` bytes.
inline ParsedHeader parse_header(std::string_view text, std::uint64_t payload_size) {
  std::set<std::string> seen;
  std::string duplicate;
  nlohmann::json::parser_callback_t on_event = [&](int depth, nlohmann::json::parse_event_t event,
                                                   nlohmann::json& parsed) {
    if (event == nlohmann::json::parse_event_t::key && depth == 1) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty()) duplicate = std::move(key);
    }
    return true;
  };
  nlohmann::json header = nlohmann::json::parse(text, on_event, /*allow_exceptions=*/false);
  if (header.is_discarded()) throw Error(ErrorCode::kMalformedHeader, "header is not valid JSON");
  if (!duplicate.empty()) {
    throw Error(ErrorCode::kDuplicateName, "duplicate tensor name '" + duplicate + "' in header");
  }
  if (!header.is_object()) throw Error(ErrorCode::kMalformedHeader, "header is not a JSON object");

  ParsedHeader out;
  for (auto& [key, value] : header.items()) {
    if (key == kMetadataKey) {
      if (!value.is_object()) {
        throw Error(ErrorCode::kMalformedHeader, "__metadata__ must be an object");
      }
      for (auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) {
          throw Error(ErrorCode::kMalformedHeader, "metadata value for '" + mk + "' is not a string");
        }
        out.metadata.emplace(mk, mv.get<std::string>());
      }
      continue;
    }
    if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
        !value.contains("data_offsets")) {
      throw Error(ErrorCode::kMalformedHeader,
                  "entry '" + key + "' needs dtype, shape and data_offsets");
    }
    const auto& dtype = value["dtype"];
    const auto& shape = value["shape"];
    const auto& offsets = value["data_offsets"];
    if (!dtype.is_string()) throw Error(ErrorCode::kMalformedHeader, "dtype of '" + key + "'");
    HeaderEntry entry{key, parse_dtype(dtype.get<std::string>()), {}, 0, 0};
    if (!shape.is_array() || shape.empty()) {
      throw Error(ErrorCode::kMalformedHeader, "shape of '" + key + "' must be a non-empty array");
    }
    for (const auto& d : shape) {
      if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0) {
        throw Error(ErrorCode::kMalformedHeader, "shape of '" + key + "' has a non-positive dim");
      }
      entry.shape.push_back(d.get<std::size_t>());
    }
    if (!offsets.is_array() || offsets.size() != 2 || !offsets[0].is_number_unsigned() ||
        !offsets[1].is_number_unsigned()) {
      throw Error(ErrorCode::kMalformedHeader, "data_offsets of '" + key + "'");
    }
    entry.begin = offsets[0].get<std::uint64_t>();
    entry.end = offsets[1].get<std::uint64_t>();
    if (entry.end < entry.begin) {
      throw Error(ErrorCode::kMalformedHeader, "data_offsets of '" + key + "' are reversed");
    }
    if (entry.end > payload_size) {
      throw Error(ErrorCode::kOutOfBounds, "payload of '" + key + "' ends at byte " +
                                               std::to_string(entry.end) + " but only " +
                                               std::to_string(payload_size) + " bytes follow");
    }
    if (entry.end - entry.begin != shape_numel(entry.shape) * dtype_size(entry.dtype)) {
      throw Error(ErrorCode::kMalformedHeader,
                  "payload length of '" + key + "' does not match its shape and dtype");
    }
    out.entries.push_back(std::move(entry));
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const HeaderEntry& a, const HeaderEntry& b) { return a.begin < b.begin; });
  std::uint64_t cursor = 0;
  for (const auto& e : out.entries) {
    if (e.begin < cursor) {
      throw Error(ErrorCode::kOverlap, "payload of '" + e.name + "' overlaps the previous tensor");
    }
    if (e.begin > cursor) {
      throw Error(ErrorCode::kMalformedHeader, "unreferenced gap before payload of '" + e.name + "'");
    }
    cursor = e.end;
  }
  if (cursor != payload_size) {
    throw Error(ErrorCode::kMalformedHeader, "trailing bytes after the last payload");
  }
  return out;
}

}  // namespace detail

/// Serializes into the exact bytes write_checkpoint puts on disk.
inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::string header = detail::encode_header(ckpt);
  std::string out;
  out.reserve(8 + header.size() + ckpt.payload_bytes());
  const auto len = detail::encode_u64_le(header.size());
  out.append(len.data(), len.size());
  out += header;
  for (const auto& t : ckpt) {
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size());
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(ErrorCode::kMalformedHeader, "shorter than the length prefix");
  const std::uint64_t header_len =
      detail::decode_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()));
  if (header_len > detail::kMaxHeaderBytes || header_len > bytes.size() - 8) {
    throw Error(ErrorCode::kMalformedHeader, "header length exceeds file size");
  }
  const std::string_view payload = bytes.substr(8 + header_len);
  auto parsed = detail::parse_header(bytes.substr(8, header_len), payload.size());
  Checkpoint ckpt;
  ckpt.metadata() = std::move(parsed.metadata);
  for (auto& e : parsed.entries) {
    const auto* first = reinterpret_cast<const std::byte*>(payload.data() + e.begin);
    ckpt.add({std::move(e.name), e.dtype, std::move(e.shape),
              std::vector<std::byte>(first, first + (e.end - e.begin))});
  }
  return ckpt;
}

/// Reads a checkpoint; each payload is read straight into its record so the
/// peak footprint stays close to the payload size.
inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot stat '" + path.string() + "'");
  if (file_size < 8) throw Error(ErrorCode::kMalformedHeader, "shorter than the length prefix");
  std::array<unsigned char, 8> prefix{};
  in.read(reinterpret_cast<char*>(prefix.data()), 8);
  const std::uint64_t header_len = detail::decode_u64_le(prefix.data());
  if (header_len > detail::kMaxHeaderBytes || header_len > file_size - 8) {
    throw Error(ErrorCode::kMalformedHeader, "header length exceeds file size");
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw Error(ErrorCode::kIo, "short read in header of '" + path.string() + "'");
  const std::uint64_t payload_start = 8 + header_len;
  auto parsed = detail::parse_header(header, file_size - payload_start);

  Checkpoint ckpt;
  ckpt.metadata() = std::move(parsed.metadata);
  for (auto& e : parsed.entries) {
    std::vector<std::byte> data(e.end - e.begin);
    in.seekg(static_cast<std::streamoff>(payload_start + e.begin));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!in) throw Error(ErrorCode::kIo, "short read in payload of '" + e.name + "'");
    ckpt.add({std::move(e.name), e.dtype, std::move(e.shape), std::move(data)});
  }
  return ckpt;
}

/// Writes via a sibling temporary file and rename, so `path` either keeps its
/// old content or receives the complete new file.
inline void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string header = detail::encode_header(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot create '" + tmp.string() + "'");
    const auto len = detail::encode_u64_le(header.size());
    out.write(len.data(), len.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : ckpt) {
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size()));
    }
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::kIo, "cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  Sha256 hasher;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    hasher.update(std::as_bytes(std::span(buf.data(), got)));
  }
  return hasher.hex();
}

}  // namespace wsel
