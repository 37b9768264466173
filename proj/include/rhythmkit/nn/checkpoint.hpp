// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit::nn {

// Parameter checkpoint container:
//   magic "RKW1" | u32 version | u32 param count
//   per parameter: u32 name length | name bytes | u32 rank | u32 dims… |
//                  f32 payload
//   u32 metadata length | metadata bytes (key=value lines)
// Everything little-endian.
struct Checkpoint {
  std::map<std::string, Tensor<float>> params;
  std::map<std::string, std::string> meta;
};

namespace detail {

inline void ck_write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t ck_read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void ck_write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  ck_write_u32(out, bits);
}

inline float ck_read_f32(std::istream& in) {
  const std::uint32_t bits = ck_read_u32(in);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const std::vector<ParamRef<float>>& params,
                            const std::map<std::string, std::string>& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("RKW1", 4);
  detail::ck_write_u32(out, kCheckpointVersion);
  detail::ck_write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const ParamRef<float>& p : params) {
    detail::ck_write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::ck_write_u32(out, static_cast<std::uint32_t>(p.value->shape.size()));
    for (int d : p.value->shape) detail::ck_write_u32(out, static_cast<std::uint32_t>(d));
    for (float v : p.value->data) detail::ck_write_f32(out, v);
  }
  std::string meta_text;
  for (const auto& [k, v] : meta) meta_text += k + "=" + v + "\n";
  detail::ck_write_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  if (!out) throw IoError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RKW1", 4) != 0)
    throw IoError("bad checkpoint magic (want RKW1): " + path);
  const std::uint32_t version = detail::ck_read_u32(in);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const std::uint32_t count = detail::ck_read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::ck_read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = detail::ck_read_u32(in);
    std::vector<int> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(detail::ck_read_u32(in));
    if (!in) throw IoError("truncated checkpoint: " + path);
    Tensor<float> t(shape);
    for (float& v : t.data) v = detail::ck_read_f32(in);
    if (!in) throw IoError("truncated checkpoint: " + path);
    ck.params.emplace(std::move(name), std::move(t));
  }

  const std::uint32_t meta_len = detail::ck_read_u32(in);
  if (in) {
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), meta_len);
    std::size_t pos = 0;
    while (pos < meta_text.size()) {
      const std::size_t end = meta_text.find('\n', pos);
      const std::string line =
          meta_text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      pos = end == std::string::npos ? meta_text.size() : end + 1;
      const std::size_t eq = line.find('=');
      if (eq != std::string::npos) ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  return ck;
}

}  // namespace rhythmkit::nn
