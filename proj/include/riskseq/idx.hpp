#pragma once
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "riskseq/errors.hpp"

namespace riskseq {

// IDX container with a uint8 payload (the MNIST on-disk layout):
//   magic = 0x00000801 (1-D labels) or 0x00000803 (3-D images), big-endian,
//   then one big-endian u32 per dimension, then the raw uint8 payload.
struct IdxData {
  std::vector<uint32_t> dims;
  std::vector<uint8_t> payload;

  size_t count() const { return dims.empty() ? 0 : dims[0]; }
  size_t item_size() const {
    size_t s = 1;
    for (size_t i = 1; i < dims.size(); ++i) s *= dims[i];
    return s;
  }
};

namespace detail {
inline uint32_t read_be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}
inline void write_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}
} // namespace detail

inline IdxData idx_decode(const std::vector<uint8_t>& bytes, const std::string& name) {
  auto fail = [&](size_t offset, const std::string& what) {
    throw FormatError("IDX " + name + ": " + what + " at offset " + std::to_string(offset));
  };
  if (bytes.size() < 4) fail(bytes.size(), "truncated header");
  const uint32_t magic = detail::read_be32(bytes.data());
  if (magic != 0x00000801u && magic != 0x00000803u)
    fail(0, "bad magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%08x", magic);
      return std::string(buf);
    }());
  const uint32_t ndim = magic & 0xffu;

  IdxData data;
  size_t offset = 4;
  uint64_t total = 1;
  for (uint32_t d = 0; d < ndim; ++d) {
    if (offset + 4 > bytes.size()) fail(offset, "truncated dimension header");
    const uint32_t dim = detail::read_be32(bytes.data() + offset);
    offset += 4;
    data.dims.push_back(dim);
    total *= dim;
    if (total > (1ull << 33)) fail(offset - 4, "dimension overflow");
  }
  if (offset + total > bytes.size())
    fail(bytes.size(), "truncated payload (expected " + std::to_string(total) + " bytes)");
  if (offset + total < bytes.size())
    fail(offset + total, "trailing bytes after payload");
  data.payload.assign(bytes.begin() + static_cast<ptrdiff_t>(offset), bytes.end());
  return data;
}

inline IdxData idx_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open IDX file: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return idx_decode(bytes, path.string());
}

inline std::vector<uint8_t> idx_encode(const IdxData& data) {
  if (data.dims.size() != 1 && data.dims.size() != 3)
    throw FormatError("IDX encode: only 1-D and 3-D uint8 layouts supported");
  std::vector<uint8_t> out;
  detail::write_be32(out, data.dims.size() == 1 ? 0x00000801u : 0x00000803u);
  uint64_t total = 1;
  for (uint32_t d : data.dims) {
    detail::write_be32(out, d);
    total *= d;
  }
  if (total != data.payload.size())
    throw FormatError("IDX encode: payload size does not match dimensions");
  out.insert(out.end(), data.payload.begin(), data.payload.end());
  return out;
}

inline void idx_write(const std::filesystem::path& path, const IdxData& data) {
  const auto bytes = idx_encode(data);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

// Pixels as 64-bit reals in [0,255], one row-major image per item.
inline std::vector<std::vector<double>> idx_images_to_real(const IdxData& data) {
  if (data.dims.size() != 3)
    throw FormatError("IDX: expected 3-D image file, got " + std::to_string(data.dims.size()) + "-D");
  std::vector<std::vector<double>> images(data.count());
  const size_t sz = data.item_size();
  for (size_t i = 0; i < data.count(); ++i) {
    images[i].resize(sz);
    for (size_t k = 0; k < sz; ++k)
      images[i][k] = static_cast<double>(data.payload[i * sz + k]);
  }
  return images;
}

} // namespace riskseq
