#pragma once
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "riskseq/errors.hpp"
#include "riskseq/net.hpp"

namespace riskseq::nn {

// Checkpoint layout (little-endian):
//   8-byte magic "RSQPARAM", u32 version, u32 layer count,
//   per layer: u32 name length, name bytes, u32 ndim, u32 dims[ndim],
//   then all values as float64 in flattening order.
inline constexpr char kCheckpointMagic[8] = {'R', 'S', 'Q', 'P', 'A', 'R', 'A', 'M'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
inline uint32_t get_u32(const std::vector<uint8_t>& in, size_t& off, const std::string& path) {
  if (off + 4 > in.size()) throw FormatError("checkpoint " + path + ": truncated at offset " + std::to_string(off));
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in[off + i]) << (8 * i);
  off += 4;
  return v;
}
} // namespace detail

inline void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_u32(out, kCheckpointVersion);
  const auto names = ModelParams::names();
  const auto tensors = params.ordered();
  detail::put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (size_t i = 0; i < tensors.size(); ++i) {
    detail::put_u32(out, static_cast<uint32_t>(names[i].size()));
    out.insert(out.end(), names[i].begin(), names[i].end());
    detail::put_u32(out, static_cast<uint32_t>(tensors[i]->shape.size()));
    for (int d : tensors[i]->shape) detail::put_u32(out, static_cast<uint32_t>(d));
  }
  for (const Tensor* t : tensors) {
    for (double v : t->data) {
      uint8_t buf[8];
      std::memcpy(buf, &v, 8);
      out.insert(out.end(), buf, buf + 8);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

// Loads a checkpoint into params (which fixes the expected shapes, from the
// model config). Mismatches name the offending layer.
inline void load_params(ModelParams& params, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path.string());
  std::vector<uint8_t> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (in.size() < 8 || std::memcmp(in.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("checkpoint " + name + ": bad magic");
  size_t off = 8;
  const uint32_t version = detail::get_u32(in, off, name);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint " + name + ": unsupported version " + std::to_string(version));
  const uint32_t n_layers = detail::get_u32(in, off, name);
  const auto names = ModelParams::names();
  auto tensors = params.ordered();
  if (n_layers != tensors.size())
    throw FormatError("checkpoint " + name + ": expected " + std::to_string(tensors.size()) +
                      " layers, found " + std::to_string(n_layers));
  for (size_t i = 0; i < tensors.size(); ++i) {
    const uint32_t name_len = detail::get_u32(in, off, name);
    if (off + name_len > in.size())
      throw FormatError("checkpoint " + name + ": truncated at offset " + std::to_string(off));
    const std::string layer(in.begin() + static_cast<ptrdiff_t>(off),
                            in.begin() + static_cast<ptrdiff_t>(off + name_len));
    off += name_len;
    if (layer != names[i])
      throw FormatError("checkpoint " + name + ": layer " + std::to_string(i) + " is '" + layer +
                        "', expected '" + names[i] + "'");
    const uint32_t ndim = detail::get_u32(in, off, name);
    std::vector<int> dims(ndim);
    for (uint32_t d = 0; d < ndim; ++d)
      dims[d] = static_cast<int>(detail::get_u32(in, off, name));
    if (dims != tensors[i]->shape)
      throw FormatError("checkpoint " + name + ": shape mismatch in layer '" + layer + "'");
  }
  for (Tensor* t : tensors) {
    const size_t bytes = t->numel() * 8;
    if (off + bytes > in.size())
      throw FormatError("checkpoint " + name + ": truncated at offset " + std::to_string(off));
    std::memcpy(t->data.data(), in.data() + off, bytes);
    off += bytes;
  }
  if (off != in.size())
    throw FormatError("checkpoint " + name + ": trailing bytes after payload");
}

} // namespace riskseq::nn
