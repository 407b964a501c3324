#pragma once
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "riskseq/errors.hpp"

namespace riskseq {

// Locale-independent float formatting, 17 significant digits (round-trip
// exact, satisfies the >= 10 significant digit output contract).
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string format_int(int64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Row-at-a-time CSV writer with a fixed header. Content is accumulated and
// written in one shot so partially-written files never appear on error paths.
class CsvWriter {
 public:
  explicit CsvWriter(std::string header) { out_ += header; out_ += '\n'; }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ += ',';
      out_ += cells[i];
    }
    out_ += '\n';
  }

  const std::string& content() const { return out_; }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path.string());
    f.write(out_.data(), static_cast<std::streamsize>(out_.size()));
    if (!f) throw DataError("write failed: " + path.string());
  }

 private:
  std::string out_;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Splits a CSV line on commas (no quoting; none of our formats need it).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') { out.push_back(cur); cur.clear(); }
    else cur += c;
  }
  out.push_back(cur);
  return out;
}

} // namespace riskseq
