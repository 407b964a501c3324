#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"
#include "riskseq/rng.hpp"
#include "riskseq/tensor.hpp"

namespace riskseq {

// Grayscale frame stack [F, H, W].
struct VideoSegment {
  int frames = 0;
  int height = 0;
  int width = 0;
  int fps = 15;
  std::vector<double> data; // frame-major, row-major within a frame

  const double* frame(int f) const {
    return data.data() + static_cast<size_t>(f) * height * width;
  }
  double* frame(int f) { return data.data() + static_cast<size_t>(f) * height * width; }
  size_t frame_size() const { return static_cast<size_t>(height) * width; }
};

// F x F frame-to-frame correlation matrix; entries strictly above the
// diagonal are structurally zero.
struct XCorrMatrix {
  int size = 0;
  std::vector<double> values; // row-major
  bool normalized = false;
  bool degenerate = false; // percentile window collapsed during normalization

  double at(int i, int j) const { return values[static_cast<size_t>(i) * size + j]; }
  double& at(int i, int j) { return values[static_cast<size_t>(i) * size + j]; }
};

// Normalized cross-correlation of two equal-size frames: remove each mean,
// then dot / (product of norms). Either frame constant -> 0 by convention.
// The denominator is sqrt(sa*sb) so that identical frames give exactly 1.
inline double ncc(const double* a, const double* b, size_t n) {
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double dot = 0.0, sa = 0.0, sb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double ca = a[i] - ma, cb = b[i] - mb;
    dot += ca * cb;
    sa += ca * ca;
    sb += cb * cb;
  }
  if (sa == 0.0 || sb == 0.0) return 0.0;
  return dot / std::sqrt(sa * sb);
}

inline double ncc(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw DataError("ncc: shape mismatch");
  return ncc(a.data(), b.data(), a.size());
}

// Entry (i,j) = ncc(frame_i, frame_j) for j <= i; the upper triangle is set
// to zero. Frames are centered once and reused across pairs.
inline XCorrMatrix xcorr_matrix(const VideoSegment& seg) {
  if (seg.frames < 2) throw DataError("xcorr_matrix: need at least 2 frames");
  const size_t n = seg.frame_size();
  const int F = seg.frames;

  std::vector<std::vector<double>> centered(static_cast<size_t>(F));
  std::vector<double> norm2(static_cast<size_t>(F));
  for (int f = 0; f < F; ++f) {
    const double* p = seg.frame(f);
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += p[i];
    mean /= static_cast<double>(n);
    auto& c = centered[static_cast<size_t>(f)];
    c.resize(n);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      c[i] = p[i] - mean;
      s += c[i] * c[i];
    }
    norm2[static_cast<size_t>(f)] = s;
  }

  XCorrMatrix m;
  m.size = F;
  m.values.assign(static_cast<size_t>(F) * F, 0.0);
  for (int i = 0; i < F; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double sa = norm2[static_cast<size_t>(i)], sb = norm2[static_cast<size_t>(j)];
      if (sa == 0.0 || sb == 0.0) {
        m.at(i, j) = 0.0;
        continue;
      }
      double dot = 0.0;
      const auto& ci = centered[static_cast<size_t>(i)];
      const auto& cj = centered[static_cast<size_t>(j)];
      for (size_t k = 0; k < n; ++k) dot += ci[k] * cj[k];
      m.at(i, j) = dot / std::sqrt(sa * sb);
    }
  }
  return m;
}

// Linear interpolation between order statistics (on a sorted copy).
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DataError("percentile: empty input");
  const double idx = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(idx);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Maps [p1, p99] (computed over the diagonal-inclusive lower triangle only)
// linearly to [0,1], clamping outside; the structural zeros above the
// diagonal are left untouched. A collapsed window yields constant 0.5 with
// the degenerate flag set.
inline XCorrMatrix normalize_percentile(const XCorrMatrix& in) {
  if (in.normalized) throw DataError("normalize_percentile: already normalized");
  std::vector<double> lower;
  lower.reserve(static_cast<size_t>(in.size) * (in.size + 1) / 2);
  for (int i = 0; i < in.size; ++i)
    for (int j = 0; j <= i; ++j) lower.push_back(in.at(i, j));
  std::sort(lower.begin(), lower.end());
  const double p1 = percentile_sorted(lower, 1.0);
  const double p99 = percentile_sorted(lower, 99.0);

  XCorrMatrix out = in;
  out.normalized = true;
  if (p1 == p99) {
    out.degenerate = true;
    for (int i = 0; i < out.size; ++i)
      for (int j = 0; j <= i; ++j) out.at(i, j) = 0.5;
    return out;
  }
  const double inv = 1.0 / (p99 - p1);
  for (int i = 0; i < out.size; ++i)
    for (int j = 0; j <= i; ++j)
      out.at(i, j) = std::clamp((in.at(i, j) - p1) * inv, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic segments
// ---------------------------------------------------------------------------

enum class MotionKind { Repetitive, Aperiodic };

struct SyntheticVideoConfig {
  int frames = 75;
  int height = 24;
  int width = 160;
  int fps = 15;
  int patch_size = 5;
  double patch_amplitude = 1.0;
  double background_amplitude = 0.3;
  double noise_stddev = 0.05;
};

// Repetitive: a bright square patch revisits the same p positions in a
// cycle, over a static textured background, so frames recur exactly with
// period p when noise is zero. Aperiodic: the patch advances monotonically
// (a non-returning walk) and never revisits a position.
inline VideoSegment make_synthetic_video(Rng& rng, MotionKind kind, int period,
                                         const SyntheticVideoConfig& cfg) {
  if (kind == MotionKind::Repetitive && period < 2)
    throw ConfigError("make_synthetic_video: repetitive motion needs period >= 2");
  if (cfg.frames < 2 || cfg.height < cfg.patch_size || cfg.width < cfg.patch_size)
    throw ConfigError("make_synthetic_video: bad geometry");

  VideoSegment seg;
  seg.frames = cfg.frames;
  seg.height = cfg.height;
  seg.width = cfg.width;
  seg.fps = cfg.fps;
  seg.data.assign(static_cast<size_t>(cfg.frames) * cfg.height * cfg.width, 0.0);

  // Static background, drawn once per segment.
  std::vector<double> background(seg.frame_size());
  for (double& v : background) v = rng.uniform(0.0, cfg.background_amplitude);

  // Patch positions per frame.
  const int y_max = cfg.height - cfg.patch_size;
  const int x_max = cfg.width - cfg.patch_size;
  std::vector<int> ys(static_cast<size_t>(cfg.frames)), xs(static_cast<size_t>(cfg.frames));
  if (kind == MotionKind::Repetitive) {
    const int stride = std::max(1, std::min(x_max / std::max(period, 1), 3 * cfg.patch_size));
    std::vector<int> cycle_x(static_cast<size_t>(period)), cycle_y(static_cast<size_t>(period));
    for (int k = 0; k < period; ++k) {
      cycle_x[static_cast<size_t>(k)] = std::min(x_max, k * stride);
      cycle_y[static_cast<size_t>(k)] = y_max / 2;
    }
    for (int f = 0; f < cfg.frames; ++f) {
      xs[static_cast<size_t>(f)] = cycle_x[static_cast<size_t>(f % period)];
      ys[static_cast<size_t>(f)] = cycle_y[static_cast<size_t>(f % period)];
    }
  } else {
    int x = 0;
    int y = y_max / 2;
    for (int f = 0; f < cfg.frames; ++f) {
      xs[static_cast<size_t>(f)] = std::min(x, x_max);
      ys[static_cast<size_t>(f)] = std::clamp(y, 0, y_max);
      x += static_cast<int>(rng.uniform_int(1, 2));
      y += static_cast<int>(rng.uniform_int(-1, 1));
    }
  }

  for (int f = 0; f < cfg.frames; ++f) {
    double* fr = seg.frame(f);
    std::copy(background.begin(), background.end(), fr);
    for (int dy = 0; dy < cfg.patch_size; ++dy)
      for (int dx = 0; dx < cfg.patch_size; ++dx)
        fr[static_cast<size_t>(ys[static_cast<size_t>(f)] + dy) * cfg.width +
           (xs[static_cast<size_t>(f)] + dx)] += cfg.patch_amplitude;
    if (cfg.noise_stddev > 0.0)
      for (size_t i = 0; i < seg.frame_size(); ++i) fr[i] += rng.normal(0.0, cfg.noise_stddev);
  }
  return seg;
}

// ---------------------------------------------------------------------------
// Segment sampling from a long stream
// ---------------------------------------------------------------------------

struct EventInterval {
  double start_s;
  double end_s;
};

struct LabeledVideoSegment {
  VideoSegment segment;
  int start_frame = 0;
  int assigned_label = 0;
  int true_label = 0;
};

// Snap-to-frame slicer; errors when the slice runs past the stream.
inline VideoSegment slice_segment(const VideoSegment& stream, int start_frame, int seg_frames) {
  if (start_frame < 0 || start_frame + seg_frames > stream.frames)
    throw DataError("slice_segment: segment [" + std::to_string(start_frame) + ", " +
                    std::to_string(start_frame + seg_frames) + ") outside stream of " +
                    std::to_string(stream.frames) + " frames");
  VideoSegment seg;
  seg.frames = seg_frames;
  seg.height = stream.height;
  seg.width = stream.width;
  seg.fps = stream.fps;
  seg.data.assign(stream.data.begin() + static_cast<ptrdiff_t>(stream.frame_size()) * start_frame,
                  stream.data.begin() +
                      static_cast<ptrdiff_t>(stream.frame_size()) * (start_frame + seg_frames));
  return seg;
}

inline int true_label_for(double mid_s, const std::vector<EventInterval>& events) {
  for (const auto& e : events)
    if (mid_s >= e.start_s && mid_s < e.end_s) return 1;
  return 0;
}

// Training-mode sampling: for each weak label, the N consecutive segments
// starting at the label time are assigned positive; negatives are drawn at
// random from segment-grid slots at least far_gap_s away from every label.
// True labels come from the event intervals via the segment-midpoint rule
// (assigned labels are copied when no ground truth is supplied).
inline std::vector<LabeledVideoSegment> segment_stream_train(
    Rng& rng, const VideoSegment& stream, double seg_seconds,
    const std::vector<double>& weak_labels_s, int risk_level, double far_gap_s,
    int negative_count, const std::vector<EventInterval>& events = {}) {
  if (risk_level < 1) throw ConfigError("segment_stream: risk level must be >= 1");
  const int seg_frames = static_cast<int>(seg_seconds * stream.fps);
  if (seg_frames < 1 || seg_frames > stream.frames)
    throw DataError("segment_stream: stream shorter than one segment");

  std::vector<LabeledVideoSegment> out;
  for (const double t : weak_labels_s) {
    const int label_frame = static_cast<int>(t * stream.fps); // rounds down
    for (int k = 0; k < risk_level; ++k) {
      LabeledVideoSegment ls;
      ls.start_frame = label_frame + k * seg_frames;
      ls.segment = slice_segment(stream, ls.start_frame, seg_frames);
      ls.assigned_label = 1;
      const double mid_s =
          (static_cast<double>(ls.start_frame) + 0.5 * seg_frames) / stream.fps;
      ls.true_label = events.empty() ? 1 : true_label_for(mid_s, events);
      out.push_back(std::move(ls));
    }
  }

  // Negative slots on the non-overlapping segment grid, far from all labels.
  std::vector<int> eligible;
  for (int s = 0; s + seg_frames <= stream.frames; s += seg_frames) {
    bool far = true;
    for (const double t : weak_labels_s) {
      const double lo = (t - far_gap_s) * stream.fps;
      const double hi = (t + far_gap_s) * stream.fps;
      if (static_cast<double>(s + seg_frames) > lo && static_cast<double>(s) < hi) {
        far = false;
        break;
      }
    }
    if (far) eligible.push_back(s);
  }
  if (negative_count > 0 && eligible.empty())
    throw DataError("segment_stream: no eligible negative region");
  if (negative_count > static_cast<int>(eligible.size()))
    throw DataError("segment_stream: only " + std::to_string(eligible.size()) +
                    " non-overlapping negative slots available, " +
                    std::to_string(negative_count) + " requested");
  rng.shuffle(eligible.data(), eligible.size());
  for (int i = 0; i < negative_count; ++i) {
    LabeledVideoSegment ls;
    ls.start_frame = eligible[static_cast<size_t>(i)];
    ls.segment = slice_segment(stream, ls.start_frame, seg_frames);
    ls.assigned_label = 0;
    const double mid_s = (static_cast<double>(ls.start_frame) + 0.5 * seg_frames) / stream.fps;
    ls.true_label = events.empty() ? 0 : true_label_for(mid_s, events);
    out.push_back(std::move(ls));
  }
  return out;
}

// Test-mode sampling: consecutive non-overlapping segments spanning the
// stream, true-labeled from the ground-truth intervals.
inline std::vector<LabeledVideoSegment> segment_stream_test(
    const VideoSegment& stream, double seg_seconds, const std::vector<EventInterval>& events) {
  const int seg_frames = static_cast<int>(seg_seconds * stream.fps);
  if (seg_frames < 1 || seg_frames > stream.frames)
    throw DataError("segment_stream: stream shorter than one segment");
  std::vector<LabeledVideoSegment> out;
  for (int s = 0; s + seg_frames <= stream.frames; s += seg_frames) {
    LabeledVideoSegment ls;
    ls.start_frame = s;
    ls.segment = slice_segment(stream, s, seg_frames);
    const double mid_s = (static_cast<double>(s) + 0.5 * seg_frames) / stream.fps;
    ls.true_label = true_label_for(mid_s, events);
    ls.assigned_label = ls.true_label;
    out.push_back(std::move(ls));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary formats
// ---------------------------------------------------------------------------

// Matrix file: magic "XCM0", u32 LE size F, then F*F float64 LE row-major.
inline void xcorr_write(const std::filesystem::path& path, const XCorrMatrix& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write("XCM0", 4);
  const uint32_t size = static_cast<uint32_t>(m.size);
  f.write(reinterpret_cast<const char*>(&size), 4);
  f.write(reinterpret_cast<const char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * 8));
  if (!f) throw DataError("write failed: " + path.string());
}

inline XCorrMatrix xcorr_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open matrix file: " + path.string());
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "XCM0", 4) != 0)
    throw FormatError("matrix " + path.string() + ": bad magic");
  uint32_t size = 0;
  if (!f.read(reinterpret_cast<char*>(&size), 4) || size < 2 || size > 1u << 14)
    throw FormatError("matrix " + path.string() + ": bad size header");
  XCorrMatrix m;
  m.size = static_cast<int>(size);
  m.values.resize(static_cast<size_t>(size) * size);
  if (!f.read(reinterpret_cast<char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * 8)))
    throw FormatError("matrix " + path.string() + ": truncated payload");
  return m;
}

inline CsvWriter xcorr_csv(const XCorrMatrix& m) {
  CsvWriter csv("i,j,value");
  for (int i = 0; i < m.size; ++i)
    for (int j = 0; j < m.size; ++j)
      csv.row({format_int(i), format_int(j), format_double(m.at(i, j))});
  return csv;
}

// Raw video file: magic "XVID", u32 LE frames/height/width/fps, then
// frames*height*width bytes of 8-bit grayscale (values scaled from [0,1]).
inline void video_write(const std::filesystem::path& path, const VideoSegment& seg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write("XVID", 4);
  const uint32_t hdr[4] = {static_cast<uint32_t>(seg.frames), static_cast<uint32_t>(seg.height),
                           static_cast<uint32_t>(seg.width), static_cast<uint32_t>(seg.fps)};
  f.write(reinterpret_cast<const char*>(hdr), 16);
  std::vector<uint8_t> plane(seg.data.size());
  for (size_t i = 0; i < seg.data.size(); ++i) {
    const double v = std::clamp(seg.data[i], 0.0, 1.0);
    plane[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  f.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

inline VideoSegment video_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open video file: " + path.string());
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "XVID", 4) != 0)
    throw FormatError("video " + path.string() + ": bad magic");
  uint32_t hdr[4];
  if (!f.read(reinterpret_cast<char*>(hdr), 16))
    throw FormatError("video " + path.string() + ": truncated header");
  VideoSegment seg;
  seg.frames = static_cast<int>(hdr[0]);
  seg.height = static_cast<int>(hdr[1]);
  seg.width = static_cast<int>(hdr[2]);
  seg.fps = static_cast<int>(hdr[3]);
  if (seg.frames < 1 || seg.height < 1 || seg.width < 1 || seg.fps < 1)
    throw FormatError("video " + path.string() + ": bad header fields");
  std::vector<uint8_t> plane(static_cast<size_t>(seg.frames) * seg.height * seg.width);
  if (!f.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size())))
    throw FormatError("video " + path.string() + ": truncated payload");
  seg.data.resize(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) seg.data[i] = static_cast<double>(plane[i]) / 255.0;
  return seg;
}

} // namespace riskseq
