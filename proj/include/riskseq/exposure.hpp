#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"

namespace riskseq {

// Parameters of the inaccuracy-exposure model: exponential decay constant
// alpha (per element, or per frame when segment_len > 1) and the number of
// frames per element L.
struct ExposureParams {
  double alpha = 0.0;
  int segment_len = 1;

  ExposureParams(double a, int L) : alpha(a), segment_len(L) {
    if (!(alpha > 0.0)) throw ConfigError("ExposureParams: alpha must be > 0");
    if (segment_len < 1) throw ConfigError("ExposureParams: segment_len must be >= 1");
  }
};

// Per-label sample counts for multi-sequence exposure: counts[t] = N_t.
struct LabelSet {
  std::vector<int> counts;

  explicit LabelSet(std::vector<int> c) : counts(std::move(c)) {
    if (counts.empty()) throw ConfigError("LabelSet: needs at least one label");
    for (int n : counts)
      if (n < 1) throw ConfigError("LabelSet: all counts must be >= 1");
  }
};

// Probability that the element `offset` positions after a sparse label is
// mislabeled: 1 - e^(-alpha * offset * L). Zero at the label itself.
inline double mislabel_prob(const ExposureParams& params, int offset) {
  if (offset < 0) throw ConfigError("mislabel_prob: offset must be >= 0");
  return 1.0 - std::exp(-params.alpha * static_cast<double>(offset) * params.segment_len);
}

// Exposure at risk level N: expected fraction of mislabeled elements among
// the N sampled after a label, 1 - (1/N) * sum_{n=0}^{N-1} e^(-alpha*n*L).
// Forward-order summation; terms are <= 1 and decreasing.
inline double exposure(const ExposureParams& params, int risk_level) {
  if (risk_level < 1) throw ConfigError("exposure: risk level must be >= 1");
  double sum = 0.0;
  for (int n = 0; n < risk_level; ++n)
    sum += std::exp(-params.alpha * static_cast<double>(n) * params.segment_len);
  return 1.0 - sum / static_cast<double>(risk_level);
}

// Exposure over T independent labels with per-label counts N_t: the mean of
// the per-label exposures. Equals exposure(N) when all counts are N.
inline double exposure_multi(const ExposureParams& params, const LabelSet& labels) {
  double sum = 0.0;
  for (int n : labels.counts) sum += exposure(params, n);
  return sum / static_cast<double>(labels.counts.size());
}

// Recommended calibration: alpha = ln(2) / E(M), the half-life construction.
// `per_frame` only documents the unit of E(M); the formula is unit-agnostic.
enum class DurationUnit { Element, Frame };

inline double calibrate_alpha(double expected_duration, DurationUnit /*unit*/ = DurationUnit::Element) {
  if (!(expected_duration > 0.0))
    throw ConfigError("calibrate_alpha: expected duration must be > 0");
  return std::log(2.0) / expected_duration;
}

struct ExposureCurveRow {
  double alpha;
  int segment_len;
  int risk_level;
  double exposure;
};

// Exact exposure values for N = 1..n_max at each (alpha, L) grid point.
inline std::vector<ExposureCurveRow> exposure_curve(
    const std::vector<ExposureParams>& grid, int n_max) {
  if (n_max < 1) throw ConfigError("exposure_curve: n_max must be >= 1");
  std::vector<ExposureCurveRow> rows;
  rows.reserve(grid.size() * static_cast<size_t>(n_max));
  for (const auto& p : grid)
    for (int n = 1; n <= n_max; ++n)
      rows.push_back({p.alpha, p.segment_len, n, exposure(p, n)});
  return rows;
}

inline CsvWriter exposure_curve_csv(const std::vector<ExposureCurveRow>& rows) {
  CsvWriter csv("alpha,L,N,exposure");
  for (const auto& r : rows)
    csv.row({format_double(r.alpha), format_int(r.segment_len),
             format_int(r.risk_level), format_double(r.exposure)});
  return csv;
}

} // namespace riskseq
