#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"
#include "riskseq/rng.hpp"

namespace riskseq {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels; // 0/1

  ScoredSet() = default;
  ScoredSet(std::vector<double> s, std::vector<int> l)
      : scores(std::move(s)), labels(std::move(l)) {
    validate();
  }

  void validate() const {
    if (scores.empty() || scores.size() != labels.size())
      throw DataError("ScoredSet: scores/labels must be nonempty and equal length");
    for (int y : labels)
      if (y != 0 && y != 1) throw DataError("ScoredSet: labels must be 0/1");
  }

  size_t size() const { return scores.size(); }
  int num_positive() const { return std::accumulate(labels.begin(), labels.end(), 0); }
};

struct ThresholdMetrics {
  double precision;
  double recall;
  double f1;
};

// Prediction rule: positive iff score >= threshold.
// Conventions: precision = 1 when nothing is predicted positive; with no
// true positives in the set, recall = 1 if nothing is predicted, else 0.
inline ThresholdMetrics threshold_metrics(const ScoredSet& set, double threshold) {
  set.validate();
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    const bool pred = set.scores[i] >= threshold;
    if (pred && set.labels[i] == 1) ++tp;
    else if (pred && set.labels[i] == 0) ++fp;
    else if (!pred && set.labels[i] == 1) ++fn;
  }
  ThresholdMetrics m{};
  m.precision = (tp + fp == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn == 0) {
    m.recall = (tp + fp == 0) ? 1.0 : 0.0;
  } else {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  m.f1 = (m.precision + m.recall > 0.0)
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

// Average precision with step interpolation over descending-score ranks.
// Tied scores are processed as one block using the block's cumulative counts,
// so input order never affects the result.
inline double average_precision(const ScoredSet& set) {
  set.validate();
  const int total_pos = set.num_positive();
  if (total_pos == 0) throw DataError("average_precision: no positive labels");

  std::vector<size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return set.scores[a] > set.scores[b];
  });

  double ap = 0.0;
  int64_t tp = 0, seen = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    int64_t block_tp = 0;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) {
      block_tp += set.labels[order[j]];
      ++j;
    }
    const int64_t prev_tp = tp;
    tp += block_tp;
    seen += static_cast<int64_t>(j - i);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    const double recall_step = static_cast<double>(tp - prev_tp) / total_pos;
    ap += recall_step * precision;
    i = j;
  }
  return ap;
}

// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
// ties counting one half. O(n log n) via rank sums.
inline double auc(const ScoredSet& set) {
  set.validate();
  const int64_t pos = set.num_positive();
  const int64_t neg = static_cast<int64_t>(set.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("auc: needs at least one positive and one negative");

  std::vector<size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return set.scores[a] < set.scores[b];
  });

  // Midrank assignment over tie blocks, then the rank-sum statistic.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (set.labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Sample Pearson correlation; errors on constant input.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DataError("pearson: needs equal lengths >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: constant input");
  return sxy / std::sqrt(sxx * syy);
}

struct BootstrapInterval {
  double lo;
  double hi;
  int skipped; // resamples where the metric was undefined
};

// Percentile bootstrap over sample-level resampling with replacement.
// Resample r uses the substream derive_seed(seed, {r}), so the interval is
// deterministic and independent of evaluation order. Resamples on which the
// metric is undefined (DataError) are skipped and counted; more than 50%
// undefined is a degenerate-input error.
inline BootstrapInterval bootstrap_ci(
    uint64_t seed, const ScoredSet& set,
    const std::function<double(const ScoredSet&)>& metric,
    int resamples = 2000, double level = 0.95) {
  set.validate();
  if (resamples < 1) throw ConfigError("bootstrap_ci: resamples must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap_ci: level must be in (0,1)");

  const size_t n = set.size();
  std::vector<double> stats;
  stats.reserve(static_cast<size_t>(resamples));
  int skipped = 0;
  ScoredSet resample;
  resample.scores.resize(n);
  resample.labels.resize(n);
  for (int r = 0; r < resamples; ++r) {
    Rng rng(derive_seed(seed, {static_cast<uint64_t>(r)}));
    for (size_t i = 0; i < n; ++i) {
      const size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 1));
      resample.scores[i] = set.scores[k];
      resample.labels[i] = set.labels[k];
    }
    try {
      stats.push_back(metric(resample));
    } catch (const DataError&) {
      ++skipped;
    }
  }
  if (stats.empty() || skipped * 2 > resamples)
    throw DataError("bootstrap_ci: metric undefined on more than half of the resamples");

  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  auto percentile = [&](double p) {
    // Linear interpolation between order statistics.
    const double idx = p * static_cast<double>(stats.size() - 1);
    const size_t lo = static_cast<size_t>(idx);
    const size_t hi = std::min(lo + 1, stats.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return stats[lo] * (1.0 - frac) + stats[hi] * frac;
  };
  return {percentile(tail), percentile(1.0 - tail), skipped};
}

// The same percentile-bootstrap routine applied to run-level means: the
// "samples" are per-run metric values and the statistic is their mean.
inline BootstrapInterval bootstrap_mean_ci(uint64_t seed, const std::vector<double>& values,
                                           int resamples = 2000, double level = 0.95) {
  if (values.empty()) throw DataError("bootstrap_mean_ci: empty input");
  std::vector<double> stats(static_cast<size_t>(resamples));
  const size_t n = values.size();
  for (int r = 0; r < resamples; ++r) {
    Rng rng(derive_seed(seed, {static_cast<uint64_t>(r)}));
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i)
      sum += values[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 1))];
    stats[static_cast<size_t>(r)] = sum / static_cast<double>(n);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  auto percentile = [&](double p) {
    const double idx = p * static_cast<double>(stats.size() - 1);
    const size_t lo = static_cast<size_t>(idx);
    const size_t hi = std::min(lo + 1, stats.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return stats[lo] * (1.0 - frac) + stats[hi] * frac;
  };
  return {percentile(tail), percentile(1.0 - tail), 0};
}

struct EvalReport {
  double precision = 0, recall = 0, f1 = 0;
  double average_precision = 0, auc = 0;
  std::optional<BootstrapInterval> precision_ci, recall_ci, f1_ci, ap_ci, auc_ci;
};

// Full report at a threshold; CIs are bootstrapped when a seed is given.
inline EvalReport evaluate_scores(const ScoredSet& set, double threshold,
                                  std::optional<uint64_t> ci_seed = std::nullopt,
                                  int resamples = 2000) {
  EvalReport rep;
  const auto tm = threshold_metrics(set, threshold);
  rep.precision = tm.precision;
  rep.recall = tm.recall;
  rep.f1 = tm.f1;
  rep.average_precision = average_precision(set);
  rep.auc = auc(set);
  if (ci_seed) {
    auto ci = [&](const std::function<double(const ScoredSet&)>& m, uint64_t tag) {
      return bootstrap_ci(derive_seed(*ci_seed, {tag}), set, m, resamples);
    };
    rep.precision_ci = ci([=](const ScoredSet& s) { return threshold_metrics(s, threshold).precision; }, 1);
    rep.recall_ci = ci([=](const ScoredSet& s) { return threshold_metrics(s, threshold).recall; }, 2);
    rep.f1_ci = ci([=](const ScoredSet& s) { return threshold_metrics(s, threshold).f1; }, 3);
    rep.ap_ci = ci([](const ScoredSet& s) { return average_precision(s); }, 4);
    rep.auc_ci = ci([](const ScoredSet& s) { return auc(s); }, 5);
  }
  return rep;
}

inline CsvWriter eval_report_csv(const EvalReport& rep) {
  CsvWriter csv("metric,value,ci_lo,ci_hi");
  auto row = [&](const char* name, double v, const std::optional<BootstrapInterval>& ci) {
    csv.row({name, format_double(v), ci ? format_double(ci->lo) : "",
             ci ? format_double(ci->hi) : ""});
  };
  row("precision", rep.precision, rep.precision_ci);
  row("recall", rep.recall, rep.recall_ci);
  row("f1", rep.f1, rep.f1_ci);
  row("average_precision", rep.average_precision, rep.ap_ci);
  row("auc", rep.auc, rep.auc_ci);
  return csv;
}

} // namespace riskseq
