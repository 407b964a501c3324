#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"
#include "riskseq/rng.hpp"

namespace riskseq {

// A single sequence element: row-major single-channel features plus its
// ground-truth class.
struct Element {
  std::vector<double> features;
  int true_class = 0; // 1 positive, 0 negative
};

// Ordered elements with one event: positives occupy [event_start,
// event_start + event_len). True labels are derived from those two fields.
struct LabeledSequence {
  std::vector<Element> elements;
  int event_start = 0;
  int event_len = 0;

  int true_label(int index) const {
    return (index >= event_start && index < event_start + event_len) ? 1 : 0;
  }
};

enum class SampleSource { RiskPositive, PreLabelNegative, FarNegative, DirectNegative };

inline const char* sample_source_name(SampleSource s) {
  switch (s) {
    case SampleSource::RiskPositive: return "risk_positive";
    case SampleSource::PreLabelNegative: return "pre_label_negative";
    case SampleSource::FarNegative: return "far_negative";
    case SampleSource::DirectNegative: return "direct_negative";
  }
  return "?";
}

struct TrainingSample {
  std::vector<double> features;
  int assigned_label = 0;
  int true_label = 0;
  SampleSource source = SampleSource::RiskPositive;
  int seq_id = -1;       // -1 for samples outside any sequence
  int index_in_seq = -1;

  bool mislabeled() const { return assigned_label != true_label; }
};

// How sequences are generated: length, the uniform integer range of the
// event duration M, and where the event starts.
struct SequenceSpec {
  int seq_len = 10;
  int m_lo = 0;
  int m_hi = 10;
  bool uniform_start = false; // false: event starts at index 0

  void validate() const {
    if (seq_len < 1) throw ConfigError("SequenceSpec: seq_len must be >= 1");
    if (m_lo < 0 || m_lo > m_hi || m_hi > seq_len)
      throw ConfigError("SequenceSpec: need 0 <= m_lo <= m_hi <= seq_len");
  }
};

struct NegativeRules {
  int far_gap = 0;            // P: minimum index distance from the label
  bool allow_pre_label = true;

  void validate_against(int risk_level) const {
    if (far_gap <= risk_level)
      throw ConfigError("NegativeRules: far_gap P must exceed the risk level N");
  }
};

using ElementPool = std::vector<std::vector<double>>; // images of one class

// Draws one sequence: M ~ U[m_lo, m_hi]; positives from pos_pool inside the
// event, negatives from neg_pool elsewhere, both with replacement.
inline LabeledSequence make_sequence(Rng& rng, const SequenceSpec& spec,
                                     const ElementPool& pos_pool, const ElementPool& neg_pool) {
  spec.validate();
  if (pos_pool.empty() || neg_pool.empty())
    throw ConfigError("make_sequence: element pools must be nonempty");
  LabeledSequence seq;
  seq.event_len = static_cast<int>(rng.uniform_int(spec.m_lo, spec.m_hi));
  seq.event_start = spec.uniform_start && seq.event_len < spec.seq_len
                        ? static_cast<int>(rng.uniform_int(0, spec.seq_len - seq.event_len))
                        : 0;
  seq.elements.resize(spec.seq_len);
  for (int i = 0; i < spec.seq_len; ++i) {
    const bool positive = seq.true_label(i) == 1;
    const ElementPool& pool = positive ? pos_pool : neg_pool;
    const size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1));
    seq.elements[i].features = pool[k];
    seq.elements[i].true_class = positive ? 1 : 0;
  }
  return seq;
}

// Risk-level-N positive labeling: the N elements starting at the sparse
// label are assigned positive regardless of their true class. In strict
// mode an N that runs past the sequence end is an error; lenient mode clips
// and reports how many indices were dropped.
inline std::vector<TrainingSample> apply_risk_labels(const LabeledSequence& seq, int risk_level,
                                                     bool strict = true, int seq_id = -1,
                                                     int* clipped = nullptr) {
  if (risk_level < 1) throw ConfigError("apply_risk_labels: risk level must be >= 1");
  const int len = static_cast<int>(seq.elements.size());
  int n = risk_level;
  if (seq.event_start + n > len) {
    if (strict)
      throw DataError("apply_risk_labels: risk level " + std::to_string(risk_level) +
                      " exceeds sequence length " + std::to_string(len) + " from label " +
                      std::to_string(seq.event_start));
    n = len - seq.event_start;
    if (clipped) *clipped += risk_level - n;
  }
  std::vector<TrainingSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int idx = seq.event_start + i;
    TrainingSample s;
    s.features = seq.elements[static_cast<size_t>(idx)].features;
    s.assigned_label = 1;
    s.true_label = seq.true_label(idx);
    s.source = SampleSource::RiskPositive;
    s.seq_id = seq_id;
    s.index_in_seq = idx;
    out.push_back(std::move(s));
  }
  return out;
}

// Number of false positives a risk level introduces: max(0, N - M).
inline int count_false_positives(int event_len, int risk_level) {
  if (event_len < 0 || risk_level < 1)
    throw ConfigError("count_false_positives: need M >= 0, N >= 1");
  return std::max(0, risk_level - event_len);
}

// Negatives drawn only from the safe regions: indices before the sparse
// label and indices at least P past it.
inline std::vector<TrainingSample> sample_negatives(Rng& rng, const LabeledSequence& seq,
                                                    const NegativeRules& rules, int count,
                                                    int seq_id = -1) {
  if (count < 0) throw ConfigError("sample_negatives: count must be >= 0");
  const int len = static_cast<int>(seq.elements.size());
  std::vector<int> eligible;
  if (rules.allow_pre_label)
    for (int i = 0; i < seq.event_start; ++i) eligible.push_back(i);
  for (int i = seq.event_start + rules.far_gap; i < len; ++i) eligible.push_back(i);
  if (eligible.empty())
    throw DataError("sample_negatives: no eligible negative indices (l=" +
                    std::to_string(seq.event_start) + ", P=" + std::to_string(rules.far_gap) + ")");
  std::vector<TrainingSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int idx = eligible[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(eligible.size()) - 1))];
    TrainingSample s;
    s.features = seq.elements[static_cast<size_t>(idx)].features;
    s.assigned_label = 0;
    s.true_label = seq.true_label(idx);
    s.source = idx < seq.event_start ? SampleSource::PreLabelNegative : SampleSource::FarNegative;
    s.seq_id = seq_id;
    s.index_in_seq = idx;
    out.push_back(std::move(s));
  }
  return out;
}

// In-place i.i.d. Gaussian pixel noise (applied before rescaling).
inline void add_gaussian_noise(Rng& rng, ElementPool& images, double mean, double stddev) {
  if (stddev < 0.0) throw ConfigError("add_gaussian_noise: stddev must be >= 0");
  for (auto& img : images)
    for (double& v : img) v += stddev == 0.0 ? mean : rng.normal(mean, stddev);
}

// Per-image min-max rescale to [0,1]; a constant image maps to all zeros.
inline void minmax_rescale(std::vector<double>& img) {
  if (img.empty()) return;
  double lo = img[0], hi = img[0];
  for (double v : img) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) {
    std::fill(img.begin(), img.end(), 0.0);
    return;
  }
  const double inv = 1.0 / (hi - lo);
  for (double& v : img) v = (v - lo) * inv;
}

// ---------------------------------------------------------------------------
// Synthetic pools
// ---------------------------------------------------------------------------

// Generative form: a Gaussian intensity bump whose quadrant depends on the
// class (positive top-left, negative bottom-right), center jittered per
// image, plus i.i.d. pixel noise.
struct SyntheticPoolConfig {
  int h = 10;
  int w = 10;
  int per_class = 512;
  double amplitude = 1.0;
  double blob_sigma = 1.6;
  double noise_stddev = 2.0;
  double center_jitter = 1.5;
};

inline ElementPool make_synthetic_class(Rng& rng, const SyntheticPoolConfig& cfg, bool positive) {
  ElementPool pool(static_cast<size_t>(cfg.per_class));
  const double cy0 = positive ? cfg.h * 0.25 : cfg.h * 0.75;
  const double cx0 = positive ? cfg.w * 0.25 : cfg.w * 0.75;
  for (auto& img : pool) {
    img.resize(static_cast<size_t>(cfg.h) * cfg.w);
    const double cy = cy0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter);
    const double cx = cx0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter);
    const double inv2s2 = 1.0 / (2.0 * cfg.blob_sigma * cfg.blob_sigma);
    for (int y = 0; y < cfg.h; ++y)
      for (int x = 0; x < cfg.w; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        double v = cfg.amplitude * std::exp(-d2 * inv2s2);
        if (cfg.noise_stddev > 0.0) v += rng.normal(0.0, cfg.noise_stddev);
        img[static_cast<size_t>(y) * cfg.w + x] = v;
      }
  }
  return pool;
}

inline std::pair<ElementPool, ElementPool> make_synthetic_pools(Rng& rng,
                                                                const SyntheticPoolConfig& cfg) {
  ElementPool pos = make_synthetic_class(rng, cfg, true);
  ElementPool neg = make_synthetic_class(rng, cfg, false);
  return {std::move(pos), std::move(neg)};
}

// Splits a pool into disjoint subsets of the requested sizes (shuffled).
inline std::vector<ElementPool> split_pool(Rng& rng, const ElementPool& pool,
                                           const std::vector<size_t>& sizes) {
  size_t total = 0;
  for (size_t s : sizes) total += s;
  if (total > pool.size())
    throw DataError("split_pool: pool of " + std::to_string(pool.size()) +
                    " too small for disjoint splits totalling " + std::to_string(total));
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.data(), order.size());
  std::vector<ElementPool> out;
  size_t off = 0;
  for (size_t s : sizes) {
    ElementPool part;
    part.reserve(s);
    for (size_t i = 0; i < s; ++i) part.push_back(pool[order[off + i]]);
    off += s;
    out.push_back(std::move(part));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image-sequence experiment assembly
// ---------------------------------------------------------------------------

struct ImageExperimentConfig {
  SequenceSpec spec;
  int risk_level = 1;
  int sequences_per_split = 50;
  int direct_negatives = 50;
  int test_per_class = 250;
  bool strict = true;
};

struct LabeledImage {
  std::vector<double> features;
  int label = 0;
};

struct ImageExperiment {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> val;
  std::vector<LabeledImage> test;
  int clipped = 0; // lenient-mode clipped label count
};

struct SplitPools {
  ElementPool train_pos, train_neg;
  ElementPool val_pos, val_neg;
  ElementPool test_pos, test_neg;
};

// Builds the risk-labeled train/val sets plus a true-labeled test set.
// Each split uses its own derived RNG stream so adding one stage never
// perturbs another stage's draws. Rescaling is applied to every element.
inline ImageExperiment build_image_experiment(uint64_t seed, const ImageExperimentConfig& cfg,
                                              const SplitPools& pools) {
  cfg.spec.validate();
  if (cfg.risk_level < 1 || cfg.risk_level > cfg.spec.seq_len)
    throw ConfigError("build_image_experiment: risk level out of range");
  for (const ElementPool* p : {&pools.train_pos, &pools.train_neg, &pools.val_pos,
                               &pools.val_neg, &pools.test_pos, &pools.test_neg})
    if (p->empty()) throw DataError("build_image_experiment: empty pool split");

  ImageExperiment out;
  auto build_split = [&](const char* tag, const ElementPool& pos, const ElementPool& neg,
                         std::vector<TrainingSample>& dest) {
    Rng rng(derive_seed(seed, {tag_hash(tag)}));
    for (int s = 0; s < cfg.sequences_per_split; ++s) {
      const LabeledSequence seq = make_sequence(rng, cfg.spec, pos, neg);
      auto samples = apply_risk_labels(seq, cfg.risk_level, cfg.strict, s, &out.clipped);
      for (auto& smp : samples) dest.push_back(std::move(smp));
    }
    for (int i = 0; i < cfg.direct_negatives; ++i) {
      TrainingSample s;
      const size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(neg.size()) - 1));
      s.features = neg[k];
      s.assigned_label = 0;
      s.true_label = 0;
      s.source = SampleSource::DirectNegative;
      dest.push_back(std::move(s));
    }
  };
  build_split("train", pools.train_pos, pools.train_neg, out.train);
  build_split("val", pools.val_pos, pools.val_neg, out.val);

  Rng test_rng(derive_seed(seed, {tag_hash("test")}));
  for (int i = 0; i < cfg.test_per_class; ++i) {
    const size_t k = static_cast<size_t>(
        test_rng.uniform_int(0, static_cast<int64_t>(pools.test_pos.size()) - 1));
    out.test.push_back({pools.test_pos[k], 1});
  }
  for (int i = 0; i < cfg.test_per_class; ++i) {
    const size_t k = static_cast<size_t>(
        test_rng.uniform_int(0, static_cast<int64_t>(pools.test_neg.size()) - 1));
    out.test.push_back({pools.test_neg[k], 0});
  }

  for (auto& s : out.train) minmax_rescale(s.features);
  for (auto& s : out.val) minmax_rescale(s.features);
  for (auto& t : out.test) minmax_rescale(t.features);
  return out;
}

inline double mislabeled_fraction(const std::vector<TrainingSample>& samples) {
  int64_t risk = 0, wrong = 0;
  for (const auto& s : samples) {
    if (s.source != SampleSource::RiskPositive) continue;
    ++risk;
    if (s.mislabeled()) ++wrong;
  }
  return risk == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(risk);
}

// Manifest rows: sample_id,split,source,assigned_label,true_label,seq_id,index_in_seq
inline CsvWriter dataset_manifest_csv(const ImageExperiment& exp) {
  CsvWriter csv("sample_id,split,source,assigned_label,true_label,seq_id,index_in_seq");
  int64_t id = 0;
  auto rows = [&](const std::vector<TrainingSample>& set, const char* split) {
    for (const auto& s : set)
      csv.row({format_int(id++), split, sample_source_name(s.source),
               format_int(s.assigned_label), format_int(s.true_label), format_int(s.seq_id),
               format_int(s.index_in_seq)});
  };
  rows(exp.train, "train");
  rows(exp.val, "val");
  for (const auto& t : exp.test)
    csv.row({format_int(id++), "test", "test", format_int(t.label), format_int(t.label),
             format_int(-1), format_int(-1)});
  return csv;
}

} // namespace riskseq
