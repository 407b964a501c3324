#pragma once
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"
#include "riskseq/metrics.hpp"
#include "riskseq/net.hpp"
#include "riskseq/optim.hpp"
#include "riskseq/rng.hpp"
#include "riskseq/sampler.hpp"

namespace riskseq::nn {

enum class StopCriterion { ValLossMin, ValF1Max };

struct TrainSchedule {
  OptimizerKind optimizer = OptimizerKind::Adadelta;
  AdadeltaConfig adadelta;
  AdamConfig adam;
  StopCriterion criterion = StopCriterion::ValLossMin;
  int patience = 50;
  int max_epochs = 2000;
  int batch_size = 32;
  double pos_weight = 1.0;
  bool balanced_epochs = true; // per-epoch undersampling of the majority class
  double threshold = 0.5;      // for the validation F1 score
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_loss;
  double val_f1;
  bool selected;
};

struct TrainResult {
  ModelParams params;     // checkpoint optimizing the stop criterion
  std::vector<EpochRecord> history;
  int best_epoch = -1;    // -1 when max_epochs == 0
};

// Stacks samples[indices] into a [B,H,W,1] batch.
inline Tensor stack_batch(const std::vector<TrainingSample>& samples,
                          const std::vector<size_t>& indices, size_t begin, size_t end,
                          int h, int w) {
  const int B = static_cast<int>(end - begin);
  Tensor batch = Tensor::zeros({B, h, w, 1});
  for (int b = 0; b < B; ++b) {
    const auto& f = samples[indices[begin + static_cast<size_t>(b)]].features;
    if (f.size() != static_cast<size_t>(h) * w)
      throw DataError("stack_batch: feature size does not match config");
    std::copy(f.begin(), f.end(), batch.data.begin() + static_cast<ptrdiff_t>(b) * h * w);
  }
  return batch;
}

// Scores every sample in order; forward-only, batched.
inline std::vector<double> score_samples(const ModelParams& params, const ConvNetConfig& cfg,
                                         const std::vector<TrainingSample>& samples,
                                         int batch_size = 64) {
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (size_t off = 0; off < samples.size(); off += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(samples.size(), off + static_cast<size_t>(batch_size));
    const Tensor batch = stack_batch(samples, order, off, end, cfg.input_h, cfg.input_w);
    const auto prob = forward(params, cfg, batch, nullptr);
    scores.insert(scores.end(), prob.begin(), prob.end());
  }
  return scores;
}

namespace detail {

struct ValMetrics {
  double loss;
  double f1;
};

inline ValMetrics eval_split(const ModelParams& params, const ConvNetConfig& cfg,
                             const std::vector<TrainingSample>& val,
                             const TrainSchedule& sched) {
  const std::vector<double> scores = score_samples(params, cfg, val, sched.batch_size);
  std::vector<double> labels(val.size());
  std::vector<int> int_labels(val.size());
  for (size_t i = 0; i < val.size(); ++i) {
    labels[i] = static_cast<double>(val[i].assigned_label);
    int_labels[i] = val[i].assigned_label;
  }
  ValMetrics m{};
  m.loss = loss_bce(scores, labels, sched.pos_weight);
  m.f1 = threshold_metrics(ScoredSet(scores, int_labels), sched.threshold).f1;
  return m;
}

// Index sets presented this epoch: balanced mode undersamples the majority
// class without replacement, reshuffled every epoch.
inline std::vector<size_t> epoch_indices(Rng& rng, const std::vector<size_t>& pos,
                                         const std::vector<size_t>& neg, bool balanced) {
  std::vector<size_t> p = pos, n = neg;
  rng.shuffle(p.data(), p.size());
  rng.shuffle(n.data(), n.size());
  std::vector<size_t> out;
  if (balanced && !p.empty() && !n.empty()) {
    const size_t m = std::min(p.size(), n.size());
    out.assign(p.begin(), p.begin() + static_cast<ptrdiff_t>(m));
    out.insert(out.end(), n.begin(), n.begin() + static_cast<ptrdiff_t>(m));
  } else {
    out = p;
    out.insert(out.end(), n.begin(), n.end());
  }
  rng.shuffle(out.data(), out.size());
  return out;
}

} // namespace detail

// Trains from the given initial parameters, returning the checkpoint that
// optimizes the stop criterion plus the per-epoch history. Deterministic
// given (initial params, data, seed).
inline TrainResult train(const ConvNetConfig& cfg, ModelParams initial,
                         const std::vector<TrainingSample>& train_set,
                         const std::vector<TrainingSample>& val_set,
                         const TrainSchedule& sched, uint64_t seed) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw DataError("train: empty train or validation split");
  if (sched.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  TrainResult result;
  result.params = initial;
  if (sched.max_epochs == 0) return result;

  std::vector<size_t> pos_idx, neg_idx;
  for (size_t i = 0; i < train_set.size(); ++i)
    (train_set[i].assigned_label == 1 ? pos_idx : neg_idx).push_back(i);

  Rng rng(derive_seed(seed, {tag_hash("train_loop")}));
  ModelParams params = std::move(initial);
  OptimizerState opt = OptimizerState::make(sched.optimizer, params.num_params());
  opt.adadelta = sched.adadelta;
  opt.adam = sched.adam;

  double best_metric = 0.0;
  bool have_best = false;
  int since_best = 0;

  for (int epoch = 0; epoch < sched.max_epochs; ++epoch) {
    const auto indices = detail::epoch_indices(rng, pos_idx, neg_idx, sched.balanced_epochs);
    double loss_sum = 0.0;
    size_t loss_count = 0;
    for (size_t off = 0; off < indices.size(); off += static_cast<size_t>(sched.batch_size)) {
      const size_t end = std::min(indices.size(), off + static_cast<size_t>(sched.batch_size));
      const Tensor batch = stack_batch(train_set, indices, off, end, cfg.input_h, cfg.input_w);
      std::vector<double> labels(end - off);
      for (size_t i = off; i < end; ++i)
        labels[i - off] = static_cast<double>(train_set[indices[i]].assigned_label);

      ForwardCache cache;
      const auto prob = forward(params, cfg, batch, &cache);
      loss_sum += loss_bce(prob, labels, sched.pos_weight) * static_cast<double>(end - off);
      loss_count += end - off;
      const auto dprob = loss_bce_grad(prob, labels, sched.pos_weight);
      Gradients grads = backward(params, cfg, cache, dprob);
      optimizer_step(opt, params, grads.g);
    }

    const auto vm = detail::eval_split(params, cfg, val_set, sched);
    EpochRecord rec{epoch, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                    vm.loss, vm.f1, false};
    result.history.push_back(rec);

    const double metric = sched.criterion == StopCriterion::ValLossMin ? vm.loss : vm.f1;
    const bool improved = !have_best || (sched.criterion == StopCriterion::ValLossMin
                                             ? metric < best_metric
                                             : metric > best_metric);
    if (improved) {
      best_metric = metric;
      have_best = true;
      since_best = 0;
      result.params = params;
      result.best_epoch = epoch;
    } else {
      ++since_best;
      if (since_best >= sched.patience) break;
    }
  }
  if (result.best_epoch >= 0)
    result.history[static_cast<size_t>(result.best_epoch)].selected = true;
  return result;
}

inline CsvWriter history_csv(const std::vector<EpochRecord>& history) {
  CsvWriter csv("epoch,train_loss,val_loss,val_f1,selected");
  for (const auto& r : history)
    csv.row({format_int(r.epoch), format_double(r.train_loss), format_double(r.val_loss),
             format_double(r.val_f1), r.selected ? "1" : "0"});
  return csv;
}

// Two-stage protocol: pretrain on strong labels with balanced classes, then
// fine-tune from that checkpoint on strong + weak positives against 10x as
// many negatives with a weighted loss and Adam. An empty weak set skips the
// second stage entirely.
struct FinetuneConfig {
  double negatives_per_positive = 10.0;
  double pos_weight = 0.0; // 0 -> default to (negative count / positive count)
};

inline TrainResult pretrain_then_finetune(
    const ConvNetConfig& cfg, ModelParams initial,
    const std::vector<TrainingSample>& strong_train,
    const std::vector<TrainingSample>& strong_val,
    const std::vector<TrainingSample>& weak_positives,
    const ElementPool& negative_pool, const TrainSchedule& pretrain_sched,
    const TrainSchedule& finetune_sched, uint64_t seed) {
  TrainSchedule s1 = pretrain_sched;
  s1.balanced_epochs = true;
  TrainResult stage1 = train(cfg, std::move(initial), strong_train, strong_val, s1,
                             derive_seed(seed, {tag_hash("pretrain")}));
  if (weak_positives.empty()) return stage1;

  std::vector<TrainingSample> ft_train;
  for (const auto& s : strong_train)
    if (s.assigned_label == 1) ft_train.push_back(s);
  for (const auto& s : weak_positives) ft_train.push_back(s);
  const size_t n_pos = ft_train.size();
  if (n_pos == 0) throw DataError("pretrain_then_finetune: no positives for fine-tuning");
  if (negative_pool.empty()) throw DataError("pretrain_then_finetune: empty negative pool");

  FinetuneConfig fc;
  const size_t n_neg =
      static_cast<size_t>(fc.negatives_per_positive * static_cast<double>(n_pos) + 0.5);
  Rng rng(derive_seed(seed, {tag_hash("finetune_negatives")}));
  for (size_t i = 0; i < n_neg; ++i) {
    TrainingSample s;
    s.features = negative_pool[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(negative_pool.size()) - 1))];
    s.assigned_label = 0;
    s.true_label = 0;
    s.source = SampleSource::DirectNegative;
    ft_train.push_back(std::move(s));
  }

  TrainSchedule s2 = finetune_sched;
  s2.optimizer = OptimizerKind::Adam;
  s2.balanced_epochs = false;
  if (s2.pos_weight <= 0.0)
    s2.pos_weight = static_cast<double>(n_neg) / static_cast<double>(n_pos);
  TrainResult stage2 = train(cfg, std::move(stage1.params), ft_train, strong_val, s2,
                             derive_seed(seed, {tag_hash("finetune")}));
  if (stage2.best_epoch < 0) return stage2; // zero-epoch fine-tune: stage-1 params pass through
  return stage2;
}

} // namespace riskseq::nn
