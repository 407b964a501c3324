#pragma once
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "riskseq/checkpoint.hpp"
#include "riskseq/config.hpp"
#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"
#include "riskseq/exposure.hpp"
#include "riskseq/idx.hpp"
#include "riskseq/metrics.hpp"
#include "riskseq/net.hpp"
#include "riskseq/sampler.hpp"
#include "riskseq/train.hpp"
#include "riskseq/xcorr.hpp"

namespace riskseq {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class ExperimentKind { SyntheticSeq, Mnist1v0, XcorrDemo };

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "synthetic_seq") return ExperimentKind::SyntheticSeq;
  if (s == "mnist_1v0") return ExperimentKind::Mnist1v0;
  if (s == "xcorr_demo") return ExperimentKind::XcorrDemo;
  throw ConfigError("unknown experiment kind: " + s);
}

inline const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::SyntheticSeq: return "synthetic_seq";
    case ExperimentKind::Mnist1v0: return "mnist_1v0";
    case ExperimentKind::XcorrDemo: return "xcorr_demo";
  }
  return "?";
}

struct HarnessConfig {
  Config raw;
  ExperimentKind kind = ExperimentKind::SyntheticSeq;
  uint64_t master_seed = 42;
  fs::path out_dir = "out";
  int jobs = 1;
  bool strict = true;

  std::vector<int> risk_levels{1, 2, 3, 4, 5, 6, 7, 8, 9};
  int runs_per_level = 10;

  // Dataset parameters (synthetic_seq / mnist_1v0).
  SyntheticPoolConfig pool;
  size_t train_pool = 0, val_pool = 0, test_pool = 0; // 0 -> derived from per_class
  ImageExperimentConfig experiment;
  double noise_mean = 0.0; // additive noise applied to image pools
  double noise_stddev = 0.0;

  // MNIST file paths.
  fs::path mnist_train_images, mnist_train_labels, mnist_test_images, mnist_test_labels;
  int positive_digit = 1, negative_digit = 0;

  nn::ConvNetConfig model;
  nn::TrainSchedule schedule;
  int eval_resamples = 1000;

  // Exposure-curve grid.
  std::vector<double> exposure_alphas{0.05, 0.1386294361119891, 0.5};
  std::vector<int> exposure_lens{1, 5};
  int exposure_n_max = 9;

  // xcorr demo parameters.
  SyntheticVideoConfig video;
  int xcorr_period = 8;
  int xcorr_train_per_class = 40;
  int xcorr_val_per_class = 12;
  int xcorr_test_per_class = 30;
  int finetune_streams = 6;
  int finetune_risk_level = 3;
  double finetune_far_gap_s = 60.0;
};

inline nn::TrainSchedule schedule_from_config(const Config& c) {
  nn::TrainSchedule s;
  const std::string opt = c.get_str("train.optimizer", "adadelta");
  if (opt == "adadelta") s.optimizer = nn::OptimizerKind::Adadelta;
  else if (opt == "adam") s.optimizer = nn::OptimizerKind::Adam;
  else throw ConfigError("train.optimizer must be adadelta or adam");
  const std::string crit = c.get_str("train.criterion", "val_loss_min");
  if (crit == "val_loss_min") s.criterion = nn::StopCriterion::ValLossMin;
  else if (crit == "val_f1_max") s.criterion = nn::StopCriterion::ValF1Max;
  else throw ConfigError("train.criterion must be val_loss_min or val_f1_max");
  s.patience = static_cast<int>(c.get_int("train.patience", crit == "val_f1_max" ? 400 : 50));
  s.max_epochs = static_cast<int>(c.get_int("train.max_epochs", 2000));
  s.batch_size = static_cast<int>(c.get_int("train.batch_size", 32));
  s.pos_weight = c.get_double("train.pos_weight", 1.0);
  s.balanced_epochs = c.get_bool("train.balanced_epochs", true);
  s.threshold = c.get_double("train.threshold", 0.5);
  s.adam.lr = c.get_double("train.adam_lr", 1e-3);
  return s;
}

inline HarnessConfig load_harness_config(const Config& c) {
  HarnessConfig h;
  h.raw = c;
  h.kind = parse_kind(c.get_str("run.kind", "synthetic_seq"));
  h.master_seed = static_cast<uint64_t>(c.get_int("run.seed", 42));
  h.out_dir = c.get_str("run.out", "out");
  h.strict = c.get_bool("run.strict", true);

  h.risk_levels.clear();
  for (int64_t n : c.get_int_list("sweep.risk_levels", {1, 2, 3, 4, 5, 6, 7, 8, 9})) {
    if (n < 1 || n > 9) throw ConfigError("sweep.risk_levels must lie in [1,9]");
    h.risk_levels.push_back(static_cast<int>(n));
  }
  h.runs_per_level = static_cast<int>(c.get_int("sweep.runs_per_level", 10));

  h.pool.h = static_cast<int>(c.get_int("data.image_h", 10));
  h.pool.w = static_cast<int>(c.get_int("data.image_w", 10));
  h.pool.per_class = static_cast<int>(c.get_int("data.pool_per_class", 700));
  h.pool.amplitude = c.get_double("data.blob_amplitude", 1.0);
  h.pool.blob_sigma = c.get_double("data.blob_sigma", 1.6);
  h.pool.noise_stddev = c.get_double("data.pool_noise_stddev", 2.0);
  h.pool.center_jitter = c.get_double("data.center_jitter", 1.5);
  h.train_pool = static_cast<size_t>(c.get_int("data.train_pool", 250));
  h.val_pool = static_cast<size_t>(c.get_int("data.val_pool", 250));
  h.test_pool = static_cast<size_t>(c.get_int("data.test_pool", 200));

  h.experiment.spec.seq_len = static_cast<int>(c.get_int("data.seq_len", 10));
  h.experiment.spec.m_lo = static_cast<int>(c.get_int("data.m_lo", 0));
  h.experiment.spec.m_hi = static_cast<int>(c.get_int("data.m_hi", 10));
  h.experiment.sequences_per_split = static_cast<int>(c.get_int("data.sequences_per_split", 50));
  h.experiment.direct_negatives = static_cast<int>(c.get_int("data.direct_negatives", 50));
  h.experiment.test_per_class = static_cast<int>(c.get_int("data.test_per_class", 200));
  h.experiment.strict = h.strict;
  h.noise_mean = c.get_double("data.noise_mean", 0.0);
  h.noise_stddev = c.get_double("data.noise_stddev", 0.0);

  h.mnist_train_images = c.get_str("mnist.train_images", "");
  h.mnist_train_labels = c.get_str("mnist.train_labels", "");
  h.mnist_test_images = c.get_str("mnist.test_images", "");
  h.mnist_test_labels = c.get_str("mnist.test_labels", "");
  h.positive_digit = static_cast<int>(c.get_int("mnist.positive_digit", 1));
  h.negative_digit = static_cast<int>(c.get_int("mnist.negative_digit", 0));

  h.model.block1_filters = static_cast<int>(c.get_int("model.block1_filters", 8));
  h.model.block2_filters = static_cast<int>(c.get_int("model.block2_filters", 16));
  h.schedule = schedule_from_config(c);
  h.eval_resamples = static_cast<int>(c.get_int("eval.resamples", 1000));

  h.exposure_alphas = c.get_double_list("exposure.alphas", h.exposure_alphas);
  std::vector<int64_t> lens = c.get_int_list("exposure.segment_lens", {1, 5});
  h.exposure_lens.clear();
  for (int64_t l : lens) h.exposure_lens.push_back(static_cast<int>(l));
  h.exposure_n_max = static_cast<int>(c.get_int("exposure.n_max", 9));

  h.video.frames = static_cast<int>(c.get_int("xcorr.frames", 75));
  h.video.height = static_cast<int>(c.get_int("xcorr.height", 24));
  h.video.width = static_cast<int>(c.get_int("xcorr.width", 160));
  h.video.fps = static_cast<int>(c.get_int("xcorr.fps", 15));
  h.video.noise_stddev = c.get_double("xcorr.noise_stddev", 0.05);
  h.xcorr_period = static_cast<int>(c.get_int("xcorr.period", 8));
  h.xcorr_train_per_class = static_cast<int>(c.get_int("xcorr.train_per_class", 40));
  h.xcorr_val_per_class = static_cast<int>(c.get_int("xcorr.val_per_class", 12));
  h.xcorr_test_per_class = static_cast<int>(c.get_int("xcorr.test_per_class", 30));
  h.finetune_streams = static_cast<int>(c.get_int("xcorr.finetune_streams", 6));
  h.finetune_risk_level = static_cast<int>(c.get_int("xcorr.finetune_risk_level", 3));
  h.finetune_far_gap_s = c.get_double("xcorr.finetune_far_gap_s", 60.0);
  return h;
}

// ---------------------------------------------------------------------------
// Run directories and manifests
// ---------------------------------------------------------------------------

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

// The manifest carries the config hash and seed; the timestamp line is the
// only part of a run directory allowed to differ between identical reruns.
inline void write_manifest(const fs::path& dir, const HarnessConfig& h, uint64_t seed,
                           const std::string& extra = "") {
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(h.raw.content_hash()));
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  std::string text;
  text += "config_hash=" + std::string(hash_hex) + "\n";
  text += "seed=" + format_int(static_cast<int64_t>(seed)) + "\n";
  text += "kind=" + std::string(kind_name(h.kind)) + "\n";
  if (!extra.empty()) text += extra;
  text += "timestamp_ms=" +
          format_int(std::chrono::duration_cast<std::chrono::milliseconds>(now).count()) + "\n";
  write_text(dir / "manifest", text);
}

inline fs::path run_dir(const HarnessConfig& h, int risk_level, int run) {
  return h.out_dir / kind_name(h.kind) / ("N=" + std::to_string(risk_level)) /
         ("run=" + std::to_string(run));
}

// Documented cell-seed derivation: chained splitmix64 over (master, N, run, stage).
inline uint64_t cell_seed(uint64_t master, int risk_level, int run, const char* stage) {
  return derive_seed(master, {static_cast<uint64_t>(risk_level), static_cast<uint64_t>(run),
                              tag_hash(stage)});
}

// ---------------------------------------------------------------------------
// Dataset assembly per experiment kind
// ---------------------------------------------------------------------------

struct ImageDataBundle {
  SplitPools pools;
  std::vector<LabeledImage> shared_test; // fixed across all sweep cells
  int h = 0, w = 0;
};

inline ImageDataBundle build_synthetic_pools(const HarnessConfig& h) {
  ImageDataBundle b;
  b.h = h.pool.h;
  b.w = h.pool.w;
  Rng rng(derive_seed(h.master_seed, {tag_hash("pools")}));
  auto [pos, neg] = make_synthetic_pools(rng, h.pool);
  Rng split_rng(derive_seed(h.master_seed, {tag_hash("pool_split")}));
  const auto pp = split_pool(split_rng, pos, {h.train_pool, h.val_pool, h.test_pool});
  const auto np = split_pool(split_rng, neg, {h.train_pool, h.val_pool, h.test_pool});
  b.pools = SplitPools{pp[0], np[0], pp[1], np[1], pp[2], np[2]};
  return b;
}

inline ImageDataBundle build_mnist_pools(const HarnessConfig& h) {
  for (const fs::path* p : {&h.mnist_train_images, &h.mnist_train_labels, &h.mnist_test_images,
                            &h.mnist_test_labels})
    if (p->empty()) throw ConfigError("mnist_1v0 requires the four [mnist] IDX paths");

  const IdxData train_images = idx_read(h.mnist_train_images);
  const IdxData train_labels = idx_read(h.mnist_train_labels);
  const IdxData test_images = idx_read(h.mnist_test_images);
  const IdxData test_labels = idx_read(h.mnist_test_labels);
  if (train_images.count() != train_labels.count() || test_images.count() != test_labels.count())
    throw DataError("mnist: image/label counts differ");

  ImageDataBundle b;
  b.h = static_cast<int>(train_images.dims.at(1));
  b.w = static_cast<int>(train_images.dims.at(2));

  auto select = [&](const IdxData& images, const IdxData& labels, int digit) {
    ElementPool pool;
    const auto real = idx_images_to_real(images);
    for (size_t i = 0; i < labels.payload.size(); ++i)
      if (labels.payload[i] == digit) pool.push_back(real[i]);
    if (pool.empty()) throw DataError("mnist: no images of digit " + std::to_string(digit));
    return pool;
  };
  ElementPool pos = select(train_images, train_labels, h.positive_digit);
  ElementPool neg = select(train_images, train_labels, h.negative_digit);
  ElementPool test_pos = select(test_images, test_labels, h.positive_digit);
  ElementPool test_neg = select(test_images, test_labels, h.negative_digit);

  // Additive Gaussian noise before rescaling, fixed by the master seed.
  Rng noise_rng(derive_seed(h.master_seed, {tag_hash("mnist_noise")}));
  if (h.noise_stddev > 0.0 || h.noise_mean != 0.0)
    for (ElementPool* p : {&pos, &neg, &test_pos, &test_neg})
      add_gaussian_noise(noise_rng, *p, h.noise_mean, h.noise_stddev);

  // The original training images split equally into train and validation.
  Rng split_rng(derive_seed(h.master_seed, {tag_hash("pool_split")}));
  const auto pp = split_pool(split_rng, pos, {pos.size() / 2, pos.size() - pos.size() / 2});
  const auto np = split_pool(split_rng, neg, {neg.size() / 2, neg.size() - neg.size() / 2});
  b.pools = SplitPools{pp[0], np[0], pp[1], np[1], std::move(test_pos), std::move(test_neg)};
  return b;
}

inline ImageDataBundle build_image_bundle(const HarnessConfig& h) {
  ImageDataBundle b = h.kind == ExperimentKind::Mnist1v0 ? build_mnist_pools(h)
                                                         : build_synthetic_pools(h);
  // Shared test set, drawn once from the master seed.
  Rng test_rng(derive_seed(h.master_seed, {tag_hash("shared_test")}));
  for (int i = 0; i < h.experiment.test_per_class; ++i) {
    const auto& pool = b.pools.test_pos;
    b.shared_test.push_back({pool[static_cast<size_t>(test_rng.uniform_int(
                                0, static_cast<int64_t>(pool.size()) - 1))],
                             1});
  }
  for (int i = 0; i < h.experiment.test_per_class; ++i) {
    const auto& pool = b.pools.test_neg;
    b.shared_test.push_back({pool[static_cast<size_t>(test_rng.uniform_int(
                                0, static_cast<int64_t>(pool.size()) - 1))],
                             0});
  }
  for (auto& t : b.shared_test) minmax_rescale(t.features);
  return b;
}

// Train/val for one sweep cell; the shared test replaces the per-cell draw.
inline ImageExperiment build_cell_dataset(const HarnessConfig& h, const ImageDataBundle& bundle,
                                          int risk_level, uint64_t seed) {
  ImageExperimentConfig cfg = h.experiment;
  cfg.risk_level = risk_level;
  cfg.test_per_class = 0;
  ImageExperiment exp = build_image_experiment(seed, cfg, bundle.pools);
  exp.test = bundle.shared_test;
  return exp;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline ScoredSet score_test_set(const nn::ModelParams& params, const nn::ConvNetConfig& cfg,
                                const std::vector<LabeledImage>& test, int batch_size = 64) {
  std::vector<TrainingSample> as_samples(test.size());
  for (size_t i = 0; i < test.size(); ++i) {
    as_samples[i].features = test[i].features;
    as_samples[i].assigned_label = test[i].label;
  }
  ScoredSet s;
  s.scores = nn::score_samples(params, cfg, as_samples, batch_size);
  s.labels.resize(test.size());
  for (size_t i = 0; i < test.size(); ++i) s.labels[i] = test[i].label;
  return s;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline fs::path cmd_exposure(const HarnessConfig& h) {
  std::vector<ExposureParams> grid;
  for (double a : h.exposure_alphas)
    for (int l : h.exposure_lens) grid.emplace_back(a, l);
  const auto rows = exposure_curve(grid, h.exposure_n_max);
  const fs::path dir = h.out_dir / "exposure";
  fs::create_directories(dir);
  exposure_curve_csv(rows).write_file(dir / "curve.csv");
  write_manifest(dir, h, h.master_seed);
  return dir / "curve.csv";
}

inline IdxData images_to_idx(const std::vector<std::vector<double>>& images, int hgt, int wid) {
  IdxData d;
  d.dims = {static_cast<uint32_t>(images.size()), static_cast<uint32_t>(hgt),
            static_cast<uint32_t>(wid)};
  d.payload.reserve(images.size() * static_cast<size_t>(hgt) * wid);
  for (const auto& img : images)
    for (double v : img) {
      const double c = std::clamp(v, 0.0, 1.0);
      d.payload.push_back(static_cast<uint8_t>(std::lround(c * 255.0)));
    }
  return d;
}

// Writes the generated dataset: manifest CSV plus IDX exports per split.
inline fs::path cmd_generate(const HarnessConfig& h) {
  const fs::path dir = h.out_dir / kind_name(h.kind) / "gen";
  fs::create_directories(dir);

  if (h.kind == ExperimentKind::XcorrDemo) {
    // Sample artifacts for inspection: one segment and matrix per class.
    Rng rng(derive_seed(h.master_seed, {tag_hash("demo_samples")}));
    const auto rep = make_synthetic_video(rng, MotionKind::Repetitive, h.xcorr_period, h.video);
    const auto ape = make_synthetic_video(rng, MotionKind::Aperiodic, 0, h.video);
    video_write(dir / "repetitive.vid", rep);
    video_write(dir / "aperiodic.vid", ape);
    xcorr_write(dir / "repetitive.xcm", normalize_percentile(xcorr_matrix(rep)));
    xcorr_write(dir / "aperiodic.xcm", normalize_percentile(xcorr_matrix(ape)));
    xcorr_csv(normalize_percentile(xcorr_matrix(rep))).write_file(dir / "repetitive.csv");
    write_manifest(dir, h, h.master_seed);
    return dir;
  }

  const ImageDataBundle bundle = build_image_bundle(h);
  ImageExperimentConfig cfg = h.experiment;
  cfg.risk_level = static_cast<int>(h.raw.get_int("train.risk_level", 1));
  cfg.test_per_class = 0;
  ImageExperiment exp = build_image_experiment(
      cell_seed(h.master_seed, cfg.risk_level, 0, "dataset"), cfg, bundle.pools);
  exp.test = bundle.shared_test;

  dataset_manifest_csv(exp).write_file(dir / "dataset.csv");
  auto dump = [&](const std::vector<TrainingSample>& set, const char* stem) {
    std::vector<std::vector<double>> images;
    IdxData labels;
    labels.dims = {static_cast<uint32_t>(set.size())};
    for (const auto& s : set) {
      images.push_back(s.features);
      labels.payload.push_back(static_cast<uint8_t>(s.assigned_label));
    }
    idx_write(dir / (std::string(stem) + "-images.idx"), images_to_idx(images, bundle.h, bundle.w));
    idx_write(dir / (std::string(stem) + "-labels.idx"), labels);
  };
  dump(exp.train, "train");
  dump(exp.val, "val");
  {
    std::vector<std::vector<double>> images;
    IdxData labels;
    labels.dims = {static_cast<uint32_t>(exp.test.size())};
    for (const auto& t : exp.test) {
      images.push_back(t.features);
      labels.payload.push_back(static_cast<uint8_t>(t.label));
    }
    idx_write(dir / "test-images.idx", images_to_idx(images, bundle.h, bundle.w));
    idx_write(dir / "test-labels.idx", labels);
  }
  write_manifest(dir, h, h.master_seed);
  return dir;
}

struct CellResult {
  int risk_level = 0;
  int run = 0;
  uint64_t seed = 0;
  EvalReport report;
  double mislabeled_fraction = 0.0;
  uint64_t test_manifest_hash = 0;
};

inline uint64_t hash_bytes(const std::string& bytes) {
  uint64_t hsh = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hsh ^= c;
    hsh *= 0x100000001b3ULL;
  }
  return hsh;
}

// One (N, run) sweep cell: build, train, evaluate, write the run directory.
inline CellResult run_sweep_cell(const HarnessConfig& h, const ImageDataBundle& bundle,
                                 int risk_level, int run, bool with_ci) {
  CellResult cell;
  cell.risk_level = risk_level;
  cell.run = run;
  cell.seed = cell_seed(h.master_seed, risk_level, run, "cell");

  const ImageExperiment exp = build_cell_dataset(h, bundle, risk_level,
                                                 derive_seed(cell.seed, {tag_hash("dataset")}));
  cell.mislabeled_fraction = mislabeled_fraction(exp.train);

  nn::ConvNetConfig net = h.model;
  net.input_h = bundle.h;
  net.input_w = bundle.w;
  const nn::ModelParams init =
      nn::init_params(net, derive_seed(cell.seed, {tag_hash("init")}));
  const nn::TrainResult trained = nn::train(net, init, exp.train, exp.val, h.schedule,
                                            derive_seed(cell.seed, {tag_hash("train")}));

  const ScoredSet scored = score_test_set(trained.params, net, exp.test, h.schedule.batch_size);
  cell.report = evaluate_scores(
      scored, h.schedule.threshold,
      with_ci ? std::optional<uint64_t>(derive_seed(cell.seed, {tag_hash("ci")})) : std::nullopt,
      h.eval_resamples);

  const fs::path dir = run_dir(h, risk_level, run);
  fs::create_directories(dir);
  const auto manifest_csv = dataset_manifest_csv(exp);
  manifest_csv.write_file(dir / "dataset.csv");
  nn::history_csv(trained.history).write_file(dir / "history.csv");
  nn::save_params(trained.params, dir / "params.bin");
  eval_report_csv(cell.report).write_file(dir / "report.csv");
  write_manifest(dir, h, cell.seed);

  // Hash of the test rows only; must be identical across every cell.
  std::string test_rows;
  std::istringstream ss(manifest_csv.content());
  std::string line;
  while (std::getline(ss, line))
    if (line.find(",test,") != std::string::npos) test_rows += line + "\n";
  cell.test_manifest_hash = hash_bytes(test_rows);
  return cell;
}

struct SweepOutput {
  fs::path results_csv;
  fs::path summary_csv;
  std::vector<CellResult> cells;
};

inline SweepOutput cmd_sweep(const HarnessConfig& h) {
  if (h.kind == ExperimentKind::XcorrDemo)
    throw ConfigError("sweep applies to synthetic_seq and mnist_1v0 kinds");
  const ImageDataBundle bundle = build_image_bundle(h);

  struct Task {
    int risk_level;
    int run;
  };
  std::vector<Task> tasks;
  for (int n : h.risk_levels)
    for (int r = 0; r < h.runs_per_level; ++r) tasks.push_back({n, r});

  std::vector<CellResult> cells(tasks.size());
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        cells[i] = run_sweep_cell(h, bundle, tasks[i].risk_level, tasks[i].run, true);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  const int jobs = std::max(1, h.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& c : cells)
    if (c.test_manifest_hash != cells[0].test_manifest_hash)
      throw DataError("sweep: test split differs between cells");

  // Results in sorted (N, run) order regardless of completion order.
  std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
    return a.risk_level != b.risk_level ? a.risk_level < b.risk_level : a.run < b.run;
  });

  const fs::path dir = h.out_dir / kind_name(h.kind);
  fs::create_directories(dir);
  CsvWriter results("N,run,seed,recall,precision,f1,ap,auc,mislabeled_fraction");
  for (const auto& c : cells)
    results.row({format_int(c.risk_level), format_int(c.run),
                 format_int(static_cast<int64_t>(c.seed)), format_double(c.report.recall),
                 format_double(c.report.precision), format_double(c.report.f1),
                 format_double(c.report.average_precision), format_double(c.report.auc),
                 format_double(c.mislabeled_fraction)});
  results.write_file(dir / "results.csv");

  // Per-N summary: mean over runs with a percentile bootstrap of the mean.
  CsvWriter summary("N,metric,mean,ci_lo,ci_hi");
  const char* metric_names[5] = {"recall", "precision", "f1", "ap", "auc"};
  for (int n : h.risk_levels) {
    std::vector<std::vector<double>> runs(5);
    for (const auto& c : cells) {
      if (c.risk_level != n) continue;
      runs[0].push_back(c.report.recall);
      runs[1].push_back(c.report.precision);
      runs[2].push_back(c.report.f1);
      runs[3].push_back(c.report.average_precision);
      runs[4].push_back(c.report.auc);
    }
    for (int m = 0; m < 5; ++m) {
      const auto& v = runs[static_cast<size_t>(m)];
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      const auto ci = bootstrap_mean_ci(
          derive_seed(h.master_seed, {tag_hash("summary"), static_cast<uint64_t>(n),
                                      static_cast<uint64_t>(m)}),
          v, 2000, 0.95);
      summary.row({format_int(n), metric_names[m], format_double(mean), format_double(ci.lo),
                   format_double(ci.hi)});
    }
  }
  summary.write_file(dir / "summary.csv");
  write_manifest(dir, h, h.master_seed);
  return {dir / "results.csv", dir / "summary.csv", std::move(cells)};
}

// Single training run (cmd_train); returns the run directory.
inline fs::path cmd_train_image(const HarnessConfig& h) {
  const int risk = static_cast<int>(h.raw.get_int("train.risk_level", 1));
  const ImageDataBundle bundle = build_image_bundle(h);
  run_sweep_cell(h, bundle, risk, 0, true);
  return run_dir(h, risk, 0);
}

// ---------------------------------------------------------------------------
// xcorr demo: segments -> matrices -> detector
// ---------------------------------------------------------------------------

struct XcorrDataset {
  std::vector<TrainingSample> train, val;
  std::vector<LabeledImage> test;
};

inline TrainingSample matrix_to_sample(const XCorrMatrix& m, int label, SampleSource source) {
  TrainingSample s;
  s.features = m.values;
  s.assigned_label = label;
  s.true_label = label;
  s.source = source;
  return s;
}

inline XcorrDataset build_xcorr_dataset(const HarnessConfig& h, uint64_t seed) {
  XcorrDataset d;
  auto make_split = [&](const char* tag, int per_class, auto&& sink) {
    Rng rng(derive_seed(seed, {tag_hash(tag)}));
    for (int i = 0; i < per_class; ++i) {
      const auto rep = make_synthetic_video(rng, MotionKind::Repetitive, h.xcorr_period, h.video);
      sink(normalize_percentile(xcorr_matrix(rep)), 1);
      const auto ape = make_synthetic_video(rng, MotionKind::Aperiodic, 0, h.video);
      sink(normalize_percentile(xcorr_matrix(ape)), 0);
    }
  };
  make_split("xcorr_train", h.xcorr_train_per_class, [&](const XCorrMatrix& m, int label) {
    d.train.push_back(matrix_to_sample(m, label,
                                       label ? SampleSource::RiskPositive
                                             : SampleSource::DirectNegative));
  });
  make_split("xcorr_val", h.xcorr_val_per_class, [&](const XCorrMatrix& m, int label) {
    d.val.push_back(matrix_to_sample(m, label,
                                     label ? SampleSource::RiskPositive
                                           : SampleSource::DirectNegative));
  });
  make_split("xcorr_test", h.xcorr_test_per_class, [&](const XCorrMatrix& m, int label) {
    d.test.push_back({m.values, label});
  });
  return d;
}

struct SaliencyStats {
  double lower_mean = 0.0;    // |saliency| over the populated lower triangle
  double upper_mean = 0.0;    // |saliency| over the structurally-zero region
  double band_mean = 0.0;     // |saliency| within |i-j| <= band of the diagonal
  double off_band_mean = 0.0; // rest of the lower triangle
};

inline SaliencyStats saliency_stats(const Tensor& sal, int band) {
  const int f = sal.shape[1];
  SaliencyStats st;
  int64_t n_lower = 0, n_upper = 0, n_band = 0, n_off = 0;
  for (int i = 0; i < f; ++i) {
    for (int j = 0; j < f; ++j) {
      const double v = std::abs(sal.data[static_cast<size_t>(i) * f + j]);
      if (j > i) {
        st.upper_mean += v;
        ++n_upper;
        continue;
      }
      st.lower_mean += v;
      ++n_lower;
      if (i - j <= band) {
        st.band_mean += v;
        ++n_band;
      } else {
        st.off_band_mean += v;
        ++n_off;
      }
    }
  }
  st.lower_mean /= static_cast<double>(n_lower);
  st.upper_mean /= static_cast<double>(n_upper);
  st.band_mean /= static_cast<double>(n_band);
  if (n_off) st.off_band_mean /= static_cast<double>(n_off);
  return st;
}

// End-to-end demo: synthetic segments, matrices, detector training,
// evaluation, and saliency statistics on a repetitive test matrix.
inline fs::path cmd_xcorr_demo(const HarnessConfig& h) {
  const XcorrDataset data = build_xcorr_dataset(h, h.master_seed);
  nn::ConvNetConfig net = h.model;
  net.input_h = h.video.frames;
  net.input_w = h.video.frames;

  const nn::ModelParams init =
      nn::init_params(net, derive_seed(h.master_seed, {tag_hash("init")}));
  const nn::TrainResult trained =
      nn::train(net, init, data.train, data.val, h.schedule,
                derive_seed(h.master_seed, {tag_hash("train")}));

  const ScoredSet scored = score_test_set(trained.params, net, data.test, h.schedule.batch_size);
  const EvalReport report = evaluate_scores(
      scored, h.schedule.threshold, derive_seed(h.master_seed, {tag_hash("ci")}),
      h.eval_resamples);

  const fs::path dir = h.out_dir / kind_name(h.kind);
  fs::create_directories(dir);
  nn::history_csv(trained.history).write_file(dir / "history.csv");
  nn::save_params(trained.params, dir / "params.bin");
  eval_report_csv(report).write_file(dir / "report.csv");

  // Saliency contrast on the first repetitive test sample.
  Tensor input = Tensor::zeros({1, net.input_h, net.input_w, 1});
  for (const auto& t : data.test) {
    if (t.label != 1) continue;
    std::copy(t.features.begin(), t.features.end(), input.data.begin());
    break;
  }
  const Tensor sal = nn::guided_backprop(trained.params, net, input);
  const SaliencyStats st = saliency_stats(sal, std::max(1, h.xcorr_period));
  CsvWriter sal_csv("region,mean_abs_saliency");
  sal_csv.row({"lower_triangle", format_double(st.lower_mean)});
  sal_csv.row({"upper_triangle", format_double(st.upper_mean)});
  sal_csv.row({"diag_band", format_double(st.band_mean)});
  sal_csv.row({"off_band", format_double(st.off_band_mean)});
  sal_csv.write_file(dir / "saliency_stats.csv");
  write_manifest(dir, h, h.master_seed);
  return dir;
}

// Fine-tuning (xcorr_demo kind): weak labels come from synthetic streams,
// strong labels from the segment dataset, negatives oversampled 10x.
inline fs::path cmd_finetune(const HarnessConfig& h, const fs::path& checkpoint) {
  if (h.kind != ExperimentKind::XcorrDemo)
    throw ConfigError("finetune applies to the xcorr_demo kind");
  const XcorrDataset strong = build_xcorr_dataset(h, h.master_seed);

  // Weak positives: one labeled event per synthetic stream, risk level N.
  std::vector<TrainingSample> weak;
  ElementPool negative_pool;
  const double seg_seconds =
      static_cast<double>(h.video.frames) / static_cast<double>(h.video.fps);
  Rng stream_rng(derive_seed(h.master_seed, {tag_hash("streams")}));
  for (int s = 0; s < h.finetune_streams; ++s) {
    // Stream: aperiodic background with one repetitive event inserted.
    SyntheticVideoConfig chunk = h.video;
    const int n_chunks = h.finetune_risk_level + 26;
    const int event_chunk = 2;
    const int event_len_chunks = 1 + static_cast<int>(stream_rng.uniform_int(0, 2));
    VideoSegment stream;
    stream.height = chunk.height;
    stream.width = chunk.width;
    stream.fps = chunk.fps;
    stream.frames = 0;
    for (int cidx = 0; cidx < n_chunks; ++cidx) {
      const bool in_event = cidx >= event_chunk && cidx < event_chunk + event_len_chunks;
      const auto seg = in_event
                           ? make_synthetic_video(stream_rng, MotionKind::Repetitive,
                                                  h.xcorr_period, chunk)
                           : make_synthetic_video(stream_rng, MotionKind::Aperiodic, 0, chunk);
      stream.data.insert(stream.data.end(), seg.data.begin(), seg.data.end());
      stream.frames += seg.frames;
    }
    const double label_s = event_chunk * seg_seconds;
    const std::vector<EventInterval> events{
        {label_s, label_s + event_len_chunks * seg_seconds}};
    const auto segs = segment_stream_train(stream_rng, stream, seg_seconds, {label_s},
                                           h.finetune_risk_level, h.finetune_far_gap_s, 4,
                                           events);
    for (const auto& ls : segs) {
      const auto m = normalize_percentile(xcorr_matrix(ls.segment));
      if (ls.assigned_label == 1) {
        TrainingSample smp = matrix_to_sample(m, 1, SampleSource::RiskPositive);
        smp.true_label = ls.true_label;
        weak.push_back(std::move(smp));
      } else {
        negative_pool.push_back(m.values);
      }
    }
  }
  for (const auto& s : strong.train)
    if (s.assigned_label == 0) negative_pool.push_back(s.features);

  nn::ConvNetConfig net = h.model;
  net.input_h = h.video.frames;
  net.input_w = h.video.frames;
  nn::ModelParams params = nn::make_params(net);
  nn::load_params(params, checkpoint);

  nn::TrainSchedule fine = h.schedule;
  fine.optimizer = nn::OptimizerKind::Adam;
  fine.criterion = nn::StopCriterion::ValF1Max;
  fine.max_epochs = static_cast<int>(h.raw.get_int("finetune.max_epochs", h.schedule.max_epochs));
  fine.patience = static_cast<int>(h.raw.get_int("finetune.patience", 400));
  fine.pos_weight = h.raw.get_double("finetune.pos_weight", 0.0);

  nn::TrainSchedule pre = h.schedule; // stage 1 skipped: params come from the checkpoint
  pre.max_epochs = 0;
  nn::TrainResult staged = nn::pretrain_then_finetune(
      net, std::move(params), strong.train, strong.val, weak, negative_pool, pre, fine,
      derive_seed(h.master_seed, {tag_hash("finetune")}));

  const ScoredSet scored = score_test_set(staged.params, net, strong.test, h.schedule.batch_size);
  const EvalReport report = evaluate_scores(
      scored, h.schedule.threshold, derive_seed(h.master_seed, {tag_hash("finetune_ci")}),
      h.eval_resamples);

  const fs::path dir = h.out_dir / kind_name(h.kind) / "finetune";
  fs::create_directories(dir);
  nn::history_csv(staged.history).write_file(dir / "history.csv");
  nn::save_params(staged.params, dir / "params.bin");
  eval_report_csv(report).write_file(dir / "report.csv");
  write_manifest(dir, h, h.master_seed,
                 "weak_positives=" + format_int(static_cast<int64_t>(weak.size())) + "\n");
  return dir;
}

// Evaluates a checkpoint against IDX images/labels (with per-image rescale).
inline fs::path cmd_evaluate(const HarnessConfig& h, const fs::path& checkpoint,
                             const fs::path& images_path, const fs::path& labels_path) {
  const IdxData images = idx_read(images_path);
  const IdxData labels = idx_read(labels_path);
  if (labels.dims.size() != 1 || images.count() != labels.count())
    throw DataError("evaluate: image/label files do not match");
  nn::ConvNetConfig net = h.model;
  net.input_h = static_cast<int>(images.dims.at(1));
  net.input_w = static_cast<int>(images.dims.at(2));
  nn::ModelParams params = nn::make_params(net);
  nn::load_params(params, checkpoint);

  std::vector<LabeledImage> test(images.count());
  const auto real = idx_images_to_real(images);
  for (size_t i = 0; i < test.size(); ++i) {
    test[i].features = real[i];
    minmax_rescale(test[i].features);
    const uint8_t y = labels.payload[i];
    if (y > 1) throw DataError("evaluate: labels must be 0/1");
    test[i].label = y;
  }
  const ScoredSet scored = score_test_set(params, net, test, h.schedule.batch_size);
  const EvalReport report = evaluate_scores(
      scored, h.schedule.threshold, derive_seed(h.master_seed, {tag_hash("eval_ci")}),
      h.eval_resamples);
  const fs::path dir = h.out_dir / "evaluate";
  fs::create_directories(dir);
  eval_report_csv(report).write_file(dir / "report.csv");
  write_manifest(dir, h, h.master_seed);
  return dir / "report.csv";
}

// Guided-backprop saliency of a checkpoint on one matrix file.
inline fs::path cmd_saliency(const HarnessConfig& h, const fs::path& checkpoint,
                             const fs::path& matrix_path) {
  const XCorrMatrix m = xcorr_read(matrix_path);
  nn::ConvNetConfig net = h.model;
  net.input_h = m.size;
  net.input_w = m.size;
  nn::ModelParams params = nn::make_params(net);
  nn::load_params(params, checkpoint);

  Tensor input = Tensor::zeros({1, m.size, m.size, 1});
  std::copy(m.values.begin(), m.values.end(), input.data.begin());
  const Tensor sal = nn::guided_backprop(params, net, input);

  const fs::path dir = h.out_dir / "saliency";
  fs::create_directories(dir);
  XCorrMatrix out;
  out.size = m.size;
  out.values = sal.data;
  xcorr_write(dir / "saliency.xcm", out);
  CsvWriter csv("i,j,value");
  for (int i = 0; i < m.size; ++i)
    for (int j = 0; j < m.size; ++j)
      csv.row({format_int(i), format_int(j),
               format_double(sal.data[static_cast<size_t>(i) * m.size + j])});
  csv.write_file(dir / "saliency.csv");
  write_manifest(dir, h, h.master_seed);
  return dir / "saliency.csv";
}

inline fs::path cmd_train(const HarnessConfig& h) {
  if (h.kind == ExperimentKind::XcorrDemo) return cmd_xcorr_demo(h);
  return cmd_train_image(h);
}

} // namespace riskseq
