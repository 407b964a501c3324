#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "riskseq/train.hpp"

using namespace riskseq;
using namespace riskseq::nn;

namespace {

// Linearly separable toy set: bright left half vs bright right half on 4x4
// images, exact by construction.
std::vector<TrainingSample> toy_set(Rng& rng, int per_class) {
  std::vector<TrainingSample> out;
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    TrainingSample s;
    s.features.assign(16, 0.0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const bool lit = label == 1 ? x < 2 : x >= 2;
        s.features[static_cast<size_t>(y) * 4 + x] =
            (lit ? 0.8 : 0.1) + rng.uniform(0.0, 0.05);
      }
    s.assigned_label = label;
    s.true_label = label;
    s.source = label ? SampleSource::RiskPositive : SampleSource::DirectNegative;
    out.push_back(std::move(s));
  }
  return out;
}

ConvNetConfig toy_cfg() { return ConvNetConfig{4, 4, 3, 4}; }

} // namespace

TEST_CASE("zero max epochs returns the initial parameters and empty history") {
  Rng rng(1);
  const auto data = toy_set(rng, 8);
  TrainSchedule sched;
  sched.max_epochs = 0;
  const ModelParams init = init_params(toy_cfg(), 42);
  const auto res = train(toy_cfg(), init, data, data, sched, 7);
  CHECK(res.history.empty());
  CHECK(res.best_epoch == -1);
  CHECK(res.params.flatten() == init.flatten());
}

TEST_CASE("empty splits are rejected") {
  Rng rng(2);
  const auto data = toy_set(rng, 4);
  TrainSchedule sched;
  CHECK_THROWS_AS(train(toy_cfg(), init_params(toy_cfg(), 1), {}, data, sched, 7), DataError);
  CHECK_THROWS_AS(train(toy_cfg(), init_params(toy_cfg(), 1), data, {}, sched, 7), DataError);
}

TEST_CASE("the separable toy set is learned to perfect training accuracy") {
  Rng rng(3);
  const auto train_set = toy_set(rng, 20);
  const auto val_set = toy_set(rng, 10);
  TrainSchedule sched;
  sched.optimizer = OptimizerKind::Adam;
  sched.max_epochs = 200;
  sched.patience = 200;
  sched.batch_size = 16;
  const auto res = train(toy_cfg(), init_params(toy_cfg(), 5), train_set, val_set, sched, 11);

  const auto scores = score_samples(res.params, toy_cfg(), train_set);
  int correct = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if ((scores[i] >= 0.5 ? 1 : 0) == train_set[i].assigned_label) ++correct;
  CHECK(correct == static_cast<int>(train_set.size()));
}

TEST_CASE("loss decreases over the first 10 epochs for both optimizers") {
  Rng rng(4);
  const auto train_set = toy_set(rng, 20);
  const auto val_set = toy_set(rng, 10);
  for (auto kind : {OptimizerKind::Adadelta, OptimizerKind::Adam}) {
    TrainSchedule sched;
    sched.optimizer = kind;
    sched.max_epochs = 10;
    sched.patience = 10;
    const auto res = train(toy_cfg(), init_params(toy_cfg(), 6), train_set, val_set, sched, 13);
    REQUIRE(res.history.size() == 10);
    int drops = 0;
    for (size_t i = 1; i < res.history.size(); ++i)
      if (res.history[i].train_loss < res.history[i - 1].train_loss) ++drops;
    INFO("optimizer " << (kind == OptimizerKind::Adam ? "adam" : "adadelta")
                      << " drops=" << drops);
    CHECK(drops >= 8);
  }
}

TEST_CASE("selection returns the argmin of validation loss") {
  Rng rng(5);
  const auto train_set = toy_set(rng, 12);
  const auto val_set = toy_set(rng, 6);
  TrainSchedule sched;
  sched.criterion = StopCriterion::ValLossMin;
  sched.max_epochs = 40;
  sched.patience = 40;
  const auto res = train(toy_cfg(), init_params(toy_cfg(), 8), train_set, val_set, sched, 17);
  REQUIRE(!res.history.empty());
  size_t argmin = 0;
  for (size_t i = 0; i < res.history.size(); ++i)
    if (res.history[i].val_loss < res.history[argmin].val_loss) argmin = i;
  CHECK(res.best_epoch == static_cast<int>(argmin));
  CHECK(res.history[argmin].selected);
}

TEST_CASE("training is bit-deterministic under the seed") {
  Rng rng(6);
  const auto train_set = toy_set(rng, 10);
  const auto val_set = toy_set(rng, 5);
  TrainSchedule sched;
  sched.max_epochs = 15;
  sched.patience = 15;
  auto run = [&] {
    return train(toy_cfg(), init_params(toy_cfg(), 9), train_set, val_set, sched, 19);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.params.flatten() == b.params.flatten());
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(history_csv(a.history).content() == history_csv(b.history).content());
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
  Rng rng(7);
  const auto train_set = toy_set(rng, 10);
  const auto val_set = toy_set(rng, 5);
  TrainSchedule sched;
  sched.max_epochs = 500;
  sched.patience = 5;
  const auto res = train(toy_cfg(), init_params(toy_cfg(), 10), train_set, val_set, sched, 23);
  CHECK(res.history.size() < 500);
  CHECK(static_cast<int>(res.history.size()) <= res.best_epoch + 1 + sched.patience);
}

TEST_CASE("history csv has the documented header") {
  std::vector<EpochRecord> h{{0, 0.5, 0.4, 0.7, true}};
  CHECK(history_csv(h).content() == "epoch,train_loss,val_loss,val_f1,selected\n0,0.5,0.4,0.69999999999999996,1\n");
}

TEST_CASE("empty weak set skips fine-tuning entirely") {
  Rng rng(8);
  const auto strong_train = toy_set(rng, 10);
  const auto strong_val = toy_set(rng, 5);
  ElementPool neg_pool{{std::vector<double>(16, 0.1)}};
  TrainSchedule pre;
  pre.max_epochs = 5;
  pre.patience = 5;
  TrainSchedule fine;
  fine.max_epochs = 5;

  const auto staged = pretrain_then_finetune(toy_cfg(), init_params(toy_cfg(), 11), strong_train,
                                             strong_val, {}, neg_pool, pre, fine, 29);
  const auto plain = train(toy_cfg(), init_params(toy_cfg(), 11), strong_train, strong_val, pre,
                           derive_seed(29, {tag_hash("pretrain")}));
  CHECK(staged.params.flatten() == plain.params.flatten());
}

TEST_CASE("zero-epoch fine-tune equals the pretrain output") {
  Rng rng(9);
  const auto strong_train = toy_set(rng, 10);
  const auto strong_val = toy_set(rng, 5);
  auto weak = toy_set(rng, 3);
  for (auto& s : weak) s.assigned_label = 1;
  ElementPool neg_pool;
  for (int i = 0; i < 8; ++i) neg_pool.push_back(std::vector<double>(16, 0.1));

  TrainSchedule pre;
  pre.max_epochs = 5;
  pre.patience = 5;
  TrainSchedule fine;
  fine.max_epochs = 0;

  const auto staged = pretrain_then_finetune(toy_cfg(), init_params(toy_cfg(), 12), strong_train,
                                             strong_val, weak, neg_pool, pre, fine, 31);
  const auto stage1 = train(toy_cfg(), init_params(toy_cfg(), 12), strong_train, strong_val, pre,
                            derive_seed(31, {tag_hash("pretrain")}));
  CHECK(staged.params.flatten() == stage1.params.flatten());
}
