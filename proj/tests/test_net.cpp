#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "riskseq/checkpoint.hpp"
#include "riskseq/net.hpp"
#include "riskseq/optim.hpp"
#include "riskseq/rng.hpp"

using namespace riskseq;
using namespace riskseq::nn;

namespace {

Tensor random_batch(Rng& rng, int b, int h, int w) {
  Tensor t = Tensor::zeros({b, h, w, 1});
  for (double& v : t.data) v = rng.uniform();
  return t;
}

double loss_at(const ModelParams& p, const ConvNetConfig& cfg, const Tensor& batch,
               const std::vector<double>& labels) {
  const auto prob = forward(p, cfg, batch, nullptr);
  return loss_bce(prob, labels);
}

} // namespace

TEST_CASE("all-zero parameters output 0.5 everywhere") {
  ConvNetConfig cfg{8, 8, 4, 6};
  const ModelParams p = make_params(cfg);
  Rng rng(1);
  const Tensor batch = random_batch(rng, 7, 8, 8);
  const auto prob = forward(p, cfg, batch, nullptr);
  REQUIRE(prob.size() == 7);
  for (double v : prob) CHECK(v == 0.5);
}

TEST_CASE("per-sample independence: doubling the batch repeats the outputs") {
  ConvNetConfig cfg{8, 8, 4, 6};
  Rng rng(2);
  const ModelParams p = init_params(cfg, 33);
  Tensor batch = random_batch(rng, 3, 8, 8);
  Tensor doubled = Tensor::zeros({6, 8, 8, 1});
  std::copy(batch.data.begin(), batch.data.end(), doubled.data.begin());
  std::copy(batch.data.begin(), batch.data.end(),
            doubled.data.begin() + static_cast<ptrdiff_t>(batch.data.size()));
  const auto a = forward(p, cfg, batch, nullptr);
  const auto b = forward(p, cfg, doubled, nullptr);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[static_cast<size_t>(i)] == b[static_cast<size_t>(i)]);
    CHECK(a[static_cast<size_t>(i)] == b[static_cast<size_t>(i) + 3]);
  }
}

TEST_CASE("forward is deterministic and strictly inside (0,1)") {
  ConvNetConfig cfg{10, 10, 4, 6};
  Rng rng(3);
  const ModelParams p = init_params(cfg, 44);
  const Tensor batch = random_batch(rng, 5, 10, 10);
  const auto a = forward(p, cfg, batch, nullptr);
  const auto b = forward(p, cfg, batch, nullptr);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i] > 0.0);
    CHECK(a[i] < 1.0);
  }
}

TEST_CASE("forward rejects mismatched shapes") {
  ConvNetConfig cfg{8, 8, 4, 6};
  const ModelParams p = make_params(cfg);
  Rng rng(4);
  const Tensor wrong = random_batch(rng, 2, 8, 9);
  CHECK_THROWS_AS(forward(p, cfg, wrong, nullptr), DataError);
}

TEST_CASE("bce loss values") {
  // p == y (post-clamp) gives ~0.
  CHECK_THAT(loss_bce({1.0 - 1e-12, 1e-12}, {1.0, 0.0}), Catch::Matchers::WithinAbs(0.0, 1e-10));
  CHECK_THAT(loss_bce({0.5, 0.5, 0.5}, {1.0, 0.0, 1.0}),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-15));
  CHECK_THAT(loss_bce({0.8}, {1.0}, 2.0), Catch::Matchers::WithinAbs(-2.0 * std::log(0.8), 1e-15));
}

TEST_CASE("sigmoid-bce composition gives (p - y) * x for one linear unit") {
  // d/dw of BCE(sigmoid(w*x), y) through the modular grad path.
  const double w = 0.37, x = 1.9, y = 1.0;
  const double p = sigmoid(w * x);
  const auto dprob = loss_bce_grad({p}, {y});
  const double dw = dprob[0] * p * (1.0 - p) * x;
  CHECK_THAT(dw, Catch::Matchers::WithinAbs((p - y) * x, 1e-12));
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  ConvNetConfig cfg{8, 8, 4, 6};
  const ModelParams p = init_params(cfg, 5);
  Rng rng(6);
  const Tensor batch = random_batch(rng, 2, 8, 8);
  ForwardCache cache;
  forward(p, cfg, batch, &cache);
  const Gradients g = backward(p, cfg, cache, {0.0, 0.0});
  for (const Tensor* t : g.g.ordered())
    for (double v : t->data) CHECK(v == 0.0);
}

TEST_CASE("backward cache is single-use") {
  ConvNetConfig cfg{8, 8, 4, 6};
  const ModelParams p = init_params(cfg, 7);
  Rng rng(8);
  const Tensor batch = random_batch(rng, 1, 8, 8);
  ForwardCache cache;
  forward(p, cfg, batch, &cache);
  backward(p, cfg, cache, {1.0});
  CHECK_THROWS_AS(backward(p, cfg, cache, {1.0}), DataError);
}

TEST_CASE("gradients match central finite differences on a miniature") {
  ConvNetConfig cfg{8, 8, 4, 6};
  Rng rng(9);
  const Tensor batch = random_batch(rng, 3, 8, 8);
  const std::vector<double> labels{1.0, 0.0, 1.0};

  ModelParams p = init_params(cfg, 1234);
  ForwardCache cache;
  const auto prob = forward(p, cfg, batch, &cache);
  const auto dprob = loss_bce_grad(prob, labels);
  const Gradients g = backward(p, cfg, cache, dprob);
  const std::vector<double> analytic = g.g.flatten();

  std::vector<double> flat = p.flatten();
  const double h = 1e-5;
  size_t over_loose = 0;
  double max_rel = 0.0;
  for (size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    p.unflatten(flat);
    const double lp = loss_at(p, cfg, batch, labels);
    flat[i] = keep - h;
    p.unflatten(flat);
    const double lm = loss_at(p, cfg, batch, labels);
    flat[i] = keep;
    const double fd = (lp - lm) / (2.0 * h);
    const double rel =
        std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
    max_rel = std::max(max_rel, rel);
    if (rel >= 1e-6) ++over_loose;
  }
  p.unflatten(flat);
  INFO("max_rel=" << max_rel << " over_loose=" << over_loose << " of " << flat.size());
  CHECK(max_rel < 1e-5);
  CHECK(static_cast<double>(over_loose) <= 0.01 * static_cast<double>(flat.size()));
}

TEST_CASE("zeroing the residual branch reduces each block to its skip path") {
  ConvNetConfig cfg{8, 8, 4, 6};
  ModelParams p = init_params(cfg, 10);
  for (Tensor* t : {&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b, &p.conv3_w, &p.conv3_b,
                    &p.conv4_w, &p.conv4_b})
    std::fill(t->data.begin(), t->data.end(), 0.0);

  Rng rng(11);
  const Tensor batch = random_batch(rng, 2, 8, 8);
  ForwardCache cache;
  forward(p, cfg, batch, &cache);

  const Tensor skip1 = relu(conv2d(batch, p.proj1_w, nullptr));
  REQUIRE(cache.b1.data.size() == skip1.data.size());
  for (size_t i = 0; i < skip1.data.size(); ++i) CHECK(cache.b1.data[i] == skip1.data[i]);

  const Tensor skip2 = relu(conv2d(cache.pooled, p.proj2_w, nullptr));
  for (size_t i = 0; i < skip2.data.size(); ++i) CHECK(cache.b2.data[i] == skip2.data[i]);
}

TEST_CASE("maxpool breaks ties toward the earliest row-major index") {
  Tensor in = Tensor::zeros({1, 2, 2, 1});
  std::fill(in.data.begin(), in.data.end(), 3.0);
  std::vector<int32_t> argmax;
  const Tensor out = maxpool2x2(in, &argmax);
  REQUIRE(out.data.size() == 1);
  CHECK(out.data[0] == 3.0);
  CHECK(argmax[0] == 0);

  // Odd trailing row/column are dropped.
  Tensor odd = Tensor::zeros({1, 5, 5, 1});
  const Tensor pooled = maxpool2x2(odd, nullptr);
  CHECK(pooled.shape == std::vector<int>{1, 2, 2, 1});
}

TEST_CASE("optimizers leave parameters unchanged under zero gradients") {
  ConvNetConfig cfg{8, 8, 4, 6};
  for (auto kind : {OptimizerKind::Adadelta, OptimizerKind::Adam}) {
    ModelParams p = init_params(cfg, 12);
    const auto before = p.flatten();
    OptimizerState st = OptimizerState::make(kind, p.num_params());
    const ModelParams zero_grads = make_params(cfg);
    optimizer_step(st, p, zero_grads);
    CHECK(p.flatten() == before);
  }
}

TEST_CASE("adam first step has magnitude ~lr in the gradient direction") {
  ConvNetConfig cfg{8, 8, 4, 6};
  ModelParams p = init_params(cfg, 13);
  const auto before = p.flatten();
  OptimizerState st = OptimizerState::make(OptimizerKind::Adam, p.num_params());

  ModelParams grads = make_params(cfg);
  Rng rng(14);
  for (Tensor* t : grads.ordered())
    for (double& v : t->data) v = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);

  optimizer_step(st, p, grads);
  const auto after = p.flatten();
  const auto g = grads.flatten();
  for (size_t i = 0; i < after.size(); ++i) {
    const double step = after[i] - before[i];
    CHECK_THAT(step, Catch::Matchers::WithinAbs(-1e-3 * (g[i] > 0 ? 1.0 : -1.0), 1e-6));
  }
}

TEST_CASE("adadelta follows the accumulator recurrences") {
  ConvNetConfig cfg{8, 8, 4, 6};
  ModelParams p = make_params(cfg);
  OptimizerState st = OptimizerState::make(OptimizerKind::Adadelta, p.num_params());
  ModelParams grads = make_params(cfg);
  grads.conv1_w.data[0] = 2.0;
  optimizer_step(st, p, grads);
  const double eg2 = 0.05 * 4.0;
  const double expected = -std::sqrt(1e-6) / std::sqrt(eg2 + 1e-6) * 2.0;
  CHECK_THAT(p.conv1_w.data[0], Catch::Matchers::WithinAbs(expected, 1e-15));
}

TEST_CASE("guided backprop is zero for zero input with zero biases") {
  ConvNetConfig cfg{8, 8, 4, 6};
  ModelParams p = init_params(cfg, 15);
  for (Tensor* t : {&p.conv1_b, &p.conv2_b, &p.conv3_b, &p.conv4_b})
    std::fill(t->data.begin(), t->data.end(), 0.0);
  const Tensor zero = Tensor::zeros({1, 8, 8, 1});
  const Tensor sal = guided_backprop(p, cfg, zero);
  for (double v : sal.data) CHECK(v == 0.0);
}

TEST_CASE("guided rule never triggers with all-nonnegative weights") {
  ConvNetConfig cfg{8, 8, 4, 6};
  ModelParams p = init_params(cfg, 16);
  for (Tensor* t : p.ordered())
    for (double& v : t->data) v = std::abs(v);

  Rng rng(17);
  const Tensor input = random_batch(rng, 1, 8, 8);
  const Tensor guided = guided_backprop(p, cfg, input);

  ForwardCache cache;
  forward(p, cfg, input, &cache);
  const Gradients plain = backward(p, cfg, cache, {1.0}, /*from_logit=*/true,
                                   ReluBackward::Plain, /*want_input_grad=*/true);
  REQUIRE(guided.data.size() == plain.input_grad.data.size());
  for (size_t i = 0; i < guided.data.size(); ++i)
    CHECK(guided.data[i] == plain.input_grad.data[i]);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ConvNetConfig cfg{8, 8, 4, 6};
  const ModelParams p = init_params(cfg, 18);
  const auto path = std::filesystem::temp_directory_path() / "riskseq_ckpt_rt.bin";
  save_params(p, path);
  ModelParams q = make_params(cfg);
  load_params(q, path);
  CHECK(p.flatten() == q.flatten());
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects truncation and shape mismatches") {
  ConvNetConfig cfg{8, 8, 4, 6};
  const ModelParams p = init_params(cfg, 19);
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "riskseq_ckpt_bad.bin";
  save_params(p, path);

  // Truncate the file.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  ModelParams q = make_params(cfg);
  CHECK_THROWS_AS(load_params(q, path), FormatError);

  // A checkpoint from a different width names the offending layer.
  save_params(p, path);
  ConvNetConfig other{8, 8, 4, 8};
  ModelParams r = make_params(other);
  CHECK_THROWS_MATCHES(load_params(r, path), FormatError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("conv3_w")));
  std::filesystem::remove(path);
}

TEST_CASE("flatten/unflatten round-trips") {
  ConvNetConfig cfg{8, 8, 3, 5};
  ModelParams p = init_params(cfg, 20);
  const auto flat = p.flatten();
  ModelParams q = make_params(cfg);
  q.unflatten(flat);
  CHECK(q.flatten() == flat);
  std::vector<double> short_vec(flat.begin(), flat.end() - 1);
  CHECK_THROWS_AS(q.unflatten(short_vec), DataError);
}
