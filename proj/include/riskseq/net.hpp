#pragma once
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "riskseq/errors.hpp"
#include "riskseq/rng.hpp"
#include "riskseq/tensor.hpp"

namespace riskseq::nn {

// Binary classifier over single-channel 2-D inputs: two residual blocks of
// two zero-padded 3x3 convolutions each (ReLU after the skip addition, with
// a learned 1x1 projection on the skip path where channel counts change),
// a 2x2 max-pool between the blocks, global average pooling, and a single
// fully connected logit squashed by a sigmoid.
struct ConvNetConfig {
  int input_h = 0;
  int input_w = 0;
  int block1_filters = 32;
  int block2_filters = 64;

  void validate() const {
    if (input_h < 4 || input_w < 4)
      throw ConfigError("ConvNetConfig: input dims must be >= 4");
    if (block1_filters < 1 || block2_filters < 1)
      throw ConfigError("ConvNetConfig: filter counts must be >= 1");
  }
};

// Conv weights are [kh, kw, in_c, out_c]; activations are [B, H, W, C]
// channels-last row-major.
struct ModelParams {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor proj1_w; // 1x1 skip projection, no bias
  Tensor conv3_w, conv3_b;
  Tensor conv4_w, conv4_b;
  Tensor proj2_w;
  Tensor fc_w, fc_b;

  // Stable flattening order; used by checkpoints, the optimizer, and tests.
  std::vector<Tensor*> ordered() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &proj1_w, &conv3_w,
            &conv3_b, &conv4_w, &conv4_b, &proj2_w, &fc_w, &fc_b};
  }
  std::vector<const Tensor*> ordered() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &proj1_w, &conv3_w,
            &conv3_b, &conv4_w, &conv4_b, &proj2_w, &fc_w, &fc_b};
  }
  static std::vector<std::string> names() {
    return {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "proj1_w", "conv3_w",
            "conv3_b", "conv4_w", "conv4_b", "proj2_w", "fc_w", "fc_b"};
  }

  size_t num_params() const {
    size_t n = 0;
    for (const Tensor* t : ordered()) n += t->numel();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(num_params());
    for (const Tensor* t : ordered())
      out.insert(out.end(), t->data.begin(), t->data.end());
    return out;
  }

  void unflatten(const std::vector<double>& flat) {
    size_t off = 0;
    for (Tensor* t : ordered()) {
      if (off + t->numel() > flat.size())
        throw DataError("ModelParams::unflatten: vector too short");
      std::copy(flat.begin() + static_cast<ptrdiff_t>(off),
                flat.begin() + static_cast<ptrdiff_t>(off + t->numel()), t->data.begin());
      off += t->numel();
    }
    if (off != flat.size()) throw DataError("ModelParams::unflatten: vector too long");
  }
};

inline ModelParams make_params(const ConvNetConfig& cfg) {
  cfg.validate();
  const int c1 = cfg.block1_filters, c2 = cfg.block2_filters;
  ModelParams p;
  p.conv1_w = Tensor::zeros({3, 3, 1, c1});
  p.conv1_b = Tensor::zeros({c1});
  p.conv2_w = Tensor::zeros({3, 3, c1, c1});
  p.conv2_b = Tensor::zeros({c1});
  p.proj1_w = Tensor::zeros({1, 1, 1, c1});
  p.conv3_w = Tensor::zeros({3, 3, c1, c2});
  p.conv3_b = Tensor::zeros({c2});
  p.conv4_w = Tensor::zeros({3, 3, c2, c2});
  p.conv4_b = Tensor::zeros({c2});
  p.proj2_w = Tensor::zeros({1, 1, c1, c2});
  p.fc_w = Tensor::zeros({c2});
  p.fc_b = Tensor::zeros({1});
  return p;
}

// Fan-in-scaled uniform init (bound = sqrt(6 / fan_in)); biases start at 0.
inline ModelParams init_params(const ConvNetConfig& cfg, uint64_t seed) {
  ModelParams p = make_params(cfg);
  Rng rng(seed);
  auto fill = [&](Tensor& w) {
    const int fan_in = w.shape[0] * w.shape[1] * w.shape[2];
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
  };
  fill(p.conv1_w);
  fill(p.conv2_w);
  fill(p.proj1_w);
  fill(p.conv3_w);
  fill(p.conv4_w);
  fill(p.proj2_w);
  {
    const int fan_in = p.fc_w.shape[0];
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : p.fc_w.data) v = rng.uniform(-bound, bound);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Primitive ops (shared by forward, backward, and the test-side oracles)
// ---------------------------------------------------------------------------

// Zero-padded stride-1 convolution; kernel [kh,kw,in_c,out_c], odd kh/kw.
inline Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor* bias) {
  const int B = in.shape[0], H = in.shape[1], W = in.shape[2], C = in.shape[3];
  const int kh = w.shape[0], kw = w.shape[1], in_c = w.shape[2], out_c = w.shape[3];
  if (C != in_c) throw DataError("conv2d: channel mismatch");
  const int py = kh / 2, px = kw / 2;
  Tensor out = Tensor::zeros({B, H, W, out_c});
  const double* wp = w.ptr();
  for (int b = 0; b < B; ++b) {
    const double* inb = in.ptr() + static_cast<size_t>(b) * H * W * C;
    double* outb = out.ptr() + static_cast<size_t>(b) * H * W * out_c;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double* o = outb + (static_cast<size_t>(y) * W + x) * out_c;
        if (bias) {
          const double* bp = bias->ptr();
          for (int oc = 0; oc < out_c; ++oc) o[oc] = bp[oc];
        }
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = y + ky - py;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = x + kx - px;
            if (ix < 0 || ix >= W) continue;
            const double* irow = inb + (static_cast<size_t>(iy) * W + ix) * C;
            const double* wrow = wp + (static_cast<size_t>(ky) * kw + kx) * in_c * out_c;
            for (int ic = 0; ic < in_c; ++ic) {
              const double v = irow[ic];
              const double* wr = wrow + static_cast<size_t>(ic) * out_c;
              for (int oc = 0; oc < out_c; ++oc) o[oc] += v * wr[oc];
            }
          }
        }
      }
    }
  }
  return out;
}

// Gradients of conv2d w.r.t. input, kernel, and bias given d(out).
inline void conv2d_backward(const Tensor& in, const Tensor& w, const Tensor& dout,
                            Tensor* din, Tensor* dw, Tensor* dbias) {
  const int B = in.shape[0], H = in.shape[1], W = in.shape[2];
  const int kh = w.shape[0], kw = w.shape[1], in_c = w.shape[2], out_c = w.shape[3];
  const int py = kh / 2, px = kw / 2;
  if (din) *din = Tensor::zeros(in.shape);
  if (dw) *dw = Tensor::zeros(w.shape);
  if (dbias) *dbias = Tensor::zeros({out_c});
  const double* wp = w.ptr();
  for (int b = 0; b < B; ++b) {
    const double* inb = in.ptr() + static_cast<size_t>(b) * H * W * in_c;
    const double* doutb = dout.ptr() + static_cast<size_t>(b) * H * W * out_c;
    double* dinb = din ? din->ptr() + static_cast<size_t>(b) * H * W * in_c : nullptr;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double* go = doutb + (static_cast<size_t>(y) * W + x) * out_c;
        if (dbias) {
          double* dbp = dbias->ptr();
          for (int oc = 0; oc < out_c; ++oc) dbp[oc] += go[oc];
        }
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = y + ky - py;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = x + kx - px;
            if (ix < 0 || ix >= W) continue;
            const double* irow = inb + (static_cast<size_t>(iy) * W + ix) * in_c;
            double* dirow = dinb ? dinb + (static_cast<size_t>(iy) * W + ix) * in_c : nullptr;
            const size_t woff = (static_cast<size_t>(ky) * kw + kx) * in_c * out_c;
            for (int ic = 0; ic < in_c; ++ic) {
              const double* wr = wp + woff + static_cast<size_t>(ic) * out_c;
              if (dirow) {
                double acc = 0.0;
                for (int oc = 0; oc < out_c; ++oc) acc += go[oc] * wr[oc];
                dirow[ic] += acc;
              }
              if (dw) {
                double* dwr = dw->ptr() + woff + static_cast<size_t>(ic) * out_c;
                const double v = irow[ic];
                for (int oc = 0; oc < out_c; ++oc) dwr[oc] += v * go[oc];
              }
            }
          }
        }
      }
    }
  }
}

inline Tensor relu(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// 2x2 max pool, stride 2; trailing odd row/column dropped. Ties resolve to
// the earliest row-major index so the backward routing is deterministic.
inline Tensor maxpool2x2(const Tensor& in, std::vector<int32_t>* argmax) {
  const int B = in.shape[0], H = in.shape[1], W = in.shape[2], C = in.shape[3];
  if (H < 2 || W < 2) throw DataError("maxpool2x2: input too small");
  const int Ho = H / 2, Wo = W / 2;
  Tensor out = Tensor::zeros({B, Ho, Wo, C});
  if (argmax) argmax->assign(out.numel(), 0);
  for (int b = 0; b < B; ++b) {
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        for (int c = 0; c < C; ++c) {
          double best = 0.0;
          int32_t best_idx = -1;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const size_t idx =
                  ((static_cast<size_t>(b) * H + (2 * y + dy)) * W + (2 * x + dx)) * C + c;
              const double v = in.data[idx];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = static_cast<int32_t>(idx);
              }
            }
          }
          const size_t oidx = ((static_cast<size_t>(b) * Ho + y) * Wo + x) * C + c;
          out.data[oidx] = best;
          if (argmax) (*argmax)[oidx] = best_idx;
        }
      }
    }
  }
  return out;
}

inline Tensor maxpool2x2_backward(const Tensor& dout, const std::vector<int32_t>& argmax,
                                  const std::vector<int>& in_shape) {
  Tensor din = Tensor::zeros(in_shape);
  for (size_t i = 0; i < dout.data.size(); ++i)
    din.data[static_cast<size_t>(argmax[i])] += dout.data[i];
  return din;
}

// Global average pool [B,H,W,C] -> [B,C].
inline Tensor global_avg_pool(const Tensor& in) {
  const int B = in.shape[0], H = in.shape[1], W = in.shape[2], C = in.shape[3];
  Tensor out = Tensor::zeros({B, C});
  const double inv = 1.0 / (static_cast<double>(H) * W);
  for (int b = 0; b < B; ++b) {
    const double* inb = in.ptr() + static_cast<size_t>(b) * H * W * C;
    double* ob = out.ptr() + static_cast<size_t>(b) * C;
    for (int p = 0; p < H * W; ++p)
      for (int c = 0; c < C; ++c) ob[c] += inb[static_cast<size_t>(p) * C + c];
    for (int c = 0; c < C; ++c) ob[c] *= inv;
  }
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Full network forward / backward
// ---------------------------------------------------------------------------

// Activations retained for the backward pass.
struct ForwardCache {
  Tensor input;
  Tensor z1, a1, z2, s1, b1; // block 1
  Tensor pooled;
  std::vector<int32_t> pool_argmax;
  Tensor z3, a3, z4, s2, b2; // block 2
  Tensor gap;                // [B, c2]
  std::vector<double> logit; // [B]
  std::vector<double> prob;  // [B]
  bool consumed = false;
};

inline std::vector<double> forward(const ModelParams& p, const ConvNetConfig& cfg,
                                   const Tensor& batch, ForwardCache* cache) {
  cfg.validate();
  if (batch.shape.size() != 4 || batch.shape[1] != cfg.input_h ||
      batch.shape[2] != cfg.input_w || batch.shape[3] != 1)
    throw DataError("forward: batch shape does not match config");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.consumed = false;
  c.input = batch;

  c.z1 = conv2d(batch, p.conv1_w, &p.conv1_b);
  c.a1 = relu(c.z1);
  c.z2 = conv2d(c.a1, p.conv2_w, &p.conv2_b);
  c.s1 = conv2d(batch, p.proj1_w, nullptr);
  c.b1 = c.z2;
  for (size_t i = 0; i < c.b1.data.size(); ++i) {
    const double v = c.b1.data[i] + c.s1.data[i];
    c.b1.data[i] = v > 0.0 ? v : 0.0;
  }
  c.pooled = maxpool2x2(c.b1, &c.pool_argmax);

  c.z3 = conv2d(c.pooled, p.conv3_w, &p.conv3_b);
  c.a3 = relu(c.z3);
  c.z4 = conv2d(c.a3, p.conv4_w, &p.conv4_b);
  c.s2 = conv2d(c.pooled, p.proj2_w, nullptr);
  c.b2 = c.z4;
  for (size_t i = 0; i < c.b2.data.size(); ++i) {
    const double v = c.b2.data[i] + c.s2.data[i];
    c.b2.data[i] = v > 0.0 ? v : 0.0;
  }
  c.gap = global_avg_pool(c.b2);

  const int B = batch.shape[0];
  const int c2 = cfg.block2_filters;
  c.logit.resize(B);
  c.prob.resize(B);
  for (int b = 0; b < B; ++b) {
    double z = p.fc_b.data[0];
    for (int k = 0; k < c2; ++k) z += c.gap.data[static_cast<size_t>(b) * c2 + k] * p.fc_w.data[k];
    c.logit[b] = z;
    c.prob[b] = sigmoid(z);
    if (!std::isfinite(c.prob[b])) throw NumericError("forward: non-finite output");
  }
  return c.prob;
}

struct Gradients {
  ModelParams g;       // same shapes as the parameters
  Tensor input_grad;   // filled only when requested
};

enum class ReluBackward { Plain, Guided };

// Reverse-mode pass. `dprob` is dLoss/dprob per batch element; set
// `from_logit` to differentiate the pre-sigmoid logit instead (saliency).
// The cache is single-use: reuse after consumption is an error.
inline Gradients backward(const ModelParams& p, const ConvNetConfig& cfg, ForwardCache& c,
                          const std::vector<double>& dprob, bool from_logit = false,
                          ReluBackward mode = ReluBackward::Plain,
                          bool want_input_grad = false) {
  if (c.consumed) throw DataError("backward: cache already consumed");
  c.consumed = true;
  const int B = c.input.shape[0];
  if (static_cast<int>(dprob.size()) != B) throw DataError("backward: gradient size mismatch");
  const int c2 = cfg.block2_filters;

  Gradients out;
  out.g = make_params(cfg);

  // Head: logit, fc, GAP.
  std::vector<double> dlogit(B);
  for (int b = 0; b < B; ++b)
    dlogit[b] = from_logit ? dprob[b] : dprob[b] * c.prob[b] * (1.0 - c.prob[b]);

  Tensor dgap = Tensor::zeros({B, c2});
  for (int b = 0; b < B; ++b) {
    out.g.fc_b.data[0] += dlogit[b];
    for (int k = 0; k < c2; ++k) {
      out.g.fc_w.data[k] += dlogit[b] * c.gap.data[static_cast<size_t>(b) * c2 + k];
      dgap.data[static_cast<size_t>(b) * c2 + k] = dlogit[b] * p.fc_w.data[k];
    }
  }

  const int Hp = c.b2.shape[1], Wp = c.b2.shape[2];
  Tensor db2 = Tensor::zeros(c.b2.shape);
  const double inv_hw = 1.0 / (static_cast<double>(Hp) * Wp);
  for (int b = 0; b < B; ++b)
    for (int pix = 0; pix < Hp * Wp; ++pix)
      for (int k = 0; k < c2; ++k)
        db2.data[(static_cast<size_t>(b) * Hp * Wp + pix) * c2 + k] =
            dgap.data[static_cast<size_t>(b) * c2 + k] * inv_hw;

  auto relu_mask = [&](Tensor& grad, const Tensor& out_act) {
    for (size_t i = 0; i < grad.data.size(); ++i) {
      if (out_act.data[i] <= 0.0) grad.data[i] = 0.0;
      else if (mode == ReluBackward::Guided && grad.data[i] < 0.0) grad.data[i] = 0.0;
    }
  };

  // Block 2.
  relu_mask(db2, c.b2);
  Tensor da3, dpool_a, dpool_b;
  conv2d_backward(c.a3, p.conv4_w, db2, &da3, &out.g.conv4_w, &out.g.conv4_b);
  conv2d_backward(c.pooled, p.proj2_w, db2, &dpool_b, &out.g.proj2_w, nullptr);
  relu_mask(da3, c.a3);
  conv2d_backward(c.pooled, p.conv3_w, da3, &dpool_a, &out.g.conv3_w, &out.g.conv3_b);
  for (size_t i = 0; i < dpool_a.data.size(); ++i) dpool_a.data[i] += dpool_b.data[i];

  // Pool and block 1.
  Tensor db1 = maxpool2x2_backward(dpool_a, c.pool_argmax, c.b1.shape);
  relu_mask(db1, c.b1);
  Tensor da1, dx_skip, dx_main;
  conv2d_backward(c.a1, p.conv2_w, db1, &da1, &out.g.conv2_w, &out.g.conv2_b);
  conv2d_backward(c.input, p.proj1_w, db1, want_input_grad ? &dx_skip : nullptr,
                  &out.g.proj1_w, nullptr);
  relu_mask(da1, c.a1);
  conv2d_backward(c.input, p.conv1_w, da1, want_input_grad ? &dx_main : nullptr,
                  &out.g.conv1_w, &out.g.conv1_b);

  if (want_input_grad) {
    out.input_grad = dx_main;
    for (size_t i = 0; i < out.input_grad.data.size(); ++i)
      out.input_grad.data[i] += dx_skip.data[i];
  }
  return out;
}

// Binary cross-entropy, mean over the batch, with positive-class weight w:
//   -(1/B) * sum_i [ w*y_i*log(p_i) + (1-y_i)*log(1-p_i) ]
// Probabilities are clamped to [1e-12, 1-1e-12].
inline constexpr double kProbEps = 1e-12;

inline double loss_bce(const std::vector<double>& prob, const std::vector<double>& labels,
                       double pos_weight = 1.0) {
  if (prob.size() != labels.size() || prob.empty())
    throw DataError("loss_bce: size mismatch");
  if (pos_weight < 0.0) throw ConfigError("loss_bce: pos_weight must be >= 0");
  double loss = 0.0;
  for (size_t i = 0; i < prob.size(); ++i) {
    const double p = std::min(std::max(prob[i], kProbEps), 1.0 - kProbEps);
    const double y = labels[i];
    loss -= pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  loss /= static_cast<double>(prob.size());
  if (!std::isfinite(loss)) throw NumericError("loss_bce: non-finite loss");
  return loss;
}

// dLoss/dprob for loss_bce (respecting the clamp: zero slope outside it).
inline std::vector<double> loss_bce_grad(const std::vector<double>& prob,
                                         const std::vector<double>& labels,
                                         double pos_weight = 1.0) {
  if (prob.size() != labels.size() || prob.empty())
    throw DataError("loss_bce_grad: size mismatch");
  std::vector<double> g(prob.size());
  const double inv_n = 1.0 / static_cast<double>(prob.size());
  for (size_t i = 0; i < prob.size(); ++i) {
    if (prob[i] < kProbEps || prob[i] > 1.0 - kProbEps) {
      g[i] = 0.0;
      continue;
    }
    const double p = prob[i];
    g[i] = (-pos_weight * labels[i] / p + (1.0 - labels[i]) / (1.0 - p)) * inv_n;
  }
  return g;
}

// Guided-backprop saliency of the pre-sigmoid logit w.r.t. a single input.
inline Tensor guided_backprop(const ModelParams& p, const ConvNetConfig& cfg,
                              const Tensor& input) {
  if (input.shape.size() != 4 || input.shape[0] != 1)
    throw DataError("guided_backprop: expects a single sample [1,H,W,1]");
  ForwardCache cache;
  forward(p, cfg, input, &cache);
  Gradients g = backward(p, cfg, cache, {1.0}, /*from_logit=*/true,
                         ReluBackward::Guided, /*want_input_grad=*/true);
  return g.input_grad;
}

} // namespace riskseq::nn
