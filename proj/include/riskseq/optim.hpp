#pragma once
#include <cmath>
#include <vector>

#include "riskseq/errors.hpp"
#include "riskseq/net.hpp"

namespace riskseq::nn {

enum class OptimizerKind { Adadelta, Adam };

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Shadow accumulators shaped like the parameter vector.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adadelta;
  AdadeltaConfig adadelta;
  AdamConfig adam;
  int64_t step = 0;
  std::vector<double> acc1; // E[g^2] (Adadelta) or first moment (Adam)
  std::vector<double> acc2; // E[dx^2] (Adadelta) or second moment (Adam)

  static OptimizerState make(OptimizerKind kind, size_t num_params) {
    OptimizerState s;
    s.kind = kind;
    s.acc1.assign(num_params, 0.0);
    s.acc2.assign(num_params, 0.0);
    return s;
  }
};

// One in-place update over the flattened parameter order.
inline void optimizer_step(OptimizerState& state, ModelParams& params, const ModelParams& grads) {
  std::vector<double> flat = params.flatten();
  const std::vector<double> g = grads.flatten();
  if (flat.size() != g.size() || flat.size() != state.acc1.size())
    throw DataError("optimizer_step: size mismatch");

  state.step += 1;
  if (state.kind == OptimizerKind::Adadelta) {
    const double rho = state.adadelta.rho, eps = state.adadelta.eps;
    for (size_t i = 0; i < flat.size(); ++i) {
      state.acc1[i] = rho * state.acc1[i] + (1.0 - rho) * g[i] * g[i];
      const double dx = -std::sqrt(state.acc2[i] + eps) / std::sqrt(state.acc1[i] + eps) * g[i];
      state.acc2[i] = rho * state.acc2[i] + (1.0 - rho) * dx * dx;
      flat[i] += dx;
    }
  } else {
    const double lr = state.adam.lr, b1 = state.adam.beta1, b2 = state.adam.beta2,
                 eps = state.adam.eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < flat.size(); ++i) {
      state.acc1[i] = b1 * state.acc1[i] + (1.0 - b1) * g[i];
      state.acc2[i] = b2 * state.acc2[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = state.acc1[i] / bc1;
      const double vhat = state.acc2[i] / bc2;
      flat[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  for (double v : flat)
    if (!std::isfinite(v)) throw NumericError("optimizer_step: non-finite parameter");
  params.unflatten(flat);
}

} // namespace riskseq::nn
