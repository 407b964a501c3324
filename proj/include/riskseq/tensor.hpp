#pragma once
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "riskseq/errors.hpp"

namespace riskseq {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(t.numel(), 0.0);
    return t;
  }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw DataError("Tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  int dim(size_t i) const { return shape.at(i); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void check_finite(const std::string& what) const {
    for (double v : data)
      if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

} // namespace riskseq
