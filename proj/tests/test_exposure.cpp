#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "riskseq/exposure.hpp"
#include "riskseq/rng.hpp"

using namespace riskseq;

namespace {

// Monte-Carlo oracle: the exponential mislabel model is the survival process
// where the event outlasts each element with probability e^(-alpha*L). Per
// trial, draw a continuous duration d ~ Exp(alpha*L) (in elements); offset n
// is mislabeled iff d <= n. Returns the mean mislabeled fraction over the
// first N offsets and its standard error.
struct McEstimate {
  double mean;
  double se;
};

McEstimate mc_exposure(uint64_t seed, double alpha, int L, int N, int trials) {
  Rng rng(seed);
  double sum = 0.0, sum2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double d = rng.exponential(alpha * L);
    const int survived = d >= static_cast<double>(N)
                             ? N
                             : static_cast<int>(std::ceil(d));
    const double frac = static_cast<double>(N - survived) / static_cast<double>(N);
    sum += frac;
    sum2 += frac * frac;
  }
  const double mean = sum / trials;
  const double var = (sum2 / trials - mean * mean) / (trials - 1);
  return {mean, std::sqrt(std::max(var, 0.0))};
}

} // namespace

TEST_CASE("mislabel_prob closed form") {
  ExposureParams p(0.37, 1);
  CHECK(mislabel_prob(p, 0) == 0.0);

  ExposureParams half_life(std::log(2.0) / 5.0, 1);
  CHECK_THAT(mislabel_prob(half_life, 5), Catch::Matchers::WithinAbs(0.5, 1e-15));

  ExposureParams p2(0.2, 1);
  CHECK_THAT(mislabel_prob(p2, 3), Catch::Matchers::WithinAbs(1.0 - std::exp(-0.6), 1e-15));
  CHECK_THAT(mislabel_prob(p2, 3), Catch::Matchers::WithinAbs(0.4512, 1e-4));
}

TEST_CASE("mislabel_prob is strictly increasing and below 1") {
  ExposureParams p(0.11, 3);
  double prev = -1.0;
  for (int n = 0; n <= 200; ++n) {
    const double v = mislabel_prob(p, n);
    CHECK(v > prev);
    CHECK(v < 1.0);
    prev = v;
  }
}

TEST_CASE("exposure at N=1 is exactly zero") {
  for (double alpha : {1e-6, 0.1386, 0.5, 3.0})
    for (int L : {1, 5, 75}) CHECK(exposure(ExposureParams(alpha, L), 1) == 0.0);
}

TEST_CASE("exposure matches independent term-by-term summation") {
  // 1 - (1 + 2^(-1/5) + 2^(-2/5)) / 3 at the half-life calibration.
  const double expected = 1.0 - (1.0 + std::pow(2.0, -0.2) + std::pow(2.0, -0.4)) / 3.0;
  ExposureParams p(std::log(2.0) / 5.0, 1);
  CHECK_THAT(exposure(p, 3), Catch::Matchers::WithinAbs(expected, 1e-15));
  CHECK_THAT(exposure(p, 3), Catch::Matchers::WithinAbs(0.1239, 5e-5));
}

TEST_CASE("exposure agrees with the Monte-Carlo survival oracle") {
  const int trials = 100000;
  int cell = 0;
  for (double alpha : {0.05, std::log(2.0) / 5.0, 0.5}) {
    for (int L : {1, 5}) {
      ExposureParams p(alpha, L);
      for (int N = 1; N <= 9; ++N) {
        const auto mc = mc_exposure(derive_seed(20260810, {static_cast<uint64_t>(cell++)}),
                                    alpha, L, N, trials);
        const double closed = exposure(p, N);
        INFO("alpha=" << alpha << " L=" << L << " N=" << N << " mc=" << mc.mean
                      << " closed=" << closed << " se=" << mc.se);
        CHECK(std::abs(closed - mc.mean) <= 3.0 * mc.se + 1e-12);
      }
    }
  }
}

TEST_CASE("exposure is nondecreasing in N and obeys the tail bound") {
  for (double alpha : {0.05, 0.3}) {
    for (int L : {1, 5}) {
      ExposureParams p(alpha, L);
      double prev = 0.0;
      for (int N = 1; N <= 400; ++N) {
        const double e = exposure(p, N);
        if (N > 1) CHECK(e > prev);
        CHECK(e >= 1.0 - 1.0 / (N * (1.0 - std::exp(-alpha * L))) - 1e-12);
        prev = e;
      }
    }
  }
}

TEST_CASE("segment length folds into the decay rate") {
  for (int k : {2, 5, 9}) {
    ExposureParams scaled(0.07, k);
    ExposureParams folded(0.07 * k, 1);
    for (int N = 1; N <= 20; ++N)
      CHECK(exposure(scaled, N) == exposure(folded, N));
  }
}

TEST_CASE("exposure agrees with the geometric closed form") {
  // Independent algebraic route: 1 - (1 - r^N) / (N (1 - r)), r = e^(-alpha L).
  for (double alpha : {0.02, 0.1386, 0.9}) {
    ExposureParams p(alpha, 2);
    const double r = std::exp(-alpha * 2);
    for (int N = 1; N <= 50; ++N) {
      const double geo = 1.0 - (1.0 - std::pow(r, N)) / (N * (1.0 - r));
      CHECK_THAT(exposure(p, N), Catch::Matchers::WithinAbs(geo, 1e-12));
    }
  }
}

TEST_CASE("exposure_multi") {
  ExposureParams p(std::log(2.0) / 5.0, 1);
  CHECK(exposure_multi(p, LabelSet({1, 1, 1})) == 0.0);
  for (int N : {2, 4, 7})
    CHECK(exposure_multi(p, LabelSet({N, N})) == exposure(p, N));
  const double expected = (0.0 + exposure(p, 3)) / 2.0;
  CHECK_THAT(exposure_multi(p, LabelSet({1, 3})), Catch::Matchers::WithinAbs(expected, 1e-15));
  CHECK_THAT(exposure_multi(p, LabelSet({1, 3})), Catch::Matchers::WithinAbs(0.0620, 5e-5));
  CHECK_THROWS_AS(LabelSet({}), ConfigError);
  CHECK_THROWS_AS(LabelSet({2, 0}), ConfigError);
}

TEST_CASE("calibrate_alpha half-life construction") {
  CHECK_THAT(calibrate_alpha(1.0), Catch::Matchers::WithinAbs(std::log(2.0), 1e-15));
  CHECK_THAT(calibrate_alpha(5.0), Catch::Matchers::WithinAbs(0.1386, 5e-5));
  ExposureParams p(calibrate_alpha(5.0), 1);
  CHECK_THAT(mislabel_prob(p, 5), Catch::Matchers::WithinAbs(0.5, 1e-15));
  CHECK_THROWS_AS(calibrate_alpha(0.0), ConfigError);
  CHECK_THROWS_AS(calibrate_alpha(-2.0), ConfigError);
}

TEST_CASE("exposure_curve grid") {
  const auto rows = exposure_curve({ExposureParams(0.1, 1), ExposureParams(0.3, 2)}, 1);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.risk_level == 1);
    CHECK(r.exposure == 0.0);
  }

  // Matched alpha*L products give coinciding curves.
  const auto a = exposure_curve({ExposureParams(0.2, 1)}, 9);
  const auto b = exposure_curve({ExposureParams(0.1, 2)}, 9);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].exposure == b[i].exposure);

  // Shorter segments expose less at every N >= 2 under a fixed calibration.
  const auto short_seg = exposure_curve({ExposureParams(0.1, 2)}, 9);
  const auto long_seg = exposure_curve({ExposureParams(0.1, 5)}, 9);
  for (size_t i = 0; i < short_seg.size(); ++i) {
    if (short_seg[i].risk_level == 1) continue;
    CHECK(short_seg[i].exposure < long_seg[i].exposure);
  }
}

TEST_CASE("exposure curve CSV round-trips through the closed form") {
  const auto rows = exposure_curve({ExposureParams(0.1386, 5)}, 6);
  const auto csv = exposure_curve_csv(rows);
  // Header plus one line per row, each re-parsed value matching exactly.
  std::istringstream ss(csv.content());
  std::string line;
  std::getline(ss, line);
  CHECK(line == "alpha,L,N,exposure");
  size_t i = 0;
  while (std::getline(ss, line)) {
    const auto cells = split_csv_line(line);
    REQUIRE(cells.size() == 4);
    CHECK(std::stod(cells[3]) == rows[i].exposure);
    ++i;
  }
  CHECK(i == rows.size());
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(ExposureParams(0.0, 1), ConfigError);
  CHECK_THROWS_AS(ExposureParams(-1.0, 1), ConfigError);
  CHECK_THROWS_AS(ExposureParams(0.5, 0), ConfigError);
  ExposureParams ok(0.5, 1);
  CHECK_THROWS_AS(mislabel_prob(ok, -1), ConfigError);
  CHECK_THROWS_AS(exposure(ok, 0), ConfigError);
}
