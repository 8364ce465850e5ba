#include <doctest.h>

#include "oim/softidft.hpp"
#include "oracle_utils.hpp"

using namespace oim;

TEST_CASE("posterior mean of a bpsk llr") {
  CHECK(bpsk_posterior_mean(0.0) == 0.0);
  CHECK(bpsk_posterior_mean(100.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bpsk_posterior_mean(-100.0) == doctest::Approx(-1.0).epsilon(1e-12));
  // E[X] with p(+1) = e^2/(1+e^2) at llr = 2.
  const double p_plus = std::exp(2.0) / (1.0 + std::exp(2.0));
  const double expect = p_plus * 1.0 + (1.0 - p_plus) * -1.0;
  CHECK(bpsk_posterior_mean(2.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(bpsk_posterior_mean(2.0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
}

TEST_CASE("zero means transform to zero") {
  const FftEngine engine(8);
  const cvec zero(8, 0.0);
  CHECK(squared_norm(soft_idft_mean(zero, engine, TransformTag::aux)) == 0.0);
}

TEST_CASE("certain beliefs reproduce the true time-domain samples") {
  Rng rng(3);
  const std::size_t n = 8;
  const DftOperator dense(n);
  const FftEngine engine(n);
  cvec H = oracle::random_cvec(n, rng);
  dvec mx(n);
  cvec X(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool plus = rng.bit();
    mx[i] = plus ? 1.0 : -1.0;  // llr -> +-inf limit
    X[i] = mx[i];
  }
  const cvec mY = compound_means(mx, H);
  const cvec my = soft_idft_mean(mY, engine, TransformTag::aux);
  cvec Y(n);
  for (std::size_t i = 0; i < n; ++i) Y[i] = X[i] * H[i];
  CHECK(max_abs_diff(my, dense.inverse(Y)) < 1e-12);
}

TEST_CASE("soft transform mean equals the enumeration posterior mean") {
  Rng rng(7);
  for (std::size_t n : {4u, 8u}) {
    const FftEngine engine(n);
    for (int rep = 0; rep < 5; ++rep) {
      const cvec H = oracle::random_cvec(n, rng);
      dvec llrs(n);
      for (auto& v : llrs) v = 1.2 * rng.gaussian();
      dvec mx(n);
      for (std::size_t i = 0; i < n; ++i) mx[i] = bpsk_posterior_mean(llrs[i]);
      const cvec my = soft_idft_mean(compound_means(mx, H), engine, TransformTag::aux);
      const auto ref = oracle::enumerate_soft_transform(llrs, H);
      CHECK(max_abs_diff(my, ref.mean) < 1e-10);
    }
  }
}

TEST_CASE("soft transform variances average the input variances") {
  SUBCASE("uniform variances pass through") {
    const dvec v(16, 0.37);
    const dvec out = soft_idft_variance(v);
    for (double x : out) CHECK(x == doctest::Approx(0.37).epsilon(1e-12));
  }
  SUBCASE("a unit basis vector spreads to 1/N") {
    dvec v(8, 0.0);
    v[0] = 1.0;
    const dvec out = soft_idft_variance(v);
    for (double x : out) CHECK(x == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
  }
  SUBCASE("negative variances are rejected") {
    CHECK_THROWS_AS(soft_idft_variance({0.1, -0.2}), std::invalid_argument);
  }
  SUBCASE("matches the enumeration variance for independent symbols") {
    Rng rng(11);
    const std::size_t n = 4;
    const cvec H = oracle::random_cvec(n, rng);
    dvec llrs(n);
    for (auto& v : llrs) v = rng.gaussian();
    dvec var_y(n);
    for (std::size_t i = 0; i < n; ++i)
      var_y[i] = compound_variance(std::norm(H[i]), bpsk_posterior_mean(llrs[i]));
    const dvec out = soft_idft_variance(var_y);
    const auto ref = oracle::enumerate_soft_transform(llrs, H);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(ref.variance[i] >= -1e-12);
      CHECK(out[i] == doctest::Approx(ref.variance[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("unitary transform preserves the mean energy") {
  Rng rng(13);
  const FftEngine engine(16);
  const cvec mY = oracle::random_cvec(16, rng);
  const cvec my = soft_idft_mean(mY, engine, TransformTag::aux);
  CHECK(squared_norm(my) == doctest::Approx(squared_norm(mY)).epsilon(1e-12));
}

TEST_CASE("mean grids carry known symbols on known cells") {
  const FrameConfig cfg = FrameConfig::make(2, 48);
  const dvec llrs(cfg.coded_length(), 0.0);
  const auto grid = symbol_mean_grid(llrs, cfg, 1);
  const cvec training = training_block(cfg);
  // Own training rows.
  for (std::size_t i = 0; i < cfg.fft_size; ++i) {
    CHECK(grid[2][i] == training[i].real());
    CHECK(grid[3][i] == training[i].real());
  }
  // Other users' preamble rows are silent.
  CHECK(std::all_of(grid[0].begin(), grid[0].end(), [](double v) { return v == 0.0; }));
  // Data blocks: zero-confidence data, unit pilots, silent guards.
  for (std::size_t m = cfg.num_preamble_blocks(); m < cfg.num_blocks(); ++m) {
    for (std::size_t b : cfg.data_bins) CHECK(grid[m][b] == 0.0);
    for (std::size_t b : cfg.pilot_bins[1]) CHECK(grid[m][b] == 1.0);
    for (std::size_t b : cfg.pilot_bins[0]) CHECK(grid[m][b] == 0.0);
  }
}

TEST_CASE("hard grids agree with mean grids at certainty") {
  const FrameConfig cfg = FrameConfig::make(1, 48);
  const CodeConfig code = CodeConfig::make(cfg.payload_bits, cfg.repetition, 17, 0);
  Rng rng(19);
  bitvec payload(cfg.payload_bits);
  for (auto& b : payload) b = rng.bit();
  const bitvec coded = idma_encode(payload, code);
  dvec llrs(coded.size());
  for (std::size_t t = 0; t < coded.size(); ++t) llrs[t] = coded[t] ? -60.0 : 60.0;
  const auto soft = symbol_mean_grid(llrs, cfg, 0);
  const auto hard = hard_symbol_grid(coded, cfg, 0);
  for (std::size_t m = 0; m < cfg.num_blocks(); ++m)
    for (std::size_t i = 0; i < cfg.fft_size; ++i)
      CHECK(soft[m][i] == doctest::Approx(hard[m][i]).epsilon(1e-12));
}
