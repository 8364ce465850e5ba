#include <benchmark/benchmark.h>

#include "oim/channel.hpp"
#include "oim/receivers.hpp"

using namespace oim;

namespace {

cvec random_cvec(std::size_t n, Rng& rng) {
  cvec v(n);
  for (auto& x : v) x = rng.complex_gaussian(1.0);
  return v;
}

void BM_DenseTransform(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const DftOperator dft(n);
  Rng rng(1);
  const cvec x = random_cvec(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dft.forward(x));
}
BENCHMARK(BM_DenseTransform)->Arg(16)->Arg(64);

void BM_FftTransform(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const FftEngine engine(n);
  Rng rng(1);
  const cvec x = random_cvec(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(engine.forward(x, TransformTag::aux));
}
BENCHMARK(BM_FftTransform)->Arg(16)->Arg(64)->Arg(256);

void BM_SumProductDecode(benchmark::State& state) {
  const std::size_t j = static_cast<std::size_t>(state.range(0));
  const CodeConfig cfg = CodeConfig::make(j, 2, 7, 0, 20);
  Rng rng(2);
  dvec llrs(cfg.coded_length());
  for (auto& v : llrs) v = 2.0 * rng.gaussian();
  for (auto _ : state) benchmark::DoNotOptimize(sum_product_decode(llrs, cfg));
}
BENCHMARK(BM_SumProductDecode)->Arg(240)->Arg(2400);

void BM_MinSumDecode(benchmark::State& state) {
  const std::size_t j = static_cast<std::size_t>(state.range(0));
  const CodeConfig cfg = CodeConfig::make(j, 2, 7, 0, 20);
  Rng rng(2);
  dvec llrs(cfg.coded_length());
  for (auto& v : llrs) v = 2.0 * rng.gaussian();
  for (auto _ : state) benchmark::DoNotOptimize(min_sum_decode(llrs, cfg));
}
BENCHMARK(BM_MinSumDecode)->Arg(240)->Arg(2400);

struct FrameFixture {
  FrameConfig cfg = FrameConfig::make(2, 240);
  std::vector<CodeConfig> codes;
  std::vector<UserImpairments> truth;
  std::vector<cvec> r;
  ReceiverOperators ops{cfg};

  FrameFixture() {
    Rng rng(3);
    std::vector<FrameSymbols> frames;
    for (unsigned u = 0; u < 2; ++u) {
      codes.push_back(CodeConfig::make(240, cfg.repetition, 3, u, 20));
      bitvec bits(240);
      for (auto& b : bits) b = rng.bit();
      frames.push_back(build_frame(bits, cfg, codes[u], u));
      UserImpairments imp;
      imp.cfo = u == 0 ? 0.2 : -0.2;
      imp.taps = draw_channel(4, rng);
      imp.timing_offset = u;
      imp.block_phases = phase_drift_schedule(imp.cfo, cfg, 0.0);
      truth.push_back(imp);
    }
    NoiseModel noise = NoiseModel::from_snr_db(12.0, cfg.code_rate());
    Rng nrng(4);
    const FftEngine engine(cfg.fft_size);
    r = synthesize_received(frames, truth, noise, cfg, nrng, engine);
  }
};

void BM_JointReceiverFrame(benchmark::State& state) {
  static const FrameFixture fx;
  ReceiverConfig rc;
  rc.kind = ReceiverKind::sage_ecm_sum_product;
  rc.sage_iterations = static_cast<int>(state.range(0));
  rc.ecm_iterations = static_cast<int>(state.range(1));
  for (auto _ : state)
    benchmark::DoNotOptimize(run_receiver(fx.r, fx.cfg, fx.codes, rc, &fx.truth, &fx.ops));
}
BENCHMARK(BM_JointReceiverFrame)->Args({1, 1})->Args({4, 4})->Args({10, 20});

void BM_CancellationReceiverFrame(benchmark::State& state) {
  static const FrameFixture fx;
  ReceiverConfig rc;
  rc.kind = ReceiverKind::one_shot_ic;
  rc.sage_iterations = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(run_receiver(fx.r, fx.cfg, fx.codes, rc, &fx.truth, &fx.ops));
}
BENCHMARK(BM_CancellationReceiverFrame)->Arg(1)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
