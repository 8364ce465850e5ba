// Command-line front end: sweep runner and a quick self-check of the core
// numerical identities.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "oim/config_file.hpp"
#include "oim/sim.hpp"

namespace {

using namespace oim;

int run_command(const std::string& config_path, bool paper_scale, std::int64_t seed_override,
                int workers_override, const std::string& out_override, bool diagnostics,
                bool timings) {
  ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = experiment_from_file(config_path);
  }
  if (paper_scale) apply_paper_scale(cfg);
  if (seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed_override);
  if (workers_override > 0) cfg.workers = static_cast<unsigned>(workers_override);
  if (!out_override.empty()) cfg.output_path = out_override;
  cfg.diagnostics = cfg.diagnostics || diagnostics;
  cfg.timings_in_csv = cfg.timings_in_csv || timings;
  cfg.validate();

  for (double rho : cfg.rho_grid) {
    if (cfg.fixed_cfos.empty() && rho > 0.35)
      std::cerr << "warning: rho=" << rho
                << " exceeds the preamble acquisition range (|eps| < 0.4); "
                   "estimates will alias\n";
  }

  const MetricsTable table = run_experiment(cfg, &std::cout);
  if (!cfg.output_path.empty()) {
    std::ofstream os(cfg.output_path, std::ios::binary);
    if (!os) {
      std::cerr << "error: cannot open output path " << cfg.output_path << "\n";
      return 1;
    }
    write_csv(table, os, cfg.timings_in_csv);
    std::cout << "wrote " << table.rows.size() << " rows to " << cfg.output_path << "\n";
  } else {
    write_csv(table, std::cout, cfg.timings_in_csv);
  }
  return 0;
}

struct SelfTest {
  int failures = 0;

  void check(bool ok, const std::string& name) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    failures += ok ? 0 : 1;
  }
};

int selftest_command() {
  SelfTest st;

  {  // transform pair: unitarity and dual-path agreement
    bool ok = true;
    for (std::size_t n : {4u, 16u, 64u}) {
      const DftOperator dense(n);
      const FftEngine fft(n);
      Rng rng(1);
      cvec x(n);
      for (auto& v : x) v = rng.complex_gaussian(1.0);
      const cvec a = dense.forward(x);
      const cvec b = fft.forward(x, TransformTag::aux);
      ok = ok && max_abs_diff(a, b) < 1e-10 && max_abs_diff(dense.inverse(a), x) < 1e-10;
    }
    st.check(ok, "transform dual-path agreement and round trip");
  }
  {  // phasor derivative against a finite difference
    const double eps = 0.1, delta = 1e-6;
    const CfoOperator g0 = cfo_phasor(eps, 64);
    const CfoOperator g1 = cfo_phasor(eps + delta, 64);
    const CfoDerivatives d = cfo_phasor_derivatives(eps, 64);
    double worst = 0.0;
    for (std::size_t k = 0; k < 64; ++k)
      worst = std::max(worst, std::abs((g1.diag[k] - g0.diag[k]) / delta - d.first[k]));
    st.check(worst < 1e-4, "phasor derivative finite-difference check");
  }
  {  // decoder round trip at certainty
    const CodeConfig code = CodeConfig::make(64, 2, 7, 0, 20);
    Rng rng(2);
    bitvec payload(64);
    for (auto& b : payload) b = rng.bit();
    const bitvec coded = idma_encode(payload, code);
    dvec llrs(coded.size());
    for (std::size_t t = 0; t < coded.size(); ++t) llrs[t] = coded[t] ? -40.0 : 40.0;
    const SumProductResult dec = sum_product_decode(llrs, code);
    bool ok = true;
    for (std::size_t j = 0; j < payload.size(); ++j)
      ok = ok && (dec.info_llrs[j] < 0.0) == (payload[j] == 1);
    st.check(ok, "noiseless decode round trip");
  }
  {  // noiseless end-to-end, two users
    const FrameConfig cfg = FrameConfig::make(2, 48);
    std::vector<CodeConfig> codes;
    std::vector<bitvec> payloads;
    std::vector<FrameSymbols> frames;
    std::vector<UserImpairments> truth;
    Rng rng(3);
    for (unsigned u = 0; u < 2; ++u) {
      codes.push_back(CodeConfig::make(48, cfg.repetition, 5, u, 20));
      bitvec bits(48);
      for (auto& b : bits) b = rng.bit();
      payloads.push_back(bits);
      frames.push_back(build_frame(bits, cfg, codes[u], u));
      UserImpairments imp;
      imp.cfo = u == 0 ? 0.2 : -0.2;
      imp.taps = draw_channel(4, rng);
      imp.timing_offset = u * 3;
      imp.block_phases = phase_drift_schedule(imp.cfo, cfg, 0.0);
      truth.push_back(imp);
    }
    NoiseModel noiseless;
    Rng nrng(4);
    const FftEngine engine(cfg.fft_size);
    const auto r = synthesize_received(frames, truth, noiseless, cfg, nrng, engine);
    ReceiverConfig rc;
    rc.sage_iterations = 3;
    rc.ecm_iterations = 3;
    bool ok = true;
    for (ReceiverKind kind : {ReceiverKind::sage_ecm_sum_product, ReceiverKind::sage_min_sum,
                              ReceiverKind::one_shot_ic, ReceiverKind::full_csi_ic}) {
      rc.kind = kind;
      const ReceiverResult res = run_receiver(r, cfg, codes, rc, &truth);
      for (unsigned u = 0; u < 2; ++u) ok = ok && res.users[u].bits == payloads[u];
    }
    st.check(ok, "noiseless two-user recovery, all receivers");
  }
  {  // transform budget
    const FrameConfig cfg = FrameConfig::make(2, 32);
    std::vector<CodeConfig> codes;
    std::vector<FrameSymbols> frames;
    std::vector<UserImpairments> truth;
    Rng rng(6);
    for (unsigned u = 0; u < 2; ++u) {
      codes.push_back(CodeConfig::make(32, cfg.repetition, 6, u, 10));
      bitvec bits(32);
      for (auto& b : bits) b = rng.bit();
      frames.push_back(build_frame(bits, cfg, codes[u], u));
      UserImpairments imp;
      imp.cfo = u == 0 ? 0.1 : -0.1;
      imp.taps = draw_channel(4, rng);
      imp.timing_offset = u;
      imp.block_phases = phase_drift_schedule(imp.cfo, cfg, 0.0);
      truth.push_back(imp);
    }
    NoiseModel noise;
    noise.variance = 0.05;
    Rng nrng(7);
    const FftEngine engine(cfg.fft_size);
    const auto r = synthesize_received(frames, truth, noise, cfg, nrng, engine);
    ReceiverConfig rc;
    rc.sage_iterations = 2;
    rc.ecm_iterations = 3;
    rc.kind = ReceiverKind::sage_ecm_sum_product;
    const ReceiverResult res = run_receiver(r, cfg, codes, rc, &truth);
    const TransformAudit audit = audit_transforms(res, rc.kind, cfg, rc);
    st.check(audit.pass(), "transform count matches the cost model");
  }

  std::cout << (st.failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return st.failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oimsim - multiuser OFDM-IDMA link simulator"};
  app.require_subcommand(1);

  std::string config_path;
  bool paper_scale = false;
  std::int64_t seed = -1;
  int workers = 0;
  std::string out_path;
  bool diagnostics = false;
  bool timings = false;

  CLI::App* run = app.add_subcommand("run", "run a Monte-Carlo sweep");
  run->add_option("--config", config_path, "experiment config file");
  run->add_flag("--paper-scale", paper_scale,
                "full-size operating point (2400-bit payloads, 3000 frames)");
  run->add_option("--seed", seed, "master seed override");
  run->add_option("--workers", workers, "worker thread count override");
  run->add_option("--out", out_path, "CSV output path override");
  run->add_flag("--diagnostics", diagnostics, "emit per-iteration traces for the first frame");
  run->add_flag("--timings", timings, "include wall-clock columns in the CSV");

  CLI::App* selftest = app.add_subcommand("selftest", "run the built-in numerical checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run))
      return run_command(config_path, paper_scale, seed, workers, out_path, diagnostics, timings);
    if (app.got_subcommand(selftest)) return selftest_command();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
