#include <doctest.h>

#include "oim/receivers.hpp"
#include "oim/sim.hpp"
#include "oracle_utils.hpp"

using namespace oim;

namespace {

// A complete single- or two-user scene with ground truth, built the same
// way the harness builds trials.
struct Scene {
  FrameConfig cfg;
  std::vector<CodeConfig> codes;
  std::vector<bitvec> payloads;
  std::vector<FrameSymbols> frames;
  std::vector<UserImpairments> truth;
  std::vector<cvec> r;
  FftEngine engine{64};

  Scene(std::size_t users, std::size_t payload_bits, std::vector<double> cfos, double noise_var,
        std::uint64_t seed, std::size_t taps = 4)
      : cfg(FrameConfig::make(users, payload_bits)) {
    Rng rng(seed);
    for (unsigned u = 0; u < users; ++u) {
      codes.push_back(CodeConfig::make(payload_bits, cfg.repetition, seed, u, 20));
      bitvec bits(payload_bits);
      for (auto& b : bits) b = rng.bit();
      payloads.push_back(bits);
      frames.push_back(build_frame(bits, cfg, codes[u], u));
      UserImpairments imp;
      imp.cfo = cfos[u];
      imp.taps = taps == 1 ? cvec{1.0} : draw_channel(taps, rng);
      imp.timing_offset = u == 0 ? 0 : 3 * u;
      imp.block_phases = phase_drift_schedule(imp.cfo, cfg, 0.0);
      truth.push_back(imp);
    }
    NoiseModel noise;
    noise.variance = noise_var;
    Rng noise_rng(derive_seed(seed, 999));
    r = synthesize_received(frames, truth, noise, cfg, noise_rng, engine);
  }
};

// Residual, perfect beliefs and perfect parameters for user 0 of a scene:
// the stationary point of every stage.
struct PerfectState {
  std::vector<dvec> grid;
  std::vector<cvec> my;
  std::vector<StageBlock> blocks;
  std::vector<std::size_t> data_blocks;
  cvec H;

  PerfectState(const Scene& s, const std::vector<cvec>& residual) {
    const bitvec coded = idma_encode(s.payloads[0], s.codes[0]);
    grid = hard_symbol_grid(coded, s.cfg, 0);
    H = channel_response(s.truth[0].composite(s.cfg.fft_size), s.cfg.fft_size);
    my.resize(s.cfg.num_blocks());
    for (std::size_t m = 0; m < s.cfg.num_blocks(); ++m) {
      const cvec Y = compound_means(grid[m], H);
      my[m] = s.engine.inverse(Y, TransformTag::aux);
    }
    for (std::size_t m : {std::size_t{0}, std::size_t{1}})
      blocks.push_back({&residual[m], &my[m], s.truth[0].block_phases[m]});
    for (std::size_t m = s.cfg.num_preamble_blocks(); m < s.cfg.num_blocks(); ++m) {
      blocks.push_back({&residual[m], &my[m], s.truth[0].block_phases[m]});
      data_blocks.push_back(m);
    }
  }
};

double grid_search_cfo(std::span<const StageBlock> blocks, double centre, double half_width,
                       double step, std::size_t n) {
  double best = centre, best_val = -1e300;
  for (double e = centre - half_width; e <= centre + half_width; e += step) {
    const double v = compensation_objective(blocks, e, n);
    if (v > best_val) {
      best_val = v;
      best = e;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("cfo update is stationary at the true offset") {
  const Scene s(1, 48, {0.2}, 0.0, 5);
  const PerfectState ps(s, s.r);
  const CfoUpdateResult res = ecm_cfo_update(ps.blocks, 0.2, s.cfg.fft_size, 0.05);
  CHECK(std::abs(res.eps - 0.2) < 1e-8);
  CHECK(!res.stalled);
}

TEST_CASE("newton cfo steps land on the grid-search maximiser") {
  const Scene s(1, 48, {0.2}, 0.0, 7);
  const PerfectState ps(s, s.r);
  const double eps0 = 0.21;  // start 0.01 away from the truth
  double eps = eps0;
  for (int step = 0; step < 5; ++step)
    eps = ecm_cfo_update(ps.blocks, eps, s.cfg.fft_size, 0.05).eps;
  const double grid = grid_search_cfo(ps.blocks, eps0, 0.02, 1e-5, s.cfg.fft_size);
  CHECK(std::abs(eps - grid) < 1e-5);
  CHECK(std::abs(eps - 0.2) < 1e-5);
}

TEST_CASE("clamped newton steps never lower the objective") {
  // Noisy scenes, random starting offsets: the built-in rejection keeps the
  // update monotone, and the raw step itself should almost always ascend.
  std::size_t rejected = 0, total = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const double noise_var = NoiseModel::from_snr_db(8.0, 1.0 / 6.0).variance;
    const Scene s(1, 48, {trial % 2 == 0 ? 0.2 : -0.2}, noise_var, derive_seed(100, trial));
    const PerfectState ps(s, s.r);
    Rng rng(derive_seed(200, trial));
    const double eps0 = s.truth[0].cfo + 0.02 * (rng.uniform() - 0.5);
    const double before = compensation_objective(ps.blocks, eps0, s.cfg.fft_size);
    const CfoUpdateResult res = ecm_cfo_update(ps.blocks, eps0, s.cfg.fft_size, 0.05);
    const double after = compensation_objective(ps.blocks, res.eps, s.cfg.fft_size);
    CHECK(after >= before - 1e-9 * std::abs(before));
    ++total;
    rejected += res.rejected;
  }
  CHECK(static_cast<double>(rejected) < 0.01 * static_cast<double>(total) + 1.0);
}

TEST_CASE("phase update recovers the injected block phase") {
  Scene s(1, 48, {0.0}, 0.0, 9);
  // Re-rotate one data block by a known phase and read it back.
  const std::size_t m = s.cfg.num_preamble_blocks();
  const PerfectState ps(s, s.r);
  const CfoOperator gamma = cfo_phasor(0.0, s.cfg.fft_size);
  cvec rotated = s.r[m];
  for (auto& x : rotated) x *= std::polar(1.0, 0.7);
  CHECK(ecm_phase_update(rotated, ps.my[m], gamma, 0.0) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(std::abs(ecm_phase_update(s.r[m], ps.my[m], gamma, 0.3)) < 1e-9);
  // A silent reconstruction keeps the previous estimate.
  const cvec silent(s.cfg.fft_size, 0.0);
  CHECK(ecm_phase_update(s.r[m], silent, gamma, 0.3) == 0.3);
}

TEST_CASE("phase update matches a fine grid search of its objective") {
  const double noise_var = NoiseModel::from_snr_db(12.0, 1.0 / 6.0).variance;
  const Scene s(1, 48, {0.15}, noise_var, 11);
  const PerfectState ps(s, s.r);
  const std::size_t m = s.cfg.num_preamble_blocks() + 1;
  const CfoOperator gamma = cfo_phasor(0.15, s.cfg.fft_size);
  const double est = ecm_phase_update(s.r[m], ps.my[m], gamma, 0.0);

  double best = 0.0, best_val = -1e300;
  for (double th = -kPi; th < kPi; th += 1e-4) {
    const StageBlock blk{&s.r[m], &ps.my[m], th};
    const double v =
        compensation_objective(std::span<const StageBlock>(&blk, 1), 0.15, s.cfg.fft_size);
    if (v > best_val) {
      best_val = v;
      best = th;
    }
  }
  CHECK(std::abs(wrap_phase(est - best)) < 1e-4);
}

TEST_CASE("channel update inverts perfect beliefs exactly") {
  const Scene s(1, 48, {0.1}, 0.0, 13);
  const PerfectState ps(s, s.r);
  const ReceiverOperators ops(s.cfg);
  // Compensate and transform the data blocks with the true offset.
  const CfoOperator comp = cfo_phasor(-0.1, s.cfg.fft_size);
  std::vector<cvec> V;
  std::vector<double> thetas;
  std::vector<dvec> grids;
  for (std::size_t m : ps.data_blocks) {
    V.push_back(s.engine.forward(comp.apply(s.r[m]), TransformTag::aux));
    thetas.push_back(s.truth[0].block_phases[m]);
    grids.push_back(ps.grid[m]);
  }
  const cvec H_prev(s.cfg.fft_size, 0.0);
  const ChannelUpdateResult res =
      ecm_channel_update(V, thetas, grids, H_prev, ops.user_fit(0), 0.1);
  const cvec h_true = s.truth[0].composite(s.cfg.fft_size);
  CHECK(max_abs_diff(res.estimate.h, h_true) < 1e-8);
  CHECK(res.bins_kept == 0);  // every fitted bin observed
}

TEST_CASE("channel update skips unconfident bins without error") {
  const Scene s(1, 48, {0.0}, 0.0, 15);
  const ReceiverOperators ops(s.cfg);
  const std::size_t nd = s.cfg.num_data_blocks();
  // All-zero beliefs: nothing to invert, previous estimate carried over.
  std::vector<cvec> V(nd, cvec(s.cfg.fft_size, cplx(1.0, 0.0)));
  std::vector<double> thetas(nd, 0.0);
  std::vector<dvec> grids(nd, dvec(s.cfg.fft_size, 0.0));
  cvec H_prev(s.cfg.fft_size, cplx(0.4, 0.1));
  const ChannelUpdateResult res =
      ecm_channel_update(V, thetas, grids, H_prev, ops.user_fit(0), 0.1);
  CHECK(res.bins_kept == ops.user_fit(0).bins().size());
  // The refit projects the carried-over response onto the tap subspace.
  CHECK(squared_norm(res.estimate.taps) > 0.0);
}

TEST_CASE("channel error decreases over refinement sweeps without noise") {
  const Scene s(1, 48, {0.12}, 0.0, 17);
  const PerfectState ps(s, s.r);
  const ReceiverOperators ops(s.cfg);
  const cvec h_true = s.truth[0].composite(s.cfg.fft_size);
  // Start from a perturbed response and iterate the refit.
  cvec H = channel_response(h_true, s.cfg.fft_size);
  Rng rng(18);
  for (auto& x : H) x += rng.complex_gaussian(0.02);
  const CfoOperator comp = cfo_phasor(-0.12, s.cfg.fft_size);
  std::vector<cvec> V;
  std::vector<double> thetas;
  std::vector<dvec> grids;
  for (std::size_t m : ps.data_blocks) {
    V.push_back(s.engine.forward(comp.apply(s.r[m]), TransformTag::aux));
    thetas.push_back(s.truth[0].block_phases[m]);
    grids.push_back(ps.grid[m]);
  }
  double prev_err = 1e300;
  for (int sweep = 0; sweep < 3; ++sweep) {
    const ChannelUpdateResult res = ecm_channel_update(V, thetas, grids, H, ops.user_fit(0), 0.1);
    double err = 0.0;
    for (std::size_t i = 0; i < s.cfg.fft_size; ++i)
      err += std::norm(res.estimate.h[i] - h_true[i]);
    CHECK(err < prev_err + 1e-15);
    prev_err = err;
    H = res.estimate.H;
  }
  CHECK(prev_err < 1e-16);
}

TEST_CASE("objective via cached means equals the dense two-transform route") {
  // Validates that the fast path (time-domain means through the radix-2
  // engine) agrees with a dense evaluation of the same model to 1e-9.
  Rng rng(21);
  const FrameConfig cfg = FrameConfig::make(1, 48);
  const DftOperator dense(cfg.fft_size);
  const FftEngine engine(cfg.fft_size);
  for (int rep = 0; rep < 5; ++rep) {
    // Random state: beliefs in [-1, 1], random taps, random residual.
    dvec mx(cfg.fft_size);
    for (auto& v : mx) v = 2.0 * rng.uniform() - 1.0;
    cvec h(cfg.fft_size, 0.0);
    for (std::size_t t = 0; t < 5; ++t) h[t] = rng.complex_gaussian(1.0);
    const cvec H = channel_response(h, cfg.fft_size);
    const cvec residual = oracle::random_cvec(cfg.fft_size, rng);
    const double theta = rng.uniform() * 2.0 - 1.0;
    const double eps = 0.3 * (rng.uniform() - 0.5);

    const cvec my_fast = engine.inverse(compound_means(mx, H), TransformTag::aux);
    cvec DXH(cfg.fft_size);
    for (std::size_t i = 0; i < cfg.fft_size; ++i) DXH[i] = mx[i] * H[i];
    const cvec my_dense = dense.inverse(DXH);

    const StageBlock fast{&residual, &my_fast, theta};
    const StageBlock slow{&residual, &my_dense, theta};
    const double qa =
        compensation_objective(std::span<const StageBlock>(&fast, 1), eps, cfg.fft_size);
    const double qb =
        compensation_objective(std::span<const StageBlock>(&slow, 1), eps, cfg.fft_size);
    CHECK(qa == doctest::Approx(qb).epsilon(1e-9));
  }
}

TEST_CASE("cancellation removes every other user's component") {
  const Scene s(2, 48, {0.2, -0.2}, 0.0, 23);
  // Perfect per-user components: cancellation leaves exactly one user.
  std::vector<std::vector<cvec>> comps;
  for (unsigned u = 0; u < 2; ++u)
    comps.push_back(synthesize_user(s.frames[u], s.truth[u], s.cfg, s.engine));
  SUBCASE("single user passes through") {
    const auto out = sage_cancellation(s.r, {comps[0]}, 0);
    for (std::size_t m = 0; m < out.size(); ++m) CHECK(max_abs_diff(out[m], s.r[m]) == 0.0);
  }
  SUBCASE("two users split exactly") {
    const auto out = sage_cancellation(s.r, comps, 0);
    for (std::size_t m = 0; m < out.size(); ++m) CHECK(max_abs_diff(out[m], comps[0][m]) < 1e-12);
  }
  SUBCASE("components plus residual reconstruct the observation") {
    const auto out = sage_cancellation(s.r, comps, 1);
    for (std::size_t m = 0; m < out.size(); ++m)
      for (std::size_t i = 0; i < s.cfg.fft_size; ++i)
        CHECK(std::abs(out[m][i] + comps[0][m][i] - s.r[m][i]) < 1e-12);
  }
}

TEST_CASE("component reconstruction") {
  const Scene s(1, 48, {0.1}, 0.0, 25);
  const PerfectState ps(s, s.r);
  ParamEstimate est;
  est.cfo = s.truth[0].cfo;
  est.block_phases = s.truth[0].block_phases;
  est.h = s.truth[0].composite(s.cfg.fft_size);
  est.H = channel_response(est.h, s.cfg.fft_size);

  SUBCASE("zero channel gives a zero component") {
    ParamEstimate dead = est;
    dead.H.assign(s.cfg.fft_size, 0.0);
    const auto out = reconstruct_component(dead, ps.grid, s.cfg, s.engine);
    for (const cvec& blk : out) CHECK(squared_norm(blk) == 0.0);
  }
  SUBCASE("perfect parameters and symbols reproduce the noiseless observation") {
    const auto out = reconstruct_component(est, ps.grid, s.cfg, s.engine);
    for (std::size_t m = 0; m < out.size(); ++m) CHECK(max_abs_diff(out[m], s.r[m]) < 1e-10);
  }
  SUBCASE("zero-confidence data leaves only pilot and training energy") {
    const dvec zero_llrs(s.cfg.coded_length(), 0.0);
    const auto blind = symbol_mean_grid(zero_llrs, s.cfg, 0);
    const auto out = reconstruct_component(est, blind, s.cfg, s.engine);
    // Training rows still active.
    CHECK(squared_norm(out[0]) > 1.0);
    // Data rows carry only the two pilot tones.
    const std::size_t m = s.cfg.num_preamble_blocks();
    const cvec R =
        s.engine.forward(cfo_phasor(-est.cfo, s.cfg.fft_size).apply(out[m]), TransformTag::aux);
    double data_energy = 0.0, pilot_energy = 0.0;
    for (std::size_t b : s.cfg.data_bins) data_energy += std::norm(R[b]);
    for (std::size_t b : s.cfg.pilot_bins[0]) pilot_energy += std::norm(R[b]);
    CHECK(pilot_energy > 0.5);
    CHECK(data_energy < 1e-6 * pilot_energy);
  }
}

TEST_CASE("single-user run without offset reduces to iterative decoding") {
  const double noise_var = NoiseModel::from_snr_db(10.0, 1.0 / 3.0).variance;
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    const Scene s(1, 96, {0.0}, noise_var, seed, 1);
    ReceiverConfig rc;
    rc.sage_iterations = 2;
    rc.ecm_iterations = 3;
    const ReceiverResult res = run_sage_ecm(s.r, s.cfg, s.codes, rc, &s.truth);
    CHECK(res.users[0].bits == s.payloads[0]);
  }
}

TEST_CASE("noiseless single-user estimates are exact at the stationary point") {
  const Scene s(1, 96, {0.2}, 0.0, 37);
  ReceiverConfig rc;
  rc.sage_iterations = 2;
  rc.ecm_iterations = 4;
  const ReceiverResult res = run_sage_ecm(s.r, s.cfg, s.codes, rc, &s.truth);
  CHECK(res.users[0].bits == s.payloads[0]);
  CHECK(std::abs(res.users[0].params.cfo - 0.2) < 1e-8);
  const cvec h_true = s.truth[0].composite(s.cfg.fft_size);
  CHECK(max_abs_diff(res.users[0].params.h, h_true) < 1e-8);
  for (std::size_t m = s.cfg.num_preamble_blocks(); m < s.cfg.num_blocks(); ++m)
    CHECK(std::abs(wrap_phase(res.users[0].params.block_phases[m] -
                              s.truth[0].block_phases[m])) < 1e-8);
}

TEST_CASE("noiseless two-user runs decode exactly and contract toward the truth") {
  const Scene s(2, 96, {0.2, -0.2}, 0.0, 37);
  ReceiverConfig rc;
  rc.ecm_iterations = 4;
  dvec cfo_err_by_k;
  for (int k : {2, 8}) {
    rc.sage_iterations = k;
    for (ReceiverKind kind : {ReceiverKind::sage_ecm_sum_product, ReceiverKind::sage_min_sum,
                              ReceiverKind::one_shot_ic, ReceiverKind::full_csi_ic}) {
      ReceiverConfig cfg_k = rc;
      cfg_k.kind = kind;
      const ReceiverResult res = run_receiver(s.r, s.cfg, s.codes, cfg_k, &s.truth);
      for (unsigned u = 0; u < 2; ++u) CHECK(res.users[u].bits == s.payloads[u]);
      if (kind == ReceiverKind::sage_ecm_sum_product) {
        double worst = 0.0;
        for (unsigned u = 0; u < 2; ++u)
          worst = std::max(worst, std::abs(res.users[u].params.cfo - s.truth[u].cfo));
        cfo_err_by_k.push_back(worst);
      }
    }
  }
  // The per-user cycles keep cancelling each other's reconstruction error,
  // so the offset error shrinks geometrically with the outer iterations.
  CHECK(cfo_err_by_k[1] < 0.2 * cfo_err_by_k[0]);
  CHECK(cfo_err_by_k[1] < 1e-4);
}

TEST_CASE("hard-feedback receiver agrees with the soft one at certainty") {
  const Scene s(2, 48, {0.2, -0.2}, 0.0, 41);
  ReceiverConfig rc;
  rc.sage_iterations = 2;
  rc.ecm_iterations = 2;
  const ReceiverResult soft = run_sage_ecm(s.r, s.cfg, s.codes, rc, &s.truth);
  const ReceiverResult hard = run_sage_minsum(s.r, s.cfg, s.codes, rc, &s.truth);
  for (unsigned u = 0; u < 2; ++u) CHECK(soft.users[u].bits == hard.users[u].bits);
}

TEST_CASE("receivers are deterministic") {
  const double noise_var = NoiseModel::from_snr_db(10.0, 1.0 / 6.0).variance;
  const Scene s(2, 48, {0.2, -0.2}, noise_var, 43);
  ReceiverConfig rc;
  rc.sage_iterations = 2;
  rc.ecm_iterations = 3;
  const ReceiverResult a = run_sage_ecm(s.r, s.cfg, s.codes, rc, &s.truth);
  const ReceiverResult b = run_sage_ecm(s.r, s.cfg, s.codes, rc, &s.truth);
  for (unsigned u = 0; u < 2; ++u) {
    CHECK(a.users[u].bits == b.users[u].bits);
    CHECK(a.users[u].params.cfo == b.users[u].params.cfo);
  }
}

TEST_CASE("one-shot decode with no cancellation rounds matches the joint receiver's start") {
  const double noise_var = NoiseModel::from_snr_db(12.0, 1.0 / 6.0).variance;
  const Scene s(2, 48, {0.2, -0.2}, noise_var, 47);
  ReceiverConfig ic;
  ic.sage_iterations = 0;  // plain one-shot decode
  const ReceiverResult oneshot = run_ic_receiver(s.r, s.cfg, s.codes, ic, CsiMode::one_shot);
  ReceiverConfig joint;
  joint.sage_iterations = 1;
  joint.ecm_iterations = 1;
  const ReceiverResult sage = run_sage_ecm(s.r, s.cfg, s.codes, joint, &s.truth);
  // The first user is decoded from identical cancellations, evidence and
  // parameters in both receivers.
  CHECK(sage.users[0].initial_bits == oneshot.users[0].initial_bits);
  CHECK(oneshot.users[0].initial_bits == oneshot.users[0].bits);
}

TEST_CASE("hard symbol grids stay on the alphabet") {
  const double noise_var = NoiseModel::from_snr_db(6.0, 1.0 / 6.0).variance;
  const Scene s(2, 48, {0.2, -0.2}, noise_var, 53);
  ReceiverConfig rc;
  rc.sage_iterations = 1;
  rc.ecm_iterations = 2;
  const ReceiverResult res = run_sage_minsum(s.r, s.cfg, s.codes, rc, &s.truth);
  // Re-encode the decisions: every data cell of the implied grid is +-1.
  for (unsigned u = 0; u < 2; ++u) {
    const bitvec coded = idma_encode(res.users[u].bits, s.codes[u]);
    const auto grid = hard_symbol_grid(coded, s.cfg, u);
    for (std::size_t m = s.cfg.num_preamble_blocks(); m < s.cfg.num_blocks(); ++m)
      for (std::size_t b : s.cfg.data_bins) CHECK(std::abs(std::abs(grid[m][b]) - 1.0) == 0.0);
  }
}

TEST_CASE("transform counts match the cost model exactly") {
  struct Combo {
    std::size_t users;
    int k, z;
    std::size_t payload;  // chosen so the frame has 4 data blocks
  };
  const std::vector<Combo> combos = {{2, 1, 1, 32}, {2, 2, 3, 32}, {1, 3, 2, 64}};
  for (const Combo& c : combos) {
    const Scene s(c.users, c.payload,
                  c.users == 1 ? std::vector<double>{0.2} : std::vector<double>{0.2, -0.2}, 0.01,
                  57 + c.users);
    REQUIRE(s.cfg.num_data_blocks() == 4);
    ReceiverConfig rc;
    rc.sage_iterations = c.k;
    rc.ecm_iterations = c.z;

    for (ReceiverKind kind : {ReceiverKind::sage_ecm_sum_product, ReceiverKind::sage_min_sum}) {
      rc.kind = kind;
      const ReceiverResult res = run_receiver(s.r, s.cfg, s.codes, rc, &s.truth);
      const TransformAudit audit = audit_transforms(res, kind, s.cfg, rc);
      CHECK(audit.expected ==
            2 * c.users + 2 * static_cast<std::uint64_t>(c.k) * c.z * c.users * 4);
      CHECK(audit.observed == audit.expected);
    }
    rc.kind = ReceiverKind::one_shot_ic;
    const ReceiverResult ic = run_receiver(s.r, s.cfg, s.codes, rc, &s.truth);
    const TransformAudit audit = audit_transforms(ic, ReceiverKind::one_shot_ic, s.cfg, rc);
    CHECK(audit.expected == 2 * c.users + 2 * static_cast<std::uint64_t>(c.k) * c.users * 4);
    CHECK(audit.observed == audit.expected);
  }
}

TEST_CASE("one composed refinement pass reproduces the receiver bit for bit") {
  // Drives the public pieces by hand in the documented order (own training
  // blocks first in the stage lists, data blocks ascending) and compares
  // against run_receiver with one outer and one inner iteration.
  const double noise_var = NoiseModel::from_snr_db(14.0, 1.0 / 6.0).variance;
  const Scene s(2, 48, {0.2, -0.2}, noise_var, 61);
  ReceiverConfig rc;
  rc.sage_iterations = 1;
  rc.ecm_iterations = 1;
  const ReceiverResult want = run_sage_ecm(s.r, s.cfg, s.codes, rc, &s.truth);

  const ReceiverOperators ops(s.cfg);
  const FftEngine engine(s.cfg.fft_size);
  const cvec training = training_block(s.cfg);
  const std::size_t n = s.cfg.fft_size;

  struct User {
    ParamEstimate est;
    double anchor = 0.0;
    std::vector<cvec> component;
    std::vector<dvec> grid;
    std::vector<cvec> my;
    bitvec bits;
  };
  std::vector<User> users(2);
  std::vector<std::size_t> data_blocks;
  for (std::size_t m = s.cfg.num_preamble_blocks(); m < s.cfg.num_blocks(); ++m)
    data_blocks.push_back(m);

  for (unsigned u = 0; u < 2; ++u) {
    User& st = users[u];
    st.est.cfo = preamble_cfo_estimate(s.r[2 * u], s.r[2 * u + 1], s.cfg);
    const cvec pre[2] = {s.r[2 * u], s.r[2 * u + 1]};
    const ChannelEstimate ce =
        preamble_channel_estimate(std::span<const cvec>(pre, 2), 2 * u + 1, st.est.cfo, training,
                                  s.cfg, ops.preamble_fit(), engine);
    st.est.taps = ce.taps;
    st.est.h = ce.h;
    st.est.H = ce.H;
    st.anchor = st.est.cfo;
    st.est.block_phases.resize(s.cfg.num_blocks());
    for (std::size_t m = 0; m < s.cfg.num_blocks(); ++m)
      st.est.block_phases[m] = cfo_block_phase(st.est.cfo, m + 1, s.cfg);
    // Known-symbol component.
    const CfoOperator gamma = cfo_phasor(st.est.cfo, n);
    const cvec pre_base = ops.training_op().apply(st.est.taps);
    const cvec pil_base = ops.pilot_op(u).apply(st.est.taps);
    st.component.assign(s.cfg.num_blocks(), cvec(n, 0.0));
    for (std::size_t m = 0; m < s.cfg.num_blocks(); ++m) {
      const BlockKind kind = block_kind(s.cfg, u, m);
      if (kind == BlockKind::other_preamble) continue;
      const cvec& base = kind == BlockKind::own_preamble ? pre_base : pil_base;
      const cplx rot = std::polar(1.0, st.est.block_phases[m]);
      for (std::size_t i = 0; i < n; ++i) st.component[m][i] = rot * gamma.diag[i] * base[i];
    }
  }

  for (unsigned u = 0; u < 2; ++u) {
    User& st = users[u];
    std::vector<std::vector<cvec>> comps = {users[0].component, users[1].component};
    const std::vector<cvec> residual = sage_cancellation(s.r, comps, u);
    // Evidence pass.
    const CfoOperator comp_op = cfo_phasor(-st.est.cfo, n);
    std::vector<cvec> V;
    for (std::size_t m : data_blocks) V.push_back(engine.forward(comp_op.apply(residual[m])));
    const double sigma2 =
        estimate_sigma_in(std::span<const cvec>(V.data(), V.size()), st.est.H, s.cfg);
    const dvec theta_init =
        anchored_phase_init(std::span<const cvec>(V.data(), V.size()), st.est.H, st.est.cfo,
                            sigma2, s.cfg, s.cfg.pilot_bins[u]);
    for (std::size_t d = 0; d < data_blocks.size(); ++d)
      st.est.block_phases[data_blocks[d]] = theta_init[d];
    dvec channel_llrs(s.cfg.coded_length(), 0.0);
    for (std::size_t d = 0; d < data_blocks.size(); ++d) {
      const std::size_t m = data_blocks[d];
      const dvec llrs =
          evidence_llrs(V[d], st.est.block_phases[m], st.est.H, sigma2, s.cfg.data_bins);
      for (std::size_t pos = 0; pos < s.cfg.data_bins.size(); ++pos) {
        const std::size_t l = coded_index(s.cfg, m, pos);
        if (l != kFillerCell) channel_llrs[l] = clamp_llr(llrs[pos]);
      }
    }
    const SumProductResult dec = sum_product_decode(channel_llrs, s.codes[u]);
    st.bits.resize(dec.info_llrs.size());
    for (std::size_t j = 0; j < dec.info_llrs.size(); ++j)
      st.bits[j] = dec.info_llrs[j] < 0.0 ? 1 : 0;
    st.grid = symbol_mean_grid(dec.symbol_llrs, s.cfg, u);
    // Time-domain means.
    st.my.assign(s.cfg.num_blocks(), cvec());
    for (std::size_t m : data_blocks)
      st.my[m] = engine.inverse(compound_means(st.grid[m], st.est.H));
    const cvec pre_base = ops.training_op().apply(st.est.taps);
    st.my[2 * u] = pre_base;
    st.my[2 * u + 1] = pre_base;
    // Stage list: own training blocks first, then data blocks.
    auto make_blocks = [&]() {
      std::vector<StageBlock> blocks;
      for (std::size_t m : {std::size_t(2 * u), std::size_t(2 * u + 1)})
        blocks.push_back({&residual[m], &st.my[m], st.est.block_phases[m]});
      for (std::size_t m : data_blocks)
        blocks.push_back({&residual[m], &st.my[m], st.est.block_phases[m]});
      return blocks;
    };
    st.est.cfo = ecm_cfo_update(make_blocks(), st.est.cfo, n, rc.newton_clamp,
                                st.anchor - rc.cfo_trust_radius,
                                st.anchor + rc.cfo_trust_radius)
                     .eps;
    const CfoOperator gamma_new = cfo_phasor(st.est.cfo, n);
    for (std::size_t m : data_blocks)
      st.est.block_phases[m] =
          ecm_phase_update(residual[m], st.my[m], gamma_new, st.est.block_phases[m]);
    for (std::size_t m : {std::size_t(2 * u), std::size_t(2 * u + 1)})
      st.est.block_phases[m] =
          ecm_phase_update(residual[m], st.my[m], gamma_new, st.est.block_phases[m]);
    std::vector<double> thetas;
    std::vector<dvec> grids;
    for (std::size_t m : data_blocks) {
      thetas.push_back(st.est.block_phases[m]);
      grids.push_back(st.grid[m]);
    }
    const ChannelUpdateResult ch =
        ecm_channel_update(V, thetas, grids, st.est.H, ops.user_fit(u), rc.inversion_threshold);
    st.est.taps = ch.estimate.taps;
    st.est.h = ch.estimate.h;
    st.est.H = ch.estimate.H;
    // Component refresh for the next user's cancellation.
    const cvec pre_base2 = ops.training_op().apply(st.est.taps);
    for (std::size_t m = 0; m < s.cfg.num_blocks(); ++m) {
      const BlockKind kind = block_kind(s.cfg, u, m);
      if (kind == BlockKind::other_preamble) {
        st.component[m].assign(n, 0.0);
        continue;
      }
      const cvec& base = kind == BlockKind::own_preamble ? pre_base2 : st.my[m];
      const cplx rot = std::polar(1.0, st.est.block_phases[m]);
      st.component[m].resize(n);
      for (std::size_t i = 0; i < n; ++i)
        st.component[m][i] = rot * cfo_phasor(st.est.cfo, n).diag[i] * base[i];
    }
  }

  for (unsigned u = 0; u < 2; ++u) {
    CHECK(users[u].bits == want.users[u].bits);
    CHECK(users[u].est.cfo == want.users[u].params.cfo);
    CHECK(max_abs_diff(users[u].est.h, want.users[u].params.h) == 0.0);
    for (std::size_t m = 0; m < s.cfg.num_blocks(); ++m)
      CHECK(users[u].est.block_phases[m] == want.users[u].params.block_phases[m]);
  }
}
