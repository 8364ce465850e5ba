#include "oim/sim.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace oim {

FrameConfig ExperimentConfig::frame_config() const {
  return FrameConfig::make(num_users, payload_bits, repetition, fft_size, cp_len);
}

ReceiverConfig ExperimentConfig::receiver_config(ReceiverKind kind) const {
  ReceiverConfig rc;
  rc.kind = kind;
  rc.sage_iterations = sage_iterations;
  rc.ecm_iterations = ecm_iterations;
  rc.decoder_iterations = decoder_iterations;
  rc.collect_diagnostics = diagnostics;
  return rc;
}

void ExperimentConfig::validate() const {
  if (frames_per_point == 0) throw std::invalid_argument("ExperimentConfig: frames must be >= 1");
  if (snr_db_grid.empty() || rho_grid.empty())
    throw std::invalid_argument("ExperimentConfig: sweep grids must be nonempty");
  if (receivers.empty()) throw std::invalid_argument("ExperimentConfig: no receivers selected");
  if (!fixed_cfos.empty() && fixed_cfos.size() != num_users)
    throw std::invalid_argument("ExperimentConfig: fixed_cfos needs one entry per user");
  frame_config().validate();
}

void apply_paper_scale(ExperimentConfig& cfg) {
  cfg.payload_bits = 2400;
  cfg.frames_per_point = 3000;
  cfg.sage_iterations = 10;
  cfg.ecm_iterations = 20;
  cfg.decoder_iterations = 20;
}

FrameScore score_frame(const std::vector<bitvec>& payloads,
                       const std::vector<UserImpairments>& truth, const ReceiverResult& out,
                       const FrameConfig& cfg) {
  if (payloads.size() != out.users.size() || truth.size() != out.users.size())
    throw std::invalid_argument("score_frame: user count mismatch");
  FrameScore score;
  const std::size_t first_data = cfg.num_preamble_blocks();
  for (std::size_t u = 0; u < out.users.size(); ++u) {
    if (payloads[u].size() != out.users[u].bits.size())
      throw std::invalid_argument("score_frame: payload length mismatch");
    std::size_t errs = 0;
    for (std::size_t j = 0; j < payloads[u].size(); ++j)
      errs += payloads[u][j] != out.users[u].bits[j];
    score.bit_errors += errs;
    score.bits += payloads[u].size();
    score.frame_errors += errs > 0;

    const ParamEstimate& est = out.users[u].params;
    const double de = est.cfo - truth[u].cfo;
    score.mse_cfo += de * de;
    const cvec h_true = truth[u].composite(cfg.fft_size);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < cfg.fft_size; ++i) {
      num += std::norm(est.h[i] - h_true[i]);
      den += std::norm(h_true[i]);
    }
    score.mse_channel += den > 0.0 ? num / den : 0.0;
    double acc = 0.0;
    for (std::size_t m = first_data; m < cfg.num_blocks(); ++m) {
      const double d = wrap_phase(est.block_phases[m] - truth[u].block_phases[m]);
      acc += d * d;
    }
    score.mse_phase += acc / static_cast<double>(cfg.num_data_blocks());
  }
  const double inv_u = 1.0 / static_cast<double>(out.users.size());
  score.mse_cfo *= inv_u;
  score.mse_channel *= inv_u;
  score.mse_phase *= inv_u;
  return score;
}

namespace {

struct TrialOutput {
  std::vector<FrameScore> per_receiver;
  std::vector<std::uint64_t> core_transforms;
  std::vector<IterationTrace> trace;
};

double user_gain(std::size_t u, std::size_t num_users, double imbalance_db) {
  if (num_users <= 1 || imbalance_db == 0.0) return 1.0;
  const double frac =
      static_cast<double>(u) / static_cast<double>(num_users - 1) - 0.5;  // [-0.5, 0.5]
  return std::sqrt(db_to_linear(imbalance_db * frac));
}

}  // namespace

MetricsTable run_experiment(const ExperimentConfig& cfg, std::ostream* log, bool keep_trials) {
  cfg.validate();
  const FrameConfig frame_cfg = cfg.frame_config();
  const ReceiverOperators ops(frame_cfg);

  std::vector<CodeConfig> codes;
  for (unsigned u = 0; u < cfg.num_users; ++u)
    codes.push_back(CodeConfig::make(cfg.payload_bits, frame_cfg.repetition, cfg.master_seed, u,
                                     cfg.decoder_iterations));

  std::vector<ReceiverConfig> rx_cfgs;
  for (ReceiverKind kind : cfg.receivers) rx_cfgs.push_back(cfg.receiver_config(kind));

  MetricsTable table;
  std::size_t point = 0;
  for (double rho : cfg.rho_grid) {
    for (double snr_db : cfg.snr_db_grid) {
      const auto t0 = std::chrono::steady_clock::now();
      const NoiseModel noise = NoiseModel::from_snr_db(snr_db, frame_cfg.code_rate());

      std::vector<TrialOutput> outputs(cfg.frames_per_point);
      std::atomic<std::size_t> next{0};
      auto work = [&]() {
        const FftEngine tx_engine(frame_cfg.fft_size);
        while (true) {
          const std::size_t t = next.fetch_add(1);
          if (t >= cfg.frames_per_point) break;

          Rng payload_rng(derive_seed(cfg.master_seed,
                                      {point, t, static_cast<std::uint64_t>(SeedRole::payload)}));
          Rng channel_rng(derive_seed(
              cfg.master_seed, {point, t, static_cast<std::uint64_t>(SeedRole::channel_taps)}));
          Rng cfo_rng(derive_seed(cfg.master_seed,
                                  {point, t, static_cast<std::uint64_t>(SeedRole::cfo_sign)}));
          Rng timing_rng(derive_seed(
              cfg.master_seed, {point, t, static_cast<std::uint64_t>(SeedRole::timing_offset)}));
          Rng noise_rng(derive_seed(cfg.master_seed,
                                    {point, t, static_cast<std::uint64_t>(SeedRole::noise)}));
          Rng phase_rng(derive_seed(cfg.master_seed,
                                    {point, t, static_cast<std::uint64_t>(SeedRole::phase_noise)}));

          std::vector<bitvec> payloads(cfg.num_users);
          std::vector<FrameSymbols> frames(cfg.num_users);
          std::vector<UserImpairments> truth(cfg.num_users);
          for (unsigned u = 0; u < cfg.num_users; ++u) {
            payloads[u].resize(cfg.payload_bits);
            for (auto& b : payloads[u]) b = payload_rng.bit() ? 1 : 0;
            frames[u] = build_frame(payloads[u], frame_cfg, codes[u], u);

            UserImpairments imp;
            imp.cfo = cfg.fixed_cfos.empty() ? (cfo_rng.bit() ? rho : -rho) : cfg.fixed_cfos[u];
            imp.taps = draw_channel(cfg.channel_taps, channel_rng);
            const double g = user_gain(u, cfg.num_users, cfg.power_imbalance_db);
            for (cplx& tap : imp.taps) tap *= g;
            imp.timing_offset =
                u == 0 ? 0 : static_cast<std::size_t>(timing_rng.uniform_int(0, cfg.max_timing_offset));
            imp.block_phases =
                phase_drift_schedule(imp.cfo, frame_cfg, cfg.phase_noise_std, &phase_rng);
            truth[u] = std::move(imp);
          }

          const std::vector<cvec> r =
              synthesize_received(frames, truth, noise, frame_cfg, noise_rng, tx_engine);

          TrialOutput& out = outputs[t];
          out.per_receiver.resize(rx_cfgs.size());
          out.core_transforms.resize(rx_cfgs.size());
          for (std::size_t ri = 0; ri < rx_cfgs.size(); ++ri) {
            const ReceiverResult res =
                run_receiver(r, frame_cfg, codes, rx_cfgs[ri], &truth, &ops);
            out.per_receiver[ri] = score_frame(payloads, truth, res, frame_cfg);
            out.core_transforms[ri] = res.transforms.core;
            if (cfg.diagnostics && t == 0)
              out.trace.insert(out.trace.end(), res.trace.begin(), res.trace.end());
          }
        }
      };

      const unsigned worker_count = std::max(1u, cfg.workers);
      if (worker_count == 1) {
        work();
      } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < worker_count; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
      }

      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      // Fixed-order reduction: trial index, then receiver.
      for (std::size_t ri = 0; ri < rx_cfgs.size(); ++ri) {
        MetricsRow row;
        row.receiver = receiver_name(rx_cfgs[ri].kind);
        row.num_users = cfg.num_users;
        row.snr_db = snr_db;
        row.rho = rho;
        row.frames = cfg.frames_per_point;
        std::size_t bit_errors = 0, bits = 0, frame_errors = 0, user_frames = 0;
        double mse_cfo = 0.0, mse_channel = 0.0, mse_phase = 0.0;
        for (std::size_t t = 0; t < cfg.frames_per_point; ++t) {
          const FrameScore& s = outputs[t].per_receiver[ri];
          bit_errors += s.bit_errors;
          bits += s.bits;
          frame_errors += s.frame_errors;
          user_frames += cfg.num_users;
          mse_cfo += s.mse_cfo;
          mse_channel += s.mse_channel;
          mse_phase += s.mse_phase;
          if (keep_trials) {
            table.trials.push_back({point, t, row.receiver, s.ber(),
                                    s.frame_errors > 0 ? 1.0 : 0.0, s.mse_cfo, s.mse_channel,
                                    s.mse_phase});
          }
        }
        row.ber = bits == 0 ? 0.0 : static_cast<double>(bit_errors) / static_cast<double>(bits);
        row.fer = user_frames == 0
                      ? 0.0
                      : static_cast<double>(frame_errors) / static_cast<double>(user_frames);
        row.mse_cfo = mse_cfo / static_cast<double>(cfg.frames_per_point);
        row.mse_channel = mse_channel / static_cast<double>(cfg.frames_per_point);
        row.mse_phase = mse_phase / static_cast<double>(cfg.frames_per_point);
        row.core_transforms = outputs.empty() ? 0 : outputs[0].core_transforms[ri];
        row.wall_time_s = wall;
        table.rows.push_back(std::move(row));
      }

      if (log != nullptr) {
        *log << "point rho=" << rho << " snr_db=" << snr_db << " frames=" << cfg.frames_per_point
             << " wall_s=" << std::fixed << std::setprecision(2) << wall << std::defaultfloat
             << '\n';
        for (std::size_t ri = 0; ri < rx_cfgs.size(); ++ri) {
          const MetricsRow& row = table.rows[table.rows.size() - rx_cfgs.size() + ri];
          *log << "  " << row.receiver << " ber=" << row.ber << " fer=" << row.fer
               << " mse_cfo=" << row.mse_cfo << '\n';
        }
        if (cfg.diagnostics && !outputs.empty() && !outputs[0].trace.empty())
          write_trace(outputs[0].trace, *log);
      }
      ++point;
    }
  }
  return table;
}

namespace {

void write_double(std::ostream& os, double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  os << ss.str();
}

}  // namespace

void write_csv(const MetricsTable& table, std::ostream& os, bool include_timings) {
  os << "receiver,users,snr_db,rho,frames,ber,fer,mse_cfo,mse_channel,mse_phase,core_transforms";
  if (include_timings) os << ",wall_time_s";
  os << '\n';
  for (const MetricsRow& row : table.rows) {
    os << row.receiver << ',' << row.num_users << ',';
    write_double(os, row.snr_db);
    os << ',';
    write_double(os, row.rho);
    os << ',' << row.frames << ',';
    write_double(os, row.ber);
    os << ',';
    write_double(os, row.fer);
    os << ',';
    write_double(os, row.mse_cfo);
    os << ',';
    write_double(os, row.mse_channel);
    os << ',';
    write_double(os, row.mse_phase);
    os << ',' << row.core_transforms;
    if (include_timings) {
      os << ',';
      write_double(os, row.wall_time_s);
    }
    os << '\n';
  }
}

TransformAudit audit_transforms(const ReceiverResult& result, ReceiverKind kind,
                                const FrameConfig& cfg, const ReceiverConfig& rc) {
  TransformAudit audit;
  audit.expected = expected_core_transforms(kind, cfg.num_users, rc.sage_iterations,
                                            rc.ecm_iterations, cfg.num_data_blocks());
  audit.observed = result.transforms.core;
  return audit;
}

Interval wilson_interval(std::size_t errors, std::size_t trials) {
  Interval iv;
  if (trials == 0) return iv;
  const double z = 1.959963984540054;  // 97.5th percentile of the standard normal
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = p + z2 / (2.0 * n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  iv.lo = std::max(0.0, (centre - half) / denom);
  iv.hi = std::min(1.0, (centre + half) / denom);
  return iv;
}

void write_trace(const std::vector<IterationTrace>& trace, std::ostream& os) {
  os << "k\tz\tuser\tq\teps_hat\tcfo_step\tstalled\trejected\tbins_kept\tcfo_sq_err\t"
        "channel_rel_err\tphase_sq_err\n";
  for (const IterationTrace& t : trace) {
    os << t.sage_iter << '\t' << t.ecm_iter << '\t' << t.user << '\t' << t.q_value << '\t'
       << t.eps_hat << '\t' << t.cfo_raw_step << '\t' << t.cfo_stalled << '\t' << t.cfo_rejected
       << '\t' << t.channel_bins_kept << '\t' << t.cfo_sq_err << '\t' << t.channel_rel_err << '\t'
       << t.phase_sq_err << '\n';
  }
}

}  // namespace oim
