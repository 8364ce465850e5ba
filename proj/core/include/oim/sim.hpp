#pragma once

#include <iosfwd>
#include <string>

#include "oim/receivers.hpp"

namespace oim {

/// Everything one experiment needs: frame geometry, channel statistics,
/// the sweep grids, receiver settings and run plumbing.
struct ExperimentConfig {
  // frame
  std::size_t num_users = 2;
  std::size_t payload_bits = 240;
  std::size_t repetition = 0;  // 0 selects num_users
  std::size_t fft_size = 64;
  std::size_t cp_len = 16;
  // channel
  std::size_t channel_taps = 4;
  std::size_t max_timing_offset = 9;
  double phase_noise_std = 0.0;
  double power_imbalance_db = 0.0;
  std::vector<double> fixed_cfos;  // per-user; overrides the rho draw when set
  // sweep
  std::vector<double> snr_db_grid = {4, 8, 12, 16, 20};
  std::vector<double> rho_grid = {0.2};
  std::size_t frames_per_point = 200;
  // receivers
  std::vector<ReceiverKind> receivers = {
      ReceiverKind::full_csi_ic, ReceiverKind::one_shot_ic, ReceiverKind::sage_min_sum,
      ReceiverKind::sage_ecm_sum_product};
  int sage_iterations = 10;
  int ecm_iterations = 20;
  int decoder_iterations = 20;
  // run
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  std::string output_path;
  bool diagnostics = false;
  bool timings_in_csv = false;

  FrameConfig frame_config() const;
  ReceiverConfig receiver_config(ReceiverKind kind) const;
  void validate() const;
};

/// Restores the full-size operating point (long payload, full frame count,
/// full iteration counts) for overnight runs.
void apply_paper_scale(ExperimentConfig& cfg);

struct MetricsRow {
  std::string receiver;
  std::size_t num_users = 0;
  double snr_db = 0.0;
  double rho = 0.0;
  std::size_t frames = 0;
  double ber = 0.0;
  double fer = 0.0;
  double mse_cfo = 0.0;
  double mse_channel = 0.0;
  double mse_phase = 0.0;
  std::uint64_t core_transforms = 0;  // per frame, identical across frames
  double wall_time_s = 0.0;           // per grid point, all receivers
};

/// Per-frame scores kept alongside the aggregate rows when requested
/// (paired statistical checks need them).
struct TrialRecord {
  std::size_t point = 0;
  std::size_t frame = 0;
  std::string receiver;
  double ber = 0.0;
  double fer = 0.0;
  double mse_cfo = 0.0;
  double mse_channel = 0.0;
  double mse_phase = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<TrialRecord> trials;  // empty unless keep_trials was set
};

struct FrameScore {
  std::size_t bit_errors = 0;
  std::size_t bits = 0;
  std::size_t frame_errors = 0;  // users with at least one payload bit error
  double mse_cfo = 0.0;
  double mse_channel = 0.0;
  double mse_phase = 0.0;  // over data blocks, wrapped difference

  double ber() const { return bits == 0 ? 0.0 : static_cast<double>(bit_errors) / bits; }
};

/// Scores one receiver output against the transmitted payloads and true
/// impairments. Phase errors are compared on the circle.
FrameScore score_frame(const std::vector<bitvec>& payloads,
                       const std::vector<UserImpairments>& truth, const ReceiverResult& out,
                       const FrameConfig& cfg);

/// Runs the full sweep. Deterministic for a fixed (config, seed) regardless
/// of worker count. `log` receives one progress line per grid point.
MetricsTable run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                            bool keep_trials = false);

/// UTF-8 CSV with a header row. Timing columns are opt-in so that equal
/// seeds produce byte-identical files.
void write_csv(const MetricsTable& table, std::ostream& os, bool include_timings);

struct TransformAudit {
  std::uint64_t expected = 0;
  std::uint64_t observed = 0;
  bool pass() const { return expected == observed; }
};

/// Compares a receiver run's counted core transforms against the cost
/// model. Diagnostic-tagged transforms are excluded by construction.
TransformAudit audit_transforms(const ReceiverResult& result, ReceiverKind kind,
                                const FrameConfig& cfg, const ReceiverConfig& rc);

/// 95% Wilson score interval for an error count.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
Interval wilson_interval(std::size_t errors, std::size_t trials);

/// Writes the diagnostics trace of one receiver run as delimited text.
void write_trace(const std::vector<IterationTrace>& trace, std::ostream& os);

}  // namespace oim
