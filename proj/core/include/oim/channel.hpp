#pragma once

#include <vector>

#include "oim/framing.hpp"
#include "oim/rng.hpp"

namespace oim {

/// Ground-truth impairments of one user: CFO, per-block phase drifts,
/// multipath taps and the integer arrival offset folded into the composite
/// response.
struct UserImpairments {
  double cfo = 0.0;
  dvec block_phases;               // one entry per OFDM block
  cvec taps;                       // short impulse response, unit average energy
  std::size_t timing_offset = 0;   // whole samples, user 1 defines zero

  /// Length-n composite response [0^mu, taps, 0 ...].
  cvec composite(std::size_t n) const;
};

struct NoiseModel {
  double variance = 0.0;  // complex noise variance per sample

  /// Eb/N0 in dB to per-sample variance, with unit-energy data symbols:
  /// variance = (1/rate) * 10^(-snr/10). Pilot, preamble and CP energy do
  /// not enter the per-bit energy accounting.
  static NoiseModel from_snr_db(double snr_db, double code_rate);
};

/// Independent complex Gaussian taps with an exponentially decaying power
/// profile, normalised to unit total average energy.
cvec draw_channel(std::size_t num_taps, Rng& rng);

/// Deterministic CFO-driven drift per block, plus an optional Gaussian
/// random walk. Phases are stored unwrapped.
dvec phase_drift_schedule(double eps, const FrameConfig& cfg, double phase_noise_std,
                          Rng* rng = nullptr);

/// Noise-free received blocks of a single user (block model, CP removed).
std::vector<cvec> synthesize_user(const FrameSymbols& frame, const UserImpairments& imp,
                                  const FrameConfig& cfg, const FftEngine& engine);

/// Superposition of all users plus AWGN. Throws if any user violates the
/// loose time synchronisation requirement mu + taps <= cp_len.
std::vector<cvec> synthesize_received(const std::vector<FrameSymbols>& frames,
                                      const std::vector<UserImpairments>& impairments,
                                      const NoiseModel& noise, const FrameConfig& cfg,
                                      Rng& noise_rng, const FftEngine& engine);

}  // namespace oim
