#pragma once

#include <span>

#include "oim/framing.hpp"
#include "oim/numerics.hpp"

namespace oim {

/// One user's channel-parameter estimate set carried through the iterative
/// receivers: CFO, per-block phases, and the composite impulse response in
/// tap and full-band form.
struct ParamEstimate {
  double cfo = 0.0;
  dvec block_phases;  // per block, unwrapped
  cvec taps;          // cp_len taps
  cvec h;             // zero-padded to fft_size
  cvec H;             // full-band response
};

/// Floors used by the estimators.
inline constexpr double kCorrelationFloor = 1e-9;
inline constexpr double kGainFloor = 1e-12;
inline constexpr double kSigmaRelativeFloor = 1e-6;

/// Delay-correlation CFO estimate from the two identical training blocks.
/// Acquisition range |eps| < N / (2 N_s).
double preamble_cfo_estimate(const cvec& block_a, const cvec& block_b, const FrameConfig& cfg);

struct ChannelEstimate {
  cvec taps;
  cvec h;
  cvec H;
};

/// Channel estimate from the user's training blocks: compensate the CFO and
/// its deterministic per-block drift, transform (counted against the
/// engine), divide by the known training symbols and fit cp_len taps by
/// least squares over the occupied subcarriers. Passing both preamble
/// blocks averages them coherently.
ChannelEstimate preamble_channel_estimate(std::span<const cvec> blocks,
                                          std::size_t first_block_1based, double eps_hat,
                                          const cvec& training, const FrameConfig& cfg,
                                          const TapLeastSquares& fitter, const FftEngine& engine);

/// Phase of block m read off its pilot subcarriers (pilot symbols are 1).
double pilot_phase_estimate(const cvec& R_m, const cvec& H,
                            const std::vector<std::size_t>& pilot_bins);

/// Phase bootstrap for all data blocks of a frame. Each block's pilot
/// readout (normalised to unit noise using sigma2) is blended with the
/// deterministic CFO-drift prediction, anchored by a global offset
/// estimated from every pilot jointly, so a faded pilot pair cannot
/// scramble isolated blocks before the first decode. Returns one phase per
/// data block (ascending block order).
dvec anchored_phase_init(std::span<const cvec> V_data_blocks, const cvec& H, double eps_hat,
                         double sigma2, const FrameConfig& cfg,
                         const std::vector<std::size_t>& pilot_bins);

/// BPSK evidence on the listed bins: 4 Re(e^{-j theta} conj(H_i) R_i) / sigma2.
dvec evidence_llrs(const cvec& R_m, double theta, const cvec& H, double sigma2,
                   const std::vector<std::size_t>& bins);

/// Residual interference-plus-noise variance over the data subcarriers of
/// the given frequency-domain data blocks, clamped below at
/// kSigmaRelativeFloor times the mean data-subcarrier channel energy.
double estimate_sigma_in(std::span<const cvec> R_data_blocks, const cvec& H,
                         const FrameConfig& cfg);

}  // namespace oim
