#pragma once

#include "oim/framing.hpp"
#include "oim/numerics.hpp"

namespace oim {

/// Gaussian summary of a complex quantity (used by the soft transform APIs).
struct GaussianBelief {
  cplx mean{};
  double variance = 0.0;
};

/// BPSK posterior mean from an LLR with convention log p(+1)/p(-1).
inline double bpsk_posterior_mean(double llr) { return std::tanh(0.5 * llr); }

/// BPSK posterior variance of the compound symbol H*X.
inline double compound_variance(double gain_sq, double mean_x) {
  return gain_sq * (1.0 - mean_x * mean_x);
}

/// Per-block symbol means for one user across the whole frame: decoded data
/// cells carry tanh(llr/2), own pilots and fillers carry 1, the training
/// rows carry the known sequence, everything else 0.
std::vector<dvec> symbol_mean_grid(const dvec& symbol_llrs, const FrameConfig& cfg, unsigned user);

/// Hard-symbol grid from a decoded codeword (same known-cell conventions).
std::vector<dvec> hard_symbol_grid(const bitvec& codeword, const FrameConfig& cfg, unsigned user);

/// Hard-symbol grid from per-symbol posterior signs (ties toward +1).
std::vector<dvec> hard_grid_from_llrs(const dvec& symbol_llrs, const FrameConfig& cfg,
                                      unsigned user);

/// Compound frequency-domain means m_Y = m_X .* H.
cvec compound_means(const dvec& mean_x, const cvec& H);

/// Time-domain mean of the compound samples: exact linear image of the
/// frequency-domain means (the Gaussian approximation only touches
/// variances, so the mean path is exact for independent symbol beliefs).
cvec soft_idft_mean(const cvec& mean_y, const FftEngine& engine,
                    TransformTag tag = TransformTag::core);

/// Time-domain variances of a diagonal frequency-domain covariance: the
/// unitary transform spreads each variance uniformly, so every output
/// equals the input average. Diagnostic only; the receiver objectives use
/// means.
dvec soft_idft_variance(const dvec& var_y);

}  // namespace oim
