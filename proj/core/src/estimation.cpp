#include "oim/estimation.hpp"

#include <cmath>

namespace oim {

double preamble_cfo_estimate(const cvec& block_a, const cvec& block_b, const FrameConfig& cfg) {
  if (block_a.size() != cfg.fft_size || block_b.size() != cfg.fft_size)
    throw std::invalid_argument("preamble_cfo_estimate: block size mismatch");
  cplx corr = 0.0;
  for (std::size_t i = 0; i < cfg.fft_size; ++i) corr += std::conj(block_a[i]) * block_b[i];
  if (std::abs(corr) < kCorrelationFloor)
    throw EstimationError("preamble_cfo_estimate: vanishing block correlation");
  const double n = static_cast<double>(cfg.fft_size);
  const double ns = static_cast<double>(cfg.samples_per_block());
  return n / (kTwoPi * ns) * std::arg(corr);
}

ChannelEstimate preamble_channel_estimate(std::span<const cvec> blocks,
                                          std::size_t first_block_1based, double eps_hat,
                                          const cvec& training, const FrameConfig& cfg,
                                          const TapLeastSquares& fitter, const FftEngine& engine) {
  if (blocks.empty()) throw std::invalid_argument("preamble_channel_estimate: no blocks");
  for (std::size_t b : fitter.bins())
    if (std::abs(training[b]) < kGainFloor)
      throw std::invalid_argument("preamble_channel_estimate: training symbol is zero on a fitted bin");

  const CfoOperator comp = cfo_phasor(-eps_hat, cfg.fft_size);
  cvec avg(cfg.fft_size, 0.0);
  cvec work(cfg.fft_size);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    comp.apply(blocks[b], work);
    cvec V = engine.forward(work);
    // Remove the deterministic drift so both blocks average coherently and
    // the estimate is phase-referenced consistently with the pilot phases.
    const cplx rot = std::polar(1.0, -cfo_block_phase(eps_hat, first_block_1based + b, cfg));
    for (std::size_t i = 0; i < cfg.fft_size; ++i) avg[i] += rot * V[i];
  }
  const double scale = 1.0 / static_cast<double>(blocks.size());
  cvec obs(cfg.fft_size, 0.0);
  for (std::size_t b : fitter.bins()) obs[b] = scale * avg[b] / training[b];

  ChannelEstimate est;
  est.taps = fitter.fit(obs);
  est.h = fitter.zero_pad(est.taps);
  est.H = fitter.response(est.taps);
  return est;
}

double pilot_phase_estimate(const cvec& R_m, const cvec& H,
                            const std::vector<std::size_t>& pilot_bins) {
  double gain = 0.0;
  cplx acc = 0.0;
  for (std::size_t b : pilot_bins) {
    gain = std::max(gain, std::abs(H[b]));
    acc += std::conj(H[b]) * R_m[b];
  }
  if (gain < kGainFloor)
    throw EstimationError("pilot_phase_estimate: all pilot channel gains vanish");
  return std::arg(acc);
}

namespace {

// Reliability assigned to the drift prediction, on the same scale as a
// noise-normalised pilot correlation: worth about a pilot pair at ~6 dB
// before the per-block decay. Dead pilots defer to the prediction, strong
// pilots override it.
constexpr double kPhaseAnchorWeight = 2.0;

}  // namespace

dvec anchored_phase_init(std::span<const cvec> V_data_blocks, const cvec& H, double eps_hat,
                         double sigma2, const FrameConfig& cfg,
                         const std::vector<std::size_t>& pilot_bins) {
  if (sigma2 <= 0.0) throw std::invalid_argument("anchored_phase_init: sigma2 must be positive");
  const std::size_t first = cfg.num_preamble_blocks();
  const double n = static_cast<double>(cfg.fft_size);
  const double ns = static_cast<double>(cfg.samples_per_block());

  std::vector<cplx> corr(V_data_blocks.size(), 0.0);
  double pilot_energy = 0.0;
  for (std::size_t b : pilot_bins) pilot_energy += std::norm(H[b]);
  // corr noise variance is pilot_energy * sigma2; scale to unit noise so
  // |corr| ~ sqrt(pilot snr) when aligned.
  const double scale = 1.0 / std::sqrt(std::max(pilot_energy * sigma2, 1e-300));

  // The prediction degrades with distance: an offset error d_eps in the
  // acquisition estimate ramps the predicted phase by drift_m * d_eps, with
  // var(d_eps) ~ (N/(2 pi N_s))^2 * sigma2 / E_block for the delay
  // correlator. Decay the anchor weight accordingly.
  double band_energy = 0.0;
  for (std::size_t b = 0; b < H.size(); ++b) band_energy += std::norm(H[b]);
  const double var_eps =
      (n / (kTwoPi * ns)) * (n / (kTwoPi * ns)) * sigma2 / std::max(band_energy, 1e-12);
  const auto anchor_weight = [&](std::size_t d) {
    const double drift = cfo_block_phase(1.0, first + d + 1, cfg);  // per unit offset
    return kPhaseAnchorWeight / std::sqrt(1.0 + drift * drift * var_eps);
  };

  // Global offset: rotate every block's pilot correlation back by the
  // predicted drift and average. Far blocks count less, since a residual
  // offset error fans their rotated correlations out.
  cplx anchor = 0.0;
  for (std::size_t d = 0; d < V_data_blocks.size(); ++d) {
    for (std::size_t b : pilot_bins) corr[d] += std::conj(H[b]) * V_data_blocks[d][b];
    anchor += anchor_weight(d) * corr[d] *
              std::polar(1.0, -cfo_block_phase(eps_hat, first + d + 1, cfg));
  }
  const double offset = std::abs(anchor) > kGainFloor ? std::arg(anchor) : 0.0;

  dvec theta(V_data_blocks.size());
  for (std::size_t d = 0; d < V_data_blocks.size(); ++d) {
    const double predicted = cfo_block_phase(eps_hat, first + d + 1, cfg) + offset;
    const cplx blended = scale * corr[d] + anchor_weight(d) * std::polar(1.0, predicted);
    theta[d] = std::abs(blended) > kGainFloor ? std::arg(blended) : predicted;
  }
  return theta;
}

dvec evidence_llrs(const cvec& R_m, double theta, const cvec& H, double sigma2,
                   const std::vector<std::size_t>& bins) {
  if (sigma2 <= 0.0) throw std::invalid_argument("evidence_llrs: sigma2 must be positive");
  const cplx derot = std::polar(1.0, -theta);
  dvec llrs(bins.size());
  for (std::size_t idx = 0; idx < bins.size(); ++idx) {
    const std::size_t b = bins[idx];
    llrs[idx] = 4.0 * std::real(derot * std::conj(H[b]) * R_m[b]) / sigma2;
  }
  return llrs;
}

double estimate_sigma_in(std::span<const cvec> R_data_blocks, const cvec& H,
                         const FrameConfig& cfg) {
  double acc = 0.0;
  double gain = 0.0;
  std::size_t count = 0;
  for (std::size_t b : cfg.data_bins) gain += std::norm(H[b]);
  gain /= static_cast<double>(cfg.data_bins.size());
  for (const cvec& R : R_data_blocks)
    for (std::size_t b : cfg.data_bins) {
      acc += std::norm(R[b]) - std::norm(H[b]);
      ++count;
    }
  const double raw = count > 0 ? acc / static_cast<double>(count) : 0.0;
  const double floor = std::max(kSigmaRelativeFloor * gain, 1e-12);
  return std::max(raw, floor);
}

}  // namespace oim
