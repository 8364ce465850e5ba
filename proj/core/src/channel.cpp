#include "oim/channel.hpp"

#include <cmath>

namespace oim {

cvec UserImpairments::composite(std::size_t n) const {
  if (timing_offset + taps.size() > n)
    throw std::invalid_argument("UserImpairments: composite response exceeds block size");
  cvec h(n, 0.0);
  for (std::size_t l = 0; l < taps.size(); ++l) h[timing_offset + l] = taps[l];
  return h;
}

NoiseModel NoiseModel::from_snr_db(double snr_db, double code_rate) {
  NoiseModel nm;
  nm.variance = (1.0 / code_rate) * std::pow(10.0, -snr_db / 10.0);
  return nm;
}

cvec draw_channel(std::size_t num_taps, Rng& rng) {
  if (num_taps == 0) throw std::invalid_argument("draw_channel: need at least one tap");
  const double length = static_cast<double>(num_taps);
  double total = 0.0;
  dvec profile(num_taps);
  for (std::size_t l = 0; l < num_taps; ++l) {
    profile[l] = std::exp(-static_cast<double>(l) / length);
    total += profile[l];
  }
  const double beta = 1.0 / total;
  cvec taps(num_taps);
  for (std::size_t l = 0; l < num_taps; ++l) taps[l] = rng.complex_gaussian(beta * profile[l]);
  return taps;
}

dvec phase_drift_schedule(double eps, const FrameConfig& cfg, double phase_noise_std, Rng* rng) {
  if (phase_noise_std < 0.0)
    throw std::invalid_argument("phase_drift_schedule: negative noise std");
  dvec theta(cfg.num_blocks());
  double walk = 0.0;
  for (std::size_t m = 0; m < theta.size(); ++m) {
    if (phase_noise_std > 0.0) {
      if (rng == nullptr)
        throw std::invalid_argument("phase_drift_schedule: rng required for phase noise");
      walk += phase_noise_std * rng->gaussian();
    }
    theta[m] = cfo_block_phase(eps, m + 1, cfg) + walk;
  }
  return theta;
}

std::vector<cvec> synthesize_user(const FrameSymbols& frame, const UserImpairments& imp,
                                  const FrameConfig& cfg, const FftEngine& engine) {
  if (imp.timing_offset + imp.taps.size() > cfg.cp_len)
    throw std::invalid_argument("synthesize_user: loose time synchronisation violated");
  if (frame.blocks.size() != cfg.num_blocks() || imp.block_phases.size() != cfg.num_blocks())
    throw std::invalid_argument("synthesize_user: block count mismatch");

  const cvec h = imp.composite(cfg.fft_size);
  const cvec H = channel_response(h, cfg.fft_size);
  const CfoOperator gamma = cfo_phasor(imp.cfo, cfg.fft_size);

  std::vector<cvec> out(cfg.num_blocks());
  cvec Y(cfg.fft_size);
  for (std::size_t m = 0; m < cfg.num_blocks(); ++m) {
    for (std::size_t i = 0; i < cfg.fft_size; ++i) Y[i] = frame.blocks[m][i] * H[i];
    cvec y = engine.inverse(Y, TransformTag::aux);
    const cplx rot = std::polar(1.0, imp.block_phases[m]);
    out[m].resize(cfg.fft_size);
    for (std::size_t i = 0; i < cfg.fft_size; ++i) out[m][i] = rot * gamma.diag[i] * y[i];
  }
  return out;
}

std::vector<cvec> synthesize_received(const std::vector<FrameSymbols>& frames,
                                      const std::vector<UserImpairments>& impairments,
                                      const NoiseModel& noise, const FrameConfig& cfg,
                                      Rng& noise_rng, const FftEngine& engine) {
  if (frames.size() != cfg.num_users || impairments.size() != cfg.num_users)
    throw std::invalid_argument("synthesize_received: user count mismatch");

  std::vector<cvec> r(cfg.num_blocks(), cvec(cfg.fft_size, 0.0));
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const std::vector<cvec> part =
        synthesize_user(frames[u], impairments[u], cfg, engine);
    for (std::size_t m = 0; m < r.size(); ++m)
      for (std::size_t i = 0; i < cfg.fft_size; ++i) r[m][i] += part[m][i];
  }
  if (noise.variance > 0.0) {
    for (cvec& block : r)
      for (cplx& x : block) x += noise_rng.complex_gaussian(noise.variance);
  }
  return r;
}

}  // namespace oim
