#include "oim/softidft.hpp"

namespace oim {

namespace {

template <typename Fill>
std::vector<dvec> build_grid(const FrameConfig& cfg, unsigned user, Fill fill_data_cell) {
  const cvec training = training_block(cfg);
  std::vector<dvec> grid(cfg.num_blocks(), dvec(cfg.fft_size, 0.0));
  for (std::size_t m = 0; m < cfg.num_blocks(); ++m) {
    dvec& row = grid[m];
    switch (block_kind(cfg, user, m)) {
      case BlockKind::own_preamble:
        for (std::size_t i = 0; i < cfg.fft_size; ++i) row[i] = training[i].real();
        break;
      case BlockKind::other_preamble:
        break;
      case BlockKind::data:
        for (std::size_t pos = 0; pos < cfg.data_bins.size(); ++pos) {
          const std::size_t l = coded_index(cfg, m, pos);
          row[cfg.data_bins[pos]] = (l == kFillerCell) ? 1.0 : fill_data_cell(l);
        }
        for (std::size_t b : cfg.pilot_bins[user]) row[b] = 1.0;
        break;
    }
  }
  return grid;
}

}  // namespace

std::vector<dvec> symbol_mean_grid(const dvec& symbol_llrs, const FrameConfig& cfg,
                                   unsigned user) {
  if (symbol_llrs.size() != cfg.coded_length())
    throw std::invalid_argument("symbol_mean_grid: llr length mismatch");
  return build_grid(cfg, user,
                    [&](std::size_t l) { return bpsk_posterior_mean(symbol_llrs[l]); });
}

std::vector<dvec> hard_symbol_grid(const bitvec& codeword, const FrameConfig& cfg, unsigned user) {
  if (codeword.size() != cfg.coded_length())
    throw std::invalid_argument("hard_symbol_grid: codeword length mismatch");
  return build_grid(cfg, user, [&](std::size_t l) { return 1.0 - 2.0 * codeword[l]; });
}

std::vector<dvec> hard_grid_from_llrs(const dvec& symbol_llrs, const FrameConfig& cfg,
                                      unsigned user) {
  if (symbol_llrs.size() != cfg.coded_length())
    throw std::invalid_argument("hard_grid_from_llrs: llr length mismatch");
  return build_grid(cfg, user, [&](std::size_t l) { return symbol_llrs[l] >= 0.0 ? 1.0 : -1.0; });
}

cvec compound_means(const dvec& mean_x, const cvec& H) {
  if (mean_x.size() != H.size()) throw std::invalid_argument("compound_means: size mismatch");
  cvec out(H.size());
  for (std::size_t i = 0; i < H.size(); ++i) out[i] = mean_x[i] * H[i];
  return out;
}

cvec soft_idft_mean(const cvec& mean_y, const FftEngine& engine, TransformTag tag) {
  return engine.inverse(mean_y, tag);
}

dvec soft_idft_variance(const dvec& var_y) {
  double total = 0.0;
  for (double v : var_y) {
    if (v < 0.0) throw std::invalid_argument("soft_idft_variance: negative variance");
    total += v;
  }
  const double avg = var_y.empty() ? 0.0 : total / static_cast<double>(var_y.size());
  return dvec(var_y.size(), avg);
}

}  // namespace oim
