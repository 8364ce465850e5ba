#include "oim/framing.hpp"

#include <algorithm>
#include <array>

namespace oim {

namespace {

// 802.11a long training symbol on k = -26..26 (DC included as 0).
constexpr std::array<int, 53> kLongTraining = {
    1, 1, -1, -1, 1,  1,  -1, 1, -1, 1,  1, 1,  1,  1, 1, -1, -1, 1,
    1, -1, 1, -1, 1,  1,  1,  1, 0,  1,  -1, -1, 1,  1, -1, 1,  -1, 1,
    -1, -1, -1, -1, -1, 1,  1,  -1, -1, 1, -1, 1,  -1, 1, 1,  1,  1};

std::vector<std::pair<int, int>> pilot_pairs(std::size_t num_users) {
  static const std::vector<std::pair<int, int>> kPairs = {
      {-21, 21}, {-7, 7}, {-27, 27}, {-28, 28}, {-29, 29}, {-30, 30}};
  if (num_users > kPairs.size())
    throw std::invalid_argument("FrameConfig: too many users for the pilot layout");
  return {kPairs.begin(), kPairs.begin() + static_cast<long>(num_users)};
}

}  // namespace

FrameConfig FrameConfig::make(std::size_t num_users, std::size_t payload_bits,
                              std::size_t repetition, std::size_t fft_size, std::size_t cp_len) {
  FrameConfig cfg;
  cfg.num_users = num_users;
  cfg.fft_size = fft_size;
  cfg.cp_len = cp_len;
  cfg.payload_bits = payload_bits;
  cfg.repetition = repetition == 0 ? num_users : repetition;

  const auto pairs = pilot_pairs(num_users);
  cfg.pilot_bins.resize(num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    cfg.pilot_bins[u] = {bin_from_baseband(pairs[u].first, fft_size),
                         bin_from_baseband(pairs[u].second, fft_size)};
  }
  // 48 data subcarriers: |k| <= 26, excluding DC and the first two pilot
  // pairs (their slots stay silent even when fewer users are active).
  for (int k = -26; k <= 26; ++k) {
    if (k == 0 || k == -21 || k == 21 || k == -7 || k == 7) continue;
    cfg.data_bins.push_back(bin_from_baseband(k, fft_size));
  }
  cfg.validate();
  return cfg;
}

void FrameConfig::validate() const {
  if (num_users == 0) throw std::invalid_argument("FrameConfig: need at least one user");
  if (payload_bits == 0) throw std::invalid_argument("FrameConfig: payload_bits must be positive");
  if (fft_size == 0 || cp_len == 0 || cp_len > fft_size)
    throw std::invalid_argument("FrameConfig: bad block geometry");
  for (std::size_t u = 0; u < pilot_bins.size(); ++u)
    for (std::size_t b : pilot_bins[u]) {
      if (std::find(data_bins.begin(), data_bins.end(), b) != data_bins.end())
        throw std::invalid_argument("FrameConfig: pilot overlaps data subcarrier");
      for (std::size_t v = 0; v < pilot_bins.size(); ++v)
        if (v != u)
          for (std::size_t c : pilot_bins[v])
            if (b == c) throw std::invalid_argument("FrameConfig: pilot sets overlap");
    }
}

BlockKind block_kind(const FrameConfig& cfg, unsigned user, std::size_t block) {
  if (block >= cfg.num_preamble_blocks()) return BlockKind::data;
  return (block / 2 == user) ? BlockKind::own_preamble : BlockKind::other_preamble;
}

CellKind cell_kind(const FrameConfig& cfg, unsigned user, std::size_t bin) {
  const auto& own = cfg.pilot_bins[user];
  if (std::find(own.begin(), own.end(), bin) != own.end()) return CellKind::pilot_own;
  for (std::size_t v = 0; v < cfg.pilot_bins.size(); ++v) {
    if (v == user) continue;
    const auto& p = cfg.pilot_bins[v];
    if (std::find(p.begin(), p.end(), bin) != p.end()) return CellKind::pilot_other;
  }
  if (std::find(cfg.data_bins.begin(), cfg.data_bins.end(), bin) != cfg.data_bins.end())
    return CellKind::data;
  return CellKind::guard;
}

std::size_t coded_index(const FrameConfig& cfg, std::size_t block, std::size_t bin_position) {
  const std::size_t l =
      (block - cfg.num_preamble_blocks()) * cfg.data_symbols_per_block() + bin_position;
  return l < cfg.coded_length() ? l : kFillerCell;
}

cvec training_block(const FrameConfig& cfg) {
  cvec t(cfg.fft_size, 0.0);
  for (int k = -26; k <= 26; ++k)
    t[bin_from_baseband(k, cfg.fft_size)] = static_cast<double>(kLongTraining[k + 26]);
  return t;
}

FrameSymbols build_frame(const bitvec& payload, const FrameConfig& cfg, const CodeConfig& code,
                         unsigned user) {
  if (payload.size() != cfg.payload_bits)
    throw std::invalid_argument("build_frame: payload length mismatch");
  if (code.info_bits != cfg.payload_bits || code.repetition != cfg.repetition)
    throw std::invalid_argument("build_frame: code/frame configuration mismatch");
  if (user >= cfg.num_users) throw std::invalid_argument("build_frame: user index out of range");

  const bitvec coded = idma_encode(payload, code);
  const cvec training = training_block(cfg);

  FrameSymbols frame;
  frame.blocks.assign(cfg.num_blocks(), cvec(cfg.fft_size, 0.0));
  // Two identical training blocks in the user's own preamble slots; the
  // remaining preamble blocks stay silent for this user.
  frame.blocks[2 * user] = training;
  frame.blocks[2 * user + 1] = training;

  for (std::size_t m = cfg.num_preamble_blocks(); m < cfg.num_blocks(); ++m) {
    cvec& row = frame.blocks[m];
    for (std::size_t pos = 0; pos < cfg.data_bins.size(); ++pos) {
      const std::size_t l = coded_index(cfg, m, pos);
      const double bit = (l == kFillerCell) ? 0.0 : static_cast<double>(coded[l]);
      row[cfg.data_bins[pos]] = 1.0 - 2.0 * bit;  // bit 0 -> +1, filler -> +1
    }
    for (std::size_t b : cfg.pilot_bins[user]) row[b] = 1.0;
  }
  return frame;
}

std::vector<cvec> ofdm_modulate(const FrameSymbols& frame, const FrameConfig& cfg,
                                const FftEngine& engine) {
  std::vector<cvec> out;
  out.reserve(frame.blocks.size());
  for (const cvec& X : frame.blocks) {
    const cvec body = engine.inverse(X, TransformTag::aux);
    cvec with_cp(cfg.samples_per_block());
    for (std::size_t i = 0; i < cfg.cp_len; ++i)
      with_cp[i] = body[cfg.fft_size - cfg.cp_len + i];
    std::copy(body.begin(), body.end(), with_cp.begin() + static_cast<long>(cfg.cp_len));
    out.push_back(std::move(with_cp));
  }
  return out;
}

double cfo_block_phase(double eps, std::size_t block_1based, const FrameConfig& cfg) {
  return kTwoPi * eps *
         (static_cast<double>(cfg.cp_len) +
          static_cast<double>(block_1based) * static_cast<double>(cfg.samples_per_block())) /
         static_cast<double>(cfg.fft_size);
}

}  // namespace oim
