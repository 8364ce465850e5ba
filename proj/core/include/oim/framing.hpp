#pragma once

#include <vector>

#include "oim/common.hpp"
#include "oim/fec.hpp"
#include "oim/numerics.hpp"

namespace oim {

/// Static frame geometry shared by every user: subcarrier layout, preamble
/// arrangement and block counts. Subcarriers are referred to either by
/// baseband index k in [-N/2, N/2) or by array index a in [0, N) with
/// a = k mod N.
struct FrameConfig {
  std::size_t num_users = 1;   // U
  std::size_t fft_size = 64;   // N
  std::size_t cp_len = 16;     // N_cp
  std::size_t payload_bits = 0;  // J per user
  std::size_t repetition = 1;    // code repetition factor (usually U)

  std::vector<std::size_t> data_bins;                // array indices, ascending baseband order
  std::vector<std::vector<std::size_t>> pilot_bins;  // two array indices per user

  std::size_t samples_per_block() const { return cp_len + fft_size; }  // N_s
  std::size_t num_preamble_blocks() const { return 2 * num_users; }
  std::size_t data_symbols_per_block() const { return data_bins.size(); }  // N_d
  std::size_t coded_length() const { return 3 * payload_bits * repetition; }
  std::size_t num_data_blocks() const {  // M'
    const std::size_t nd = data_symbols_per_block();
    return (coded_length() + nd - 1) / nd;
  }
  std::size_t num_blocks() const { return num_preamble_blocks() + num_data_blocks(); }  // M
  double code_rate() const { return 1.0 / (3.0 * static_cast<double>(repetition)); }

  /// Standard layout: 48 data subcarriers on |k| <= 26, pilots on the
  /// symmetric pairs (+-21), (+-7), then (+-27), (+-28), ... one pair per
  /// user; DC and the outer band stay silent. repetition = 0 selects U.
  static FrameConfig make(std::size_t num_users, std::size_t payload_bits,
                          std::size_t repetition = 0, std::size_t fft_size = 64,
                          std::size_t cp_len = 16);

  void validate() const;
};

inline std::size_t bin_from_baseband(int k, std::size_t n) {
  return static_cast<std::size_t>((k + static_cast<int>(n)) % static_cast<int>(n));
}
inline int baseband_from_bin(std::size_t a, std::size_t n) {
  const int half = static_cast<int>(n) / 2;
  const int v = static_cast<int>(a);
  return v < half ? v : v - static_cast<int>(n);
}

enum class BlockKind { own_preamble, other_preamble, data };

BlockKind block_kind(const FrameConfig& cfg, unsigned user, std::size_t block);

enum class CellKind { data, pilot_own, pilot_other, guard };

/// Classification of a (data block, subcarrier) cell from one user's
/// perspective. Every cell falls in exactly one class.
CellKind cell_kind(const FrameConfig& cfg, unsigned user, std::size_t bin);

/// Index of the coded symbol carried on `bin` of data block `block`
/// (row-major: block by block, ascending baseband order), or npos when the
/// cell is a known +1 filler behind the end of the codeword.
std::size_t coded_index(const FrameConfig& cfg, std::size_t block, std::size_t bin_position);
inline constexpr std::size_t kFillerCell = static_cast<std::size_t>(-1);

/// Frequency-domain symbol grid of one user's frame.
struct FrameSymbols {
  std::vector<cvec> blocks;  // M rows of N symbols
};

/// The long training sequence on the 52 used subcarriers, zero elsewhere.
cvec training_block(const FrameConfig& cfg);

/// Encode, map and frame one user's payload.
FrameSymbols build_frame(const bitvec& payload, const FrameConfig& cfg, const CodeConfig& code,
                         unsigned user);

/// OFDM-modulate a frame: per block, inverse transform plus cyclic prefix.
/// Output blocks have cp_len + fft_size samples.
std::vector<cvec> ofdm_modulate(const FrameSymbols& frame, const FrameConfig& cfg,
                                const FftEngine& engine);

/// Deterministic phase accumulated by a CFO at the head of block m (1-based):
/// 2*pi*eps*(N_cp + m*N_s)/N.
double cfo_block_phase(double eps, std::size_t block_1based, const FrameConfig& cfg);

}  // namespace oim
