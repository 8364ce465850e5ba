#pragma once

#include <cstdint>
#include <vector>

#include "oim/common.hpp"

namespace oim {

/// Per-coded-symbol a posteriori belief, stored as a log-likelihood ratio
/// with the convention llr = log p(+1)/p(-1) (BPSK maps bit 0 -> +1).
struct SymbolBelief {
  double llr = 0.0;
};

/// Rate-1/3 repeat-accumulate code, serially concatenated with a
/// rate-1/repetition repetition code and a user-specific interleaver.
/// Interleaver semantics: out[i] = in[perm[i]].
struct CodeConfig {
  std::size_t info_bits = 0;   // J
  std::size_t repetition = 1;  // copies per accumulator output bit
  std::vector<std::uint32_t> ra_interleaver;    // permutation over 3J
  std::vector<std::uint32_t> user_interleaver;  // permutation over 3J*repetition
  int decoder_iterations = 20;

  std::size_t ra_length() const { return 3 * info_bits; }
  std::size_t coded_length() const { return 3 * info_bits * repetition; }
  double rate() const { return 1.0 / (3.0 * static_cast<double>(repetition)); }

  /// Seeded construction: both interleavers drawn by Fisher-Yates from
  /// seeds derived as hash(global_seed, user_index, role).
  static CodeConfig make(std::size_t info_bits, std::size_t repetition, std::uint64_t global_seed,
                         unsigned user_index, int decoder_iterations = 20);

  /// Identity interleavers (toy/oracle setups).
  static CodeConfig make_identity(std::size_t info_bits, std::size_t repetition,
                                  int decoder_iterations = 20);

  void validate() const;
};

std::vector<std::uint32_t> random_permutation(std::size_t n, std::uint64_t seed);

template <typename T>
std::vector<T> interleave(const std::vector<T>& x, const std::vector<std::uint32_t>& perm) {
  if (x.size() != perm.size()) throw std::invalid_argument("interleave: length mismatch");
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[perm[i]];
  return out;
}

template <typename T>
std::vector<T> deinterleave(const std::vector<T>& y, const std::vector<std::uint32_t>& perm) {
  if (y.size() != perm.size()) throw std::invalid_argument("deinterleave: length mismatch");
  std::vector<T> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[perm[i]] = y[i];
  return out;
}

/// repeat-by-3, inner interleave, accumulate (running XOR). Output length 3J.
bitvec ra_encode(const bitvec& bits, const CodeConfig& config);

/// ra_encode, then each bit repeated `repetition` times, then the user
/// interleaver. Output length 3J*repetition, transmitted order.
bitvec idma_encode(const bitvec& bits, const CodeConfig& config);

struct SumProductResult {
  dvec info_llrs;    // posterior, length J
  dvec symbol_llrs;  // posterior per transmitted coded bit, length 3J*repetition
  int iterations_run = 0;
};

/// Sum-product decoding on the repeat-accumulate graph: the accumulator is
/// swept exactly (consecutive replicas of one info bit are merged into one
/// trellis section), repetition ties are resolved by iterative extrinsic
/// exchange. Channel LLRs are indexed in transmitted order.
SumProductResult sum_product_decode(const dvec& channel_llrs, const CodeConfig& config);

struct MinSumResult {
  bitvec info_bits;    // length J
  bitvec codeword;     // re-encoded info decisions (always a valid codeword)
  bitvec symbol_bits;  // per-symbol max-marginal decisions, transmitted order
  int iterations_run = 0;
};

/// Same graph under the max-product semiring; hard decisions only.
/// Metric ties are broken toward the zero bit. On cycle-free toy graphs the
/// re-encoded and per-symbol decisions coincide with the ML codeword; on the
/// production graph the per-symbol decisions keep residual errors local
/// (re-encoding would smear one wrong info bit over the accumulator tail).
MinSumResult min_sum_decode(const dvec& channel_llrs, const CodeConfig& config);

}  // namespace oim
