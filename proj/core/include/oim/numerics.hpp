#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oim/common.hpp"

namespace oim {

/// Dense N x N transform with entry
///   F[a][b] = exp(-j*2*pi * a * (b - (N-1)/2) / N) / sqrt(N)   (0-indexed)
/// i.e. the time index is referenced to the centre of the block. The matrix
/// is unitary for every N. This is the reference implementation used in
/// correctness tests and diagnostics; the hot path lives in FftEngine.
class DftOperator {
 public:
  explicit DftOperator(std::size_t n);

  std::size_t size() const { return n_; }
  cplx entry(std::size_t row, std::size_t col) const { return mat_[row * n_ + col]; }

  cvec forward(const cvec& x) const;  // F x
  cvec inverse(const cvec& X) const;  // F^H X

 private:
  std::size_t n_;
  cvec mat_;
};

enum class TransformTag { core, aux };

struct TransformCounts {
  std::uint64_t core = 0;
  std::uint64_t aux = 0;
  std::uint64_t total() const { return core + aux; }
};

/// Radix-2 FFT realisation of the same centred transform. The centring is a
/// per-bin phase ramp applied after (before) the plain FFT on the forward
/// (inverse) side. Each call increments a transform counter; callers tag
/// diagnostic-only transforms as aux so receiver cost audits can separate
/// them from the algorithmic ones.
class FftEngine {
 public:
  explicit FftEngine(std::size_t n);  // n must be a power of two

  std::size_t size() const { return n_; }

  cvec forward(const cvec& x, TransformTag tag = TransformTag::core) const;
  cvec inverse(const cvec& X, TransformTag tag = TransformTag::core) const;

  const TransformCounts& counts() const { return counts_; }
  void reset_counts() { counts_ = {}; }

 private:
  void fft_inplace(cvec& a, bool invert) const;

  std::size_t n_;
  cvec centre_ramp_;       // exp(+j*2*pi*a*(N-1)/2 / N)
  cvec centre_ramp_conj_;
  std::vector<std::size_t> bitrev_;
  mutable TransformCounts counts_;
};

/// Diagonal phasor diag{exp(j*2*pi*eps*k/N)}, k = 0..N-1: the time-domain
/// footprint of a carrier frequency offset over one block.
struct CfoOperator {
  double eps = 0.0;
  cvec diag;

  std::size_t size() const { return diag.size(); }
  void apply(const cvec& in, cvec& out) const;
  cvec apply(const cvec& in) const;
};

CfoOperator cfo_phasor(double eps, std::size_t n);

/// First and second derivatives of the phasor with respect to eps:
///   d/deps   = (j*2*pi/N) * diag{k} * Gamma(eps)
///   d2/deps2 = -(2*pi/N)^2 * diag{k^2} * Gamma(eps)
/// Returned as diagonal entry vectors.
struct CfoDerivatives {
  cvec first;
  cvec second;
};

CfoDerivatives cfo_phasor_derivatives(double eps, std::size_t n);

/// Dense inter-carrier interference matrix F * Gamma(eps) * F^H.
/// Diagnostic only; the receivers never materialise it.
std::vector<cvec> ici_matrix(double eps, std::size_t n);

/// Per-subcarrier response of a short impulse response:
///   H[a] = sum_l taps[l] * exp(-j*2*pi*a*l/n),  a = 0..n-1.
/// This is the plain (unnormalised) spectrum, so a single unit tap at delay
/// zero gives the flat all-ones response and the block-domain channel model
/// reduces to an exact circular convolution.
cvec channel_response(const cvec& taps, std::size_t n);

/// Least-squares fit of a short impulse response to frequency-domain
/// observations on a fixed subset of bins:
///   taps = argmin_t sum_{b in bins} | H_obs[b] - channel_response(t)[b] |^2
/// with t supported on the first `num_taps` samples. The pseudo-inverse is
/// precomputed, so a fit is a single small matrix-vector product. Also
/// rebuilds the full-band response from the fitted taps.
class TapLeastSquares {
 public:
  TapLeastSquares(std::size_t n, std::vector<std::size_t> bins, std::size_t num_taps);

  const std::vector<std::size_t>& bins() const { return bins_; }
  std::size_t num_taps() const { return num_taps_; }

  /// Fit from observations indexed over the full band (only `bins` are read).
  cvec fit(const cvec& full_band_obs) const;

  /// Full-band response F * zero_pad(taps).
  cvec response(const cvec& taps) const;

  /// Zero-padded length-N impulse response.
  cvec zero_pad(const cvec& taps) const;

 private:
  std::size_t n_;
  std::size_t num_taps_;
  std::vector<std::size_t> bins_;
  cvec pinv_;   // num_taps x bins.size(), row-major
  cvec synth_;  // n x num_taps, row-major
};

/// Precomputed operator mapping channel taps to the time-domain block a
/// fixed, fully known symbol vector produces:
///   K = F^H diag(X_known) [channel_response basis columns].
/// Lets receivers rebuild pilot/training blocks without spending transforms.
class KnownBlockOperator {
 public:
  KnownBlockOperator(const DftOperator& dft, const cvec& known_symbols, std::size_t num_taps);

  cvec apply(const cvec& taps) const;  // length-N time-domain mean

  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::size_t num_taps_;
  cvec mat_;  // n x num_taps, row-major
};

/// Solve G x = b for hermitian positive definite G (in-place Cholesky).
/// Small systems only (channel tap fits).
cvec solve_hermitian_psd(std::vector<cvec> g, cvec b);

}  // namespace oim
