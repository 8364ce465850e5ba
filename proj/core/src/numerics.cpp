#include "oim/numerics.hpp"

#include <cmath>

namespace oim {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

DftOperator::DftOperator(std::size_t n) : n_(n), mat_(n * n) {
  if (n == 0) throw std::invalid_argument("DftOperator: size must be positive");
  const double shift = (static_cast<double>(n) - 1.0) / 2.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double phase = -kTwoPi * static_cast<double>(a) *
                           (static_cast<double>(b) - shift) / static_cast<double>(n);
      mat_[a * n + b] = std::polar(scale, phase);
    }
  }
}

cvec DftOperator::forward(const cvec& x) const {
  if (x.size() != n_) throw std::invalid_argument("DftOperator::forward: size mismatch");
  cvec out(n_);
  for (std::size_t a = 0; a < n_; ++a) {
    cplx acc = 0.0;
    const cplx* row = &mat_[a * n_];
    for (std::size_t b = 0; b < n_; ++b) acc += row[b] * x[b];
    out[a] = acc;
  }
  return out;
}

cvec DftOperator::inverse(const cvec& X) const {
  if (X.size() != n_) throw std::invalid_argument("DftOperator::inverse: size mismatch");
  cvec out(n_);
  for (std::size_t b = 0; b < n_; ++b) {
    cplx acc = 0.0;
    for (std::size_t a = 0; a < n_; ++a) acc += std::conj(mat_[a * n_ + b]) * X[a];
    out[b] = acc;
  }
  return out;
}

FftEngine::FftEngine(std::size_t n) : n_(n) {
  if (!is_power_of_two(n)) throw std::invalid_argument("FftEngine: size must be a power of two");
  const double shift = (static_cast<double>(n) - 1.0) / 2.0;
  centre_ramp_.resize(n);
  centre_ramp_conj_.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double phase = kTwoPi * static_cast<double>(a) * shift / static_cast<double>(n);
    centre_ramp_[a] = std::polar(1.0, phase);
    centre_ramp_conj_[a] = std::conj(centre_ramp_[a]);
  }
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void FftEngine::fft_inplace(cvec& a, bool invert) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (invert ? kTwoPi : -kTwoPi) / static_cast<double>(len);
    const cplx wlen = std::polar(1.0, ang);
    for (std::size_t i = 0; i < n; i += len) {
      cplx w = 1.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

cvec FftEngine::forward(const cvec& x, TransformTag tag) const {
  if (x.size() != n_) throw std::invalid_argument("FftEngine::forward: size mismatch");
  cvec a = x;
  fft_inplace(a, false);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
  for (std::size_t i = 0; i < n_; ++i) a[i] *= centre_ramp_[i] * scale;
  (tag == TransformTag::core ? counts_.core : counts_.aux) += 1;
  return a;
}

cvec FftEngine::inverse(const cvec& X, TransformTag tag) const {
  if (X.size() != n_) throw std::invalid_argument("FftEngine::inverse: size mismatch");
  cvec a(n_);
  for (std::size_t i = 0; i < n_; ++i) a[i] = X[i] * centre_ramp_conj_[i];
  fft_inplace(a, true);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
  for (std::size_t i = 0; i < n_; ++i) a[i] *= scale;
  (tag == TransformTag::core ? counts_.core : counts_.aux) += 1;
  return a;
}

void CfoOperator::apply(const cvec& in, cvec& out) const {
  out.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = diag[i] * in[i];
}

cvec CfoOperator::apply(const cvec& in) const {
  cvec out;
  apply(in, out);
  return out;
}

CfoOperator cfo_phasor(double eps, std::size_t n) {
  if (!std::isfinite(eps)) throw std::invalid_argument("cfo_phasor: eps must be finite");
  CfoOperator op;
  op.eps = eps;
  op.diag.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    op.diag[k] = std::polar(1.0, kTwoPi * eps * static_cast<double>(k) / static_cast<double>(n));
  return op;
}

CfoDerivatives cfo_phasor_derivatives(double eps, std::size_t n) {
  const CfoOperator gamma = cfo_phasor(eps, n);
  CfoDerivatives d;
  d.first.resize(n);
  d.second.resize(n);
  const double w = kTwoPi / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double kk = static_cast<double>(k);
    d.first[k] = cplx(0.0, w * kk) * gamma.diag[k];
    d.second[k] = -(w * kk) * (w * kk) * gamma.diag[k];
  }
  return d;
}

std::vector<cvec> ici_matrix(double eps, std::size_t n) {
  const DftOperator dft(n);
  const CfoOperator gamma = cfo_phasor(eps, n);
  // Column k of Xi is F * (gamma .* (F^H e_k)).
  std::vector<cvec> xi(n, cvec(n));
  cvec ek(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    ek.assign(n, 0.0);
    ek[k] = 1.0;
    cvec t = dft.inverse(ek);
    for (std::size_t i = 0; i < n; ++i) t[i] *= gamma.diag[i];
    const cvec col = dft.forward(t);
    for (std::size_t r = 0; r < n; ++r) xi[r][k] = col[r];
  }
  return xi;
}

cvec channel_response(const cvec& taps, std::size_t n) {
  cvec H(n);
  for (std::size_t a = 0; a < n; ++a) {
    cplx acc = 0.0;
    for (std::size_t l = 0; l < taps.size(); ++l)
      acc += taps[l] * std::polar(1.0, -kTwoPi * static_cast<double>(a) *
                                           static_cast<double>(l) / static_cast<double>(n));
    H[a] = acc;
  }
  return H;
}

cvec solve_hermitian_psd(std::vector<cvec> g, cvec b) {
  const std::size_t t = b.size();
  // In-place Cholesky G = L L^H.
  for (std::size_t j = 0; j < t; ++j) {
    double diag = g[j][j].real();
    for (std::size_t k = 0; k < j; ++k) diag -= std::norm(g[j][k]);
    if (diag <= 0.0) throw std::invalid_argument("solve_hermitian_psd: matrix not PD");
    const double ljj = std::sqrt(diag);
    g[j][j] = ljj;
    for (std::size_t i = j + 1; i < t; ++i) {
      cplx v = g[i][j];
      for (std::size_t k = 0; k < j; ++k) v -= g[i][k] * std::conj(g[j][k]);
      g[i][j] = v / ljj;
    }
  }
  // Forward substitution L y = b.
  for (std::size_t i = 0; i < t; ++i) {
    cplx v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= g[i][k] * b[k];
    b[i] = v / g[i][i].real();
  }
  // Back substitution L^H x = y.
  for (std::size_t ii = t; ii-- > 0;) {
    cplx v = b[ii];
    for (std::size_t k = ii + 1; k < t; ++k) v -= std::conj(g[k][ii]) * b[k];
    b[ii] = v / g[ii][ii].real();
  }
  return b;
}

namespace {

inline cplx response_basis(std::size_t bin, std::size_t tap, std::size_t n) {
  return std::polar(1.0, -kTwoPi * static_cast<double>(bin) * static_cast<double>(tap) /
                             static_cast<double>(n));
}

}  // namespace

TapLeastSquares::TapLeastSquares(std::size_t n, std::vector<std::size_t> bins,
                                 std::size_t num_taps)
    : n_(n), num_taps_(num_taps), bins_(std::move(bins)) {
  if (bins_.size() < num_taps_)
    throw std::invalid_argument("TapLeastSquares: underdetermined fit");
  const std::size_t m = bins_.size();
  // A is m x T with A[r][t] = channel_response basis at (bins[r], t).
  cvec a(m * num_taps_);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t t = 0; t < num_taps_; ++t)
      a[r * num_taps_ + t] = response_basis(bins_[r], t, n_);
  // Normal matrix G = A^H A.
  std::vector<cvec> g(num_taps_, cvec(num_taps_));
  for (std::size_t i = 0; i < num_taps_; ++i)
    for (std::size_t j = 0; j < num_taps_; ++j) {
      cplx acc = 0.0;
      for (std::size_t r = 0; r < m; ++r)
        acc += std::conj(a[r * num_taps_ + i]) * a[r * num_taps_ + j];
      g[i][j] = acc;
    }
  // pinv = G^-1 A^H, built column by column.
  pinv_.resize(num_taps_ * m);
  cvec col(num_taps_);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t t = 0; t < num_taps_; ++t) col[t] = std::conj(a[r * num_taps_ + t]);
    const cvec x = solve_hermitian_psd(g, col);
    for (std::size_t t = 0; t < num_taps_; ++t) pinv_[t * m + r] = x[t];
  }
  synth_.resize(n_ * num_taps_);
  for (std::size_t row = 0; row < n_; ++row)
    for (std::size_t t = 0; t < num_taps_; ++t)
      synth_[row * num_taps_ + t] = response_basis(row, t, n_);
}

cvec TapLeastSquares::fit(const cvec& full_band_obs) const {
  if (full_band_obs.size() != n_)
    throw std::invalid_argument("TapLeastSquares::fit: size mismatch");
  const std::size_t m = bins_.size();
  cvec taps(num_taps_);
  for (std::size_t t = 0; t < num_taps_; ++t) {
    cplx acc = 0.0;
    const cplx* row = &pinv_[t * m];
    for (std::size_t r = 0; r < m; ++r) acc += row[r] * full_band_obs[bins_[r]];
    taps[t] = acc;
  }
  return taps;
}

cvec TapLeastSquares::response(const cvec& taps) const {
  cvec out(n_);
  for (std::size_t row = 0; row < n_; ++row) {
    cplx acc = 0.0;
    const cplx* r = &synth_[row * num_taps_];
    for (std::size_t t = 0; t < num_taps_; ++t) acc += r[t] * taps[t];
    out[row] = acc;
  }
  return out;
}

cvec TapLeastSquares::zero_pad(const cvec& taps) const {
  cvec h(n_, 0.0);
  for (std::size_t t = 0; t < taps.size() && t < n_; ++t) h[t] = taps[t];
  return h;
}

KnownBlockOperator::KnownBlockOperator(const DftOperator& dft, const cvec& known_symbols,
                                       std::size_t num_taps)
    : n_(dft.size()), num_taps_(num_taps), mat_(n_ * num_taps) {
  if (known_symbols.size() != n_)
    throw std::invalid_argument("KnownBlockOperator: symbol vector size mismatch");
  // Column t = F^H ( X .* channel_response basis column t ).
  cvec col(n_);
  for (std::size_t t = 0; t < num_taps_; ++t) {
    for (std::size_t row = 0; row < n_; ++row)
      col[row] = known_symbols[row] * response_basis(row, t, n_);
    const cvec time = dft.inverse(col);
    for (std::size_t row = 0; row < n_; ++row) mat_[row * num_taps_ + t] = time[row];
  }
}

cvec KnownBlockOperator::apply(const cvec& taps) const {
  cvec out(n_);
  for (std::size_t row = 0; row < n_; ++row) {
    cplx acc = 0.0;
    const cplx* r = &mat_[row * num_taps_];
    for (std::size_t t = 0; t < num_taps_ && t < taps.size(); ++t) acc += r[t] * taps[t];
    out[row] = acc;
  }
  return out;
}

}  // namespace oim
