#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace oim {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;
using dvec = std::vector<double>;
using bitvec = std::vector<std::uint8_t>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Thrown by estimators when the input carries no usable signal
/// (vanishing correlation, all-zero channel gains, ...).
class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

/// Wrap an angle to (-pi, pi].
inline double wrap_phase(double theta) {
  double w = std::remainder(theta, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  return w;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

inline double clamp_llr(double llr, double limit = 50.0) {
  if (llr > limit) return limit;
  if (llr < -limit) return -limit;
  return llr;
}

inline double squared_norm(const cvec& v) {
  double s = 0.0;
  for (const cplx& x : v) s += std::norm(x);
  return s;
}

inline double max_abs_diff(const cvec& a, const cvec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oim
