#include "oim/fec.hpp"

#include <algorithm>
#include <cmath>

#include "oim/rng.hpp"

namespace oim {

namespace {

constexpr double kNegInf = -1e300;
constexpr double kEarlyStopTol = 1e-6;
// Extrinsic damping for the max-product schedule: undamped messages on the
// loopy production graph saturate after a few sweeps and the hard decisions
// ride the overshoot. Signs on cycle-free toy graphs are unaffected.
constexpr double kMinSumExtrinsicScale = 0.75;

double lse(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

// Trellis section covering a maximal run of positions that all carry the
// same info bit. With the identity inner interleaver every run has length 3
// and the graph is a tree; with a random interleaver runs are mostly single
// positions and the repetition ties are handled by the outer iterations.
struct Section {
  std::size_t start = 0;
  std::size_t len = 0;
  std::size_t bit = 0;
};

struct GraphPlan {
  std::vector<Section> sections;
  std::vector<std::vector<std::uint32_t>> sections_of_bit;
};

GraphPlan build_plan(const CodeConfig& cfg) {
  GraphPlan plan;
  const std::size_t n = cfg.ra_length();
  plan.sections_of_bit.resize(cfg.info_bits);
  std::size_t t = 0;
  while (t < n) {
    const std::size_t bit = cfg.ra_interleaver[t] / 3;
    std::size_t len = 1;
    while (t + len < n && cfg.ra_interleaver[t + len] / 3 == bit) ++len;
    plan.sections_of_bit[bit].push_back(static_cast<std::uint32_t>(plan.sections.size()));
    plan.sections.push_back({t, len, bit});
    t += len;
  }
  return plan;
}

// Within a section with entry state s and bit value v, the emitted bit at
// offset o is s^v for even o and s for odd o; the exit state is s^v for odd
// section lengths and s for even ones.
inline unsigned emitted_bit(unsigned s, unsigned v, std::size_t offset) {
  return (offset % 2 == 0) ? (s ^ v) : s;
}
inline unsigned exit_state(unsigned s, unsigned v, std::size_t len) {
  return (len % 2 == 1) ? (s ^ v) : s;
}

struct Workspace {
  // log-domain weights: w[g][s][v] = channel evidence of this section's run
  std::vector<std::array<double, 4>> w;
  std::vector<std::array<double, 2>> alpha, beta;
  dvec prior, out_msg, info_total;
};

// Combine transmitted-order channel LLRs into per-accumulator-bit LLRs.
dvec combine_repetition(const dvec& channel_llrs, const CodeConfig& cfg) {
  if (channel_llrs.size() != cfg.coded_length())
    throw std::invalid_argument("decode: channel LLR length mismatch");
  const dvec pre_user = deinterleave(channel_llrs, cfg.user_interleaver);
  dvec ra_llr(cfg.ra_length(), 0.0);
  for (std::size_t n = 0; n < cfg.ra_length(); ++n) {
    double s = 0.0;
    for (std::size_t c = 0; c < cfg.repetition; ++c) s += pre_user[n * cfg.repetition + c];
    ra_llr[n] = clamp_llr(s);
  }
  return ra_llr;
}

void fill_section_weights(const GraphPlan& plan, const dvec& ra_llr, Workspace& ws) {
  ws.w.assign(plan.sections.size(), {});
  for (std::size_t g = 0; g < plan.sections.size(); ++g) {
    const Section& sec = plan.sections[g];
    for (unsigned s = 0; s < 2; ++s)
      for (unsigned v = 0; v < 2; ++v) {
        double acc = 0.0;
        for (std::size_t o = 0; o < sec.len; ++o) {
          const double lam = ra_llr[sec.start + o];
          acc += (emitted_bit(s, v, o) == 0) ? 0.5 * lam : -0.5 * lam;
        }
        ws.w[g][2 * s + v] = acc;
      }
  }
}

// One forward-backward sweep with the current priors. `sum_mode` selects the
// sum-product (log-sum-exp) or max-product semiring.
void sweep(const GraphPlan& plan, Workspace& ws, bool sum_mode) {
  const std::size_t ng = plan.sections.size();
  auto merge = [sum_mode](double a, double b) { return sum_mode ? lse(a, b) : std::max(a, b); };

  ws.alpha.assign(ng + 1, {kNegInf, kNegInf});
  ws.beta.assign(ng + 1, {0.0, 0.0});
  ws.alpha[0] = {0.0, kNegInf};

  for (std::size_t g = 0; g < ng; ++g) {
    const Section& sec = plan.sections[g];
    std::array<double, 2> next = {kNegInf, kNegInf};
    for (unsigned s = 0; s < 2; ++s) {
      if (ws.alpha[g][s] <= kNegInf) continue;
      for (unsigned v = 0; v < 2; ++v) {
        const double pv = (v == 0) ? 0.5 * ws.prior[g] : -0.5 * ws.prior[g];
        const unsigned e = exit_state(s, v, sec.len);
        next[e] = merge(next[e], ws.alpha[g][s] + ws.w[g][2 * s + v] + pv);
      }
    }
    const double norm = std::max(next[0], next[1]);
    ws.alpha[g + 1] = {next[0] - norm, next[1] - norm};
  }
  for (std::size_t gi = ng; gi-- > 0;) {
    const Section& sec = plan.sections[gi];
    std::array<double, 2> cur = {kNegInf, kNegInf};
    for (unsigned s = 0; s < 2; ++s)
      for (unsigned v = 0; v < 2; ++v) {
        const double pv = (v == 0) ? 0.5 * ws.prior[gi] : -0.5 * ws.prior[gi];
        const unsigned e = exit_state(s, v, sec.len);
        cur[s] = merge(cur[s], ws.w[gi][2 * s + v] + pv + ws.beta[gi + 1][e]);
      }
    const double norm = std::max(cur[0], cur[1]);
    ws.beta[gi] = {cur[0] - norm, cur[1] - norm};
  }
}

// Posterior LLR on the section's info-bit value given the current sweep.
double section_bit_llr(const GraphPlan& plan, const Workspace& ws, std::size_t g, bool sum_mode) {
  auto merge = [sum_mode](double a, double b) { return sum_mode ? lse(a, b) : std::max(a, b); };
  const Section& sec = plan.sections[g];
  std::array<double, 2> jv = {kNegInf, kNegInf};
  for (unsigned s = 0; s < 2; ++s)
    for (unsigned v = 0; v < 2; ++v) {
      const double pv = (v == 0) ? 0.5 * ws.prior[g] : -0.5 * ws.prior[g];
      const unsigned e = exit_state(s, v, sec.len);
      jv[v] = merge(jv[v], ws.alpha[g][s] + ws.w[g][2 * s + v] + pv + ws.beta[g + 1][e]);
    }
  return jv[0] - jv[1];
}

// Runs the iterative schedule; leaves the workspace holding the final sweep.
int iterate(const GraphPlan& plan, Workspace& ws, const CodeConfig& cfg, bool sum_mode) {
  const std::size_t ng = plan.sections.size();
  ws.prior.assign(ng, 0.0);
  ws.out_msg.assign(ng, 0.0);
  ws.info_total.assign(cfg.info_bits, 0.0);

  int iters = 0;
  const int max_iters = std::max(1, cfg.decoder_iterations);
  for (int it = 0; it < max_iters; ++it) {
    ++iters;
    for (std::size_t g = 0; g < ng; ++g)
      ws.prior[g] = clamp_llr(ws.info_total[plan.sections[g].bit] - ws.out_msg[g]);
    sweep(plan, ws, sum_mode);
    double delta = 0.0;
    const double scale = sum_mode ? 1.0 : kMinSumExtrinsicScale;
    for (std::size_t g = 0; g < ng; ++g) {
      const double post = section_bit_llr(plan, ws, g, sum_mode);
      ws.out_msg[g] = clamp_llr(scale * (post - ws.prior[g]));
    }
    for (std::size_t j = 0; j < cfg.info_bits; ++j) {
      double acc = 0.0;
      for (std::uint32_t g : plan.sections_of_bit[j]) acc += ws.out_msg[g];
      acc = clamp_llr(acc);
      delta = std::max(delta, std::abs(acc - ws.info_total[j]));
      ws.info_total[j] = acc;
    }
    if (delta < kEarlyStopTol) break;
  }
  return iters;
}

}  // namespace

void CodeConfig::validate() const {
  if (info_bits == 0) throw std::invalid_argument("CodeConfig: info_bits must be positive");
  if (repetition == 0) throw std::invalid_argument("CodeConfig: repetition must be positive");
  if (ra_interleaver.size() != ra_length())
    throw std::invalid_argument("CodeConfig: ra interleaver length mismatch");
  if (user_interleaver.size() != coded_length())
    throw std::invalid_argument("CodeConfig: user interleaver length mismatch");
}

std::vector<std::uint32_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_int(0, i - 1);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

CodeConfig CodeConfig::make(std::size_t info_bits, std::size_t repetition,
                            std::uint64_t global_seed, unsigned user_index,
                            int decoder_iterations) {
  CodeConfig cfg;
  cfg.info_bits = info_bits;
  cfg.repetition = repetition;
  cfg.decoder_iterations = decoder_iterations;
  cfg.ra_interleaver = random_permutation(
      cfg.ra_length(),
      derive_seed(global_seed, user_index, static_cast<std::uint64_t>(SeedRole::ra_interleaver)));
  cfg.user_interleaver = random_permutation(
      cfg.coded_length(),
      derive_seed(global_seed, user_index,
                  static_cast<std::uint64_t>(SeedRole::user_interleaver)));
  cfg.validate();
  return cfg;
}

CodeConfig CodeConfig::make_identity(std::size_t info_bits, std::size_t repetition,
                                     int decoder_iterations) {
  CodeConfig cfg;
  cfg.info_bits = info_bits;
  cfg.repetition = repetition;
  cfg.decoder_iterations = decoder_iterations;
  cfg.ra_interleaver.resize(cfg.ra_length());
  for (std::size_t i = 0; i < cfg.ra_interleaver.size(); ++i)
    cfg.ra_interleaver[i] = static_cast<std::uint32_t>(i);
  cfg.user_interleaver.resize(cfg.coded_length());
  for (std::size_t i = 0; i < cfg.user_interleaver.size(); ++i)
    cfg.user_interleaver[i] = static_cast<std::uint32_t>(i);
  return cfg;
}

bitvec ra_encode(const bitvec& bits, const CodeConfig& config) {
  if (bits.size() != config.info_bits) throw std::invalid_argument("ra_encode: length mismatch");
  bitvec repeated(config.ra_length());
  for (std::size_t j = 0; j < bits.size(); ++j)
    for (std::size_t c = 0; c < 3; ++c) repeated[3 * j + c] = bits[j] & 1;
  const bitvec mixed = interleave(repeated, config.ra_interleaver);
  bitvec out(mixed.size());
  std::uint8_t acc = 0;
  for (std::size_t t = 0; t < mixed.size(); ++t) {
    acc ^= mixed[t];
    out[t] = acc;
  }
  return out;
}

bitvec idma_encode(const bitvec& bits, const CodeConfig& config) {
  const bitvec ra = ra_encode(bits, config);
  bitvec repeated(config.coded_length());
  for (std::size_t n = 0; n < ra.size(); ++n)
    for (std::size_t c = 0; c < config.repetition; ++c) repeated[n * config.repetition + c] = ra[n];
  return interleave(repeated, config.user_interleaver);
}

SumProductResult sum_product_decode(const dvec& channel_llrs, const CodeConfig& config) {
  config.validate();
  const GraphPlan plan = build_plan(config);
  Workspace ws;
  const dvec ra_llr = combine_repetition(channel_llrs, config);
  fill_section_weights(plan, ra_llr, ws);

  SumProductResult res;
  res.iterations_run = iterate(plan, ws, config, /*sum_mode=*/true);
  res.info_llrs = ws.info_total;

  // Posterior on each accumulator output bit, read off the final sweep.
  dvec d_llr(config.ra_length(), 0.0);
  for (std::size_t g = 0; g < plan.sections.size(); ++g) {
    const Section& sec = plan.sections[g];
    for (std::size_t o = 0; o < sec.len; ++o) {
      std::array<double, 2> jd = {kNegInf, kNegInf};
      for (unsigned s = 0; s < 2; ++s)
        for (unsigned v = 0; v < 2; ++v) {
          const double pv = (v == 0) ? 0.5 * ws.prior[g] : -0.5 * ws.prior[g];
          const unsigned e = exit_state(s, v, sec.len);
          const double m = ws.alpha[g][s] + ws.w[g][2 * s + v] + pv + ws.beta[g + 1][e];
          jd[emitted_bit(s, v, o)] = lse(jd[emitted_bit(s, v, o)], m);
        }
      d_llr[sec.start + o] = clamp_llr(jd[0] - jd[1]);
    }
  }
  // Every repetition copy carries the same accumulator bit, hence the same
  // posterior; spread and restore transmitted order.
  dvec pre_user(config.coded_length());
  for (std::size_t n = 0; n < config.ra_length(); ++n)
    for (std::size_t c = 0; c < config.repetition; ++c)
      pre_user[n * config.repetition + c] = d_llr[n];
  res.symbol_llrs = interleave(pre_user, config.user_interleaver);
  return res;
}

MinSumResult min_sum_decode(const dvec& channel_llrs, const CodeConfig& config) {
  config.validate();
  const GraphPlan plan = build_plan(config);
  Workspace ws;
  const dvec ra_llr = combine_repetition(channel_llrs, config);
  fill_section_weights(plan, ra_llr, ws);

  MinSumResult res;
  res.iterations_run = iterate(plan, ws, config, /*sum_mode=*/false);
  res.info_bits.resize(config.info_bits);
  for (std::size_t j = 0; j < config.info_bits; ++j)
    res.info_bits[j] = ws.info_total[j] < 0.0 ? 1 : 0;  // tie -> 0
  res.codeword = idma_encode(res.info_bits, config);

  // Per-position decisions from the final sweep's max-marginals.
  bitvec d_bits(config.ra_length());
  for (std::size_t g = 0; g < plan.sections.size(); ++g) {
    const Section& sec = plan.sections[g];
    for (std::size_t o = 0; o < sec.len; ++o) {
      std::array<double, 2> jd = {kNegInf, kNegInf};
      for (unsigned s = 0; s < 2; ++s)
        for (unsigned v = 0; v < 2; ++v) {
          const double pv = (v == 0) ? 0.5 * ws.prior[g] : -0.5 * ws.prior[g];
          const unsigned e = exit_state(s, v, sec.len);
          const double m = ws.alpha[g][s] + ws.w[g][2 * s + v] + pv + ws.beta[g + 1][e];
          const unsigned d = emitted_bit(s, v, o);
          jd[d] = std::max(jd[d], m);
        }
      d_bits[sec.start + o] = jd[1] > jd[0] ? 1 : 0;  // tie -> 0
    }
  }
  bitvec pre_user(config.coded_length());
  for (std::size_t nidx = 0; nidx < config.ra_length(); ++nidx)
    for (std::size_t c = 0; c < config.repetition; ++c)
      pre_user[nidx * config.repetition + c] = d_bits[nidx];
  res.symbol_bits = interleave(pre_user, config.user_interleaver);
  return res;
}

}  // namespace oim
