#include "oim/receivers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oim {

namespace {

constexpr double kReconstructionFloor = 1e-12;
constexpr double kCurvatureFloor = 1e-12;

std::vector<std::size_t> used_bins(const FrameConfig& cfg, unsigned user) {
  std::vector<std::size_t> bins = cfg.data_bins;
  bins.insert(bins.end(), cfg.pilot_bins[user].begin(), cfg.pilot_bins[user].end());
  std::sort(bins.begin(), bins.end());
  return bins;
}

std::vector<std::size_t> training_bins(const FrameConfig& cfg) {
  const cvec t = training_block(cfg);
  std::vector<std::size_t> bins;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (std::abs(t[i]) > 0.5) bins.push_back(i);
  return bins;
}

}  // namespace

const char* receiver_name(ReceiverKind kind) {
  switch (kind) {
    case ReceiverKind::full_csi_ic: return "full_csi";
    case ReceiverKind::one_shot_ic: return "one_shot";
    case ReceiverKind::sage_min_sum: return "sage_minsum";
    case ReceiverKind::sage_ecm_sum_product: return "sage_ecm";
  }
  return "unknown";
}

std::optional<ReceiverKind> receiver_from_name(const std::string& name) {
  if (name == "full_csi") return ReceiverKind::full_csi_ic;
  if (name == "one_shot") return ReceiverKind::one_shot_ic;
  if (name == "sage_minsum") return ReceiverKind::sage_min_sum;
  if (name == "sage_ecm") return ReceiverKind::sage_ecm_sum_product;
  return std::nullopt;
}

ReceiverOperators::ReceiverOperators(const FrameConfig& cfg)
    : dense_(cfg.fft_size),
      preamble_fit_(cfg.fft_size, training_bins(cfg), cfg.cp_len),
      training_op_(dense_, training_block(cfg), cfg.cp_len) {
  user_fit_.reserve(cfg.num_users);
  pilot_op_.reserve(cfg.num_users);
  for (unsigned u = 0; u < cfg.num_users; ++u) {
    user_fit_.emplace_back(cfg.fft_size, used_bins(cfg, u), cfg.cp_len);
    cvec pilot_mask(cfg.fft_size, 0.0);
    for (std::size_t b : cfg.pilot_bins[u]) pilot_mask[b] = 1.0;
    pilot_op_.emplace_back(dense_, pilot_mask, cfg.cp_len);
  }
}

double compensation_objective(std::span<const StageBlock> blocks, double eps, std::size_t n) {
  const CfoOperator gamma = cfo_phasor(eps, n);
  double obj = 0.0;
  for (const StageBlock& b : blocks) {
    const cplx rot = std::polar(1.0, b.theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += std::norm((*b.residual)[i] - rot * gamma.diag[i] * (*b.mean)[i]);
    obj -= acc;
  }
  return obj;
}

CfoUpdateResult ecm_cfo_update(std::span<const StageBlock> blocks, double eps_old, std::size_t n,
                               double newton_clamp, double lower, double upper) {
  const CfoDerivatives deriv = cfo_phasor_derivatives(eps_old, n);
  double num = 0.0, den = 0.0;
  for (const StageBlock& b : blocks) {
    const cplx rot = std::polar(1.0, b.theta);
    cplx acc1 = 0.0, acc2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx rm = std::conj((*b.residual)[i]) * (*b.mean)[i];
      acc1 += rm * deriv.first[i];
      acc2 += rm * deriv.second[i];
    }
    num += std::real(rot * acc1);
    den -= std::real(rot * acc2);
  }

  CfoUpdateResult res;
  res.eps = eps_old;
  if (std::abs(den) < kCurvatureFloor) {
    res.stalled = true;
    return res;
  }
  res.raw_step = num / den;
  const double step = std::clamp(res.raw_step, -newton_clamp, newton_clamp);
  const double candidate = std::clamp(eps_old + step, lower, upper);
  const double before = compensation_objective(blocks, eps_old, n);
  const double after = compensation_objective(blocks, candidate, n);
  if (after < before - 1e-12 * std::max(1.0, std::abs(before))) {
    res.rejected = true;
    return res;
  }
  res.eps = candidate;
  return res;
}

double ecm_phase_update(const cvec& residual, const cvec& mean, const CfoOperator& gamma,
                        double theta_old) {
  double energy = 0.0;
  cplx acc = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    energy += std::norm(mean[i]);
    acc += std::conj(gamma.diag[i] * mean[i]) * residual[i];
  }
  if (std::sqrt(energy) < kReconstructionFloor || std::abs(acc) < kReconstructionFloor)
    return theta_old;
  return std::arg(acc);
}

ChannelUpdateResult ecm_channel_update(std::span<const cvec> V_blocks,
                                       std::span<const double> thetas,
                                       std::span<const dvec> mean_grids, const cvec& H_prev,
                                       const TapLeastSquares& fitter, double inversion_threshold) {
  if (V_blocks.size() != thetas.size() || V_blocks.size() != mean_grids.size())
    throw std::invalid_argument("ecm_channel_update: block count mismatch");
  const std::size_t n = H_prev.size();
  cvec acc(n, 0.0);
  std::vector<std::uint32_t> cnt(n, 0);
  for (std::size_t b = 0; b < V_blocks.size(); ++b) {
    const cplx rot = std::polar(1.0, -thetas[b]);
    const cvec& V = V_blocks[b];
    const dvec& mx = mean_grids[b];
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(mx[i]) < inversion_threshold) continue;
      acc[i] += rot * V[i] / mx[i];
      ++cnt[i];
    }
  }
  ChannelUpdateResult res;
  cvec obs = H_prev;  // bins nobody observed keep their previous value
  for (std::size_t i = 0; i < n; ++i) {
    if (cnt[i] > 0)
      obs[i] = acc[i] / static_cast<double>(cnt[i]);
  }
  for (std::size_t b : fitter.bins())
    if (cnt[b] == 0) ++res.bins_kept;
  res.estimate.taps = fitter.fit(obs);
  res.estimate.h = fitter.zero_pad(res.estimate.taps);
  res.estimate.H = fitter.response(res.estimate.taps);
  return res;
}

std::vector<cvec> sage_cancellation(const std::vector<cvec>& r,
                                    const std::vector<std::vector<cvec>>& components,
                                    unsigned user) {
  std::vector<cvec> out = r;
  for (std::size_t v = 0; v < components.size(); ++v) {
    if (v == user) continue;
    for (std::size_t m = 0; m < out.size(); ++m)
      for (std::size_t i = 0; i < out[m].size(); ++i) out[m][i] -= components[v][m][i];
  }
  return out;
}

std::vector<cvec> reconstruct_component(const ParamEstimate& est,
                                        const std::vector<dvec>& mean_grids,
                                        const FrameConfig& cfg, const FftEngine& engine) {
  const CfoOperator gamma = cfo_phasor(est.cfo, cfg.fft_size);
  std::vector<cvec> out(mean_grids.size());
  for (std::size_t m = 0; m < mean_grids.size(); ++m) {
    cvec Y(cfg.fft_size);
    for (std::size_t i = 0; i < cfg.fft_size; ++i) Y[i] = mean_grids[m][i] * est.H[i];
    cvec y = engine.inverse(Y, TransformTag::aux);
    const cplx rot = std::polar(1.0, est.block_phases[m]);
    out[m].resize(cfg.fft_size);
    for (std::size_t i = 0; i < cfg.fft_size; ++i) out[m][i] = rot * gamma.diag[i] * y[i];
  }
  return out;
}

std::uint64_t expected_core_transforms(ReceiverKind kind, std::size_t num_users, int k_iters,
                                       int z_iters, std::size_t data_blocks) {
  const std::uint64_t u = num_users;
  const std::uint64_t k = static_cast<std::uint64_t>(std::max(0, k_iters));
  const std::uint64_t z = static_cast<std::uint64_t>(std::max(0, z_iters));
  const std::uint64_t md = data_blocks;
  switch (kind) {
    case ReceiverKind::sage_ecm_sum_product:
    case ReceiverKind::sage_min_sum:
      return 2 * u + 2 * k * z * u * md;
    case ReceiverKind::one_shot_ic:
      return k == 0 ? 2 * u + u * md : 2 * u + 2 * k * u * md;
    case ReceiverKind::full_csi_ic:
      return k == 0 ? u * md : 2 * k * u * md;
  }
  return 0;
}

namespace {

// ---------------------------------------------------------------------------
// Shared per-run machinery.
// ---------------------------------------------------------------------------

struct UserState {
  ParamEstimate est;
  double cfo_anchor = 0.0;       // acquisition estimate, centre of the trust region
  std::vector<dvec> grid;        // symbol means (soft) or hard symbols, all blocks
  std::vector<cvec> mean_time;   // cached time-domain means, all blocks
  std::vector<cvec> component;   // current reconstruction, all blocks
  dvec info_llrs;
  bitvec bits;
  bitvec initial_bits;
  bool have_initial = false;
  bool cfo_ever_stalled = false;
};

class Runner {
 public:
  Runner(const std::vector<cvec>& r, const FrameConfig& cfg, const std::vector<CodeConfig>& codes,
         const ReceiverConfig& rc, const std::vector<UserImpairments>* truth,
         const ReceiverOperators& ops)
      : r_(r), cfg_(cfg), codes_(codes), rc_(rc), truth_(truth), ops_(ops),
        engine_(cfg.fft_size), training_(training_block(cfg)) {
    if (r.size() != cfg.num_blocks())
      throw std::invalid_argument("run_receiver: received block count mismatch");
    if (codes.size() != cfg.num_users)
      throw std::invalid_argument("run_receiver: one code per user required");
    users_.resize(cfg.num_users);
    data_first_ = cfg.num_preamble_blocks();
    for (std::size_t m = data_first_; m < cfg.num_blocks(); ++m) data_blocks_.push_back(m);
  }

  ReceiverResult run() {
    switch (rc_.kind) {
      case ReceiverKind::sage_ecm_sum_product:
      case ReceiverKind::sage_min_sum:
        run_sage();
        break;
      case ReceiverKind::full_csi_ic:
      case ReceiverKind::one_shot_ic:
        run_ic();
        break;
    }
    ReceiverResult res;
    res.transforms = engine_.counts();
    res.trace = std::move(trace_);
    res.users.resize(cfg_.num_users);
    for (unsigned u = 0; u < cfg_.num_users; ++u) {
      res.users[u].bits = std::move(users_[u].bits);
      res.users[u].info_llrs = std::move(users_[u].info_llrs);
      res.users[u].params = std::move(users_[u].est);
      res.users[u].initial_bits = std::move(users_[u].initial_bits);
      res.users[u].cfo_ever_stalled = users_[u].cfo_ever_stalled;
    }
    return res;
  }

 private:
  // --- initialization -------------------------------------------------------

  void init_from_preamble(unsigned u, const std::vector<cvec>& signal) {
    UserState& st = users_[u];
    const std::size_t a = 2 * u, b = 2 * u + 1;
    st.est.cfo = preamble_cfo_estimate(signal[a], signal[b], cfg_);
    const cvec blocks[2] = {signal[a], signal[b]};
    const ChannelEstimate ce =
        preamble_channel_estimate(std::span<const cvec>(blocks, 2), a + 1, st.est.cfo, training_,
                                  cfg_, ops_.preamble_fit(), engine_);
    st.est.taps = ce.taps;
    st.est.h = ce.h;
    st.est.H = ce.H;
    st.cfo_anchor = st.est.cfo;
    set_deterministic_phases(st);
  }

  void init_from_truth(unsigned u) {
    UserState& st = users_[u];
    const UserImpairments& imp = (*truth_)[u];
    st.est.cfo = imp.cfo;
    st.cfo_anchor = imp.cfo;
    st.est.block_phases = imp.block_phases;
    st.est.h = imp.composite(cfg_.fft_size);
    st.est.taps.assign(st.est.h.begin(), st.est.h.begin() + static_cast<long>(cfg_.cp_len));
    st.est.H = channel_response(st.est.h, cfg_.fft_size);
  }

  void set_deterministic_phases(UserState& st) {
    st.est.block_phases.resize(cfg_.num_blocks());
    for (std::size_t m = 0; m < cfg_.num_blocks(); ++m)
      st.est.block_phases[m] = cfo_block_phase(st.est.cfo, m + 1, cfg_);
  }

  // Component from known symbols only (pilots + own training blocks); used
  // before any decoding has produced symbol beliefs.
  void build_known_component(unsigned u) {
    UserState& st = users_[u];
    const CfoOperator gamma = cfo_phasor(st.est.cfo, cfg_.fft_size);
    st.component.assign(cfg_.num_blocks(), cvec(cfg_.fft_size, 0.0));
    const cvec preamble_base = ops_.training_op().apply(st.est.taps);
    const cvec pilot_base = ops_.pilot_op(u).apply(st.est.taps);
    for (std::size_t m = 0; m < cfg_.num_blocks(); ++m) {
      const BlockKind kind = block_kind(cfg_, u, m);
      if (kind == BlockKind::other_preamble) continue;
      const cvec& base = (kind == BlockKind::own_preamble) ? preamble_base : pilot_base;
      rotate_into(st.component[m], base, gamma, st.est.block_phases[m]);
    }
  }

  void rotate_into(cvec& out, const cvec& base, const CfoOperator& gamma, double theta) const {
    const cplx rot = std::polar(1.0, theta);
    out.resize(cfg_.fft_size);
    for (std::size_t i = 0; i < cfg_.fft_size; ++i) out[i] = rot * gamma.diag[i] * base[i];
  }

  // --- evidence + decoding --------------------------------------------------

  // Compensate and transform the data blocks of `residual` with the user's
  // current CFO estimate. One counted transform per data block.
  std::vector<cvec> compensated_dft(const UserState& st, const std::vector<cvec>& residual) {
    const CfoOperator comp = cfo_phasor(-st.est.cfo, cfg_.fft_size);
    std::vector<cvec> V;
    V.reserve(data_blocks_.size());
    cvec work(cfg_.fft_size);
    for (std::size_t m : data_blocks_) {
      comp.apply(residual[m], work);
      V.push_back(engine_.forward(work));
    }
    return V;
  }

  void pilot_phase_init(unsigned u, UserState& st, const std::vector<cvec>& V, double sigma2) {
    const dvec theta = anchored_phase_init(data_view(V), st.est.H, st.est.cfo, sigma2, cfg_,
                                           cfg_.pilot_bins[u]);
    for (std::size_t d = 0; d < data_blocks_.size(); ++d)
      st.est.block_phases[data_blocks_[d]] = theta[d];
  }

  // Evidence LLRs of every coded symbol, in transmitted order.
  dvec gather_evidence(const UserState& st, const std::vector<cvec>& V,
                       double sigma2) {
    dvec channel_llrs(cfg_.coded_length(), 0.0);
    for (std::size_t d = 0; d < data_blocks_.size(); ++d) {
      const std::size_t m = data_blocks_[d];
      const dvec llrs =
          evidence_llrs(V[d], st.est.block_phases[m], st.est.H, sigma2, cfg_.data_bins);
      for (std::size_t pos = 0; pos < cfg_.data_bins.size(); ++pos) {
        const std::size_t l = coded_index(cfg_, m, pos);
        if (l != kFillerCell) channel_llrs[l] = clamp_llr(llrs[pos]);
      }
    }
    return channel_llrs;
  }

  // Per-block time-domain means for the parameter stages: counted inverse
  // transforms on the data blocks, the precomputed training operator on the
  // user's own preamble blocks.
  void refresh_time_means(unsigned u, UserState& st) {
    st.mean_time.assign(cfg_.num_blocks(), cvec());
    for (std::size_t m : data_blocks_) {
      const cvec Y = compound_means(st.grid[m], st.est.H);
      st.mean_time[m] = engine_.inverse(Y);
    }
    const cvec preamble_base = ops_.training_op().apply(st.est.taps);
    st.mean_time[2 * u] = preamble_base;
    st.mean_time[2 * u + 1] = preamble_base;
  }

  std::vector<StageBlock> stage_blocks(unsigned u, const UserState& st,
                                       const std::vector<cvec>& residual) const {
    std::vector<StageBlock> blocks;
    blocks.reserve(data_blocks_.size() + 2);
    for (std::size_t m : {std::size_t{2 * u}, std::size_t{2 * u + 1}})
      blocks.push_back({&residual[m], &st.mean_time[m], st.est.block_phases[m]});
    for (std::size_t m : data_blocks_)
      blocks.push_back({&residual[m], &st.mean_time[m], st.est.block_phases[m]});
    return blocks;
  }

  // --- the three conditional maximisation stages ---------------------------

  void run_m_stages(unsigned u, UserState& st, const std::vector<cvec>& residual,
                    const std::vector<cvec>& V, IterationTrace* tr) {
    // Stage 1: CFO.
    std::vector<StageBlock> blocks = stage_blocks(u, st, residual);
    const CfoUpdateResult cfo =
        ecm_cfo_update(blocks, st.est.cfo, cfg_.fft_size, rc_.newton_clamp,
                       st.cfo_anchor - rc_.cfo_trust_radius,
                       st.cfo_anchor + rc_.cfo_trust_radius);
    st.est.cfo = cfo.eps;
    st.cfo_ever_stalled |= cfo.stalled;
    // Stage 2: per-block phases (blocks with a nonzero mean).
    const CfoOperator gamma = cfo_phasor(st.est.cfo, cfg_.fft_size);
    for (std::size_t m : data_blocks_)
      st.est.block_phases[m] =
          ecm_phase_update(residual[m], st.mean_time[m], gamma, st.est.block_phases[m]);
    for (std::size_t m : {std::size_t{2 * u}, std::size_t{2 * u + 1}})
      st.est.block_phases[m] =
          ecm_phase_update(residual[m], st.mean_time[m], gamma, st.est.block_phases[m]);
    // Stage 3: channel taps from the data blocks.
    std::vector<double> thetas(data_blocks_.size());
    std::vector<dvec> grids(data_blocks_.size());
    for (std::size_t d = 0; d < data_blocks_.size(); ++d) {
      thetas[d] = st.est.block_phases[data_blocks_[d]];
      grids[d] = st.grid[data_blocks_[d]];
    }
    const ChannelUpdateResult ch = ecm_channel_update(V, thetas, grids, st.est.H,
                                                      ops_.user_fit(u), rc_.inversion_threshold);
    st.est.taps = ch.estimate.taps;
    st.est.h = ch.estimate.h;
    st.est.H = ch.estimate.H;

    if (tr != nullptr) {
      tr->eps_hat = st.est.cfo;
      tr->cfo_raw_step = cfo.raw_step;
      tr->cfo_stalled = cfo.stalled;
      tr->cfo_rejected = cfo.rejected;
      tr->channel_bins_kept = ch.bins_kept;
      // Refresh the block list phases for the objective readout.
      blocks = stage_blocks(u, st, residual);
      tr->q_value = compensation_objective(blocks, st.est.cfo, cfg_.fft_size);
    }
  }

  void fill_truth_errors(unsigned u, const UserState& st, IterationTrace& tr) const {
    if (truth_ == nullptr) {
      tr.cfo_sq_err = tr.channel_rel_err = tr.phase_sq_err =
          std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const UserImpairments& imp = (*truth_)[u];
    tr.cfo_sq_err = (st.est.cfo - imp.cfo) * (st.est.cfo - imp.cfo);
    const cvec h_true = imp.composite(cfg_.fft_size);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < cfg_.fft_size; ++i) {
      num += std::norm(st.est.h[i] - h_true[i]);
      den += std::norm(h_true[i]);
    }
    tr.channel_rel_err = den > 0 ? num / den : 0.0;
    double acc = 0.0;
    for (std::size_t m : data_blocks_) {
      const double d = wrap_phase(st.est.block_phases[m] - imp.block_phases[m]);
      acc += d * d;
    }
    tr.phase_sq_err = acc / static_cast<double>(data_blocks_.size());
  }

  // --- SAGE receivers (soft ECM feedback or hard min-sum feedback) ---------

  void run_sage() {
    const bool soft = rc_.kind == ReceiverKind::sage_ecm_sum_product;
    for (unsigned u = 0; u < cfg_.num_users; ++u) {
      // Preamble blocks are time-orthogonal, so the initial estimates come
      // straight from the raw signal.
      init_from_preamble(u, r_);
      build_known_component(u);
    }
    for (int k = 1; k <= rc_.sage_iterations; ++k) {
      for (unsigned u = 0; u < cfg_.num_users; ++u) {
        UserState& st = users_[u];
        const std::vector<cvec> residual = sage_cancellation(r_, components(), u);
        for (int z = 1; z <= rc_.ecm_iterations; ++z) {
          const std::vector<cvec> V = compensated_dft(st, residual);
          const double sigma2 = estimate_sigma_in(data_view(V), st.est.H, cfg_);
          if (k == 1 && z == 1) pilot_phase_init(u, st, V, sigma2);
          const dvec channel_llrs = gather_evidence(st, V, sigma2);
          if (soft) {
            const SumProductResult dec = sum_product_decode(channel_llrs, codes_[u]);
            st.info_llrs = dec.info_llrs;
            st.bits = hard_bits(dec.info_llrs);
            st.grid = symbol_mean_grid(dec.symbol_llrs, cfg_, u);
          } else {
            const MinSumResult dec = min_sum_decode(channel_llrs, codes_[u]);
            st.info_llrs.assign(codes_[u].info_bits, 0.0);
            st.bits = dec.info_bits;
            st.grid = hard_symbol_grid(dec.symbol_bits, cfg_, u);
          }
          if (!st.have_initial) {
            st.initial_bits = st.bits;
            st.have_initial = true;
          }
          refresh_time_means(u, st);
          IterationTrace tr;
          tr.sage_iter = k;
          tr.ecm_iter = z;
          tr.user = u;
          run_m_stages(u, st, residual, V, rc_.collect_diagnostics ? &tr : nullptr);
          if (rc_.collect_diagnostics) {
            fill_truth_errors(u, st, tr);
            trace_.push_back(tr);
          }
        }
        // Component refresh: updated rotation on the cached means, current
        // taps on the training blocks.
        const CfoOperator gamma = cfo_phasor(st.est.cfo, cfg_.fft_size);
        const cvec preamble_base = ops_.training_op().apply(st.est.taps);
        for (std::size_t m = 0; m < cfg_.num_blocks(); ++m) {
          const BlockKind kind = block_kind(cfg_, u, m);
          if (kind == BlockKind::other_preamble) {
            st.component[m].assign(cfg_.fft_size, 0.0);
            continue;
          }
          const cvec& base = (kind == BlockKind::own_preamble) ? preamble_base : st.mean_time[m];
          rotate_into(st.component[m], base, gamma, st.est.block_phases[m]);
        }
      }
    }
  }

  // --- interference cancellation baselines ---------------------------------

  void run_ic() {
    const bool perfect = rc_.kind == ReceiverKind::full_csi_ic;
    if (perfect && truth_ == nullptr)
      throw std::invalid_argument("run_receiver: full CSI baseline needs ground truth");
    for (unsigned u = 0; u < cfg_.num_users; ++u) {
      if (perfect)
        init_from_truth(u);
      else
        init_from_preamble(u, r_);
      build_known_component(u);
    }
    const int rounds = std::max(0, rc_.sage_iterations);
    if (rounds == 0) {
      ic_round(1, /*reconstruct=*/false, !perfect);
      return;
    }
    for (int round = 1; round <= rounds; ++round)
      ic_round(round, /*reconstruct=*/true, !perfect && round == 1);
  }

  // One parallel cancellation round: every user is decoded against the
  // other users' components from the previous round.
  void ic_round(int round, bool reconstruct, bool pilot_init) {
    std::vector<std::vector<cvec>> residuals(cfg_.num_users);
    for (unsigned u = 0; u < cfg_.num_users; ++u)
      residuals[u] = sage_cancellation(r_, components(), u);
    for (unsigned u = 0; u < cfg_.num_users; ++u) {
      UserState& st = users_[u];
      const std::vector<cvec> V = compensated_dft(st, residuals[u]);
      const double sigma2 = estimate_sigma_in(data_view(V), st.est.H, cfg_);
      if (pilot_init) pilot_phase_init(u, st, V, sigma2);
      const dvec channel_llrs = gather_evidence(st, V, sigma2);
      const SumProductResult dec = sum_product_decode(channel_llrs, codes_[u]);
      st.info_llrs = dec.info_llrs;
      st.bits = hard_bits(dec.info_llrs);
      if (!st.have_initial) {
        st.initial_bits = st.bits;
        st.have_initial = true;
      }
      if (!reconstruct) continue;
      st.grid = hard_grid_from_llrs(dec.symbol_llrs, cfg_, u);
      refresh_time_means(u, st);
      if (rc_.collect_diagnostics) {
        IterationTrace tr;
        tr.sage_iter = round;
        tr.ecm_iter = 0;
        tr.user = u;
        const std::vector<StageBlock> blocks = stage_blocks(u, st, residuals[u]);
        tr.q_value = compensation_objective(blocks, st.est.cfo, cfg_.fft_size);
        tr.eps_hat = st.est.cfo;
        fill_truth_errors(u, st, tr);
        trace_.push_back(tr);
      }
    }
    if (!reconstruct) return;
    // Components switch over together (parallel schedule).
    for (unsigned u = 0; u < cfg_.num_users; ++u) {
      UserState& st = users_[u];
      const CfoOperator gamma = cfo_phasor(st.est.cfo, cfg_.fft_size);
      const cvec preamble_base = ops_.training_op().apply(st.est.taps);
      for (std::size_t m = 0; m < cfg_.num_blocks(); ++m) {
        const BlockKind kind = block_kind(cfg_, u, m);
        if (kind == BlockKind::other_preamble) {
          st.component[m].assign(cfg_.fft_size, 0.0);
          continue;
        }
        const cvec& base = (kind == BlockKind::own_preamble) ? preamble_base : st.mean_time[m];
        rotate_into(st.component[m], base, gamma, st.est.block_phases[m]);
      }
    }
  }

  // --- small helpers --------------------------------------------------------

  std::vector<std::vector<cvec>> components() const {
    std::vector<std::vector<cvec>> c(cfg_.num_users);
    for (unsigned u = 0; u < cfg_.num_users; ++u) c[u] = users_[u].component;
    return c;
  }

  std::span<const cvec> data_view(const std::vector<cvec>& V) const {
    return {V.data(), V.size()};
  }

  static bitvec hard_bits(const dvec& llrs) {
    bitvec bits(llrs.size());
    for (std::size_t i = 0; i < llrs.size(); ++i) bits[i] = llrs[i] < 0.0 ? 1 : 0;
    return bits;
  }

  const std::vector<cvec>& r_;
  const FrameConfig& cfg_;
  const std::vector<CodeConfig>& codes_;
  const ReceiverConfig& rc_;
  const std::vector<UserImpairments>* truth_;
  const ReceiverOperators& ops_;
  FftEngine engine_;
  cvec training_;
  std::vector<UserState> users_;
  std::vector<std::size_t> data_blocks_;
  std::size_t data_first_ = 0;
  std::vector<IterationTrace> trace_;
};

}  // namespace

ReceiverResult run_receiver(const std::vector<cvec>& r, const FrameConfig& cfg,
                            const std::vector<CodeConfig>& codes, const ReceiverConfig& rc,
                            const std::vector<UserImpairments>* truth,
                            const ReceiverOperators* ops) {
  if (ops != nullptr) return Runner(r, cfg, codes, rc, truth, *ops).run();
  const ReceiverOperators local(cfg);
  return Runner(r, cfg, codes, rc, truth, local).run();
}

ReceiverResult run_sage_ecm(const std::vector<cvec>& r, const FrameConfig& cfg,
                            const std::vector<CodeConfig>& codes, ReceiverConfig rc,
                            const std::vector<UserImpairments>* truth) {
  rc.kind = ReceiverKind::sage_ecm_sum_product;
  return run_receiver(r, cfg, codes, rc, truth);
}

ReceiverResult run_sage_minsum(const std::vector<cvec>& r, const FrameConfig& cfg,
                               const std::vector<CodeConfig>& codes, ReceiverConfig rc,
                               const std::vector<UserImpairments>* truth) {
  rc.kind = ReceiverKind::sage_min_sum;
  return run_receiver(r, cfg, codes, rc, truth);
}

ReceiverResult run_ic_receiver(const std::vector<cvec>& r, const FrameConfig& cfg,
                               const std::vector<CodeConfig>& codes, ReceiverConfig rc,
                               CsiMode csi, const std::vector<UserImpairments>* truth) {
  rc.kind = csi == CsiMode::perfect ? ReceiverKind::full_csi_ic : ReceiverKind::one_shot_ic;
  return run_receiver(r, cfg, codes, rc, truth);
}

}  // namespace oim
