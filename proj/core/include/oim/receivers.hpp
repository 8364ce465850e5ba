#pragma once

#include <optional>
#include <span>

#include "oim/channel.hpp"
#include "oim/estimation.hpp"
#include "oim/fec.hpp"
#include "oim/framing.hpp"
#include "oim/softidft.hpp"

namespace oim {

enum class ReceiverKind {
  full_csi_ic,           // interference cancellation, true parameters
  one_shot_ic,           // interference cancellation, preamble/pilot estimates
  sage_min_sum,          // per-user cycles, hard symbol feedback, min-sum decoding
  sage_ecm_sum_product,  // per-user cycles, soft symbol feedback, sum-product decoding
};

const char* receiver_name(ReceiverKind kind);
std::optional<ReceiverKind> receiver_from_name(const std::string& name);

struct ReceiverConfig {
  ReceiverKind kind = ReceiverKind::sage_ecm_sum_product;
  int sage_iterations = 10;  // K: outer iterations / cancellation rounds
  int ecm_iterations = 20;   // Z: parameter refinement iterations per cycle
  int decoder_iterations = 20;
  double newton_clamp = 0.05;        // largest CFO move per update
  double cfo_trust_radius = 0.05;    // largest total CFO move from the initial estimate
  double inversion_threshold = 0.1;  // |m_X| below this is not inverted
  bool collect_diagnostics = false;
};

/// One row of the per-iteration diagnostics stream.
struct IterationTrace {
  int sage_iter = 0;  // k
  int ecm_iter = 0;   // z
  unsigned user = 0;
  double q_value = 0.0;
  double eps_hat = 0.0;
  double cfo_raw_step = 0.0;
  bool cfo_stalled = false;
  bool cfo_rejected = false;
  std::size_t channel_bins_kept = 0;
  // Squared errors versus ground truth, NaN when no truth was supplied.
  double cfo_sq_err = 0.0;
  double channel_rel_err = 0.0;
  double phase_sq_err = 0.0;
};

struct UserOutput {
  bitvec bits;
  dvec info_llrs;
  ParamEstimate params;
  /// Decoded bits at the shared initialisation point (first evidence decode
  /// before any parameter refinement); lets tests pin that every receiver
  /// starts from the same place.
  bitvec initial_bits;
  bool cfo_ever_stalled = false;
};

struct ReceiverResult {
  std::vector<UserOutput> users;
  TransformCounts transforms;
  std::vector<IterationTrace> trace;
};

/// Precomputed per-configuration operators (reference transform, tap
/// fitters, known-block reconstruction matrices). Shareable across threads.
class ReceiverOperators {
 public:
  explicit ReceiverOperators(const FrameConfig& cfg);

  const DftOperator& dense() const { return dense_; }
  const TapLeastSquares& preamble_fit() const { return preamble_fit_; }
  const TapLeastSquares& user_fit(unsigned u) const { return user_fit_[u]; }
  const KnownBlockOperator& training_op() const { return training_op_; }
  const KnownBlockOperator& pilot_op(unsigned u) const { return pilot_op_[u]; }

 private:
  DftOperator dense_;
  TapLeastSquares preamble_fit_;
  std::vector<TapLeastSquares> user_fit_;
  KnownBlockOperator training_op_;
  std::vector<KnownBlockOperator> pilot_op_;
};

/// Runs the selected receiver on one frame of received blocks. `truth` is
/// required for the full-CSI baseline and, when present, also feeds the
/// error columns of the diagnostics trace. `ops` may be shared across calls
/// with the same FrameConfig; when null a local set is built.
ReceiverResult run_receiver(const std::vector<cvec>& r, const FrameConfig& cfg,
                            const std::vector<CodeConfig>& codes, const ReceiverConfig& rc,
                            const std::vector<UserImpairments>* truth = nullptr,
                            const ReceiverOperators* ops = nullptr);

ReceiverResult run_sage_ecm(const std::vector<cvec>& r, const FrameConfig& cfg,
                            const std::vector<CodeConfig>& codes, ReceiverConfig rc,
                            const std::vector<UserImpairments>* truth = nullptr);

ReceiverResult run_sage_minsum(const std::vector<cvec>& r, const FrameConfig& cfg,
                               const std::vector<CodeConfig>& codes, ReceiverConfig rc,
                               const std::vector<UserImpairments>* truth = nullptr);

enum class CsiMode { perfect, one_shot };

ReceiverResult run_ic_receiver(const std::vector<cvec>& r, const FrameConfig& cfg,
                               const std::vector<CodeConfig>& codes, ReceiverConfig rc,
                               CsiMode csi,
                               const std::vector<UserImpairments>* truth = nullptr);

/// ---- building blocks, exposed so tests can drive each stage directly ----

/// One block's contribution to the per-user objective: the residual signal,
/// the time-domain symbol mean, and the block phase.
struct StageBlock {
  const cvec* residual = nullptr;  // \hat r_{u,m}
  const cvec* mean = nullptr;      // time-domain mean (soft or hard)
  double theta = 0.0;
};

/// -sum_m || residual_m - e^{j theta_m} Gamma(eps) mean_m ||^2.
double compensation_objective(std::span<const StageBlock> blocks, double eps, std::size_t n);

struct CfoUpdateResult {
  double eps = 0.0;
  double raw_step = 0.0;
  bool stalled = false;   // vanishing curvature, update skipped
  bool rejected = false;  // step lowered the objective, update skipped
};

/// Newton step on the CFO objective around eps_old, clamped to
/// newton_clamp, confined to [lower, upper] (the trust region around the
/// acquisition estimate) and rejected when it fails to ascend.
CfoUpdateResult ecm_cfo_update(std::span<const StageBlock> blocks, double eps_old, std::size_t n,
                               double newton_clamp, double lower = -1e9, double upper = 1e9);

/// Closed-form per-block phase: angle of (Gamma(eps) mean)^H residual.
/// Falls back to theta_old when the reconstruction vanishes.
double ecm_phase_update(const cvec& residual, const cvec& mean, const CfoOperator& gamma,
                        double theta_old);

struct ChannelUpdateResult {
  ChannelEstimate estimate;
  std::size_t bins_kept = 0;  // bins carried over from the previous estimate
};

/// Masked per-bin inversion of the compensated frequency-domain blocks,
/// averaged over contributing blocks, followed by a least-squares refit of
/// the cp_len leading taps. Bins with no contributing block keep their
/// previous value.
ChannelUpdateResult ecm_channel_update(std::span<const cvec> V_blocks,
                                       std::span<const double> thetas,
                                       std::span<const dvec> mean_grids, const cvec& H_prev,
                                       const TapLeastSquares& fitter, double inversion_threshold);

/// Interference cancellation for user u: r minus every other user's current
/// component estimate.
std::vector<cvec> sage_cancellation(const std::vector<cvec>& r,
                                    const std::vector<std::vector<cvec>>& components,
                                    unsigned user);

/// Full model evaluation e^{j theta} Gamma(eps) F^H D(mean) F h per block;
/// reference path for tests and diagnostics (transforms tagged aux).
std::vector<cvec> reconstruct_component(const ParamEstimate& est,
                                        const std::vector<dvec>& mean_grids,
                                        const FrameConfig& cfg, const FftEngine& engine);

/// Transform budget of one receiver run: 2U preamble transforms plus two
/// per data block per refinement iteration (2U + 2KZUM' for the SAGE
/// receivers, 2U + 2KUM' for interference cancellation, no preamble term
/// for full CSI).
std::uint64_t expected_core_transforms(ReceiverKind kind, std::size_t num_users, int k_iters,
                                       int z_iters, std::size_t data_blocks);

}  // namespace oim
