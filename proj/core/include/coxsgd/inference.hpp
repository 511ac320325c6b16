#ifndef COXSGD_INFERENCE_HPP
#define COXSGD_INFERENCE_HPP

#include "coxsgd/batching.hpp"
#include "coxsgd/rng.hpp"
#include "coxsgd/simulate.hpp"
#include "coxsgd/survival.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace coxsgd {

/// Two batches of equal size sharing their first record.
struct PairedBatch {
  Dataset a;
  Dataset b;
};
using PairedGenerator = std::function<PairedBatch(Rng&)>;

/// Fresh batches of `s` i.i.d. records from `spec`. Records are drawn in
/// order from the rng, so the batch of size s is a prefix of the one of
/// size 2s under the same stream. `spec` must have its censor rate resolved.
BatchGenerator population_batches(SimSpec spec, Index s);

/// Pairs sharing one record and s-1 fresh records each. With
/// `shuffle_shared` the shared record sits at a random position in each.
PairedGenerator population_pairs(SimSpec spec, Index s, bool shuffle_shared = false);

/// Number of batch-means blocks used for Monte-Carlo standard errors.
inline constexpr Index kMcBlocks = 20;

struct McOptions {
  Index replications = 20000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Calls fn(i) for i in [0, n) on up to `threads` threads. Rethrows the
/// first exception.
void parallel_for(Index n, unsigned threads, const std::function<void(Index)>& fn);

/// Monte-Carlo estimates at one theta. Standard errors (`*_se`) are
/// batch-means over kMcBlocks blocks; `block_*` hold the per-block estimates.
struct SandwichEstimate {
  Index s = 0;
  Index replications = 0;
  Eigen::VectorXd grad_mean, grad_mean_se;
  Eigen::MatrixXd H, H_se;
  Eigen::MatrixXd Sigma, Sigma_se;
  Eigen::MatrixXd Sigma_s1, Sigma_s1_se;  ///< empty without pairs
  Eigen::MatrixXd identity_gap;     ///< H - s * Sigma
  Eigen::MatrixXd identity_gap_se;  ///< batch-means SE of the difference itself
  Eigen::MatrixXd combined_se;      ///< sqrt(H_se^2 + s^2 Sigma_se^2)
  std::optional<Eigen::MatrixXd> var_fb;  ///< s H^-1 Sigma H^-1, when H is invertible
  std::optional<Eigen::MatrixXd> var_sb;  ///< s^2 H^-1 Sigma_s1 H^-1
  std::vector<Eigen::MatrixXd> block_H, block_Sigma, block_Sigma_s1;
};

/// H_s = E[batch Hessian], Sigma_s = Var[batch gradient] and
/// Sigma_(s|1) = Cov[grad(a), grad(b)] over R pairs; H and Sigma come from
/// batch a. Replication r always uses stream r, so estimates for different
/// theta or s share random numbers.
SandwichEstimate estimate_Hs_Sigmas(const PairedGenerator& generator, const Eigen::VectorXd& theta, Index s,
                                    const McOptions& options);
/// Unpaired variant: Sigma_s1 and var_sb are left empty.
SandwichEstimate estimate_Hs_Sigmas(const BatchGenerator& generator, const Eigen::VectorXd& theta, Index s,
                                    const McOptions& options);

/// Symmetric inverse by eigendecomposition; throws SingularMatrixError when
/// an eigenvalue is below `floor`.
Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& m, double floor = 1e-10);

/// var_FB and var_SB from an estimate; throws SingularMatrixError.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sandwich_variances(const SandwichEstimate& est);

/// Minimum eigenvalue of sum-of-blocks matrix M with a batch-means SE of
/// v^T M_b v along its minimum eigenvector v.
struct EigenGap {
  double min_eig = 0.0;
  double se = 0.0;
};
EigenGap min_eigen_gap(const Eigen::MatrixXd& m, const std::vector<Eigen::MatrixXd>& blocks);

enum class GateStatus { Pass, Fail, Inconclusive };
const char* to_string(GateStatus g) noexcept;

/// R below this makes identity gates inconclusive.
inline constexpr Index kMinGateReplications = 1000;

struct MonotoneStep {
  Index s = 0;  ///< compares H_{2s} with H_s
  double min_eig = 0.0;
  double se = 0.0;
  double trace_increment = 0.0;
  double trace_increment_se = 0.0;
  GateStatus status = GateStatus::Inconclusive;
};

struct MonotoneReport {
  std::vector<Index> s_list;
  std::vector<double> trace, trace_se;  ///< Tr(H_s)
  std::vector<MonotoneStep> steps;      ///< consecutive pairs of s_list
  GateStatus status = GateStatus::Inconclusive;
};

/// For each consecutive (s, s') in s_list: min eigenvalue of H_s' - H_s
/// with a 3-SE non-negativity gate, and the Tr(H_s) sequence.
MonotoneReport verify_convexity_monotone(const std::function<BatchGenerator(Index)>& generator_for,
                                         const Eigen::VectorXd& theta0, const std::vector<Index>& s_list,
                                         const McOptions& options);

struct IdentityCheck {
  Index s = 0;
  double max_abs_gap = 0.0;      ///< max |H - s Sigma|
  double worst_ratio = 0.0;      ///< max |gap| / combined SE over entries
  double worst_paired_ratio = 0.0;  ///< same against the SE of the difference
  GateStatus identity = GateStatus::Inconclusive;
  EigenGap ordering;         ///< s Sigma - s^2 Sigma_s1
  GateStatus ordering_status = GateStatus::Inconclusive;
  bool inflated_se = false;
};

/// Corollary-type identity |H - s Sigma| <= 3 combined SE entrywise (plus
/// 1e-12) and
/// the ordering s Sigma - s^2 Sigma_s1 >= -3 SE.
IdentityCheck check_identities(const SandwichEstimate& est);

struct IdentityReport {
  std::vector<IdentityCheck> checks;
  MonotoneReport monotone;
  GateStatus identity_Hs_sSigmas = GateStatus::Inconclusive;
  GateStatus monotone_H = GateStatus::Inconclusive;
  GateStatus ordering_SB_FB = GateStatus::Inconclusive;
  bool inflated_se = false;
  bool passed() const noexcept;  ///< no gate failed
};

IdentityReport verify_identities(const SimSpec& spec, const Eigen::VectorXd& theta0, const std::vector<Index>& s_list,
                                 const McOptions& options);
void to_json(nlohmann::json& j, const IdentityReport& r);

/// E[grad L^(s)](theta) on a grid with common random numbers across theta.
struct GradientCurve {
  Index s = 0;
  std::vector<double> theta;
  std::vector<double> grad_mean, grad_se, hess_mean;
  /// Root by linear interpolation of grad_mean; nullopt without sign change.
  std::optional<double> root() const;
};
GradientCurve gradient_curve(const BatchGenerator& generator, Index s, const std::vector<double>& theta_grid,
                             const McOptions& options);

struct StrataFit {
  Eigen::VectorXd theta;
  Index iterations = 0;
  double gradient_norm = 0.0;
};

/// Newton's method on (1/m) sum_k L_k(theta), L_k the Cox loss of stratum k
/// (normaliser |stratum|), from theta = 0 with step halving. Converged when
/// ||gradient|| < tol; throws SingularMatrixError or DivergenceError.
StrataFit strata_newton(const Dataset& data, const std::vector<MiniBatch>& strata, double tol = 1e-10,
                        Index max_iterations = 100);
/// Full-sample Cox MLE (a single stratum).
StrataFit cox_mle(const Dataset& data, double tol = 1e-10, Index max_iterations = 100);

/// Strong-convexity and gradient-bound constants for theory_bound:
/// mu = min over grid theta in the ball of lambda_min(mean batch Hessian),
/// D = max batch-gradient norm over grid theta and sampled batches.
struct BoundConstants {
  double mu = 0.0;
  double grad_bound = 0.0;
  Index grid_points = 0;
};
BoundConstants estimate_bound_constants(const BatchGenerator& generator, Index p, double radius, Index grid_per_axis,
                                        const McOptions& options);

struct EfficiencyConfig {
  SimSpec spec;
  Index n = 2048;
  std::vector<Index> batch_sizes{4, 8, 16, 32, 64, 128, 256, 512};
  Index epochs = 200;
  double lr_constant = 4.0;
  double radius = 1e6;
  Index runs = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};
void to_json(nlohmann::json& j, const EfficiencyConfig& c);
void from_json(const nlohmann::json& j, EfficiencyConfig& c);

/// One run: log||theta_hat - theta0||^2 per method, plus the SGD-FB to
/// strata-oracle distance.
struct EfficiencyRun {
  Index run = 0;
  Index s = 0;
  double log_err_sb = 0.0;
  double log_err_fb = 0.0;
  double log_err_strata = 0.0;
  double log_fb_to_strata = 0.0;
  double log_err_coxph = 0.0;
};

struct Summary {
  double q1 = 0.0, median = 0.0, q3 = 0.0, mean = 0.0, min = 0.0, max = 0.0;
};
/// Quartiles by linear interpolation (type 7).
Summary summarize(std::vector<double> values);

struct EfficiencyCell {
  std::string method;  ///< "SB", "FB", "strata", "coxph"
  Index s = 0;
  Summary log_error;
};

struct EfficiencyTable {
  std::vector<EfficiencyRun> runs;
  std::vector<EfficiencyCell> cells;
  double max_log_fb_to_strata = 0.0;
  const EfficiencyCell& cell(const std::string& method, Index s) const;
};

/// Replication study: per run one dataset of n records, and for each s the
/// SGD-SB, SGD-FB and strata estimates, plus the full-sample fit.
EfficiencyTable replication_efficiency_table(const EfficiencyConfig& config);
/// Summaries from existing runs.
std::vector<EfficiencyCell> summarize_runs(const std::vector<EfficiencyRun>& runs);

}  // namespace coxsgd

#endif  // COXSGD_INFERENCE_HPP
