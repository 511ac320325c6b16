#ifndef COXSGD_COX_MLP_HPP
#define COXSGD_COX_MLP_HPP

#include "coxsgd/batching.hpp"
#include "coxsgd/rng.hpp"
#include "coxsgd/survival.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace coxsgd {

/// ReLU network f(x) = W_K f_K(x) + v_K, f_k = relu(W_{k-1} f_{k-1} + v_{k-1}),
/// f_0 = x, with widths (p_0, ..., p_K, 1). K = 0 is the linear model
/// W_0 x + v_0.
///
/// Every weight and bias carries a 0/1 mask; masked entries are held at
/// exactly zero by set_parameters() and receive zero gradient. In theory mode
/// entries are additionally clipped to [-1, 1] after every update, and an
/// optional output bound D clamps |f| <= D.
class MlpCoxModel final : public RelativeRiskModel {
 public:
  /// All-zero parameters, dense mask.
  explicit MlpCoxModel(std::vector<Index> widths);

  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); when `nonzeros`
  /// is given, a uniformly random set of that many parameters is kept and
  /// the rest are masked out.
  static MlpCoxModel initialized(std::vector<Index> widths, Rng& rng, std::optional<Index> nonzeros = std::nullopt);

  Index input_dim() const override { return widths_.front(); }
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override;
  Eigen::VectorXd predict(const Dataset& data) const override;
  /// f for each row of `x`.
  Eigen::VectorXd forward(const RowMatrix& x) const;

  /// K, the number of hidden layers.
  Index depth() const noexcept { return static_cast<Index>(widths_.size()) - 2; }
  const std::vector<Index>& widths() const noexcept { return widths_; }

  const Eigen::MatrixXd& weight(Index k) const { return weights_.at(static_cast<std::size_t>(k)); }
  const Eigen::VectorXd& bias(Index k) const { return biases_.at(static_cast<std::size_t>(k)); }
  const Eigen::MatrixXd& weight_mask(Index k) const { return weight_masks_.at(static_cast<std::size_t>(k)); }
  const Eigen::VectorXd& bias_mask(Index k) const { return bias_masks_.at(static_cast<std::size_t>(k)); }

  /// Overwrite one layer; masks and constraints are re-applied.
  void set_layer(Index k, const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias);

  Index parameter_count() const noexcept;
  Index active_parameter_count() const;

  /// Flat parameter vector: for k = 0..K, W_k row-major followed by v_k.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
  /// 1 for trainable entries, 0 for masked ones, in parameters() layout.
  Eigen::VectorXd mask() const;
  void set_mask(const Eigen::VectorXd& flat_mask);

  bool theory_mode() const noexcept { return theory_mode_; }
  void set_theory_mode(bool on);
  const std::optional<double>& output_bound() const noexcept { return output_bound_; }
  void set_output_bound(std::optional<double> bound) { output_bound_ = bound; }

  /// Zero masked entries; in theory mode also clip to [-1, 1].
  void enforce_constraints();

 private:
  std::vector<Index> widths_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  std::vector<Eigen::MatrixXd> weight_masks_;
  std::vector<Eigen::VectorXd> bias_masks_;
  bool theory_mode_ = false;
  std::optional<double> output_bound_;
};

struct MlpLossGrad {
  double loss = 0.0;
  Index events = 0;
  Eigen::VectorXd gradient;  ///< parameters() layout; masked entries are 0
};

/// Within-batch Cox loss and its backpropagated gradient.
MlpLossGrad batch_loss_grad(const Dataset& data, const MiniBatch& batch, const MlpCoxModel& model);

struct TraceEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  Index probes = 0;
};

/// Gradient oracle for trace estimation: parameters -> stochastic gradient.
/// It is called twice per probe with identical copies of the generator so
/// both sides of a finite difference see the same batch.
using StochasticGradient = std::function<Eigen::VectorXd(const Eigen::VectorXd& params, Rng& rng)>;

/// Hutchinson estimate of tr E[Hessian]: mean over probes of z^T H z with
/// Rademacher z restricted to `mask`, where H z is the central difference
/// of the gradient with step step_scale * (1 + ||params||).
TraceEstimate hutchinson_trace(const StochasticGradient& gradient, const Eigen::VectorXd& params,
                               const Eigen::VectorXd& mask, Index probes, Rng& rng, double step_scale = 1e-4);

/// tr(H_s) at the model's current parameters, each probe using a fresh SB
/// batch of size s from `data`.
TraceEstimate hessian_trace_estimate(const Dataset& data, const MlpCoxModel& model, Index s, Index probes, Rng& rng);

/// Versioned JSON checkpoint: widths, flags, row-major weights and 0/1 mask
/// strings per layer.
nlohmann::json checkpoint_json(const MlpCoxModel& model);
MlpCoxModel model_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const MlpCoxModel& model);
MlpCoxModel load_checkpoint(const std::filesystem::path& path);

}  // namespace coxsgd

#endif  // COXSGD_COX_MLP_HPP
