#ifndef COXSGD_EXPERIMENTS_HPP
#define COXSGD_EXPERIMENTS_HPP

#include "coxsgd/inference.hpp"
#include "coxsgd/simulate.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coxsgd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitGateFailure = 2;

/// Command-line overrides; they take precedence over the JSON config.
struct CommandOptions {
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

struct CommandResult {
  int exit_code = kExitOk;
  nlohmann::json summary;  ///< also written to <out>/summary.json
};

/// Subcommands: simulate, fit, pop-gradient, scaling-rule, batch-efficiency,
/// verify-identities.
const std::vector<std::string>& command_names();

/// Defaults for `command`, merge-patched with `user`, then CLI overrides.
/// Throws ConfigError for unknown commands or invalid blocks.
nlohmann::json resolve_config(std::string_view command, const nlohmann::json& user, const CommandOptions& options);

/// Runs `command` with an already resolved config, writing its outputs and
/// the echoed config into options.out.
CommandResult run_command(std::string_view command, const nlohmann::json& resolved, const CommandOptions& options);

/// Toy Cox-NN scaling-rule study on nonlinear data.
struct ScalingRuleConfig {
  SimSpec spec;
  Index n_train = 2048;
  Index n_test = 2048;
  std::vector<Index> widths{5, 32, 32, 1};
  std::vector<Index> batch_sizes{32, 64, 128, 256, 512};
  Index base_batch = 32;
  double base_lr = 0.1 / 16.0;
  Index epochs = 400;
  Index seeds = 5;
  /// Epochs-to-threshold uses L0 - fraction * (L0 - min loss of the base run).
  double threshold_fraction = 0.2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};
void to_json(nlohmann::json& j, const ScalingRuleConfig& c);
void from_json(const nlohmann::json& j, ScalingRuleConfig& c);

struct ScalingCurve {
  std::string mode;  ///< "scaled", "fixed" or "seed"
  Index s = 0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> test_loss;  ///< index 0 is before training
};

struct ScalingRuleResult {
  std::vector<ScalingCurve> curves;
  double reference_sd = 0.0;     ///< RMS over epochs of the across-seed SD at base_batch
  double max_scaled_gap = 0.0;   ///< max over pairs and epochs of |loss_s - loss_s'| with gamma/s fixed
  double threshold = 0.0;
  std::vector<Index> epochs_to_threshold;  ///< fixed gamma, per batch size; epochs + 1 if never reached
  bool scaled_within_band = false;  ///< max_scaled_gap < 5 reference_sd
  bool fixed_strictly_slower = false;
};

ScalingRuleResult run_scaling_rule(const ScalingRuleConfig& config);

}  // namespace coxsgd

#endif  // COXSGD_EXPERIMENTS_HPP
