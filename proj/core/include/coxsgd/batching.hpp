#ifndef COXSGD_BATCHING_HPP
#define COXSGD_BATCHING_HPP

#include "coxsgd/rng.hpp"
#include "coxsgd/survival.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <vector>

namespace coxsgd {

/// Record indices forming one mini-batch (s >= 2, distinct, in range).
struct MiniBatch {
  std::vector<Index> indices;
  Index size() const noexcept { return static_cast<Index>(indices.size()); }
};

/// SB: a fresh uniform s-subset on every draw.
/// FB: one seeded partition into n/s disjoint batches, reused throughout.
enum class Strategy { SB, FB };

struct SamplerConfig {
  Strategy strategy = Strategy::SB;
  Index s = 2;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
const char* to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

/// Disjoint batches of size s built from a seeded shuffle of 0..n-1. When s
/// does not divide n the last n mod s shuffled records are left out and a
/// warning is emitted.
std::vector<MiniBatch> fixed_partition(Index n, Index s, std::uint64_t seed);

/// s distinct indices uniform over all C(n, s) subsets (Floyd's algorithm),
/// returned in ascending order.
MiniBatch sample_subset(Index n, Index s, Rng& rng);

class BatchSampler {
 public:
  BatchSampler(SamplerConfig config, Index n);

  const SamplerConfig& config() const noexcept { return config_; }
  Index population() const noexcept { return n_; }

  /// The batch for a given draw counter; a pure function of (seed, counter).
  MiniBatch draw(std::uint64_t draw_counter) const;

  /// Iterations making up one epoch: ceil(n/s) for SB, m = floor(n/s) for FB.
  Index batches_per_epoch() const noexcept;

  /// Batches visited in an epoch. FB walks the partition in a seeded random
  /// order (each batch exactly once); SB makes batches_per_epoch() draws.
  std::vector<MiniBatch> epoch(std::uint64_t epoch_index) const;

  /// FB partition (empty for SB).
  const std::vector<MiniBatch>& partition() const noexcept { return partition_; }
  Index dropped() const noexcept { return dropped_; }

 private:
  SamplerConfig config_;
  Index n_;
  std::vector<MiniBatch> partition_;
  Index dropped_ = 0;
};

/// Produces one batch of fresh records per call (online / population mode).
using BatchGenerator = std::function<Dataset(Rng&)>;

/// Free-function form of BatchSampler::draw.
MiniBatch draw_batch(const SamplerConfig& config, Index n, std::uint64_t draw_counter);

/// Exact (1/C(n,s)) * sum over every s-subset of g(subset), by enumeration.
/// Refuses when C(n,s) exceeds `budget`.
Eigen::VectorXd exact_batch_expectation(const Dataset& data, Index s,
                                        const std::function<Eigen::VectorXd(const MiniBatch&)>& g,
                                        double budget = 1e6);

/// C(n, k) in floating point.
double binomial(Index n, Index k) noexcept;

}  // namespace coxsgd

#endif  // COXSGD_BATCHING_HPP
