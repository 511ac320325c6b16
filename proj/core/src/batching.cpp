#include "coxsgd/batching.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace coxsgd {

namespace {

// Stream tags keep the partition, its per-epoch visiting order and SB draws
// from overlapping for a given seed.
constexpr std::uint64_t kPartitionTag = 0xFB00000000000001ull;
constexpr std::uint64_t kEpochOrderTag = 0xFB00000000000002ull;
constexpr std::uint64_t kEpochDrawTag = 0x5B00000000000003ull;

void validate(Index n, Index s) {
  if (s < 2) throw ConfigError("batch size must be at least 2");
  if (s > n) {
    std::ostringstream os;
    os << "batch size " << s << " exceeds the number of records " << n;
    throw ConfigError(os.str());
  }
}

template <class Gen>
void shuffle(std::vector<Index>& v, Gen& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

const char* to_string(Strategy s) noexcept { return s == Strategy::SB ? "SB" : "FB"; }

Strategy parse_strategy(std::string_view name) {
  if (name == "SB" || name == "sb") return Strategy::SB;
  if (name == "FB" || name == "fb") return Strategy::FB;
  throw ConfigError("unknown sampling strategy '" + std::string(name) + "' (expected SB or FB)");
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"strategy", to_string(c.strategy)}, {"s", c.s}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.s = j.at("s").get<Index>();
  c.seed = j.value("seed", std::uint64_t{0});
}

MiniBatch sample_subset(Index n, Index s, Rng& rng) {
  validate(n, s);
  // Floyd: for j = n-s .. n-1 pick t in [0, j]; take t unless already taken, else j.
  std::unordered_set<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(s) * 2);
  for (Index j = n - s; j < n; ++j) {
    const auto t = static_cast<Index>(rng.below(static_cast<std::uint64_t>(j) + 1));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  MiniBatch b;
  b.indices.assign(chosen.begin(), chosen.end());
  std::sort(b.indices.begin(), b.indices.end());
  return b;
}

std::vector<MiniBatch> fixed_partition(Index n, Index s, std::uint64_t seed) {
  validate(n, s);
  std::vector<Index> perm = all_indices(n);
  Rng rng(seed, kPartitionTag);
  shuffle(perm, rng);
  const Index m = n / s;
  if (n % s != 0) {
    std::ostringstream os;
    os << "FB partition: n = " << n << " is not a multiple of s = " << s << "; dropping " << n % s << " records";
    warn(os.str());
  }
  std::vector<MiniBatch> batches(static_cast<std::size_t>(m));
  for (Index b = 0; b < m; ++b) {
    auto& idx = batches[static_cast<std::size_t>(b)].indices;
    idx.assign(perm.begin() + b * s, perm.begin() + (b + 1) * s);
    std::sort(idx.begin(), idx.end());
  }
  return batches;
}

BatchSampler::BatchSampler(SamplerConfig config, Index n) : config_(config), n_(n) {
  validate(n, config.s);
  if (config_.strategy == Strategy::FB) {
    partition_ = fixed_partition(n, config.s, config.seed);
    dropped_ = n % config.s;
  }
}

MiniBatch BatchSampler::draw(std::uint64_t draw_counter) const {
  Rng rng(config_.seed, draw_counter);
  if (config_.strategy == Strategy::SB) return sample_subset(n_, config_.s, rng);
  return partition_[static_cast<std::size_t>(rng.below(partition_.size()))];
}

Index BatchSampler::batches_per_epoch() const noexcept {
  if (config_.strategy == Strategy::FB) return static_cast<Index>(partition_.size());
  return (n_ + config_.s - 1) / config_.s;
}

std::vector<MiniBatch> BatchSampler::epoch(std::uint64_t epoch_index) const {
  std::vector<MiniBatch> out;
  const Index m = batches_per_epoch();
  out.reserve(static_cast<std::size_t>(m));
  if (config_.strategy == Strategy::FB) {
    std::vector<Index> order = all_indices(m);
    Rng rng(config_.seed, stream_tag(kEpochOrderTag, epoch_index));
    shuffle(order, rng);
    for (Index b : order) out.push_back(partition_[static_cast<std::size_t>(b)]);
  } else {
    Rng rng(config_.seed, stream_tag(kEpochDrawTag, epoch_index));
    for (Index b = 0; b < m; ++b) out.push_back(sample_subset(n_, config_.s, rng));
  }
  return out;
}

MiniBatch draw_batch(const SamplerConfig& config, Index n, std::uint64_t draw_counter) {
  return BatchSampler(config, n).draw(draw_counter);
}

double binomial(Index n, Index k) noexcept {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (Index i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

Eigen::VectorXd exact_batch_expectation(const Dataset& data, Index s,
                                        const std::function<Eigen::VectorXd(const MiniBatch&)>& g, double budget) {
  const Index n = data.size();
  validate(n, s);
  const double count = binomial(n, s);
  if (count > budget) {
    std::ostringstream os;
    os << "exact_batch_expectation: C(" << n << ", " << s << ") = " << count << " subsets exceeds the budget of "
       << budget;
    throw std::length_error(os.str());
  }
  MiniBatch batch;
  batch.indices = all_indices(s);
  Eigen::VectorXd sum;
  Index visited = 0;
  while (true) {
    const Eigen::VectorXd v = g(batch);
    if (visited == 0) sum = Eigen::VectorXd::Zero(v.size());
    sum += v;
    ++visited;
    // Next combination in lexicographic order.
    Index i = s - 1;
    while (i >= 0 && batch.indices[static_cast<std::size_t>(i)] == n - s + i) --i;
    if (i < 0) break;
    ++batch.indices[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < s; ++j)
      batch.indices[static_cast<std::size_t>(j)] = batch.indices[static_cast<std::size_t>(j - 1)] + 1;
  }
  return sum / static_cast<double>(visited);
}

}  // namespace coxsgd
