#include "coxsgd/inference.hpp"

#include "coxsgd/cox_linear.hpp"
#include "coxsgd/sgd.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace coxsgd {

namespace {

constexpr std::uint64_t kMcTag = 0x3C0FFEEull;
constexpr std::uint64_t kGridTag = 0x6121Dull;
constexpr std::uint64_t kEffDataTag = 0xEFF0DA7Aull;
constexpr std::uint64_t kEffSamplerTag = 0xEFF05A3Bull;

Index block_begin(Index r, Index b) { return b * r / kMcBlocks; }

template <class T>
T block_se(const std::vector<T>& blocks) {
  const auto k = static_cast<double>(blocks.size());
  T mean = blocks.front();
  for (std::size_t b = 1; b < blocks.size(); ++b) mean += blocks[b];
  mean /= k;
  T acc = (blocks.front() - mean).array().square().matrix();
  for (std::size_t b = 1; b < blocks.size(); ++b) acc += (blocks[b] - mean).array().square().matrix();
  return (acc / (k * (k - 1.0))).array().sqrt().matrix();
}

double block_se(const std::vector<double>& blocks) {
  const auto k = static_cast<double>(blocks.size());
  double mean = 0.0;
  for (double v : blocks) mean += v;
  mean /= k;
  double acc = 0.0;
  for (double v : blocks) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / (k * (k - 1.0)));
}

Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

struct BlockStats {
  Index n = 0;
  Eigen::VectorXd mean_a, mean_b;
  Eigen::MatrixXd m2_aa, m2_ab, h_sum;
};

BlockStats run_block(const PairedGenerator& gen, const Eigen::VectorXd& theta, Index begin, Index end,
                     std::uint64_t seed, bool paired, Index s) {
  const Index p = theta.size();
  const Index n = end - begin;
  Eigen::MatrixXd ga(n, p), gb(paired ? n : 0, p);
  BlockStats st;
  st.n = n;
  st.h_sum = Eigen::MatrixXd::Zero(p, p);
  std::vector<Index> idx;
  for (Index r = begin; r < end; ++r) {
    Rng rng(seed, stream_tag(kMcTag, static_cast<std::uint64_t>(r)));
    PairedBatch pb = gen(rng);
    if (pb.a.size() != s || (paired && pb.b.size() != s)) throw std::logic_error("generator returned wrong batch size");
    if (pb.a.dim() != p) throw std::invalid_argument("generator/theta dimension mismatch");
    if (static_cast<Index>(idx.size()) != s) idx = all_indices(s);
    LinearCoxTerms ta = evaluate_linear(pb.a, idx, theta, Derivatives::Hessian);
    ga.row(r - begin) = ta.gradient.transpose();
    st.h_sum += ta.hessian;
    if (paired) gb.row(r - begin) = evaluate_linear(pb.b, idx, theta, Derivatives::Gradient).gradient.transpose();
  }
  st.mean_a = ga.colwise().mean().transpose();
  const Eigen::MatrixXd ca = ga.rowwise() - st.mean_a.transpose();
  st.m2_aa = ca.transpose() * ca;
  if (paired) {
    st.mean_b = gb.colwise().mean().transpose();
    const Eigen::MatrixXd cb = gb.rowwise() - st.mean_b.transpose();
    st.m2_ab = ca.transpose() * cb;
  }
  return st;
}

SandwichEstimate estimate_impl(const PairedGenerator& gen, const Eigen::VectorXd& theta, Index s,
                               const McOptions& opt, bool paired) {
  const Index r = opt.replications;
  if (r < 2 * kMcBlocks) throw ConfigError("Monte-Carlo estimates need at least 40 replications");
  if (s < 2) throw ConfigError("batch size must be at least 2");
  const Index p = theta.size();

  std::vector<BlockStats> blocks(static_cast<std::size_t>(kMcBlocks));
  parallel_for(kMcBlocks, opt.threads, [&](Index b) {
    blocks[static_cast<std::size_t>(b)] =
        run_block(gen, theta, block_begin(r, b), block_begin(r, b + 1), opt.seed, paired, s);
  });

  const auto rd = static_cast<double>(r);
  SandwichEstimate est;
  est.s = s;
  est.replications = r;
  Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(p), mean_b = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  std::vector<Eigen::VectorXd> block_grad;
  for (const auto& st : blocks) {
    mean_a += static_cast<double>(st.n) * st.mean_a;
    if (paired) mean_b += static_cast<double>(st.n) * st.mean_b;
    h += st.h_sum;
    block_grad.push_back(st.mean_a);
  }
  mean_a /= rd;
  mean_b /= rd;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(p, p), m2x = Eigen::MatrixXd::Zero(p, p);
  for (const auto& st : blocks) {
    const auto nb = static_cast<double>(st.n);
    const Eigen::VectorXd da = st.mean_a - mean_a;
    m2 += st.m2_aa + nb * da * da.transpose();
    est.block_H.push_back(st.h_sum / nb);
    est.block_Sigma.push_back(sym(st.m2_aa) / (nb - 1.0));
    if (paired) {
      const Eigen::VectorXd db = st.mean_b - mean_b;
      m2x += st.m2_ab + nb * da * db.transpose();
      est.block_Sigma_s1.push_back(sym(st.m2_ab) / (nb - 1.0));
    }
  }
  est.grad_mean = mean_a;
  est.grad_mean_se = block_se(block_grad);
  est.H = sym(h / rd);
  est.H_se = block_se(est.block_H);
  est.Sigma = sym(m2) / (rd - 1.0);
  est.Sigma_se = block_se(est.block_Sigma);
  const auto sd = static_cast<double>(s);
  est.identity_gap = est.H - sd * est.Sigma;
  std::vector<Eigen::MatrixXd> gap_blocks;
  for (std::size_t b = 0; b < blocks.size(); ++b) gap_blocks.push_back(est.block_H[b] - sd * est.block_Sigma[b]);
  est.identity_gap_se = block_se(gap_blocks);
  est.combined_se = (est.H_se.array().square() + sd * sd * est.Sigma_se.array().square()).sqrt().matrix();
  if (paired) {
    est.Sigma_s1 = sym(m2x) / (rd - 1.0);
    est.Sigma_s1_se = block_se(est.block_Sigma_s1);
  }
  try {
    const Eigen::MatrixXd hinv = symmetric_inverse(est.H);
    est.var_fb = sd * hinv * est.Sigma * hinv;
    if (paired) est.var_sb = sd * sd * hinv * est.Sigma_s1 * hinv;
  } catch (const SingularMatrixError&) {
  }
  return est;
}

GateStatus worst(GateStatus a, GateStatus b) {
  if (a == GateStatus::Fail || b == GateStatus::Fail) return GateStatus::Fail;
  if (a == GateStatus::Inconclusive || b == GateStatus::Inconclusive) return GateStatus::Inconclusive;
  return GateStatus::Pass;
}

double log_sq_dist(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::log((a - b).squaredNorm()); }

}  // namespace

BatchGenerator population_batches(SimSpec spec, Index s) {
  spec.validate();
  if (spec.censor_target && spec.censor_rate == 0.0) throw ConfigError("population_batches: censor rate not resolved");
  if (s < 1) throw ConfigError("batch size must be positive");
  return [spec = std::move(spec), s](Rng& rng) { return simulate_dataset(spec, s, rng); };
}

PairedGenerator population_pairs(SimSpec spec, Index s, bool shuffle_shared) {
  spec.validate();
  if (spec.censor_target && spec.censor_rate == 0.0) throw ConfigError("population_pairs: censor rate not resolved");
  if (s < 2) throw ConfigError("batch size must be at least 2");
  return [spec = std::move(spec), s, shuffle_shared](Rng& rng) {
    std::vector<SurvivalRecord> a, b;
    a.reserve(static_cast<std::size_t>(s));
    b.reserve(static_cast<std::size_t>(s));
    a.push_back(draw_record(spec, rng));
    b.push_back(a.front());
    for (Index i = 1; i < s; ++i) a.push_back(draw_record(spec, rng));
    for (Index i = 1; i < s; ++i) b.push_back(draw_record(spec, rng));
    if (shuffle_shared) {
      std::swap(a[0], a[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(s)))]);
      std::swap(b[0], b[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(s)))]);
    }
    return PairedBatch{Dataset::from_records(a), Dataset::from_records(b)};
  };
}

void parallel_for(Index n, unsigned threads, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

SandwichEstimate estimate_Hs_Sigmas(const PairedGenerator& generator, const Eigen::VectorXd& theta, Index s,
                                    const McOptions& options) {
  return estimate_impl(generator, theta, s, options, true);
}

SandwichEstimate estimate_Hs_Sigmas(const BatchGenerator& generator, const Eigen::VectorXd& theta, Index s,
                                    const McOptions& options) {
  PairedGenerator wrapped = [&generator](Rng& rng) { return PairedBatch{generator(rng), Dataset{}}; };
  return estimate_impl(wrapped, theta, s, options, false);
}

Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym(m));
  if (eig.info() != Eigen::Success) throw SingularMatrixError("eigendecomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo >= floor)) {
    std::ostringstream os;
    os << "matrix is not invertible: smallest eigenvalue " << lo << " below floor " << floor;
    throw SingularMatrixError(os.str());
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  return v * eig.eigenvalues().cwiseInverse().asDiagonal() * v.transpose();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sandwich_variances(const SandwichEstimate& est) {
  if (est.Sigma_s1.size() == 0) throw std::invalid_argument("sandwich_variances: estimate has no paired batches");
  const Eigen::MatrixXd hinv = symmetric_inverse(est.H);
  const auto s = static_cast<double>(est.s);
  return {s * hinv * est.Sigma * hinv, s * s * hinv * est.Sigma_s1 * hinv};
}

EigenGap min_eigen_gap(const Eigen::MatrixXd& m, const std::vector<Eigen::MatrixXd>& blocks) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym(m));
  const Eigen::VectorXd v = eig.eigenvectors().col(0);
  std::vector<double> along;
  along.reserve(blocks.size());
  for (const auto& b : blocks) along.push_back(v.dot(b * v));
  return {eig.eigenvalues()(0), blocks.size() > 1 ? block_se(along) : 0.0};
}

const char* to_string(GateStatus g) noexcept {
  switch (g) {
    case GateStatus::Pass: return "pass";
    case GateStatus::Fail: return "fail";
    case GateStatus::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

MonotoneReport verify_convexity_monotone(const std::function<BatchGenerator(Index)>& generator_for,
                                         const Eigen::VectorXd& theta0, const std::vector<Index>& s_list,
                                         const McOptions& options) {
  if (s_list.empty()) throw ConfigError("verify_convexity_monotone: empty batch-size list");
  MonotoneReport rep;
  rep.s_list = s_list;
  std::vector<SandwichEstimate> ests;
  for (Index s : s_list) {
    ests.push_back(estimate_Hs_Sigmas(generator_for(s), theta0, s, options));
    std::vector<double> tr;
    for (const auto& b : ests.back().block_H) tr.push_back(b.trace());
    rep.trace.push_back(ests.back().H.trace());
    rep.trace_se.push_back(block_se(tr));
  }
  const bool small = options.replications < kMinGateReplications;
  rep.status = small ? GateStatus::Inconclusive : GateStatus::Pass;
  for (std::size_t k = 0; k + 1 < ests.size(); ++k) {
    const auto& lo = ests[k];
    const auto& hi = ests[k + 1];
    std::vector<Eigen::MatrixXd> diff;
    std::vector<double> dtr;
    for (std::size_t b = 0; b < lo.block_H.size(); ++b) {
      diff.push_back(hi.block_H[b] - lo.block_H[b]);
      dtr.push_back(diff.back().trace());
    }
    const Eigen::MatrixXd d = hi.H - lo.H;
    MonotoneStep step;
    step.s = s_list[k];
    const EigenGap gap = min_eigen_gap(d, diff);
    step.min_eig = gap.min_eig;
    step.se = gap.se;
    step.trace_increment = d.trace();
    step.trace_increment_se = block_se(dtr);
    if (small) {
      step.status = GateStatus::Inconclusive;
    } else {
      step.status = gap.min_eig >= -3.0 * gap.se - 1e-12 ? GateStatus::Pass : GateStatus::Fail;
    }
    rep.status = worst(rep.status, step.status);
    rep.steps.push_back(step);
  }
  return rep;
}

IdentityCheck check_identities(const SandwichEstimate& est) {
  IdentityCheck c;
  c.s = est.s;
  c.inflated_se = est.replications < kMinGateReplications;
  bool ok = true;
  for (Index i = 0; i < est.identity_gap.rows(); ++i) {
    for (Index j = 0; j < est.identity_gap.cols(); ++j) {
      const double g = std::abs(est.identity_gap(i, j));
      const double se = est.combined_se(i, j);
      const double pse = est.identity_gap_se(i, j);
      c.max_abs_gap = std::max(c.max_abs_gap, g);
      c.worst_ratio = std::max(c.worst_ratio, se > 0.0 ? g / se : (g > 1e-12 ? HUGE_VAL : 0.0));
      c.worst_paired_ratio = std::max(c.worst_paired_ratio, pse > 0.0 ? g / pse : (g > 1e-12 ? HUGE_VAL : 0.0));
      if (g > 3.0 * se + 1e-12) ok = false;
    }
  }
  c.identity = c.inflated_se ? GateStatus::Inconclusive : (ok ? GateStatus::Pass : GateStatus::Fail);
  if (est.Sigma_s1.size() > 0) {
    const auto s = static_cast<double>(est.s);
    std::vector<Eigen::MatrixXd> blocks;
    for (std::size_t b = 0; b < est.block_Sigma.size(); ++b) {
      blocks.push_back(s * est.block_Sigma[b] - s * s * est.block_Sigma_s1[b]);
    }
    c.ordering = min_eigen_gap(s * est.Sigma - s * s * est.Sigma_s1, blocks);
    if (c.inflated_se) {
      c.ordering_status = GateStatus::Inconclusive;
    } else {
      c.ordering_status =
          c.ordering.min_eig >= -3.0 * c.ordering.se - 1e-12 ? GateStatus::Pass : GateStatus::Fail;
    }
  }
  return c;
}

bool IdentityReport::passed() const noexcept {
  return identity_Hs_sSigmas != GateStatus::Fail && monotone_H != GateStatus::Fail &&
         ordering_SB_FB != GateStatus::Fail;
}

IdentityReport verify_identities(const SimSpec& spec, const Eigen::VectorXd& theta0, const std::vector<Index>& s_list,
                                 const McOptions& options) {
  IdentityReport rep;
  rep.inflated_se = options.replications < kMinGateReplications;
  rep.identity_Hs_sSigmas = GateStatus::Pass;
  rep.ordering_SB_FB = GateStatus::Pass;
  for (Index s : s_list) {
    const SandwichEstimate est = estimate_Hs_Sigmas(population_pairs(spec, s), theta0, s, options);
    IdentityCheck c = check_identities(est);
    rep.identity_Hs_sSigmas = worst(rep.identity_Hs_sSigmas, c.identity);
    rep.ordering_SB_FB = worst(rep.ordering_SB_FB, c.ordering_status);
    rep.checks.push_back(c);
  }
  rep.monotone = verify_convexity_monotone([&spec](Index s) { return population_batches(spec, s); }, theta0, s_list,
                                           options);
  rep.monotone_H = rep.monotone.status;
  return rep;
}

void to_json(nlohmann::json& j, const IdentityReport& r) {
  j = nlohmann::json{{"identity_Hs_sSigmas", to_string(r.identity_Hs_sSigmas)},
                     {"monotone_H", to_string(r.monotone_H)},
                     {"ordering_SB_FB", to_string(r.ordering_SB_FB)},
                     {"inflated_se", r.inflated_se},
                     {"passed", r.passed()}};
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"s", c.s},
                      {"max_abs_gap", c.max_abs_gap},
                      {"worst_gap_over_se", std::isfinite(c.worst_ratio) ? nlohmann::json(c.worst_ratio) : nlohmann::json()},
                      {"worst_gap_over_paired_se",
                       std::isfinite(c.worst_paired_ratio) ? nlohmann::json(c.worst_paired_ratio) : nlohmann::json()},
                      {"identity", to_string(c.identity)},
                      {"ordering_min_eig", c.ordering.min_eig},
                      {"ordering_se", c.ordering.se},
                      {"ordering", to_string(c.ordering_status)}});
  }
  j["checks"] = checks;
  nlohmann::json mono = nlohmann::json::array();
  for (std::size_t k = 0; k < r.monotone.s_list.size(); ++k) {
    nlohmann::json e{{"s", r.monotone.s_list[k]}, {"trace_H", r.monotone.trace[k]}, {"trace_H_se", r.monotone.trace_se[k]}};
    if (k < r.monotone.steps.size()) {
      const auto& st = r.monotone.steps[k];
      e["min_eig_next_minus_this"] = st.min_eig;
      e["min_eig_se"] = st.se;
      e["trace_increment"] = st.trace_increment;
      e["status"] = to_string(st.status);
    }
    mono.push_back(e);
  }
  j["monotone"] = mono;
}

std::optional<double> GradientCurve::root() const {
  for (std::size_t i = 0; i + 1 < theta.size(); ++i) {
    const double g0 = grad_mean[i], g1 = grad_mean[i + 1];
    if (g0 == 0.0) return theta[i];
    if ((g0 < 0.0) != (g1 < 0.0)) return theta[i] - g0 * (theta[i + 1] - theta[i]) / (g1 - g0);
  }
  if (!grad_mean.empty() && grad_mean.back() == 0.0) return theta.back();
  return std::nullopt;
}

GradientCurve gradient_curve(const BatchGenerator& generator, Index s, const std::vector<double>& theta_grid,
                             const McOptions& options) {
  const Index r = options.replications;
  if (r < 2 * kMcBlocks) throw ConfigError("Monte-Carlo estimates need at least 40 replications");
  const auto g = theta_grid.size();
  std::vector<std::vector<double>> gsum(static_cast<std::size_t>(kMcBlocks), std::vector<double>(g, 0.0));
  std::vector<std::vector<double>> hsum = gsum;
  parallel_for(kMcBlocks, options.threads, [&](Index b) {
    auto& gs = gsum[static_cast<std::size_t>(b)];
    auto& hs = hsum[static_cast<std::size_t>(b)];
    const std::vector<Index> idx = all_indices(s);
    Eigen::VectorXd th(1);
    for (Index rep = block_begin(r, b); rep < block_begin(r, b + 1); ++rep) {
      Rng rng(options.seed, stream_tag(kMcTag, static_cast<std::uint64_t>(rep)));
      const Dataset batch = generator(rng);
      if (batch.dim() != 1) throw std::invalid_argument("gradient_curve needs a scalar covariate");
      for (std::size_t k = 0; k < g; ++k) {
        th(0) = theta_grid[k];
        const LinearCoxTerms t = evaluate_linear(batch, idx, th, Derivatives::Hessian);
        gs[k] += t.gradient(0);
        hs[k] += t.hessian(0, 0);
      }
    }
  });
  GradientCurve c;
  c.s = s;
  c.theta = theta_grid;
  for (std::size_t k = 0; k < g; ++k) {
    std::vector<double> means;
    double gtot = 0.0, htot = 0.0;
    for (Index b = 0; b < kMcBlocks; ++b) {
      const auto nb = static_cast<double>(block_begin(r, b + 1) - block_begin(r, b));
      means.push_back(gsum[static_cast<std::size_t>(b)][k] / nb);
      gtot += gsum[static_cast<std::size_t>(b)][k];
      htot += hsum[static_cast<std::size_t>(b)][k];
    }
    c.grad_mean.push_back(gtot / static_cast<double>(r));
    c.grad_se.push_back(block_se(means));
    c.hess_mean.push_back(htot / static_cast<double>(r));
  }
  return c;
}

StrataFit strata_newton(const Dataset& data, const std::vector<MiniBatch>& strata, double tol,
                        Index max_iterations) {
  if (strata.empty()) throw std::invalid_argument("strata_newton: no strata");
  const Index p = data.dim();
  const auto m = static_cast<double>(strata.size());
  auto evaluate = [&](const Eigen::VectorXd& theta, Derivatives what) {
    LinearCoxTerms total;
    total.gradient = Eigen::VectorXd::Zero(what == Derivatives::None ? 0 : p);
    total.hessian = Eigen::MatrixXd::Zero(what == Derivatives::Hessian ? p : 0, what == Derivatives::Hessian ? p : 0);
    for (const auto& st : strata) {
      LinearCoxTerms t = evaluate_linear(data, st.indices, theta, what);
      total.loss += t.loss;
      total.events += t.events;
      if (what != Derivatives::None) total.gradient += t.gradient;
      if (what == Derivatives::Hessian) total.hessian += t.hessian;
    }
    total.loss /= m;
    total.gradient /= m;
    total.hessian /= m;
    return total;
  };

  StrataFit fit;
  fit.theta = Eigen::VectorXd::Zero(p);
  for (Index it = 0; it <= max_iterations; ++it) {
    const LinearCoxTerms cur = evaluate(fit.theta, Derivatives::Hessian);
    fit.iterations = it;
    fit.gradient_norm = cur.gradient.norm();
    if (fit.gradient_norm < tol) return fit;
    if (it == max_iterations) break;
    Eigen::MatrixXd hinv;
    try {
      hinv = symmetric_inverse(cur.hessian);
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(std::string("strata_newton: singular Hessian, use larger strata (") + e.what() + ")");
    }
    const Eigen::VectorXd dir = -hinv * cur.gradient;
    const double slope = cur.gradient.dot(dir);
    double step = 1.0;
    for (;;) {
      const Eigen::VectorXd cand = fit.theta + step * dir;
      double loss = HUGE_VAL;
      try {
        loss = evaluate(cand, Derivatives::None).loss;
      } catch (const std::domain_error&) {
      }
      if (loss <= cur.loss + 1e-4 * step * slope + 1e-14 * (1.0 + std::abs(cur.loss))) {
        fit.theta = cand;
        break;
      }
      step *= 0.5;
      if (step < 1e-12) throw DivergenceError("strata_newton: line search failed");
    }
  }
  std::ostringstream os;
  os << "strata_newton: no convergence in " << max_iterations << " iterations (|grad| = " << fit.gradient_norm << ")";
  throw DivergenceError(os.str());
}

StrataFit cox_mle(const Dataset& data, double tol, Index max_iterations) {
  return strata_newton(data, {MiniBatch{all_indices(data.size())}}, tol, max_iterations);
}

BoundConstants estimate_bound_constants(const BatchGenerator& generator, Index p, double radius, Index grid_per_axis,
                                        const McOptions& options) {
  if (grid_per_axis < 2) throw ConfigError("grid needs at least 2 points per axis");
  if (!(radius > 0.0)) throw ConfigError("radius must be positive");
  std::vector<Eigen::VectorXd> grid;
  std::vector<Index> digits(static_cast<std::size_t>(p), 0);
  for (;;) {
    Eigen::VectorXd th(p);
    for (Index k = 0; k < p; ++k) {
      th(k) = -radius + 2.0 * radius * static_cast<double>(digits[static_cast<std::size_t>(k)]) /
                            static_cast<double>(grid_per_axis - 1);
    }
    if (th.norm() <= radius * (1.0 + 1e-12)) grid.push_back(th);
    Index k = 0;
    while (k < p && ++digits[static_cast<std::size_t>(k)] == grid_per_axis) digits[static_cast<std::size_t>(k++)] = 0;
    if (k == p) break;
  }

  std::vector<double> mins(grid.size()), maxg(grid.size());
  parallel_for(static_cast<Index>(grid.size()), options.threads, [&](Index gi) {
    const Eigen::VectorXd& th = grid[static_cast<std::size_t>(gi)];
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
    double gmax = 0.0;
    std::vector<Index> idx;
    for (Index r = 0; r < options.replications; ++r) {
      Rng rng(options.seed, stream_tag(kGridTag, static_cast<std::uint64_t>(r)));
      const Dataset batch = generator(rng);
      if (static_cast<Index>(idx.size()) != batch.size()) idx = all_indices(batch.size());
      const LinearCoxTerms t = evaluate_linear(batch, idx, th, Derivatives::Hessian);
      h += t.hessian;
      gmax = std::max(gmax, t.gradient.norm());
    }
    h /= static_cast<double>(options.replications);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym(h), Eigen::EigenvaluesOnly);
    mins[static_cast<std::size_t>(gi)] = eig.eigenvalues()(0);
    maxg[static_cast<std::size_t>(gi)] = gmax;
  });
  BoundConstants out;
  out.grid_points = static_cast<Index>(grid.size());
  out.mu = *std::min_element(mins.begin(), mins.end());
  out.grad_bound = *std::max_element(maxg.begin(), maxg.end());
  return out;
}

void to_json(nlohmann::json& j, const EfficiencyConfig& c) {
  j = nlohmann::json{{"spec", c.spec},     {"n", c.n},           {"batch_sizes", c.batch_sizes},
                     {"epochs", c.epochs}, {"lr_constant", c.lr_constant}, {"radius", c.radius},
                     {"runs", c.runs},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EfficiencyConfig& c) {
  EfficiencyConfig d;
  d.spec = regression_protocol(10);
  c = d;
  if (j.contains("spec")) c.spec = j.at("spec").get<SimSpec>();
  c.n = j.value("n", d.n);
  if (j.contains("batch_sizes")) c.batch_sizes = j.at("batch_sizes").get<std::vector<Index>>();
  c.epochs = j.value("epochs", d.epochs);
  c.lr_constant = j.value("lr_constant", d.lr_constant);
  c.radius = j.value("radius", d.radius);
  c.runs = j.value("runs", d.runs);
  c.seed = j.value("seed", d.seed);
}

Summary summarize(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(v.begin(), v.end());
  auto q = [&v](double prob) {
    const double h = prob * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  Summary s;
  s.q1 = q(0.25);
  s.median = q(0.5);
  s.q3 = q(0.75);
  s.min = v.front();
  s.max = v.back();
  double acc = 0.0;
  for (double x : v) acc += x;
  s.mean = acc / static_cast<double>(v.size());
  return s;
}

const EfficiencyCell& EfficiencyTable::cell(const std::string& method, Index s) const {
  for (const auto& c : cells) {
    if (c.method == method && c.s == s) return c;
  }
  throw std::out_of_range("no efficiency cell for " + method + " s=" + std::to_string(s));
}

std::vector<EfficiencyCell> summarize_runs(const std::vector<EfficiencyRun>& runs) {
  std::vector<Index> sizes;
  for (const auto& r : runs) {
    if (std::find(sizes.begin(), sizes.end(), r.s) == sizes.end()) sizes.push_back(r.s);
  }
  std::vector<EfficiencyCell> cells;
  for (Index s : sizes) {
    std::vector<double> sb, fb, st, cp;
    for (const auto& r : runs) {
      if (r.s != s) continue;
      sb.push_back(r.log_err_sb);
      fb.push_back(r.log_err_fb);
      st.push_back(r.log_err_strata);
      cp.push_back(r.log_err_coxph);
    }
    cells.push_back({"SB", s, summarize(sb)});
    cells.push_back({"FB", s, summarize(fb)});
    cells.push_back({"strata", s, summarize(st)});
    cells.push_back({"coxph", s, summarize(cp)});
  }
  return cells;
}

EfficiencyTable replication_efficiency_table(const EfficiencyConfig& config) {
  if (config.runs < 1) throw ConfigError("runs must be positive");
  if (config.batch_sizes.empty()) throw ConfigError("no batch sizes");
  const SimSpec spec = resolve_censoring(config.spec, config.seed);
  if (spec.risk != RiskFunction::Linear) throw ConfigError("batch-efficiency needs a linear spec");
  const Eigen::VectorXd& theta0 = spec.theta0;
  const auto ns = static_cast<Index>(config.batch_sizes.size());

  std::vector<EfficiencyRun> runs(static_cast<std::size_t>(config.runs * ns));
  parallel_for(config.runs, config.threads, [&](Index run) {
    Rng data_rng(config.seed, stream_tag(kEffDataTag, static_cast<std::uint64_t>(run)));
    const Dataset data = simulate_dataset(spec, config.n, data_rng);
    const double coxph = log_sq_dist(cox_mle(data).theta, theta0);
    const LinearCoxObjective objective(spec.p);
    const Eigen::VectorXd init = Eigen::VectorXd::Zero(spec.p);
    for (Index k = 0; k < ns; ++k) {
      const Index s = config.batch_sizes[static_cast<std::size_t>(k)];
      SgdConfig sc;
      sc.schedule = LrSchedule::epoch_polynomial(config.lr_constant);
      sc.epochs = config.epochs;
      sc.project = true;
      sc.radius = config.radius;
      sc.sampler.s = s;
      sc.sampler.seed = stream_tag(kEffSamplerTag, static_cast<std::uint64_t>(run), static_cast<std::uint64_t>(s));

      EfficiencyRun out;
      out.run = run;
      out.s = s;
      out.log_err_coxph = coxph;

      sc.sampler.strategy = Strategy::SB;
      out.log_err_sb = log_sq_dist(run_sgd(data, objective, init, sc).final_theta, theta0);

      sc.sampler.strategy = Strategy::FB;
      DatasetBatches fb_source(data, sc.sampler);
      const Eigen::VectorXd fb = run_sgd(fb_source, objective, init, sc).final_theta;
      const Eigen::VectorXd strata = strata_newton(data, fb_source.sampler().partition()).theta;
      out.log_err_fb = log_sq_dist(fb, theta0);
      out.log_err_strata = log_sq_dist(strata, theta0);
      out.log_fb_to_strata = log_sq_dist(fb, strata);
      runs[static_cast<std::size_t>(run * ns + k)] = out;
    }
  });

  EfficiencyTable table;
  table.runs = std::move(runs);
  table.cells = summarize_runs(table.runs);
  table.max_log_fb_to_strata = -HUGE_VAL;
  for (const auto& r : table.runs) table.max_log_fb_to_strata = std::max(table.max_log_fb_to_strata, r.log_fb_to_strata);
  return table;
}

}  // namespace coxsgd
