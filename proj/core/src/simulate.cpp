#include "coxsgd/simulate.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace coxsgd {

namespace {

constexpr std::uint64_t kCalibrationTag = 0xCA11B000ull;

const char* risk_name(RiskFunction r) { return r == RiskFunction::Linear ? "linear" : "nonlinear_v1"; }

}  // namespace

void SimSpec::validate() const {
  if (p < 1) throw ConfigError("SimSpec: p must be positive");
  if (!(x_hi >= x_lo)) throw ConfigError("SimSpec: x_hi must be >= x_lo");
  if (risk == RiskFunction::Linear && theta0.size() != p) throw ConfigError("SimSpec: theta0 must have length p");
  if (risk == RiskFunction::NonlinearV1 && p < 5) throw ConfigError("SimSpec: nonlinear_v1 needs p >= 5");
  if (censor_rate < 0.0 || !std::isfinite(censor_rate)) throw ConfigError("SimSpec: censor_rate must be >= 0");
  if (censor_target && !(*censor_target > 0.0 && *censor_target < 1.0)) {
    throw ConfigError("SimSpec: censor_target must lie in (0, 1)");
  }
  if (tau && !(*tau > 0.0)) throw ConfigError("SimSpec: tau must be positive");
}

void to_json(nlohmann::json& j, const SimSpec& spec) {
  j = nlohmann::json{{"p", spec.p},
                     {"x_lo", spec.x_lo},
                     {"x_hi", spec.x_hi},
                     {"risk", risk_name(spec.risk)},
                     {"censor_rate", spec.censor_rate}};
  if (spec.risk == RiskFunction::Linear) {
    j["theta0"] = std::vector<double>(spec.theta0.data(), spec.theta0.data() + spec.theta0.size());
  }
  if (spec.censor_target) j["censor_target"] = *spec.censor_target;
  if (spec.tau) j["tau"] = *spec.tau;
}

void from_json(const nlohmann::json& j, SimSpec& spec) {
  spec = SimSpec{};
  spec.p = j.value("p", Index{1});
  spec.x_lo = j.value("x_lo", 0.0);
  spec.x_hi = j.value("x_hi", 1.0);
  const std::string risk = j.value("risk", std::string("linear"));
  if (risk == "linear") {
    spec.risk = RiskFunction::Linear;
  } else if (risk == "nonlinear_v1") {
    spec.risk = RiskFunction::NonlinearV1;
  } else {
    throw ConfigError("SimSpec: unknown risk function '" + risk + "'");
  }
  if (j.contains("theta0")) {
    const auto& t = j.at("theta0");
    if (t.is_number()) {
      spec.theta0 = Eigen::VectorXd::Constant(spec.p, t.get<double>());
    } else {
      const auto v = t.get<std::vector<double>>();
      spec.theta0 = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
    }
  } else if (spec.risk == RiskFunction::Linear) {
    spec.theta0 = Eigen::VectorXd::Ones(spec.p);
  }
  spec.censor_rate = j.value("censor_rate", 0.0);
  if (j.contains("censor_target") && !j.at("censor_target").is_null()) spec.censor_target = j.at("censor_target").get<double>();
  if (j.contains("tau") && !j.at("tau").is_null()) spec.tau = j.at("tau").get<double>();
  spec.validate();
}

double true_risk(const SimSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (spec.risk == RiskFunction::Linear) return spec.theta0.dot(x);
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3), x5 = x(4);
  return x1 * x1 * x2 * x2 * x2 + std::log(x3 + 1.0) + std::sqrt(x4 * x5 + 1.0) + std::exp(x5 / 2.0) - 8.6;
}

namespace {

struct LatentDraw {
  Eigen::VectorXd x;
  double event_time;
  double unit_exponential;  // censor time is this / rate
};

LatentDraw draw_latent(const SimSpec& spec, Rng& rng) {
  LatentDraw d;
  d.x.resize(spec.p);
  for (Index j = 0; j < spec.p; ++j) d.x(j) = rng.uniform(spec.x_lo, spec.x_hi);
  // Inverse transform with lambda0 = 1: T* ~ Exponential(rate = exp(f0(X))).
  d.event_time = -std::log(rng.uniform()) / std::exp(true_risk(spec, d.x));
  d.unit_exponential = -std::log(rng.uniform());
  return d;
}

double censor_time(const SimSpec& spec, double unit_exponential, double rate) {
  double c = rate > 0.0 ? unit_exponential / rate : std::numeric_limits<double>::infinity();
  if (spec.tau) c = std::min(c, *spec.tau);
  return c;
}

}  // namespace

SurvivalRecord draw_record(const SimSpec& spec, Rng& rng) {
  LatentDraw d = draw_latent(spec, rng);
  const double c = censor_time(spec, d.unit_exponential, spec.censor_rate);
  SurvivalRecord r;
  r.x = std::move(d.x);
  r.event = d.event_time <= c;
  r.time = r.event ? d.event_time : c;
  return r;
}

Dataset simulate_dataset(const SimSpec& spec, Index n, Rng& rng) {
  spec.validate();
  RowMatrix x(n, spec.p);
  std::vector<double> time(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> event(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    SurvivalRecord r = draw_record(spec, rng);
    x.row(i) = r.x.transpose();
    time[static_cast<std::size_t>(i)] = r.time;
    event[static_cast<std::size_t>(i)] = r.event ? 1 : 0;
  }
  return Dataset(std::move(x), std::move(time), std::move(event));
}

double censoring_fraction(const SimSpec& spec, Index n, Rng& rng) {
  Index censored = 0;
  for (Index i = 0; i < n; ++i) censored += draw_record(spec, rng).event ? 0 : 1;
  return static_cast<double>(censored) / static_cast<double>(n);
}

CensorCalibration calibrate_censoring(const SimSpec& spec, double target, Rng& rng, Index draws, double tolerance) {
  spec.validate();
  if (!(target > 0.01 && target < 0.99)) throw ConfigError("calibrate_censoring: target must lie in (0.01, 0.99)");

  std::vector<double> event_time(static_cast<std::size_t>(draws)), unit_exp(static_cast<std::size_t>(draws));
  for (Index i = 0; i < draws; ++i) {
    LatentDraw d = draw_latent(spec, rng);
    event_time[static_cast<std::size_t>(i)] = d.event_time;
    unit_exp[static_cast<std::size_t>(i)] = d.unit_exponential;
  }
  CensorCalibration out;
  auto fraction = [&](double rate) {
    Index censored = 0;
    for (std::size_t i = 0; i < event_time.size(); ++i) {
      if (event_time[i] > censor_time(spec, unit_exp[i], rate)) ++censored;
    }
    const double f = static_cast<double>(censored) / static_cast<double>(draws);
    out.trace.emplace_back(rate, f);
    return f;
  };

  // Bracket in log-rate; the fraction is non-decreasing in the rate.
  double lo = 1.0, hi = 1.0;
  double f_lo = fraction(lo), f_hi = f_lo;
  while (f_lo > target && lo > 1e-200) f_lo = fraction(lo *= 1e-2);
  while (f_hi < target && hi < 1e200) f_hi = fraction(hi *= 1e2);
  if (f_lo > target || f_hi < target) {
    std::ostringstream os;
    os << "calibrate_censoring: cannot bracket target " << target << " (fraction " << f_lo << " at rate " << lo
       << ", " << f_hi << " at rate " << hi << ")";
    throw std::runtime_error(os.str());
  }

  double best = std::abs(f_lo - target) < std::abs(f_hi - target) ? lo : hi;
  double best_f = best == lo ? f_lo : f_hi;
  while (hi / lo > 1.0 + 1e-12 && std::abs(best_f - target) > 0.1 / static_cast<double>(draws)) {
    const double mid = std::sqrt(lo * hi);
    const double f_mid = fraction(mid);
    if (std::abs(f_mid - target) < std::abs(best_f - target)) best = mid, best_f = f_mid;
    (f_mid < target ? lo : hi) = mid;
  }
  if (std::abs(best_f - target) > tolerance) {
    std::ostringstream os;
    os << "calibrate_censoring: bisection ended at fraction " << best_f << ", outside " << target << " +- "
       << tolerance;
    throw std::runtime_error(os.str());
  }
  const double mid = best, f_mid = best_f;
  out.rate = mid;
  out.achieved = f_mid;
  return out;
}

SimSpec resolve_censoring(SimSpec spec, std::uint64_t seed) {
  if (spec.censor_target) {
    Rng rng(seed, kCalibrationTag);
    spec.censor_rate = calibrate_censoring(spec, *spec.censor_target, rng).rate;
  }
  return spec;
}

SimSpec scalar_protocol() {
  SimSpec s;
  s.p = 1;
  s.x_lo = 0.0;
  s.x_hi = 10.0;
  s.risk = RiskFunction::Linear;
  s.theta0 = Eigen::VectorXd::Ones(1);
  s.censor_target = 0.30;
  return s;
}

SimSpec nonlinear_protocol() {
  SimSpec s;
  s.p = 5;
  s.risk = RiskFunction::NonlinearV1;
  s.censor_target = 0.30;
  return s;
}

SimSpec regression_protocol(Index p) {
  SimSpec s;
  s.p = p;
  s.risk = RiskFunction::Linear;
  s.theta0 = Eigen::VectorXd::Ones(p);
  s.censor_target = 0.30;
  return s;
}

}  // namespace coxsgd
