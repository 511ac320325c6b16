#include "coxsgd/experiments.hpp"

#include "coxsgd/cox_linear.hpp"
#include "coxsgd/cox_mlp.hpp"
#include "coxsgd/dataset_io.hpp"
#include "coxsgd/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace coxsgd {

namespace {

constexpr std::uint64_t kTrainTag = 0x7A1Aull;
constexpr std::uint64_t kTestTag = 0x7E57ull;
constexpr std::uint64_t kInitTag = 0x1A17ull;
constexpr std::uint64_t kSamplerTag = 0x5A3Bull;

namespace fs = std::filesystem;
using nlohmann::json;

struct Csv {
  std::ofstream out;
  Csv(const fs::path& path, const std::string& provenance, const std::string& header) : out(path) {
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "# " << provenance << '\n' << header << '\n';
  }
};

std::uint64_t config_seed(const json& cfg) { return cfg.value("seed", std::uint64_t{0}); }
unsigned config_threads(const json& cfg) { return cfg.value("threads", 1u); }

std::string provenance(const json& cfg) { return provenance_line(cfg.dump(), config_seed(cfg)); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

json check(std::string name, bool ok, json detail = json::object()) {
  detail["name"] = std::move(name);
  detail["pass"] = ok;
  return detail;
}

int exit_for(const json& checks) {
  for (const auto& c : checks) {
    if (c.contains("pass") && c.at("pass").is_boolean() && !c.at("pass").get<bool>()) return kExitGateFailure;
  }
  return kExitOk;
}

std::vector<double> theta_grid(const json& g) {
  if (g.is_array()) return g.get<std::vector<double>>();
  const double from = g.at("from").get<double>(), to = g.at("to").get<double>(), step = g.at("step").get<double>();
  if (!(step > 0.0) || !(to >= from)) throw ConfigError("theta_grid needs from <= to and step > 0");
  const auto count = static_cast<Index>(std::llround((to - from) / step)) + 1;
  std::vector<double> v;
  for (Index i = 0; i < count; ++i) v.push_back(from + step * static_cast<double>(i));
  return v;
}

json default_for(std::string_view command) {
  if (command == "simulate") return {{"spec", scalar_protocol()}, {"n", 1000}, {"seed", 0}};
  if (command == "fit") {
    SgdConfig sgd;
    sgd.sampler = {Strategy::SB, 32, 0};
    sgd.schedule = LrSchedule::epoch_polynomial(4.0);
    sgd.epochs = 50;
    return {{"data", nullptr},  {"test_data", nullptr}, {"spec", regression_protocol(10)},
            {"n", 2048},        {"test_n", 0},          {"model", {{"type", "linear"}}},
            {"sgd", sgd},       {"init", nullptr},      {"replications", 1},
            {"seed", 0},        {"threads", 1}};
  }
  if (command == "pop-gradient") {
    return {{"spec", scalar_protocol()},
            {"batch_sizes", {2, 4, 8, 16, 32, 64, 128}},
            {"theta_grid", {{"from", 0.5}, {"to", 1.5}, {"step", 0.05}}},
            {"replications", 20000},
            {"root_tolerance", 0.02},
            {"seed", 0},
            {"threads", 1}};
  }
  if (command == "scaling-rule") {
    ScalingRuleConfig c;
    c.spec = nonlinear_protocol();
    json j = c;
    j["threads"] = 1;
    return j;
  }
  if (command == "batch-efficiency") {
    EfficiencyConfig c;
    c.spec = regression_protocol(10);
    json j = c;
    j["threads"] = 1;
    j["fb_strata_threshold"] = -6.0;
    return j;
  }
  if (command == "verify-identities") {
    return {{"spec", scalar_protocol()}, {"batch_sizes", {2, 4, 8}}, {"replications", 20000},
            {"theta", nullptr},          {"seed", 0},                {"threads", 1}};
  }
  throw ConfigError("unknown command '" + std::string(command) + "'");
}

Dataset load_or_simulate(const json& cfg, const char* path_key, const char* n_key, const SimSpec& spec,
                         std::uint64_t tag) {
  if (cfg.contains(path_key) && cfg.at(path_key).is_string()) return read_dataset_csv(fs::path(cfg.at(path_key).get<std::string>()));
  const Index n = cfg.value(n_key, Index{0});
  if (n <= 0) return Dataset{};
  Rng rng(config_seed(cfg), tag);
  return simulate_dataset(spec, n, rng);
}

CommandResult cmd_simulate(const json& cfg, const fs::path& out) {
  const SimSpec spec = resolve_censoring(cfg.at("spec").get<SimSpec>(), config_seed(cfg));
  const Index n = cfg.at("n").get<Index>();
  if (n < 1) throw ConfigError("n must be positive");
  Rng rng(config_seed(cfg), kTrainTag);
  const Dataset data = simulate_dataset(spec, n, rng);
  write_dataset_csv(out / "data.csv", data, provenance(cfg));
  CommandResult res;
  res.summary = {{"n", n},
                 {"spec", spec},
                 {"events", data.event_count()},
                 {"censoring_fraction", 1.0 - static_cast<double>(data.event_count()) / static_cast<double>(n)}};
  return res;
}

CommandResult cmd_fit(const json& cfg, const fs::path& out, unsigned threads) {
  const std::uint64_t seed = config_seed(cfg);
  const bool need_spec = !(cfg.contains("data") && cfg.at("data").is_string());
  SimSpec spec;
  if (need_spec || cfg.value("test_n", Index{0}) > 0) spec = resolve_censoring(cfg.at("spec").get<SimSpec>(), seed);
  const Dataset train = load_or_simulate(cfg, "data", "n", spec, kTrainTag);
  const Dataset test = load_or_simulate(cfg, "test_data", "test_n", spec, kTestTag);
  if (train.empty()) throw ConfigError("fit: no training data");
  const Index p = train.dim();
  if (!test.empty() && test.dim() != p) throw ConfigError("fit: test data dimension differs from training data");

  SgdConfig sgd = cfg.at("sgd").get<SgdConfig>();
  const Index reps = cfg.value("replications", Index{1});
  if (reps < 1) throw ConfigError("replications must be positive");
  const json& mcfg = cfg.at("model");
  const std::string type = mcfg.value("type", std::string("linear"));
  if (type != "linear" && type != "mlp") throw ConfigError("model.type must be 'linear' or 'mlp'");

  std::vector<Trajectory> trajs(static_cast<std::size_t>(reps));
  std::optional<MlpCoxModel> first_model;
  parallel_for(reps, threads, [&](Index rep) {
    SgdConfig c = sgd;
    c.sampler.seed = stream_tag(kSamplerTag, sgd.sampler.seed ^ seed, static_cast<std::uint64_t>(rep));
    DatasetBatches source(train, c.sampler);
    if (type == "linear") {
      Eigen::VectorXd init = Eigen::VectorXd::Zero(p);
      if (cfg.contains("init") && cfg.at("init").is_array()) {
        const auto v = cfg.at("init").get<std::vector<double>>();
        if (static_cast<Index>(v.size()) != p) throw ConfigError("init must have length p");
        init = Eigen::Map<const Eigen::VectorXd>(v.data(), p);
      }
      Evaluator eval;
      if (!test.empty()) eval = [&test](const Eigen::VectorXd& th) { return full_loss(test, LinearCoxModel(th)).value; };
      trajs[static_cast<std::size_t>(rep)] = run_sgd(source, LinearCoxObjective(p), init, c, eval);
    } else {
      auto widths = mcfg.at("widths").get<std::vector<Index>>();
      if (widths.empty() || widths.front() != p) throw ConfigError("model.widths must start with the covariate dimension");
      std::optional<Index> nonzeros;
      if (mcfg.contains("nonzeros") && !mcfg.at("nonzeros").is_null()) nonzeros = mcfg.at("nonzeros").get<Index>();
      Rng init_rng(seed, stream_tag(kInitTag, static_cast<std::uint64_t>(rep)));
      MlpCoxModel model = MlpCoxModel::initialized(widths, init_rng, nonzeros);
      model.set_theory_mode(mcfg.value("theory_mode", false));
      if (mcfg.contains("output_bound") && !mcfg.at("output_bound").is_null()) {
        model.set_output_bound(mcfg.at("output_bound").get<double>());
      }
      model.enforce_constraints();
      MlpCoxModel evaluator_model = model;
      Evaluator eval;
      if (!test.empty()) {
        eval = [&test, &evaluator_model](const Eigen::VectorXd& th) {
          evaluator_model.set_parameters(th);
          return full_loss(test, evaluator_model).value;
        };
      }
      trajs[static_cast<std::size_t>(rep)] = run_sgd(source, MlpCoxObjective(model), model.parameters(), c, eval);
      if (rep == 0) {
        model.set_parameters(trajs[0].final_theta);
        first_model = model;
      }
    }
  });

  const Index q = trajs.front().final_theta.size();
  std::ostringstream header;
  header << "replication,t,epoch,loss";
  for (Index k = 1; k <= q; ++k) header << ",theta_" << k;
  header << ",averaged";
  Csv csv(out / "trajectory.csv", provenance(cfg), header.str());
  json finals = json::array();
  for (Index rep = 0; rep < reps; ++rep) {
    const Trajectory& tr = trajs[static_cast<std::size_t>(rep)];
    for (const auto& pt : tr.points) {
      auto row = [&](const Eigen::VectorXd& v, int averaged) {
        csv.out << rep << ',' << pt.t << ',' << pt.epoch << ',' << pt.loss;
        for (Index k = 0; k < v.size(); ++k) csv.out << ',' << v(k);
        csv.out << ',' << averaged << '\n';
      };
      row(pt.theta, 0);
      if (pt.averaged.size() > 0) row(pt.averaged, 1);
    }
    json f{{"replication", rep},
           {"iterations", tr.iterations},
           {"projection_hits", tr.projection_hits},
           {"final_loss", tr.points.empty() ? json() : json(tr.points.back().loss)}};
    if (type == "linear") f["theta"] = std::vector<double>(tr.final_theta.data(), tr.final_theta.data() + q);
    finals.push_back(f);
  }
  if (first_model) save_checkpoint(out / "model.json", *first_model);
  CommandResult res;
  res.summary = {{"model", type}, {"n_train", train.size()}, {"n_test", test.size()}, {"runs", finals}};
  return res;
}

CommandResult cmd_pop_gradient(const json& cfg, const fs::path& out, unsigned threads) {
  const std::uint64_t seed = config_seed(cfg);
  const SimSpec spec = resolve_censoring(cfg.at("spec").get<SimSpec>(), seed);
  if (spec.p != 1 || spec.risk != RiskFunction::Linear) throw ConfigError("pop-gradient needs a scalar linear spec");
  const double theta0 = spec.theta0(0);
  const auto sizes = cfg.at("batch_sizes").get<std::vector<Index>>();
  const auto grid = theta_grid(cfg.at("theta_grid"));
  McOptions opt;
  opt.replications = cfg.at("replications").get<Index>();
  opt.seed = seed;
  opt.threads = threads;
  const double tol = cfg.value("root_tolerance", 0.02);

  Csv csv(out / "pop_gradient.csv", provenance(cfg), "s,theta,grad_mean,grad_se,hess_mean");
  json per_s = json::array();
  bool roots_ok = true;
  std::vector<double> slopes;
  for (Index s : sizes) {
    const GradientCurve c = gradient_curve(population_batches(spec, s), s, grid, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      csv.out << s << ',' << grid[k] << ',' << c.grad_mean[k] << ',' << c.grad_se[k] << ',' << c.hess_mean[k] << '\n';
    }
    const auto root = c.root();
    // Slope at theta0: mean batch Hessian interpolated on the grid.
    double slope = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      if (grid[k] <= theta0 && theta0 <= grid[k + 1]) {
        const double w = (theta0 - grid[k]) / (grid[k + 1] - grid[k]);
        slope = (1.0 - w) * c.hess_mean[k] + w * c.hess_mean[k + 1];
        break;
      }
    }
    slopes.push_back(slope);
    const bool ok = root.has_value() && std::abs(*root - theta0) <= tol;
    roots_ok = roots_ok && ok;
    per_s.push_back({{"s", s}, {"root", root ? json(*root) : json()}, {"slope_at_theta0", slope}, {"root_ok", ok}});
  }
  bool increasing = true;
  for (std::size_t k = 1; k < slopes.size(); ++k) increasing = increasing && slopes[k] > slopes[k - 1];
  json checks = json::array();
  checks.push_back(check("roots_within_tolerance", roots_ok, {{"tolerance", tol}}));
  checks.push_back(check("slope_increasing_in_s", increasing));
  if (slopes.size() >= 3) {
    const double first = slopes[1] - slopes[0];
    const double last = slopes.back() - slopes[slopes.size() - 2];
    checks.push_back(check("increment_shrinks", last < first, {{"first_increment", first}, {"last_increment", last}}));
  }
  CommandResult res;
  res.summary = {{"theta0", theta0}, {"censor_rate", spec.censor_rate}, {"curves", per_s}, {"checks", checks}};
  res.exit_code = exit_for(checks);
  return res;
}

CommandResult cmd_scaling_rule(const json& cfg, const fs::path& out, unsigned threads) {
  ScalingRuleConfig c = cfg.get<ScalingRuleConfig>();
  c.threads = threads;
  const ScalingRuleResult r = run_scaling_rule(c);
  Csv csv(out / "scaling_rule.csv", provenance(cfg), "s,gamma,mode,seed,epoch,test_loss");
  for (const auto& curve : r.curves) {
    for (std::size_t e = 0; e < curve.test_loss.size(); ++e) {
      csv.out << curve.s << ',' << curve.gamma << ',' << curve.mode << ',' << curve.seed << ',' << e << ','
              << curve.test_loss[e] << '\n';
    }
  }
  json checks = json::array();
  if (c.epochs > 0) {
    checks.push_back(check("scaled_gap_within_5_sd", r.scaled_within_band,
                           {{"max_gap", r.max_scaled_gap}, {"reference_sd", r.reference_sd}}));
    checks.push_back(check("fixed_lr_slower_with_larger_batch", r.fixed_strictly_slower,
                           {{"threshold", r.threshold}, {"epochs_to_threshold", r.epochs_to_threshold}}));
  }
  CommandResult res;
  res.summary = {{"reference_sd", r.reference_sd},
                 {"max_scaled_gap", r.max_scaled_gap},
                 {"threshold", r.threshold},
                 {"epochs_to_threshold", r.epochs_to_threshold},
                 {"checks", checks}};
  res.exit_code = exit_for(checks);
  return res;
}

CommandResult cmd_batch_efficiency(const json& cfg, const fs::path& out, unsigned threads) {
  EfficiencyConfig c = cfg.get<EfficiencyConfig>();
  c.threads = threads;
  const double limit = cfg.value("fb_strata_threshold", -6.0);
  const EfficiencyTable t = replication_efficiency_table(c);

  const std::string prov = provenance(cfg);
  {
    Csv csv(out / "runs.csv", prov, "run,s,log_err_sb,log_err_fb,log_err_strata,log_err_coxph,log_fb_to_strata");
    for (const auto& r : t.runs) {
      csv.out << r.run << ',' << r.s << ',' << r.log_err_sb << ',' << r.log_err_fb << ',' << r.log_err_strata << ','
              << r.log_err_coxph << ',' << r.log_fb_to_strata << '\n';
    }
  }
  Csv csv(out / "summary.csv", prov, "method,s,q1,median,q3,mean,min,max");
  for (const auto& cell : t.cells) {
    const auto& l = cell.log_error;
    csv.out << cell.method << ',' << cell.s << ',' << l.q1 << ',' << l.median << ',' << l.q3 << ',' << l.mean << ','
            << l.min << ',' << l.max << '\n';
  }

  json checks = json::array();
  json worst = json::object();
  bool all_below = true;
  for (Index s : c.batch_sizes) {
    double w = -HUGE_VAL;
    Index failing = 0;
    for (const auto& r : t.runs) {
      if (r.s != s) continue;
      w = std::max(w, r.log_fb_to_strata);
      if (!(r.log_fb_to_strata < limit)) ++failing;
    }
    worst[std::to_string(s)] = {{"max", w}, {"runs_failing", failing}};
    all_below = all_below && failing == 0;
  }
  checks.push_back(check("fb_matches_strata", all_below, {{"threshold", limit}, {"per_s", worst}}));
  bool sb_better = true;
  json medians = json::object();
  for (Index s : c.batch_sizes) {
    const double sb = t.cell("SB", s).log_error.median, fb = t.cell("FB", s).log_error.median;
    medians[std::to_string(s)] = {{"SB", sb}, {"FB", fb}};
    sb_better = sb_better && sb <= fb;
  }
  checks.push_back(check("sb_median_le_fb_median", sb_better, {{"medians", medians}}));
  const Index s_lo = *std::min_element(c.batch_sizes.begin(), c.batch_sizes.end());
  const Index s_hi = *std::max_element(c.batch_sizes.begin(), c.batch_sizes.end());
  if (s_lo != s_hi) {
    const double lo = t.cell("FB", s_lo).log_error.median, hi = t.cell("FB", s_hi).log_error.median;
    checks.push_back(check("fb_small_batch_less_efficient", lo > hi, {{"s_small", s_lo}, {"median_small", lo},
                                                                     {"s_large", s_hi}, {"median_large", hi}}));
  }
  CommandResult res;
  res.summary = {{"runs", c.runs}, {"max_log_fb_to_strata", t.max_log_fb_to_strata}, {"checks", checks}};
  res.exit_code = exit_for(checks);
  return res;
}

CommandResult cmd_verify_identities(const json& cfg, const fs::path& out, unsigned threads) {
  const std::uint64_t seed = config_seed(cfg);
  const SimSpec spec = resolve_censoring(cfg.at("spec").get<SimSpec>(), seed);
  Eigen::VectorXd theta = spec.theta0;
  if (cfg.contains("theta") && cfg.at("theta").is_array()) {
    const auto v = cfg.at("theta").get<std::vector<double>>();
    theta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
  }
  if (theta.size() != spec.p) throw ConfigError("verify-identities: theta must have length p");
  McOptions opt;
  opt.replications = cfg.at("replications").get<Index>();
  opt.seed = seed;
  opt.threads = threads;
  const IdentityReport rep = verify_identities(spec, theta, cfg.at("batch_sizes").get<std::vector<Index>>(), opt);
  json j = rep;
  j["provenance"] = provenance(cfg);
  write_json(out / "report.json", j);
  CommandResult res;
  res.summary = j;
  res.exit_code = rep.passed() ? kExitOk : kExitGateFailure;
  return res;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate",     "fit",           "pop-gradient",
                                              "scaling-rule", "batch-efficiency", "verify-identities"};
  return names;
}

json resolve_config(std::string_view command, const json& user, const CommandOptions& options) {
  json cfg = default_for(command);
  if (!user.is_null()) {
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : user.items()) {
      // Typed blocks are replaced whole so stale defaults cannot leak in.
      if (key == "spec" || key == "sgd" || key == "model" || !cfg.contains(key) || !cfg.at(key).is_object()) {
        cfg[key] = value;
      } else {
        cfg[key].merge_patch(value);
      }
    }
  }
  if (options.seed) cfg["seed"] = *options.seed;
  if (options.threads) cfg["threads"] = *options.threads;
  // Validate the typed blocks up front.
  if (cfg.contains("spec")) (void)cfg.at("spec").get<SimSpec>();
  if (command == "fit") (void)cfg.at("sgd").get<SgdConfig>();
  if (command == "scaling-rule") (void)cfg.get<ScalingRuleConfig>();
  if (command == "batch-efficiency") (void)cfg.get<EfficiencyConfig>();
  return cfg;
}

CommandResult run_command(std::string_view command, const json& resolved, const CommandOptions& options) {
  fs::create_directories(options.out);
  write_json(options.out / "config.json", resolved);
  const unsigned threads = std::max(1u, config_threads(resolved));
  CommandResult res;
  if (command == "simulate") {
    res = cmd_simulate(resolved, options.out);
  } else if (command == "fit") {
    res = cmd_fit(resolved, options.out, threads);
  } else if (command == "pop-gradient") {
    res = cmd_pop_gradient(resolved, options.out, threads);
  } else if (command == "scaling-rule") {
    res = cmd_scaling_rule(resolved, options.out, threads);
  } else if (command == "batch-efficiency") {
    res = cmd_batch_efficiency(resolved, options.out, threads);
  } else if (command == "verify-identities") {
    res = cmd_verify_identities(resolved, options.out, threads);
  } else {
    throw ConfigError("unknown command '" + std::string(command) + "'");
  }
  res.summary["exit_code"] = res.exit_code;
  write_json(options.out / "summary.json", res.summary);
  return res;
}

void to_json(json& j, const ScalingRuleConfig& c) {
  j = json{{"spec", c.spec},
           {"n_train", c.n_train},
           {"n_test", c.n_test},
           {"widths", c.widths},
           {"batch_sizes", c.batch_sizes},
           {"base_batch", c.base_batch},
           {"base_lr", c.base_lr},
           {"epochs", c.epochs},
           {"seeds", c.seeds},
           {"threshold_fraction", c.threshold_fraction},
           {"seed", c.seed}};
}

void from_json(const json& j, ScalingRuleConfig& c) {
  ScalingRuleConfig d;
  d.spec = nonlinear_protocol();
  c = d;
  if (j.contains("spec")) c.spec = j.at("spec").get<SimSpec>();
  c.n_train = j.value("n_train", d.n_train);
  c.n_test = j.value("n_test", d.n_test);
  if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<Index>>();
  if (j.contains("batch_sizes")) c.batch_sizes = j.at("batch_sizes").get<std::vector<Index>>();
  c.base_batch = j.value("base_batch", d.base_batch);
  c.base_lr = j.value("base_lr", d.base_lr);
  c.epochs = j.value("epochs", d.epochs);
  c.seeds = j.value("seeds", d.seeds);
  c.threshold_fraction = j.value("threshold_fraction", d.threshold_fraction);
  c.seed = j.value("seed", d.seed);
  if (c.n_train < 2 || c.n_test < 1) throw ConfigError("scaling-rule: n_train >= 2 and n_test >= 1 required");
  if (c.batch_sizes.empty() || c.base_batch < 2) throw ConfigError("scaling-rule: batch sizes must be >= 2");
  if (!(c.base_lr > 0.0)) throw ConfigError("scaling-rule: base_lr must be positive");
  if (c.epochs < 0 || c.seeds < 1) throw ConfigError("scaling-rule: epochs >= 0 and seeds >= 1 required");
  if (c.widths.empty() || c.widths.front() != c.spec.p || c.widths.back() != 1) {
    throw ConfigError("scaling-rule: widths must run from p to 1");
  }
}

ScalingRuleResult run_scaling_rule(const ScalingRuleConfig& config) {
  const SimSpec spec = resolve_censoring(config.spec, config.seed);
  Rng train_rng(config.seed, kTrainTag), test_rng(config.seed, kTestTag);
  const Dataset train = simulate_dataset(spec, config.n_train, train_rng);
  const Dataset test = simulate_dataset(spec, config.n_test, test_rng);

  std::vector<Index> sizes = config.batch_sizes;
  std::sort(sizes.begin(), sizes.end());
  ScalingRuleResult res;
  for (Index k = 0; k < config.seeds; ++k) {
    res.curves.push_back({"seed", config.base_batch, config.base_lr, static_cast<std::uint64_t>(k), {}});
  }
  for (Index s : sizes) {
    const double scaled = config.base_lr * static_cast<double>(s) / static_cast<double>(config.base_batch);
    res.curves.push_back({"scaled", s, scaled, 0, {}});
  }
  for (Index s : sizes) res.curves.push_back({"fixed", s, config.base_lr, 0, {}});

  parallel_for(static_cast<Index>(res.curves.size()), config.threads, [&](Index i) {
    ScalingCurve& curve = res.curves[static_cast<std::size_t>(i)];
    Rng init_rng(config.seed, stream_tag(kInitTag, curve.seed));
    MlpCoxModel model = MlpCoxModel::initialized(config.widths, init_rng);
    MlpCoxModel eval_model = model;
    SgdConfig sc;
    sc.schedule = LrSchedule::constant(curve.gamma);
    sc.epochs = config.epochs;
    sc.sampler = {Strategy::SB, curve.s, stream_tag(kSamplerTag, config.seed, curve.seed)};
    const Trajectory t = run_sgd(train, MlpCoxObjective(model), model.parameters(), sc,
                                 [&](const Eigen::VectorXd& th) {
                                   eval_model.set_parameters(th);
                                   return full_loss(test, eval_model).value;
                                 });
    curve.test_loss = t.epoch_losses;
  });

  const auto epochs = static_cast<std::size_t>(config.epochs) + 1;
  std::vector<const ScalingCurve*> seeds, scaled, fixed;
  for (const auto& c : res.curves) {
    if (c.mode == "seed") seeds.push_back(&c);
    if (c.mode == "scaled") scaled.push_back(&c);
    if (c.mode == "fixed") fixed.push_back(&c);
  }
  if (seeds.size() >= 2) {
    double acc = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      double mean = 0.0;
      for (const auto* c : seeds) mean += c->test_loss[e];
      mean /= static_cast<double>(seeds.size());
      double var = 0.0;
      for (const auto* c : seeds) var += (c->test_loss[e] - mean) * (c->test_loss[e] - mean);
      acc += var / static_cast<double>(seeds.size() - 1);
    }
    res.reference_sd = std::sqrt(acc / static_cast<double>(epochs));
  }
  for (const auto* a : scaled) {
    for (const auto* b : scaled) {
      for (std::size_t e = 0; e < epochs; ++e) {
        res.max_scaled_gap = std::max(res.max_scaled_gap, std::abs(a->test_loss[e] - b->test_loss[e]));
      }
    }
  }
  res.scaled_within_band = res.max_scaled_gap < 5.0 * res.reference_sd;

  const ScalingCurve* base_curve = fixed.front();
  for (const auto* c : fixed) {
    if (c->s == config.base_batch) base_curve = c;
  }
  const auto& base = base_curve->test_loss;
  const double l0 = base.front();
  const double lmin = *std::min_element(base.begin(), base.end());
  res.threshold = l0 - config.threshold_fraction * (l0 - lmin);
  for (const auto* c : fixed) {
    Index hit = config.epochs + 1;
    for (std::size_t e = 0; e < epochs; ++e) {
      if (c->test_loss[e] <= res.threshold) {
        hit = static_cast<Index>(e);
        break;
      }
    }
    res.epochs_to_threshold.push_back(hit);
  }
  res.fixed_strictly_slower = true;
  for (std::size_t k = 1; k < res.epochs_to_threshold.size(); ++k) {
    res.fixed_strictly_slower = res.fixed_strictly_slower && res.epochs_to_threshold[k] > res.epochs_to_threshold[k - 1];
  }
  return res;
}

}  // namespace coxsgd
