#pragma once

// Experiment runner: seeded experiment matrices over the built-in problems,
// statistics against the certified decrease bounds, and CSV/JSON artifacts.
// This is the layer the CLI talks to; everything below it is deterministic
// given (config, seed).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "flash/config.hpp"
#include "flash/derivative_check.hpp"
#include "flash/descent.hpp"
#include "flash/eigensolve.hpp"
#include "flash/flash.hpp"
#include "flash/io.hpp"
#include "flash/problems.hpp"
#include "flash/statistics.hpp"

namespace flash {

enum class ExperimentKind { FlashFiniteSum, FlashStochastic, Scsg, Escape, Bench };

inline const char* experiment_kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::FlashFiniteSum: return "flash-fs";
    case ExperimentKind::FlashStochastic: return "flash-st";
    case ExperimentKind::Scsg: return "scsg";
    case ExperimentKind::Escape: return "escape";
    case ExperimentKind::Bench: return "bench";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "flash-fs") return ExperimentKind::FlashFiniteSum;
  if (s == "flash-st") return ExperimentKind::FlashStochastic;
  if (s == "scsg") return ExperimentKind::Scsg;
  if (s == "escape") return ExperimentKind::Escape;
  if (s == "bench") return ExperimentKind::Bench;
  throw ConfigError("unknown experiment kind: '" + s + "'");
}

// Seed lists accept comma-separated entries where each entry is either a
// number or an inclusive range a..b.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto first = tok.find_first_not_of(" \t");
    if (first == std::string::npos) throw ConfigError("seeds: empty list element");
    const auto last = tok.find_last_not_of(" \t");
    tok = tok.substr(first, last - first + 1);
    const auto dots = tok.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoull(tok));
      } else {
        const std::uint64_t a = std::stoull(tok.substr(0, dots));
        const std::uint64_t b = std::stoull(tok.substr(dots + 2));
        if (b < a) throw ConfigError("seeds: descending range '" + tok + "'");
        if (b - a > 100000) throw ConfigError("seeds: range '" + tok + "' too large");
        for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("seeds: bad entry '" + tok + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("seeds: bad entry '" + tok + "'");
    }
  }
  return out;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::FlashFiniteSum;

  std::string problem_name = "separable-quartic";
  Index dimension = 10;
  Index num_components = 100;  // finite-sum kinds
  double sigma = -1;           // <0: kind-dependent default
  std::uint64_t problem_seed = 1;
  double hessian_noise = 0;  // streaming only
  double l3_override = 0;    // >0 replaces the certified third-order constant

  double eps = -1;    // <0: kind-dependent default
  double eps_h = -1;  // <0: kind-dependent default
  double delta = -1;  // <0: default failure-probability rule
  double delta0 = 0.01;
  Index max_outer = 0;  // 0: driver default cap

  NcConfig nc;
  SignRule sign_rule = SignRule::Rademacher;
  DescentVariant descent = DescentVariant::ThirdOrder;

  Index scsg_outer_batch = 0;  // 0: finite-sum default B = n
  Index scsg_inner_batch = 1;
  Index scsg_epochs = 10;
  double scsg_step = 0;  // 0: certified default step
  double cap_factor = 50;

  std::vector<std::uint64_t> seeds;
  int trials = 1000;                   // escape kind
  std::string bench_assert = "none";   // none | advantage | control
  std::vector<double> start_point;     // empty: origin
  double start_constant = 0;           // used when start_point is {constant}
  bool start_is_constant = false;

  std::string out_dir = ".";
  std::string format = "csv";

  static const std::set<std::string>& allowed_keys() {
    static const std::set<std::string> keys = {
        "experiment",        "seeds",          "trials",
        "out_dir",           "format",         "problem.name",
        "problem.d",         "problem.n",      "problem.sigma",
        "problem.seed",      "problem.hessian_noise",
        "flash.variant",     "flash.K",        "flash.eps",
        "flash.eps_H",       "flash.delta",    "flash.delta0",
        "negcurve.method",   "negcurve.max_iters",
        "negcurve.retries",  "negcurve.minibatch",
        "descent.variant",   "descent.sign_rule",
        "scsg.B",            "scsg.b",         "scsg.K",
        "scsg.eta",          "scsg.cap_factor",
        "run.x0",            "bench.assert",   "override.L3",
    };
    return keys;
  }

  static ExperimentConfig from_config(const KeyValueConfig& kv,
                                      const std::string& kind_from_cli = "") {
    kv.require_known(allowed_keys());
    ExperimentConfig c;

    std::string kind_str = kind_from_cli;
    if (kind_str.empty()) kind_str = kv.get_string("experiment", "");
    if (kind_str.empty() && kv.has("flash.variant")) {
      const auto v = kv.get_string("flash.variant", "");
      if (v == "finite-sum") kind_str = "flash-fs";
      else if (v == "stochastic") kind_str = "flash-st";
      else throw ConfigError("flash.variant must be finite-sum or stochastic, got '" + v + "'");
    }
    if (kind_str.empty()) throw ConfigError("experiment kind not specified");
    c.kind = parse_experiment_kind(kind_str);
    if (kv.has("flash.variant")) {
      const auto v = kv.get_string("flash.variant", "");
      if (v != "finite-sum" && v != "stochastic")
        throw ConfigError("flash.variant must be finite-sum or stochastic, got '" + v + "'");
      const bool wants_streaming = v == "stochastic";
      const bool is_streaming = c.kind == ExperimentKind::FlashStochastic;
      if ((c.kind == ExperimentKind::FlashFiniteSum || is_streaming) &&
          wants_streaming != is_streaming)
        throw ConfigError("flash.variant conflicts with the requested experiment kind");
    }

    c.problem_name = kv.get_string("problem.name", c.problem_name);
    c.dimension = static_cast<Index>(kv.get_int("problem.d", c.dimension));
    c.num_components = static_cast<Index>(kv.get_int("problem.n", c.num_components));
    c.sigma = kv.get_real("problem.sigma", c.sigma);
    c.problem_seed = static_cast<std::uint64_t>(kv.get_int("problem.seed", 1));
    c.hessian_noise = kv.get_real("problem.hessian_noise", 0.0);
    c.l3_override = kv.get_real("override.L3", 0.0);

    c.eps = kv.get_real("flash.eps", c.eps);
    c.eps_h = kv.get_real("flash.eps_H", c.eps_h);
    c.delta = kv.get_real("flash.delta", c.delta);
    c.delta0 = kv.get_real("flash.delta0", c.delta0);
    c.max_outer = static_cast<Index>(kv.get_int("flash.K", 0));

    c.nc.method = parse_nc_method(kv.get_string("negcurve.method", "hvp-power"));
    c.nc.max_iters = static_cast<Index>(kv.get_int("negcurve.max_iters", 0));
    c.nc.retries = static_cast<int>(kv.get_int("negcurve.retries", c.nc.retries));
    c.nc.minibatch = static_cast<Index>(kv.get_int("negcurve.minibatch", c.nc.minibatch));

    c.descent = parse_descent_variant(kv.get_string("descent.variant", "ncd3"));
    c.sign_rule = parse_sign_rule(kv.get_string("descent.sign_rule", "rademacher"));

    c.scsg_outer_batch = static_cast<Index>(kv.get_int("scsg.B", 0));
    c.scsg_inner_batch = static_cast<Index>(kv.get_int("scsg.b", 1));
    c.scsg_epochs = static_cast<Index>(kv.get_int("scsg.K", c.scsg_epochs));
    c.scsg_step = kv.get_real("scsg.eta", 0.0);
    c.cap_factor = kv.get_real("scsg.cap_factor", 50.0);

    if (kv.has("seeds")) c.seeds = parse_seed_list(kv.get_string("seeds", ""));
    c.trials = static_cast<int>(kv.get_int("trials", c.trials));
    c.bench_assert = kv.get_string("bench.assert", c.bench_assert);
    if (c.bench_assert != "none" && c.bench_assert != "advantage" &&
        c.bench_assert != "control")
      throw ConfigError("bench.assert must be none, advantage or control");

    if (kv.has("run.x0")) {
      const auto raw = kv.get_string("run.x0", "origin");
      if (raw != "origin") {
        std::stringstream ss(raw);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used])))
              ++used;
            if (used != tok.size()) throw std::invalid_argument(tok);
            c.start_point.push_back(v);
          } catch (const std::exception&) {
            throw ConfigError("run.x0: bad entry '" + tok + "'");
          }
        }
        if (c.start_point.empty()) throw ConfigError("run.x0: empty");
        if (c.start_point.size() == 1) {
          c.start_is_constant = true;
          c.start_constant = c.start_point[0];
        }
      }
    }

    c.out_dir = kv.get_string("out_dir", c.out_dir);
    c.format = kv.get_string("format", c.format);
    if (c.format != "csv" && c.format != "json")
      throw ConfigError("format must be csv or json, got '" + c.format + "'");

    c.apply_kind_defaults();
    c.validate();
    return c;
  }

  void apply_kind_defaults() {
    const bool streaming = kind == ExperimentKind::FlashStochastic;
    if (sigma < 0) sigma = streaming ? 1.0 : 0.3;
    if (eps < 0) eps = streaming ? 0.25 : 1e-2;
    if (eps_h < 0) eps_h = streaming ? 0.35 : 0.1;
  }

  void validate() const {
    if (dimension <= 0) throw ConfigError("problem.d must be positive");
    if (dimension > 512) throw ConfigError("problem.d must be at most 512 (dense certification limit)");
    if (kind != ExperimentKind::FlashStochastic && num_components <= 0)
      throw ConfigError("problem.n must be positive");
    if (!(sigma >= 0)) throw ConfigError("problem.sigma must be >= 0");
    if (!(eps > 0) || !(eps_h > 0)) throw ConfigError("flash.eps and flash.eps_H must be positive");
    if (trials <= 0) throw ConfigError("trials must be positive");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size()) throw ConfigError("seeds must be distinct");
    if (!start_point.empty() && !start_is_constant &&
        static_cast<Index>(start_point.size()) != dimension)
      throw ConfigError("run.x0 length does not match problem.d");
  }

  Vector<double> start_vector() const {
    if (start_point.empty()) return Vector<double>::Zero(dimension);
    if (start_is_constant) return Vector<double>::Constant(dimension, start_constant);
    Vector<double> x(dimension);
    for (Index i = 0; i < dimension; ++i) x[i] = start_point[static_cast<std::size_t>(i)];
    return x;
  }
};

// ---------------------------------------------------------------------------
// Decrement experiment: repeated single curvature-descent steps at a point
// whose negative curvature is certified by the dense oracle.

struct DecrementReport {
  int trials = 0;
  int successes = 0;  // finder produced a usable direction
  int excluded = 0;   // step left the domain; not counted in the mean
  double mean = 0;
  double std_error = 0;
  double bound = 0;           // certified per-step expectation bound
  double baseline_mean = 0;   // quadratic-smoothness baseline decrement
  double ratio = 0;           // mean / baseline_mean
  double nc_success_rate = 0;
  double certified_min_eigenvalue = 0;
  bool bound_ok = false;
  bool rate_ok = false;
  bool pass = false;
  std::vector<double> decrements;
  std::vector<double> baseline_decrements;
};

template <class Scalar>
DecrementReport decrement_experiment(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                     const SmoothnessConstants<Scalar>& consts,
                                     const Targets<Scalar>& targets, int trials,
                                     const NcConfig& nc, Rng& rng,
                                     bool streaming_finder = false, bool with_baseline = true) {
  if (trials <= 0) throw std::invalid_argument("decrement_experiment: trials must be positive");
  const auto eig = dense_eigensolve<Scalar>(dense_hessian(p, x));
  const double lam = static_cast<double>(eig.min_eigenvalue());
  if (!(lam <= -static_cast<double>(targets.curvature_tol)))
    throw std::invalid_argument(
        "decrement_experiment: start point is not certified negatively curved "
        "(dense min eigenvalue " +
        std::to_string(lam) + " > -" + std::to_string(static_cast<double>(targets.curvature_tol)) + ")");

  DecrementReport rep;
  rep.trials = trials;
  rep.certified_min_eigenvalue = lam;
  rep.bound = static_cast<double>(expected_decrement_bound(consts, targets));

  auto finder = [&](const Vector<Scalar>& at, Rng& r, EvalCounters& counters) {
    return streaming_finder ? approx_nc_streaming(p, at, consts, targets, nc, r, &counters)
                            : approx_nc_full(p, at, consts, targets, nc, r, &counters);
  };
  auto wrap = [&](EvalCounters& counters) {
    return [&](const Vector<Scalar>& at, Rng& r) { return finder(at, r, counters); };
  };

  const Scalar f0 = p.value(x);
  for (int t = 0; t < trials; ++t) {
    Rng tr = rng.child(static_cast<std::uint64_t>(t) * 2 + 1);
    EvalCounters counters;
    StepResult<Scalar> step;
    try {
      step = ncd3_step(p, x, consts, targets, wrap(counters), tr, SignRule::Rademacher);
    } catch (const InconclusiveError&) {
      continue;  // counted as an NC failure
    }
    if (!step.moved) continue;
    ++rep.successes;
    if (!step.stayed_in_domain) {
      ++rep.excluded;
      continue;
    }
    // Average the decrement over both candidate signs; the certified bound is
    // on this sign-averaged quantity.
    const Vector<Scalar> plus = x + step.step_size * step.direction;
    const Vector<Scalar> minus = x - step.step_size * step.direction;
    const double dec =
        static_cast<double>(f0 - (p.value(plus) + p.value(minus)) / Scalar(2));
    rep.decrements.push_back(dec);

    if (with_baseline) {
      Rng br = rng.child(static_cast<std::uint64_t>(t) * 2 + 2);
      EvalCounters bc;
      try {
        const auto base = ncd2_baseline_step(p, x, consts, targets, wrap(bc), br);
        if (base.moved && base.stayed_in_domain)
          rep.baseline_decrements.push_back(static_cast<double>(base.f_before - base.f_after));
      } catch (const InconclusiveError&) {
      }
    }
  }

  rep.nc_success_rate = static_cast<double>(rep.successes) / trials;
  if (!rep.decrements.empty()) {
    rep.mean = mean_of(rep.decrements);
    rep.std_error = standard_error(rep.decrements);
  }
  if (!rep.baseline_decrements.empty()) rep.baseline_mean = mean_of(rep.baseline_decrements);
  rep.ratio = rep.baseline_mean > 0 ? rep.mean / rep.baseline_mean : 0;
  rep.bound_ok = !rep.decrements.empty() && rep.mean >= rep.bound - 2.58 * rep.std_error;
  rep.rate_ok = rate_consistent_with(rep.successes, trials,
                                     1.0 - static_cast<double>(targets.failure_prob), 0.01);
  rep.pass = rep.bound_ok && rep.rate_ok && rep.excluded <= trials / 20;
  return rep;
}

// ---------------------------------------------------------------------------
// Paired evaluation-cost comparison: the third-order step against the
// quadratic baseline, shared seed per pair, both arms dense-certified.

struct AdvantagePair {
  std::uint64_t seed = 0;
  long long tg_ncd3 = 0;
  long long tg_ncd2 = 0;
  bool certified_ncd3 = false;
  bool certified_ncd2 = false;
  bool included = false;
};

struct AdvantageReport {
  std::vector<AdvantagePair> pairs;
  int included = 0;
  int excluded = 0;
  double median_ncd3 = 0;
  double median_ncd2 = 0;
  int wins = 0;       // pairs where the third-order arm used fewer gradients
  int decisive = 0;   // pairs with unequal totals
  double p_value = 1;
  bool advantage = false;
};

template <class Scalar>
AdvantageReport eval_advantage_experiment(const FiniteSumProblem<Scalar>& p,
                                          const Vector<Scalar>& x0,
                                          const SmoothnessConstants<Scalar>& consts,
                                          const Targets<Scalar>& targets,
                                          const FlashConfig& base,
                                          const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 20)
    throw std::invalid_argument("eval_advantage_experiment: need at least 20 seeds");

  AdvantageReport rep;
  std::vector<double> tg3, tg2;
  for (const auto seed : seeds) {
    AdvantagePair pair;
    pair.seed = seed;

    FlashConfig cfg3 = base;
    cfg3.variant = DescentVariant::ThirdOrder;
    Rng r3(seed);
    const auto rec3 = flash_finite_sum(p, x0, consts, targets, cfg3, r3);

    FlashConfig cfg2 = base;
    cfg2.variant = DescentVariant::QuadraticBaseline;
    Rng r2(seed);
    const auto rec2 = flash_finite_sum(p, x0, consts, targets, cfg2, r2);

    pair.tg_ncd3 = rec3.totals.grad_evals;
    pair.tg_ncd2 = rec2.totals.grad_evals;
    pair.certified_ncd3 = rec3.termination == Termination::BotReturned &&
                          certify_sosp(p, rec3.final_point, targets).pass;
    pair.certified_ncd2 = rec2.termination == Termination::BotReturned &&
                          certify_sosp(p, rec2.final_point, targets).pass;
    pair.included = pair.certified_ncd3 && pair.certified_ncd2;
    if (pair.included) {
      ++rep.included;
      tg3.push_back(static_cast<double>(pair.tg_ncd3));
      tg2.push_back(static_cast<double>(pair.tg_ncd2));
      if (pair.tg_ncd3 != pair.tg_ncd2) {
        ++rep.decisive;
        if (pair.tg_ncd3 < pair.tg_ncd2) ++rep.wins;
      }
    } else {
      ++rep.excluded;
    }
    rep.pairs.push_back(pair);
  }
  if (!tg3.empty()) {
    rep.median_ncd3 = median_of(tg3);
    rep.median_ncd2 = median_of(tg2);
  }
  rep.p_value = rep.decisive > 0 ? sign_test_p_value(rep.wins, rep.decisive) : 1.0;
  rep.advantage = rep.included > 0 && rep.median_ncd3 <= rep.median_ncd2 && rep.p_value <= 0.1;
  return rep;
}

// ---------------------------------------------------------------------------
// run_experiment: executes the configured seed matrix and emits artifacts.

struct RunExperimentResult {
  ExperimentKind kind = ExperimentKind::FlashFiniteSum;
  std::string csv_text;
  nlohmann::ordered_json summary;
  std::string csv_path;
  std::string summary_path;
  bool pass = false;
  int exit_code = 1;
};

namespace detail {

inline nlohmann::ordered_json problem_block(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.problem_name;
  j["d"] = cfg.dimension;
  if (cfg.kind != ExperimentKind::FlashStochastic) j["n"] = cfg.num_components;
  j["sigma"] = cfg.sigma;
  j["seed"] = cfg.problem_seed;
  if (cfg.kind == ExperimentKind::FlashStochastic && cfg.hessian_noise > 0)
    j["hessian_noise"] = cfg.hessian_noise;
  return j;
}

inline nlohmann::ordered_json targets_block(const Targets<double>& t) {
  nlohmann::ordered_json j;
  j["eps"] = t.grad_tol;
  j["eps_H"] = t.curvature_tol;
  j["delta"] = t.failure_prob;
  j["delta0"] = t.concentration_prob;
  return j;
}

inline std::string phase_counts_string(const RunRecord<double>& rec) {
  long long term = 0;
  for (const auto& it : rec.iterations)
    if (it.phase == Phase::Terminate) ++term;
  std::ostringstream os;
  os << "scsg-epoch:" << rec.epochs << ";ncd3:" << rec.curvature_steps << ";terminate:" << term;
  return os.str();
}

struct RunRow {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string phase_counts;
  long long tg = 0;
  long long th = 0;
  double f_final = 0;
  double grad_norm = 0;
  double lambda_min = 0;
  bool certified = false;
  std::string termination;
};

inline void append_run_row(CsvWriter& csv, const RunRow& r) {
  csv.append_row({r.experiment, std::to_string(r.seed), r.phase_counts, std::to_string(r.tg),
                  std::to_string(r.th), fmt_real(r.f_final), fmt_real(r.grad_norm),
                  fmt_real(r.lambda_min), r.certified ? "true" : "false", r.termination});
}

inline nlohmann::ordered_json row_json(const RunRow& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  j["seed"] = r.seed;
  j["phase_counts"] = r.phase_counts;
  j["tg_total"] = r.tg;
  j["th_total"] = r.th;
  j["f_final"] = r.f_final;
  j["grad_norm_final"] = r.grad_norm;
  j["lambda_min_final"] = r.lambda_min;
  j["certified"] = r.certified;
  j["termination"] = r.termination;
  return j;
}

inline const std::vector<std::string>& run_columns() {
  static const std::vector<std::string> cols = {
      "experiment",       "seed",      "phase_counts",     "tg_total",  "th_total",
      "f_final",          "grad_norm_final", "lambda_min_final", "certified", "termination"};
  return cols;
}

}  // namespace detail

// Problem + targets instantiated from a parsed config; shared by the runner
// and the certification entry point.
struct BuiltExperiment {
  std::shared_ptr<FiniteSumProblem<double>> fs;        // null for streaming kinds
  std::shared_ptr<Problem<double>> streaming;          // null otherwise
  SmoothnessConstants<double> consts;
  Targets<double> targets;

  const Problem<double>& problem() const { return streaming ? *streaming : *fs; }
};

inline BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  BuiltExperiment b;
  const auto problem_name = parse_problem_name(cfg.problem_name);
  if (cfg.kind == ExperimentKind::FlashStochastic)
    b.streaming = make_stochastic_problem<double>(problem_name, cfg.dimension, cfg.sigma,
                                                  cfg.problem_seed, cfg.hessian_noise);
  else
    b.fs = make_finite_sum_problem<double>(problem_name, cfg.dimension, cfg.num_components,
                                           cfg.sigma, cfg.problem_seed);
  b.consts = b.problem().constants();
  if (cfg.l3_override > 0) b.consts.third_order_lipschitz = cfg.l3_override;

  b.targets.grad_tol = cfg.eps;
  b.targets.curvature_tol = cfg.eps_h;
  b.targets.failure_prob =
      cfg.delta > 0 ? cfg.delta : default_failure_prob(b.consts, cfg.eps_h);
  b.targets.concentration_prob = cfg.delta0;
  b.targets.validate();
  return b;
}

inline RunExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files = true) {
  cfg.validate();
  if (cfg.seeds.empty()) throw ConfigError("no seeds");

  RunExperimentResult out;
  out.kind = cfg.kind;
  const std::string kind_name = experiment_kind_name(cfg.kind);

  const auto built = build_experiment(cfg);
  const auto& fs = built.fs;
  const bool is_streaming = cfg.kind == ExperimentKind::FlashStochastic;
  const Problem<double>& prob = built.problem();
  const SmoothnessConstants<double>& consts = built.consts;
  const Targets<double>& targets = built.targets;

  FlashConfig fcfg;
  fcfg.nc = cfg.nc;
  fcfg.sign_rule = cfg.sign_rule;
  fcfg.variant = cfg.descent;
  fcfg.max_outer = cfg.max_outer;
  fcfg.cap_factor = cfg.cap_factor;

  const Vector<double> x0 = cfg.start_vector();
  auto seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());

  nlohmann::ordered_json summary;
  summary["experiment"] = kind_name;
  summary["problem"] = detail::problem_block(cfg);
  summary["targets"] = detail::targets_block(targets);
  summary["seeds"] = seeds.size();

  CsvWriter csv(detail::run_columns());
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  bool pass = true;

  switch (cfg.kind) {
    case ExperimentKind::FlashFiniteSum:
    case ExperimentKind::FlashStochastic: {
      long long bots = 0, exhausted = 0, aborted = 0, certified = 0;
      std::vector<double> tgs, ths, fvals;
      for (const auto seed : seeds) {
        Rng rng(seed);
        const auto rec = is_streaming
                             ? flash_stochastic(prob, x0, consts, targets, fcfg, rng)
                             : flash_finite_sum(*fs, x0, consts, targets, fcfg, rng);
        std::string why;
        if (!audit_run(rec, 1, &why))
          throw std::logic_error("run audit failed for seed " + std::to_string(seed) + ": " + why);
        detail::RunRow row;
        row.experiment = kind_name;
        row.seed = seed;
        row.phase_counts = detail::phase_counts_string(rec);
        row.tg = rec.totals.grad_evals;
        row.th = rec.totals.hvp_evals;
        row.f_final = prob.value(rec.final_point);
        row.grad_norm = prob.gradient(rec.final_point).norm();
        row.lambda_min = dense_eigensolve<double>(dense_hessian(prob, rec.final_point))
                             .min_eigenvalue();
        row.certified = certify_sosp(prob, rec.final_point, targets).pass;
        row.termination = termination_name(rec.termination);
        detail::append_run_row(csv, row);
        rows_json.push_back(detail::row_json(row));

        if (rec.termination == Termination::BotReturned) ++bots;
        if (rec.termination == Termination::OuterBudgetExhausted) ++exhausted;
        if (rec.termination == Termination::Aborted) ++aborted;
        if (row.certified) ++certified;
        tgs.push_back(static_cast<double>(row.tg));
        ths.push_back(static_cast<double>(row.th));
        fvals.push_back(row.f_final);
      }
      summary["terminations"] = {{"bot-returned", bots},
                                 {"K-exhausted", exhausted},
                                 {"aborted", aborted}};
      summary["certified"] = certified;
      summary["certified_rate"] = static_cast<double>(certified) / static_cast<double>(seeds.size());
      summary["median_tg"] = median_of(tgs);
      summary["median_th"] = median_of(ths);
      summary["mean_f_final"] = mean_of(fvals);
      pass = aborted == 0;
      break;
    }
    case ExperimentKind::Scsg: {
      if (fs == nullptr) throw ConfigError("scsg experiment requires a finite-sum problem");
      ScsgConfig<double> sc;
      sc.outer_batch = cfg.scsg_outer_batch > 0 ? cfg.scsg_outer_batch : fs->num_components();
      sc.inner_batch = cfg.scsg_inner_batch;
      sc.num_epochs = cfg.scsg_epochs;
      sc.cap_factor = cfg.cap_factor;
      sc.step_size = cfg.scsg_step > 0
                         ? cfg.scsg_step
                         : ScsgConfig<double>::from_constants(consts.grad_lipschitz,
                                                              sc.outer_batch, sc.inner_batch)
                               .step_size;
      sc.validate();

      std::vector<EpochSample<double>> samples;
      std::vector<double> final_grads;
      for (const auto seed : seeds) {
        Rng rng(seed);
        EvalCounters counters;
        Vector<double> x = x0;
        for (Index e = 0; e < sc.num_epochs; ++e) {
          EpochSample<double> s;
          s.f_start = prob.value(x);
          ScsgConfig<double> one = sc;
          one.num_epochs = 1;
          const auto ep = scsg_epoch<double>(prob, x, one, nullptr, rng, &counters);
          x = ep.x_out;
          s.f_end = prob.value(x);
          s.grad_sq = prob.gradient(x).squaredNorm();
          samples.push_back(s);
        }
        detail::RunRow row;
        row.experiment = kind_name;
        row.seed = seed;
        row.phase_counts = "scsg-epoch:" + std::to_string(sc.num_epochs);
        row.tg = counters.grad_evals;
        row.th = counters.hvp_evals;
        row.f_final = prob.value(x);
        row.grad_norm = prob.gradient(x).norm();
        row.lambda_min =
            dense_eigensolve<double>(dense_hessian(prob, x)).min_eigenvalue();
        row.certified = certify_sosp(prob, x, targets).pass;
        row.termination = "completed";
        detail::append_run_row(csv, row);
        rows_json.push_back(detail::row_json(row));
        final_grads.push_back(row.grad_norm);
      }
      const auto report = epoch_progress_check(
          samples, sc, consts, is_streaming ? Index(0) : fs->num_components());
      nlohmann::ordered_json pj;
      pj["samples"] = report.samples;
      pj["mean_grad_sq"] = report.mean_grad_sq;
      pj["mean_decrease"] = report.mean_decrease;
      pj["rate"] = report.rate;
      pj["additive"] = report.additive;
      pj["slack"] = report.slack;
      pj["asserted"] = report.asserted;
      pj["pass"] = report.pass;
      if (!report.reason.empty()) pj["reason"] = report.reason;
      summary["progress"] = pj;
      summary["mean_final_grad_norm"] = mean_of(final_grads);
      pass = !report.asserted || report.pass;
      break;
    }
    case ExperimentKind::Escape: {
      if (fs == nullptr) throw ConfigError("escape experiment requires a finite-sum problem");
      Rng rng(seeds.front());
      const auto rep = decrement_experiment(*fs, x0, consts, targets, cfg.trials, cfg.nc, rng);
      CsvWriter escape_csv({"experiment", "trial", "decrement", "ncd2_decrement"});
      const std::size_t n = std::max(rep.decrements.size(), rep.baseline_decrements.size());
      for (std::size_t i = 0; i < n; ++i) {
        escape_csv.append_row(
            {kind_name, std::to_string(i),
             i < rep.decrements.size() ? fmt_real(rep.decrements[i]) : "",
             i < rep.baseline_decrements.size() ? fmt_real(rep.baseline_decrements[i]) : ""});
      }
      out.csv_text = escape_csv.text();
      summary["trials"] = rep.trials;
      summary["mean_decrement"] = rep.mean;
      summary["std_error"] = rep.std_error;
      summary["bound"] = rep.bound;
      summary["baseline_mean"] = rep.baseline_mean;
      summary["ratio"] = rep.ratio;
      summary["nc_success_rate"] = rep.nc_success_rate;
      summary["excluded"] = rep.excluded;
      summary["certified_min_eigenvalue"] = rep.certified_min_eigenvalue;
      summary["pass"] = rep.pass;
      pass = rep.pass;
      break;
    }
    case ExperimentKind::Bench: {
      if (fs == nullptr) throw ConfigError("bench experiment requires a finite-sum problem");
      const auto rep = eval_advantage_experiment(*fs, x0, consts, targets, fcfg, seeds);
      CsvWriter bench_csv({"experiment", "seed", "tg_ncd3", "tg_ncd2", "certified_ncd3",
                           "certified_ncd2", "included"});
      for (const auto& pr : rep.pairs) {
        bench_csv.append_row({kind_name, std::to_string(pr.seed), std::to_string(pr.tg_ncd3),
                              std::to_string(pr.tg_ncd2), pr.certified_ncd3 ? "true" : "false",
                              pr.certified_ncd2 ? "true" : "false",
                              pr.included ? "true" : "false"});
      }
      out.csv_text = bench_csv.text();
      summary["pairs"] = rep.pairs.size();
      summary["included"] = rep.included;
      summary["excluded"] = rep.excluded;
      summary["median_tg_ncd3"] = rep.median_ncd3;
      summary["median_tg_ncd2"] = rep.median_ncd2;
      summary["wins"] = rep.wins;
      summary["decisive"] = rep.decisive;
      summary["sign_test_p"] = rep.p_value;
      summary["advantage"] = rep.advantage;
      if (cfg.bench_assert == "advantage") pass = rep.advantage;
      else if (cfg.bench_assert == "control") pass = rep.p_value > 0.05;
      else pass = rep.included > 0;
      break;
    }
  }

  if (cfg.kind == ExperimentKind::FlashFiniteSum || cfg.kind == ExperimentKind::FlashStochastic ||
      cfg.kind == ExperimentKind::Scsg)
    out.csv_text = csv.text();

  summary["pass"] = pass;
  out.pass = pass;
  out.exit_code = pass ? 0 : 1;
  out.summary = std::move(summary);

  if (write_files) {
    namespace fsys = std::filesystem;
    fsys::create_directories(cfg.out_dir);
    const auto base = fsys::path(cfg.out_dir) / kind_name;
    out.csv_path = (base.string() + "-runs.csv");
    write_text_file(out.csv_path, out.csv_text);
    if (cfg.format == "json" &&
        (cfg.kind == ExperimentKind::FlashFiniteSum ||
         cfg.kind == ExperimentKind::FlashStochastic || cfg.kind == ExperimentKind::Scsg)) {
      write_text_file(base.string() + "-runs.json", rows_json.dump(2) + "\n");
    }
    out.summary_path = base.string() + "-summary.json";
    write_text_file(out.summary_path, out.summary.dump(2) + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Derivative verification over the built-in problem set (used by the CLI and
// the release gate).

struct CheckSummary {
  std::string problem;
  int points = 0;
  double max_gradient_error = 0;
  double max_hvp_error = 0;
  double max_component_error = 0;
  bool pass = false;
};

inline std::vector<CheckSummary> run_derivative_checks(double tol = 1e-5, int points = 100,
                                                       std::uint64_t seed = 7,
                                                       Index dimension = 10,
                                                       Index components = 64) {
  std::vector<CheckSummary> out;
  const TestProblemName names[] = {TestProblemName::SeparableQuartic,
                                   TestProblemName::CoupledSaddle,
                                   TestProblemName::RayleighCubic};
  for (const auto name : names) {
    for (const bool streaming : {false, true}) {
      std::shared_ptr<Problem<double>> p;
      if (streaming)
        p = make_stochastic_problem<double>(name, dimension, 0.4, seed);
      else
        p = make_finite_sum_problem<double>(name, dimension, components, 0.4, seed);
      CheckSummary cs;
      cs.problem = std::string(problem_name_string(name)) + (streaming ? "/streaming" : "/finite-sum");
      cs.points = points;
      cs.pass = true;
      Rng rng(seed ^ (streaming ? 0x9e3779b97f4a7c15ull : 0x2545f4914f6cdd1dull));
      for (int i = 0; i < points; ++i) {
        Vector<double> x(dimension);
        for (Index j = 0; j < dimension; ++j) x[j] = 3.6 * (rng.uniform() - 0.5);
        p->domain().project(x);
        const auto rep = check_derivatives(*p, x, tol, rng, 4);
        cs.max_gradient_error = std::max(cs.max_gradient_error, rep.max_gradient_error);
        cs.max_hvp_error = std::max(cs.max_hvp_error, rep.max_hvp_error);
        cs.max_component_error = std::max(cs.max_component_error, rep.max_component_error);
        cs.pass = cs.pass && rep.pass;
      }
      out.push_back(cs);
    }
  }
  return out;
}

}  // namespace flash
