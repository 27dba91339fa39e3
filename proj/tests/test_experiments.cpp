#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flash/experiments.hpp"

using flash::ExperimentConfig;
using flash::ExperimentKind;
using flash::KeyValueConfig;
using flash::Rng;
using flash::Vector;

namespace {

ExperimentConfig config_from(const std::string& text, const std::string& kind = "") {
  return ExperimentConfig::from_config(KeyValueConfig::from_string(text), kind);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallFs =
    "experiment = flash-fs\n"
    "problem.name = separable-quartic\n"
    "problem.d = 4\n"
    "problem.n = 20\n"
    "problem.sigma = 0.3\n"
    "flash.eps = 0.05\n"
    "flash.eps_H = 0.5\n"
    "flash.K = 500\n"
    "seeds = 1,2\n";

}  // namespace

TEST_CASE("seed lists accept numbers and inclusive ranges") {
  CHECK(flash::parse_seed_list("1,2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(flash::parse_seed_list("4..7") == std::vector<std::uint64_t>{4, 5, 6, 7});
  CHECK(flash::parse_seed_list("1, 4..6, 9") == std::vector<std::uint64_t>{1, 4, 5, 6, 9});
  CHECK_THROWS_AS(flash::parse_seed_list("5..2"), flash::ConfigError);
  CHECK_THROWS_AS(flash::parse_seed_list("a"), flash::ConfigError);
  CHECK_THROWS_AS(flash::parse_seed_list("1,,2"), flash::ConfigError);
}

TEST_CASE("experiment config parsing and validation") {
  const auto c = config_from(kSmallFs);
  CHECK(c.kind == ExperimentKind::FlashFiniteSum);
  CHECK(c.dimension == 4);
  CHECK(c.num_components == 20);
  CHECK(c.eps == 0.05);
  CHECK(c.eps_h == 0.5);
  CHECK(c.max_outer == 500);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});

  // kind-dependent defaults
  const auto st = config_from("experiment = flash-st\nseeds = 1\n");
  CHECK(st.sigma == 1.0);
  CHECK(st.eps == 0.25);
  CHECK(st.eps_h == 0.35);
  const auto fs = config_from("experiment = flash-fs\nseeds = 1\n");
  CHECK(fs.sigma == 0.3);
  CHECK(fs.eps == 0.01);
  CHECK(fs.eps_h == 0.1);

  // the flash.variant spelling may select the kind on its own
  CHECK(config_from("flash.variant = stochastic\nseeds = 1\n").kind ==
        ExperimentKind::FlashStochastic);
  CHECK_THROWS_AS(config_from("experiment = flash-fs\nflash.variant = stochastic\nseeds = 1\n"),
                  flash::ConfigError);

  CHECK_THROWS_WITH_AS(config_from("experiment = flash-fs\nseeds = 1\nbudget = 3\n"),
                       doctest::Contains("unknown key"), flash::ConfigError);
  CHECK_THROWS_WITH_AS(config_from("experiment = flash-fs\nseeds = 1,1\n"),
                       doctest::Contains("distinct"), flash::ConfigError);
  CHECK_THROWS_AS(config_from("experiment = flash-fs\nseeds = 1\nformat = yaml\n"),
                  flash::ConfigError);
  CHECK_THROWS_AS(config_from("experiment = flash-fs\nseeds = 1\nproblem.d = 600\n"),
                  flash::ConfigError);

  // start point forms
  auto cx = config_from("experiment = flash-fs\nseeds = 1\nproblem.d = 3\nrun.x0 = 1.5\n");
  CHECK(cx.start_vector() == Vector<double>::Constant(3, 1.5));
  cx = config_from("experiment = flash-fs\nseeds = 1\nproblem.d = 3\nrun.x0 = 1,0,-1\n");
  Vector<double> want(3);
  want << 1, 0, -1;
  CHECK(cx.start_vector() == want);
  CHECK(config_from("experiment = flash-fs\nseeds = 1\nproblem.d = 3\n").start_vector() ==
        Vector<double>::Zero(3));
  CHECK_THROWS_AS(
      config_from("experiment = flash-fs\nseeds = 1\nproblem.d = 3\nrun.x0 = 1,2\n"),
      flash::ConfigError);
}

TEST_CASE("run_experiment requires seeds") {
  auto c = config_from(kSmallFs);
  c.seeds.clear();
  CHECK_THROWS_WITH_AS(flash::run_experiment(c, false), doctest::Contains("no seeds"),
                       flash::ConfigError);
}

TEST_CASE("run rows use the frozen column order and are sorted by seed") {
  auto c = config_from(kSmallFs);
  c.seeds = {5, 1};  // intentionally unsorted
  const auto res = flash::run_experiment(c, false);
  std::stringstream ss(res.csv_text);
  std::string line;
  REQUIRE(std::getline(ss, line));
  CHECK(line ==
        "experiment,seed,phase_counts,tg_total,th_total,f_final,grad_norm_final,"
        "lambda_min_final,certified,termination");
  REQUIRE(std::getline(ss, line));
  CHECK(line.rfind("flash-fs,1,", 0) == 0);
  REQUIRE(std::getline(ss, line));
  CHECK(line.rfind("flash-fs,5,", 0) == 0);
  CHECK_FALSE(std::getline(ss, line));
}

TEST_CASE("identical configs produce byte-identical artifacts") {
  const auto c = config_from(kSmallFs);
  const auto a = flash::run_experiment(c, false);
  const auto b = flash::run_experiment(c, false);
  CHECK(a.csv_text == b.csv_text);
  CHECK(a.summary.dump() == b.summary.dump());
  CHECK(a.exit_code == 0);
  CHECK(a.summary.at("pass").get<bool>());
  CHECK(a.summary.at("terminations").at("aborted").get<int>() == 0);
}

TEST_CASE("artifacts are written to the output directory") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "flash_experiments_test";
  fs::remove_all(dir);
  auto c = config_from(kSmallFs);
  c.out_dir = dir.string();
  c.format = "json";
  const auto res = flash::run_experiment(c, true);
  CHECK(read_file(res.csv_path) == res.csv_text);
  CHECK(read_file(res.summary_path) == res.summary.dump(2) + "\n");
  CHECK(fs::exists(dir / "flash-fs-runs.json"));
  fs::remove_all(dir);
}

TEST_CASE("stochastic run experiment certifies its seeds") {
  const auto c = config_from(
      "experiment = flash-st\n"
      "problem.d = 4\n"
      "problem.sigma = 0.5\n"
      "flash.eps = 0.25\n"
      "flash.eps_H = 0.35\n"
      "flash.K = 1000\n"
      "seeds = 1..3\n");
  const auto res = flash::run_experiment(c, false);
  CHECK(res.exit_code == 0);
  CHECK(res.summary.at("certified").get<int>() >= 2);
  CHECK(res.summary.at("terminations").at("bot-returned").get<int>() >= 2);
}

TEST_CASE("scsg run experiment reports the per-epoch progress bound") {
  const auto c = config_from(
      "experiment = scsg\n"
      "problem.name = separable-quartic\n"
      "problem.d = 5\n"
      "problem.n = 64\n"
      "problem.sigma = 0.3\n"
      "flash.eps = 0.01\n"
      "flash.eps_H = 0.5\n"
      "scsg.K = 8\n"
      "run.x0 = 1.5\n"
      "seeds = 1..5\n");
  const auto res = flash::run_experiment(c, false);
  CHECK(res.exit_code == 0);
  const auto& progress = res.summary.at("progress");
  CHECK(progress.at("samples").get<int>() == 40);
  CHECK(progress.at("asserted").get<bool>());
  CHECK(progress.at("pass").get<bool>());
  CHECK(progress.at("additive").get<double>() == 0.0);  // full outer batch
  // rows say completed, never a driver termination
  CHECK(res.csv_text.find("completed") != std::string::npos);
  CHECK(res.csv_text.find("bot-returned") == std::string::npos);
}

TEST_CASE("escape experiment reproduces the one-dimensional landmark values") {
  const auto c = config_from(
      "experiment = escape\n"
      "problem.name = separable-quartic\n"
      "problem.d = 1\n"
      "problem.n = 16\n"
      "problem.sigma = 0\n"
      "flash.eps = 0.1\n"
      "flash.eps_H = 0.5\n"
      "trials = 400\n"
      "seeds = 1\n");
  const auto res = flash::run_experiment(c, false);
  CHECK(res.exit_code == 0);
  const auto& s = res.summary;
  // at d = 1 every sign-averaged decrement equals the analytic value exactly
  CHECK(s.at("mean_decrement").get<double>() == doctest::Approx(0.109375).epsilon(1e-12));
  CHECK(s.at("bound").get<double>() == doctest::Approx(0.015625).epsilon(1e-12));
  CHECK(s.at("baseline_mean").get<double>() ==
        doctest::Approx(8.673020405092592e-4).epsilon(1e-9));
  CHECK(s.at("ratio").get<double>() == doctest::Approx(126.1).epsilon(0.01));
  CHECK(s.at("nc_success_rate").get<double>() == 1.0);
  CHECK(s.at("pass").get<bool>());
}

TEST_CASE("escape experiment refuses uncertified start points") {
  const auto c = config_from(
      "experiment = escape\n"
      "problem.name = separable-quartic\n"
      "problem.d = 4\n"
      "problem.n = 16\n"
      "flash.eps = 0.1\n"
      "flash.eps_H = 0.5\n"
      "trials = 10\n"
      "run.x0 = 1\n"  // minimizer: dense oracle sees strictly positive curvature
      "seeds = 1\n");
  CHECK_THROWS_WITH_AS(flash::run_experiment(c, false), doctest::Contains("certified"),
                       std::invalid_argument);
}

TEST_CASE("decrement experiment works against the streaming finder too") {
  auto p = flash::make_stochastic_problem<double>(flash::TestProblemName::SeparableQuartic, 4,
                                                  0.3, 7);
  flash::Targets<double> t;
  t.grad_tol = 0.1;
  t.curvature_tol = 0.5;
  t.failure_prob = 0.1;
  flash::NcConfig nc;
  nc.method = flash::NcMethod::Oja;
  nc.minibatch = 4;
  Rng rng(3);
  const Vector<double> origin = Vector<double>::Zero(4);
  const auto rep = flash::decrement_experiment(*p, origin, p->constants(), t, 60, nc, rng,
                                               /*streaming_finder=*/true);
  CHECK(rep.successes >= 54);
  CHECK(rep.bound_ok);
  CHECK(rep.mean > rep.bound);
}

TEST_CASE("bench experiment shows the third-order advantage and loses it in the control") {
  const std::string base =
      "experiment = bench\n"
      "problem.name = separable-quartic\n"
      "problem.d = 4\n"
      "problem.n = 24\n"
      "problem.sigma = 0.3\n"
      "flash.eps = 0.05\n"
      "flash.eps_H = 0.35\n"
      "flash.K = 2000\n"
      "seeds = 1..20\n";

  const auto plain = flash::run_experiment(config_from(base + "bench.assert = advantage\n"),
                                           false);
  CHECK(plain.exit_code == 0);
  CHECK(plain.summary.at("advantage").get<bool>());
  CHECK(plain.summary.at("included").get<int>() >= 15);
  CHECK(plain.summary.at("median_tg_ncd3").get<double>() <=
        plain.summary.at("median_tg_ncd2").get<double>());
  CHECK(plain.summary.at("sign_test_p").get<double>() <= 0.1);

  // Degenerate control: with the third-order constant inflated so both step
  // sizes coincide, the paired totals should be statistically
  // indistinguishable, so asserting the advantage must fail.
  const double l2 = 12, eps_h = 0.35;
  std::ostringstream ctrl;
  ctrl << base << "override.L3 = " << 3 * l2 * l2 / eps_h << "\nbench.assert = advantage\n";
  const auto control = flash::run_experiment(config_from(ctrl.str()), false);
  CHECK(control.summary.at("sign_test_p").get<double>() > 0.1);
  CHECK(control.exit_code == 1);

  // the same control passes when asserted as a control
  std::ostringstream ctrl2;
  ctrl2 << base << "override.L3 = " << 3 * l2 * l2 / eps_h << "\nbench.assert = control\n";
  CHECK(flash::run_experiment(config_from(ctrl2.str()), false).exit_code == 0);
}

TEST_CASE("eval advantage rejects short seed lists") {
  auto p = flash::make_finite_sum_problem<double>(flash::TestProblemName::SeparableQuartic, 4,
                                                  24, 0.3, 1);
  flash::Targets<double> t;
  t.grad_tol = 0.05;
  t.curvature_tol = 0.35;
  t.failure_prob = 0.05;
  flash::FlashConfig cfg;
  const Vector<double> origin = Vector<double>::Zero(4);
  CHECK_THROWS_WITH_AS(
      flash::eval_advantage_experiment(*p, origin, p->constants(), t, cfg, {1, 2, 3}),
      doctest::Contains("20 seeds"), std::invalid_argument);
}

TEST_CASE("derivative checks pass on every built-in problem") {
  const auto summaries = flash::run_derivative_checks(1e-5, 20, 11, 6, 48);
  CHECK(summaries.size() == 6);
  int streaming_seen = 0;
  for (const auto& s : summaries) {
    CAPTURE(s.problem);
    CHECK(s.pass);
    CHECK(s.max_gradient_error <= 1e-5);
    CHECK(s.max_hvp_error <= 1e-5);
    CHECK(s.max_component_error <= 1e-5);
    if (s.problem.find("/streaming") != std::string::npos) ++streaming_seen;
  }
  CHECK(streaming_seen == 3);
}
