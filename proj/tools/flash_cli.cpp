// Command-line harness around the library: derivative checks, escape and
// epoch experiments, end-to-end runs, point certification, the paired
// baseline comparison, and the full release gate.
//
// Config files are plain `key = value` lines; `#` starts a comment.  The
// accepted keys are listed in the README and rejected strictly (a typo in a
// key is an error, not a silent default).

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flash/acceptance.hpp"
#include "flash/experiments.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string format;
};

void add_common(CLI::App* sub, CommonOpts& opts, bool config_required = true) {
  auto* c = sub->add_option("--config", opts.config_path, "key = value config file");
  if (config_required) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", opts.seed, "replace the config seed list with this single seed");
  sub->add_option("--out-dir", opts.out_dir, "directory for CSV/JSON artifacts");
  sub->add_option("--format", opts.format, "row artifact format")
      ->check(CLI::IsMember({"csv", "json"}));
}

flash::ExperimentConfig load_config(const CommonOpts& opts, const std::string& kind = "") {
  auto cfg = flash::ExperimentConfig::from_config(
      flash::KeyValueConfig::from_file(opts.config_path), kind);
  if (opts.seed) cfg.seeds = {*opts.seed};
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.format.empty()) cfg.format = opts.format;
  cfg.validate();
  return cfg;
}

int do_experiment(const flash::ExperimentConfig& cfg) {
  const auto res = flash::run_experiment(cfg, /*write_files=*/true);
  std::cout << res.summary.dump(2) << "\n";
  std::cerr << "rows: " << res.csv_path << "\nsummary: " << res.summary_path << "\n";
  return res.exit_code;
}

int do_check(double tol, int points, std::uint64_t seed) {
  const auto summaries = flash::run_derivative_checks(tol, points, seed);
  bool all_ok = true;
  for (const auto& s : summaries) {
    all_ok = all_ok && s.pass;
    std::cout << (s.pass ? "[PASS] " : "[FAIL] ") << s.problem << ": grad "
              << flash::fmt_real(s.max_gradient_error) << ", hvp "
              << flash::fmt_real(s.max_hvp_error) << ", component "
              << flash::fmt_real(s.max_component_error) << " (tol " << flash::fmt_real(tol)
              << ", " << s.points << " points)\n";
  }
  return all_ok ? 0 : 1;
}

flash::Vector<double> read_point_file(const std::string& path, flash::Index d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open point file '" + path + "'");
  std::vector<double> values;
  double v = 0;
  while (in >> v) values.push_back(v);
  if (static_cast<flash::Index>(values.size()) != d)
    throw std::runtime_error("point file '" + path + "' holds " +
                             std::to_string(values.size()) + " values, problem dimension is " +
                             std::to_string(d));
  flash::Vector<double> x(d);
  for (flash::Index i = 0; i < d; ++i) x[i] = values[static_cast<std::size_t>(i)];
  return x;
}

int do_certify(const CommonOpts& opts, const std::string& point_path) {
  const auto cfg = flash::ExperimentConfig::from_config(
      flash::KeyValueConfig::from_file(opts.config_path), "");
  const auto built = flash::build_experiment(cfg);
  const auto x = read_point_file(point_path, cfg.dimension);
  const auto cert = flash::certify_sosp(built.problem(), x, built.targets);

  nlohmann::ordered_json j;
  j["problem"] = cfg.problem_name;
  j["d"] = cfg.dimension;
  j["f_value"] = cert.f_value;
  j["grad_norm"] = cert.grad_norm;
  j["min_eigenvalue"] = cert.min_eigenvalue;
  j["grad_tol"] = cert.grad_tol;
  j["curvature_tol"] = cert.curvature_tol;
  j["first_order"] = cert.first_order;
  j["second_order"] = cert.second_order;
  j["pass"] = cert.pass;
  std::cout << j.dump(2) << "\n";
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    const auto path = std::filesystem::path(opts.out_dir) / "certificate.json";
    flash::write_text_file(path.string(), j.dump(2) + "\n");
    std::cerr << "certificate: " << path.string() << "\n";
  }
  return cert.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finds and certifies approximate second-order stationary points"};
  app.require_subcommand(1);

  auto* check = app.add_subcommand("check", "verify analytic derivatives of the built-ins");
  double check_tol = 1e-5;
  int check_points = 100;
  std::uint64_t check_seed = 7;
  check->add_option("--tol", check_tol, "relative error tolerance");
  check->add_option("--points", check_points, "random points per problem")
      ->check(CLI::PositiveNumber);
  check->add_option("--seed", check_seed, "rng seed for the sampled points");

  CommonOpts escape_opts;
  auto* escape = app.add_subcommand("escape", "repeated curvature-descent step experiment");
  add_common(escape, escape_opts);

  CommonOpts run_opts;
  std::string run_kind;
  auto* run = app.add_subcommand("run", "seeded end-to-end or epoch runs");
  run->add_option("kind", run_kind, "flash-fs | flash-st | scsg")
      ->required()
      ->check(CLI::IsMember({"flash-fs", "flash-st", "scsg"}));
  add_common(run, run_opts);

  CommonOpts certify_opts;
  std::string point_path;
  auto* certify = app.add_subcommand("certify", "certify a point from file against the targets");
  add_common(certify, certify_opts);
  certify->add_option("--point", point_path, "whitespace-separated coordinates")
      ->required()
      ->check(CLI::ExistingFile);

  CommonOpts bench_opts;
  auto* bench = app.add_subcommand("bench", "paired third-order vs quadratic-baseline costs");
  add_common(bench, bench_opts);

  std::string repro_out;
  auto* repro = app.add_subcommand("repro", "run the full release gate");
  repro->add_option("--out-dir", repro_out, "also write the gate transcript here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) return do_check(check_tol, check_points, check_seed);
    if (*escape) return do_experiment(load_config(escape_opts, "escape"));
    if (*run) return do_experiment(load_config(run_opts, run_kind));
    if (*certify) return do_certify(certify_opts, point_path);
    if (*bench) return do_experiment(load_config(bench_opts, "bench"));
    if (*repro) {
      std::ostringstream transcript;
      const int failures = flash::acceptance::run_all(transcript);
      std::cout << transcript.str();
      if (!repro_out.empty()) {
        std::filesystem::create_directories(repro_out);
        const auto path = std::filesystem::path(repro_out) / "acceptance.txt";
        flash::write_text_file(path.string(), transcript.str());
        std::cerr << "transcript: " << path.string() << "\n";
      }
      return failures;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
