// Command-line driver: replica curves, TAP trials, SE cross-checks,
// surrogate comparison and empirical spectrum ingestion.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "spiked/config.hpp"
#include "spiked/ensemble.hpp"
#include "spiked/error.hpp"
#include "spiked/experiments.hpp"

#ifndef SPIKED_VERSION
#define SPIKED_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace spiked;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInterrupted = 130;

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::string file;
  std::optional<int> outliers;
};

extern "C" void on_sigint(int) { cancel_flag().store(true); }

class Run {
 public:
  Run(std::string command, const Options& opt) : command_(std::move(command)), opt_(opt) {
    cfg_ = opt.config.empty() ? ExperimentConfig{} : load_config(opt.config);
    if (opt.workers) cfg_.workers = *opt.workers;
    if (opt.seed) {
      cfg_.seed = *opt.seed;
      if (cfg_.surrogate_seed) cfg_.surrogate_seed = *opt.seed;
    }
    cfg_.validate();
    manifest_ = hex64(cfg_.hash());
    fs::create_directories(opt.out);
    start_ = std::chrono::steady_clock::now();
  }

  ExperimentConfig& config() { return cfg_; }
  const std::string& manifest() const { return manifest_; }

  std::ofstream open(const std::string& name) {
    const fs::path p = fs::path(opt_.out) / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw ValidationError("cannot write " + p.string());
    files_.push_back(name);
    return os;
  }

  void extra(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }

  void finish(bool interrupted) {
    using nlohmann::ordered_json;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    ordered_json m;
    m["manifest"] = manifest_;
    m["command"] = command_;
    m["version"] = SPIKED_VERSION;
    m["eigensolver"] = eigensolver_name();
    ordered_json echo = ordered_json::object();
    for (const auto& [k, v] : cfg_.echo) echo[k] = v;
    m["config"] = echo;
    m["config_file"] = opt_.config;
    m["seed"] = cfg_.seed;
    m["workers"] = cfg_.effective_workers();
    m["canonical"] = cfg_.canonical();
    m["status"] = interrupted ? "interrupted" : "complete";
    m["elapsed_seconds"] = seconds;
    m["files"] = files_;
    for (auto& [k, v] : extra_.items()) m[k] = v;
    std::ofstream os(fs::path(opt_.out) / "manifest.json");
    os << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  Options opt_;
  ExperimentConfig cfg_;
  std::string manifest_;
  std::vector<std::string> files_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
  std::chrono::steady_clock::time_point start_;
};

int cmd_replica_curve(const Options& opt) {
  Run run("replica-curve", opt);
  const ExperimentConfig& cfg = run.config();
  if (cfg.lambda_grid.empty()) throw ValidationError("replica-curve needs a non-empty lambda_grid");
  const TheoryContext ctx = build_theory(cfg);
  const PhaseCurve pc = phase_curve(ctx.rho, ctx.pot, ctx.prior, cfg.lambda_grid, cfg.replica);
  auto os = run.open("phase_curve.csv");
  write_phase_curve_csv(os, run.manifest(), pc);
  run.extra("init_labels", pc.init_labels);
  run.finish(false);
  std::cout << fmt::format("replica-curve: {} points -> {}/phase_curve.csv\n", pc.lambdas.size(), opt.out);
  return 0;
}

int cmd_tap_run(const Options& opt) {
  Run run("tap-run", opt);
  const ExperimentConfig& cfg = run.config();
  const TheoryContext ctx = build_theory(cfg);
  std::string dump_dir;
  if (cfg.dump_observations) {
    dump_dir = (fs::path(opt.out) / "observations").string();
    fs::create_directories(dump_dir);
  }
  const TapExperiment exp = run_tap_experiment(cfg, ctx, dump_dir);

  std::vector<TrialResult> all;
  std::vector<AggregateRow> rows;
  nlohmann::ordered_json excl = nlohmann::ordered_json::array();
  nlohmann::ordered_json errors = nlohmann::ordered_json::array();
  for (const auto& pt : exp.points) {
    all.insert(all.end(), pt.trials.begin(), pt.trials.end());
    rows.push_back(pt.row);
    excl.push_back({{"lambda", pt.lambda}, {"excluded", pt.row.excluded}, {"included", pt.row.included}});
    for (const auto& t : pt.trials)
      if (t.failed) errors.push_back({{"seed", t.seed}, {"lambda", t.lambda}, {"error", t.error}});
    std::cout << fmt::format("lambda={:g}: mse_spike={:.6g} over {} trials, excluded {}, replica mmse {:.6g}\n",
                             pt.lambda, pt.row.mse_spike.mean, pt.row.included, pt.row.excluded,
                             pt.row.replica_mmse);
  }
  {
    auto os = run.open("trials.csv");
    write_trials_csv(os, run.manifest(), all);
  }
  {
    auto os = run.open("aggregate.csv");
    write_aggregate_csv(os, run.manifest(), rows);
  }
  if (cfg.dump_trajectories) {
    for (const auto& t : all) {
      if (t.skipped || t.failed) continue;
      auto os = run.open(fmt::format("trajectories/seed{}_lambda{}.csv", t.seed, t.lambda));
      write_trajectory_csv(os, run.manifest(), t);
    }
  }
  run.extra("exclusions", excl);
  run.extra("trial_errors", errors);
  run.finish(exp.interrupted);
  return exp.interrupted ? kExitInterrupted : 0;
}

int cmd_oamp_check(const Options& opt) {
  Run run("oamp-check", opt);
  const ExperimentConfig& cfg = run.config();
  const TheoryContext ctx = build_theory(cfg);
  const auto reps = run_oamp_check(cfg, ctx);
  auto os = run.open("oamp_check.json");
  write_oamp_json(os, run.manifest(), reps);
  for (const auto& r : reps)
    std::cout << fmt::format("lambda={:g}: |dm|={:.3g} |dmhat|={:.3g} sup|1-phi-J|={:.3g} basins {}/{}{}\n",
                             r.lambda, r.gap_m(), r.gap_mhat(), r.sup_gap_phi, r.basin_se, r.basin_replica,
                             r.degenerate ? " (degenerate prior)" : "");
  run.finish(false);
  return 0;
}

int cmd_surrogate_compare(const Options& opt) {
  Run run("surrogate-compare", opt);
  const ExperimentConfig& cfg = run.config();
  const TheoryContext ctx = build_theory(cfg);
  const SurrogateComparison sc = run_surrogate_comparison(cfg, ctx);
  {
    auto os = run.open("surrogate.csv");
    write_surrogate_csv(os, run.manifest(), sc);
  }
  {
    auto os = run.open("trials_structured.csv");
    write_trials_csv(os, run.manifest(), sc.structured);
  }
  {
    auto os = run.open("trials_surrogate.csv");
    write_trials_csv(os, run.manifest(), sc.surrogate);
  }
  const AggregateRow a = aggregate(sc.lambda, sc.structured, sc.replica_mmse, 0.0);
  const AggregateRow b = aggregate(sc.lambda_tilde, sc.surrogate, sc.replica_mmse, 0.0);
  run.extra("lambda_tilde", sc.lambda_tilde);
  run.extra("m_star", sc.m_star);
  run.extra("replica_mmse", sc.replica_mmse);
  run.extra("excluded_structured", a.excluded);
  run.extra("excluded_surrogate", b.excluded);
  std::cout << fmt::format("lambda={:g} lambda~={:.6g}: final mse structured {:.6g}, surrogate {:.6g}, replica {:.6g}\n",
                           sc.lambda, sc.lambda_tilde, sc.final_structured(), sc.final_surrogate(),
                           sc.replica_mmse);
  run.finish(sc.interrupted);
  return sc.interrupted ? kExitInterrupted : 0;
}

int cmd_spectrum_ingest(const Options& opt) {
  Run run("spectrum-ingest", opt);
  ExperimentConfig& cfg = run.config();
  std::string path = opt.file.empty() ? cfg.noise.file : opt.file;
  if (path.empty()) throw ValidationError("spectrum-ingest needs --file or noise.file");
  if (opt.file.empty() && !fs::path(path).is_absolute()) path = (fs::path(cfg.base_dir) / path).string();
  const int outliers = opt.outliers.value_or(cfg.noise.outliers);

  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open spectrum file '" + path + "'");
  auto [rec, rho] = ingest_empirical_spectrum(read_eigenvalue_csv(in), outliers);
  const Potential pot = potential_derivative_from_density(rho);
  const Prior prior = build_prior(cfg.prior, cfg.base_dir);

  {
    auto os = run.open("spectrum.csv");
    os << "# manifest=" << run.manifest() << '\n';
    write_density_csv(os, rho);
  }
  {
    auto os = run.open("potential.csv");
    os << "# manifest=" << run.manifest() << "\nx,dV\n";
    for (double x : rho.nodes()) os << fmt::format("{:.17g},{:.17g}\n", x, pot(x));
  }
  std::optional<double> lambda = cfg.lambda;
  if (!lambda && !cfg.lambda_grid.empty()) lambda = cfg.lambda_grid.back();
  if (lambda) {
    const EffectiveCoupling jc = effective_coupling(rho, pot, *lambda);
    auto os = run.open("coupling.csv");
    os << "# manifest=" << run.manifest() << fmt::format("\n# lambda={:.17g}\nx,J\n", *lambda);
    for (std::size_t i = 0; i < rho.size(); ++i)
      os << fmt::format("{:.17g},{:.17g}\n", rho.nodes()[i], jc.values_at_nodes()[i]);
  }
  if (!cfg.lambda_grid.empty()) {
    const PhaseCurve pc = phase_curve(rho, pot, prior, cfg.lambda_grid, cfg.replica);
    auto os = run.open("phase_curve.csv");
    write_phase_curve_csv(os, run.manifest(), pc);
  }
  run.extra("source", path);
  run.extra("eigenvalues_kept", rec.eigenvalues.size());
  run.extra("removed_outliers", rec.removed_outliers);
  run.extra("shift", rec.shift);
  run.extra("scale", rec.scale);
  run.extra("support", {rho.lo(), rho.hi()});
  run.extra("smoothed_variance", rho.variance());
  run.finish(false);
  std::cout << fmt::format("spectrum-ingest: kept {} eigenvalues, removed {}, support [{:.4g}, {:.4g}]\n",
                           rec.eigenvalues.size(), rec.removed_outliers, rho.lo(), rho.hi());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiked matrix models with rotationally invariant noise"};
  app.set_version_flag("--version", SPIKED_VERSION);
  app.require_subcommand(1);

  Options opt;
  auto common = [&opt](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "experiment file (key = value)");
    if (config_required) c->required();
    c->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--workers", opt.workers, "concurrent trials (default: available cores)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed, "base seed, overrides the config");
  };

  auto* rc = app.add_subcommand("replica-curve", "replica MMSE / mutual information curve");
  auto* tr = app.add_subcommand("tap-run", "seeded TAP trials with aggregation");
  auto* oc = app.add_subcommand("oamp-check", "state evolution vs replica fixed points");
  auto* sc = app.add_subcommand("surrogate-compare", "structured model vs its Gaussian surrogate");
  auto* si = app.add_subcommand("spectrum-ingest", "smooth an empirical spectrum and derive V' and J");
  for (auto* s : {rc, tr, oc, sc}) common(s, true);
  common(si, false);
  si->add_option("--file", opt.file, "one-column eigenvalue CSV");
  si->add_option("--outliers", opt.outliers, "number of largest-magnitude eigenvalues to drop")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (*rc) return cmd_replica_curve(opt);
    if (*tr) return cmd_tap_run(opt);
    if (*oc) return cmd_oamp_check(opt);
    if (*sc) return cmd_surrogate_compare(opt);
    if (*si) return cmd_spectrum_ingest(opt);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
