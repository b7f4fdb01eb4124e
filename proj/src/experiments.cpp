#include "spiked/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "spiked/error.hpp"
#include "spiked/kernels.hpp"
#include "spiked/random.hpp"

namespace spiked {

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "n/a"; }

void header(std::ostream& os, const std::string& manifest, const char* columns) {
  os << "# manifest=" << manifest << '\n' << columns << '\n';
}

std::string json_num(double v) { return std::isfinite(v) ? num(v) : "null"; }

}  // namespace

std::atomic<bool>& cancel_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

Prior build_prior(const PriorSpec& spec, const std::string& base_dir) {
  if (spec.kind == "file") {
    const std::string path = resolve(base_dir, spec.file);
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open prior file '" + path + "'");
    return read_prior_csv(in);
  }
  return make_prior(spec.kind, spec.params);
}

TheoryContext build_theory(const ExperimentConfig& cfg) {
  const NoiseSpec& ns = cfg.noise;
  Prior prior = build_prior(cfg.prior, cfg.base_dir);
  if (ns.kind == "file") {
    if (ns.potential == "analytic") throw ValidationError("an empirical spectrum has no analytic potential");
    const std::string path = resolve(cfg.base_dir, ns.file);
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open spectrum file '" + path + "'");
    auto [rec, rho] = ingest_empirical_spectrum(read_eigenvalue_csv(in), ns.outliers);
    Potential pot = potential_derivative_from_density(rho);
    return TheoryContext{std::move(rho), std::move(pot), std::move(prior), std::move(rec)};
  }
  const DensityKind kind = parse_density_kind(ns.kind);
  if (kind == DensityKind::empirical || kind == DensityKind::tabulated)
    throw ValidationError("noise kind '" + ns.kind + "' needs noise = file");
  SpectralDensity rho = standardize(build_builtin_density(kind, ns.params));
  Potential pot = ns.potential == "reconstructed" ? potential_derivative_from_density(rho)
                  : ns.potential == "analytic"    ? analytic_potential(rho)
                                                  : default_potential(rho);
  return TheoryContext{std::move(rho), std::move(pot), std::move(prior), std::nullopt};
}

TrialResult run_trial(const NoiseModel& model, const Prior& prior, const TrialRequest& req) {
  TrialResult res;
  res.seed = req.seed;
  res.lambda = req.lambda;

  Observation obs = make_observation(prior, model.density(), req.lambda, req.n, req.seed);
  if (!req.dump_prefix.empty()) dump_observation(obs, req.dump_prefix);

  const EffectiveCoupling& jc = model.coupling();
  const Eigen::MatrixXd JY = matrix_function_apply(
      obs.Y, [&jc](const Eigen::VectorXd& ev) { return kernels::omp::coupling_table(jc, ev); });

  Eigen::VectorXd m0;
  if (req.tap.init_mode == InitMode::pca) {
    PcaInit init = pca_init(obs.Y, req.power_iters, stream_seed(req.seed, Stream::power_iteration));
    res.pca_degenerate = init.degenerate;
    m0 = std::move(init.m0);
  } else {
    m0 = informative_init(obs.X_star, req.tap.init_correlation, stream_seed(req.seed, Stream::init));
  }

  TapRun run = run_tap(JY, prior, model.law(), m0, req.tap, req.replica_gamma, &obs.X_star);
  res.iterations = run.iterations;
  res.converged = run.converged;
  res.diverged = run.diverged;
  res.clamp_warnings = run.clamp_warnings;
  res.mse_spike = run.mse_spike;
  res.mse_vector = run.mse_vector;
  res.overlap = run.overlap;
  res.q_tilde_history = std::move(run.q_tilde_history);
  res.gamma_history = std::move(run.gamma_history);
  res.mse_history = std::move(run.mse_history);
  return res;
}

std::vector<TrialResult> run_trials(const NoiseModel& model, const Prior& prior, TrialRequest base,
                                    const std::vector<std::uint64_t>& seeds, int workers,
                                    const std::string& dump_dir) {
  const int count = static_cast<int>(seeds.size());
  std::vector<TrialResult> out(seeds.size());
  std::atomic<bool>& cancel = cancel_flag();

#pragma omp parallel for num_threads(std::max(1, workers)) schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) {
    TrialRequest req = base;
    req.seed = seeds[static_cast<std::size_t>(i)];
    TrialResult& slot = out[static_cast<std::size_t>(i)];
    slot.seed = req.seed;
    slot.lambda = req.lambda;
    if (cancel.load()) {
      slot.skipped = true;
      continue;
    }
    if (!dump_dir.empty()) req.dump_prefix = fmt::format("{}/obs_seed{}_lambda{}", dump_dir, req.seed, req.lambda);
    try {
      slot = run_trial(model, prior, req);
    } catch (const std::exception& e) {
      slot.failed = true;
      slot.error = e.what();
    }
  }
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) {
    s.mean = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

AggregateRow aggregate(double lambda, const std::vector<TrialResult>& trials, double replica_mmse,
                       double pca_theory) {
  AggregateRow row;
  row.lambda = lambda;
  row.trials = static_cast<int>(trials.size());
  std::vector<double> spike;
  std::vector<double> vec;
  for (const auto& t : trials) {
    if (!t.included()) continue;
    spike.push_back(t.mse_spike);
    vec.push_back(t.mse_vector);
  }
  row.included = static_cast<int>(spike.size());
  row.excluded = row.trials - row.included;
  row.mse_spike = summarize(spike);
  row.mse_vector = summarize(vec);
  row.replica_mmse = replica_mmse;
  row.pca_theory = pca_theory;
  return row;
}

namespace {

std::vector<std::uint64_t> trial_seeds(std::uint64_t base, int trials) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) s[static_cast<std::size_t>(i)] = base + static_cast<std::uint64_t>(i);
  return s;
}

std::vector<double> grid_of(const ExperimentConfig& cfg) {
  if (cfg.lambda) return {*cfg.lambda};
  if (cfg.lambda_grid.empty()) throw ValidationError("lambda_grid is empty");
  return cfg.lambda_grid;
}

bool any_skipped(const std::vector<TrialResult>& trials) {
  return std::any_of(trials.begin(), trials.end(), [](const TrialResult& t) { return t.skipped; });
}

}  // namespace

TapExperiment run_tap_experiment(const ExperimentConfig& cfg, const TheoryContext& ctx,
                                 const std::string& dump_dir) {
  cfg.validate();
  TapExperiment exp;
  const auto seeds = trial_seeds(cfg.seed, cfg.trials);
  for (double lambda : grid_of(cfg)) {
    LambdaRun pt;
    pt.lambda = lambda;
    const NoiseModel model(ctx.rho, ctx.pot, lambda);
    pt.replica = solve_replica(model, ctx.prior, cfg.replica);
    pt.pca_overlap = lambda > 0.0 ? pca_overlap_theory(ctx.rho, lambda) : 0.0;

    TrialRequest base;
    base.lambda = lambda;
    base.n = cfg.n;
    base.power_iters = cfg.power_iters;
    base.tap = cfg.tap;
    base.replica_gamma = pt.replica.mhat_star;
    pt.trials = run_trials(model, ctx.prior, base, seeds, cfg.effective_workers(),
                           cfg.dump_observations ? dump_dir : std::string());

    const double m = pt.replica.m_star;
    const double o2 = pt.pca_overlap;
    pt.row = aggregate(lambda, pt.trials, 1.0 - m * m, 1.0 - o2 * o2);
    const bool stop = any_skipped(pt.trials);
    exp.points.push_back(std::move(pt));
    if (stop) {
      exp.interrupted = true;
      break;
    }
  }
  return exp;
}

std::vector<double> mean_trajectory(const std::vector<TrialResult>& trials) {
  std::size_t len = 0;
  int used = 0;
  for (const auto& t : trials)
    if (t.included() && !t.mse_history.empty()) {
      len = std::max(len, t.mse_history.size());
      ++used;
    }
  std::vector<double> mean(len, 0.0);
  if (used == 0) return mean;
  for (const auto& t : trials) {
    if (!t.included() || t.mse_history.empty()) continue;
    for (std::size_t k = 0; k < len; ++k)
      mean[k] += k < t.mse_history.size() ? t.mse_history[k] : t.mse_history.back();
  }
  for (double& v : mean) v /= used;
  return mean;
}

double SurrogateComparison::final_structured() const {
  return trajectory_structured.empty() ? std::numeric_limits<double>::quiet_NaN() : trajectory_structured.back();
}

double SurrogateComparison::final_surrogate() const {
  return trajectory_surrogate.empty() ? std::numeric_limits<double>::quiet_NaN() : trajectory_surrogate.back();
}

SurrogateComparison run_surrogate_comparison(const ExperimentConfig& cfg, const TheoryContext& ctx) {
  cfg.validate();
  SurrogateComparison sc;
  sc.lambda = cfg.single_lambda();
  const NoiseModel structured(ctx.rho, ctx.pot, sc.lambda);
  const SaddlePoint sp = solve_replica(structured, ctx.prior, cfg.replica);
  sc.m_star = sp.m_star;
  sc.mhat_star = sp.mhat_star;
  sc.replica_mmse = 1.0 - sp.m_star * sp.m_star;

  // Below the transition both models sit at m = 0 and the surrogate SNR is
  // undefined; the Gaussian model then runs at the structured lambda.
  if (sp.m_star > 0.0 && sp.m_star < 1.0) {
    sc.lambda_tilde = gaussian_surrogate_snr(structured.law(), sp.m_star);
  } else {
    sc.lambda_tilde = sc.lambda;
  }
  const NoiseModel surrogate = gaussian_noise_model(sc.lambda_tilde);

  const auto seeds = trial_seeds(cfg.seed, cfg.trials);
  TrialRequest base;
  base.lambda = sc.lambda;
  base.n = cfg.n;
  base.power_iters = cfg.power_iters;
  base.tap = cfg.tap;
  base.tap.onsager_mode = OnsagerMode::fixed_from_replica;
  base.replica_gamma = sp.mhat_star;
  sc.structured = run_trials(structured, ctx.prior, base, seeds, cfg.effective_workers());
  base.lambda = sc.lambda_tilde;
  sc.surrogate = run_trials(surrogate, ctx.prior, base, seeds, cfg.effective_workers());
  sc.interrupted = any_skipped(sc.structured) || any_skipped(sc.surrogate);
  sc.trajectory_structured = mean_trajectory(sc.structured);
  sc.trajectory_surrogate = mean_trajectory(sc.surrogate);
  return sc;
}

std::vector<EquivalenceReport> run_oamp_check(const ExperimentConfig& cfg, const TheoryContext& ctx) {
  cfg.validate();
  const std::vector<double> grid = grid_of(cfg);
  std::vector<EquivalenceReport> out;
  out.reserve(grid.size());
  for (double lambda : grid) out.push_back(replica_equivalence_check(ctx.rho, ctx.pot, ctx.prior, lambda));
  return out;
}

void write_phase_curve_csv(std::ostream& os, const std::string& manifest, const PhaseCurve& pc) {
  header(os, manifest, "lambda,m_star,mmse_spike,mmse_vector,mi,surrogate_snr");
  for (std::size_t i = 0; i < pc.lambdas.size(); ++i)
    os << num(pc.lambdas[i]) << ',' << num(pc.m_star[i]) << ',' << num(pc.mmse_spike[i]) << ','
       << num(pc.mmse_vector[i]) << ',' << num(pc.mi_per_component[i]) << ',' << num(pc.surrogate_snr[i])
       << '\n';
}

void write_trials_csv(std::ostream& os, const std::string& manifest, const std::vector<TrialResult>& trials) {
  header(os, manifest, "seed,lambda,iterations,converged,mse_spike,mse_vector,overlap,clamp_warnings");
  for (const auto& t : trials) {
    if (t.skipped) continue;
    os << t.seed << ',' << num(t.lambda) << ',' << t.iterations << ',' << (t.converged ? 1 : 0) << ','
       << num(t.mse_spike) << ',' << num(t.mse_vector) << ',' << num(t.overlap) << ',' << t.clamp_warnings
       << '\n';
  }
}

void write_aggregate_csv(std::ostream& os, const std::string& manifest, const std::vector<AggregateRow>& rows) {
  header(os, manifest,
         "lambda,trials,included,excluded,mse_spike_mean,mse_spike_std,mse_vector_mean,mse_vector_std,"
         "replica_mmse,pca_theory");
  for (const auto& r : rows)
    os << num(r.lambda) << ',' << r.trials << ',' << r.included << ',' << r.excluded << ','
       << (r.included ? num(r.mse_spike.mean) : "n/a") << ',' << opt_num(r.mse_spike.std) << ','
       << (r.included ? num(r.mse_vector.mean) : "n/a") << ',' << opt_num(r.mse_vector.std) << ','
       << num(r.replica_mmse) << ',' << num(r.pca_theory) << '\n';
}

void write_trajectory_csv(std::ostream& os, const std::string& manifest, const TrialResult& trial) {
  header(os, manifest, "t,q_tilde,gamma");
  for (std::size_t t = 0; t < trial.q_tilde_history.size(); ++t)
    os << t << ',' << num(trial.q_tilde_history[t]) << ',' << num(trial.gamma_history[t]) << '\n';
}

void write_surrogate_csv(std::ostream& os, const std::string& manifest, const SurrogateComparison& sc) {
  header(os, manifest, "t,mse_structured,mse_surrogate");
  const std::size_t len = std::max(sc.trajectory_structured.size(), sc.trajectory_surrogate.size());
  auto at = [](const std::vector<double>& v, std::size_t k) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return k < v.size() ? v[k] : v.back();
  };
  for (std::size_t k = 0; k < len; ++k)
    os << k << ',' << num(at(sc.trajectory_structured, k)) << ',' << num(at(sc.trajectory_surrogate, k)) << '\n';
}

void write_oamp_json(std::ostream& os, const std::string& manifest, const std::vector<EquivalenceReport>& reps) {
  os << "{\n  \"manifest\": \"" << manifest << "\",\n  \"records\": [";
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto& r = reps[i];
    os << (i ? ",\n" : "\n") << "    {\"lambda\": " << json_num(r.lambda) << ", \"theta\": " << json_num(r.theta)
       << ", \"omega\": " << json_num(r.omega) << ", \"m_se\": " << json_num(r.m_se)
       << ", \"mhat_se\": " << json_num(r.mhat_se) << ", \"m_replica\": " << json_num(r.m_replica)
       << ", \"mhat_replica\": " << json_num(r.mhat_replica) << ", \"sup_gap_phi\": " << json_num(r.sup_gap_phi)
       << ", \"gap_m\": " << json_num(r.gap_m()) << ", \"gap_mhat\": " << json_num(r.gap_mhat())
       << ", \"basin_se\": \"" << r.basin_se << "\", \"basin_replica\": \"" << r.basin_replica
       << "\", \"basins_match\": " << (r.basins_match() ? "true" : "false")
       << ", \"se_converged\": " << (r.se_converged ? "true" : "false")
       << ", \"replica_converged\": " << (r.replica_converged ? "true" : "false")
       << ", \"degenerate\": " << (r.degenerate ? "true" : "false") << "}";
  }
  os << "\n  ]\n}\n";
}

}  // namespace spiked
