#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spiked/config.hpp"
#include "spiked/ensemble.hpp"
#include "spiked/oamp_se.hpp"
#include "spiked/priors.hpp"
#include "spiked/replica.hpp"
#include "spiked/spectra.hpp"
#include "spiked/tap.hpp"

namespace spiked {

/// Immutable theory objects shared by every trial of a run.
struct TheoryContext {
  SpectralDensity rho;
  Potential pot;
  Prior prior;
  std::optional<EmpiricalSpectrum> empirical;
};

Prior build_prior(const PriorSpec& spec, const std::string& base_dir = ".");
TheoryContext build_theory(const ExperimentConfig& cfg);

/// Set from a signal handler; trials not yet started are skipped.
std::atomic<bool>& cancel_flag();

struct TrialRequest {
  double lambda = 0.0;
  int n = 0;
  std::uint64_t seed = 0;
  int power_iters = 1000;
  TapConfig tap;
  std::optional<double> replica_gamma;
  std::string dump_prefix;  // non-empty: write the observation there
};

struct TrialResult {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  bool failed = false;   // threw; `error` holds the message
  bool skipped = false;  // cancelled before it started
  double mse_spike = 0.0;
  double mse_vector = 0.0;
  double overlap = 0.0;
  int clamp_warnings = 0;
  bool pca_degenerate = false;
  std::vector<double> q_tilde_history;
  std::vector<double> gamma_history;
  std::vector<double> mse_history;
  std::string error;

  bool included() const { return !diverged && !failed && !skipped; }
};

/// Sample Y for `model` at the request's seed, apply J, initialize and iterate.
TrialResult run_trial(const NoiseModel& model, const Prior& prior, const TrialRequest& req);

/// Runs `seeds.size()` trials on up to `workers` threads; output is in seed order.
std::vector<TrialResult> run_trials(const NoiseModel& model, const Prior& prior, TrialRequest base,
                                    const std::vector<std::uint64_t>& seeds, int workers,
                                    const std::string& dump_dir = {});

struct Summary {
  double mean = 0.0;
  std::optional<double> std;  // sample standard deviation, needs two values
};

Summary summarize(const std::vector<double>& values);

struct AggregateRow {
  double lambda = 0.0;
  int trials = 0;
  int included = 0;
  int excluded = 0;
  Summary mse_spike;
  Summary mse_vector;
  double replica_mmse = 0.0;
  double pca_theory = 0.0;
};

AggregateRow aggregate(double lambda, const std::vector<TrialResult>& trials, double replica_mmse,
                       double pca_theory);

struct LambdaRun {
  double lambda = 0.0;
  SaddlePoint replica;
  double pca_overlap = 0.0;
  std::vector<TrialResult> trials;
  AggregateRow row;
};

struct TapExperiment {
  std::vector<LambdaRun> points;
  bool interrupted = false;
};

/// Every lambda in the grid (or the single lambda), trials seeded seed + i.
TapExperiment run_tap_experiment(const ExperimentConfig& cfg, const TheoryContext& ctx,
                                 const std::string& dump_dir = {});

struct SurrogateComparison {
  double lambda = 0.0;
  double lambda_tilde = 0.0;
  double m_star = 0.0;
  double mhat_star = 0.0;
  double replica_mmse = 0.0;
  std::vector<TrialResult> structured;
  std::vector<TrialResult> surrogate;
  std::vector<double> trajectory_structured;
  std::vector<double> trajectory_surrogate;
  bool interrupted = false;

  double final_structured() const;
  double final_surrogate() const;
};

/// Mean per-iteration MSE over included trials; shorter runs are held at their last value.
std::vector<double> mean_trajectory(const std::vector<TrialResult>& trials);

/// Structured model and its Gaussian surrogate at lambda~ on paired seeds. Both
/// use the same signal draw per seed and the fixed replica Onsager term.
SurrogateComparison run_surrogate_comparison(const ExperimentConfig& cfg, const TheoryContext& ctx);

std::vector<EquivalenceReport> run_oamp_check(const ExperimentConfig& cfg, const TheoryContext& ctx);

// Writers. Every CSV starts with `# manifest=<hash>` and prints reals with 17
// significant digits so reruns compare byte for byte.
void write_phase_curve_csv(std::ostream& os, const std::string& manifest, const PhaseCurve& pc);
void write_trials_csv(std::ostream& os, const std::string& manifest, const std::vector<TrialResult>& trials);
void write_aggregate_csv(std::ostream& os, const std::string& manifest, const std::vector<AggregateRow>& rows);
void write_trajectory_csv(std::ostream& os, const std::string& manifest, const TrialResult& trial);
void write_surrogate_csv(std::ostream& os, const std::string& manifest, const SurrogateComparison& sc);
void write_oamp_json(std::ostream& os, const std::string& manifest, const std::vector<EquivalenceReport>& reps);

}  // namespace spiked
