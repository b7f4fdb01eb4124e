#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spiked/replica.hpp"
#include "spiked/spectra.hpp"
#include "spiked/tap.hpp"

namespace spiked {

struct NoiseSpec {
  std::string kind = "quartic";  // a built-in density name, or "file"
  ParamMap params;
  std::string file;
  int outliers = 0;
  std::string potential = "auto";  // auto | analytic | reconstructed
};

struct PriorSpec {
  std::string kind = "rademacher";  // a prior name, or "file"
  ParamMap params;
  std::string file;
};

/// Parsed `key = value` experiment file.
///
///   noise = quartic            # or semicircle, sestic, marchenko_pastur, truncated_normal, file
///   noise.gamma = 0.5925925926 # any density parameter
///   noise.file = eig.csv       # with noise = file
///   noise.outliers = 8
///   noise.potential = auto     # analytic | reconstructed
///   prior = rademacher         # gaussian, two_point, sparse_rademacher, file
///   prior.epsilon = 0.125
///   prior.file = atoms.csv
///   lambda_grid = 0.5, 1, 2    # or start:stop:step
///   lambda = 2
///   n = 2000
///   trials = 10
///   seed = 1
///   workers = 4
///   replica.damping / replica.tol / replica.init_policy / replica.q_constant
///   tap.tau / tap.max_iter / tap.tol / tap.onsager / tap.init / tap.init_correlation / tap.clamp / tap.power_iters
///   surrogate.seed             # must equal seed
///   output.trajectories = false
///   output.observations = false
struct ExperimentConfig {
  NoiseSpec noise;
  PriorSpec prior;
  std::vector<double> lambda_grid;
  std::optional<double> lambda;
  int n = 2000;
  int trials = 10;
  std::uint64_t seed = 1;
  int workers = 0;  // 0 = available parallelism
  SolverConfig replica;
  TapConfig tap;
  int power_iters = 1000;
  std::optional<std::uint64_t> surrogate_seed;
  bool dump_trajectories = false;
  bool dump_observations = false;
  std::string base_dir = ".";  // relative data paths resolve against this

  /// Keys exactly as they appeared, in file order.
  std::vector<std::pair<std::string, std::string>> echo;

  ExperimentConfig();

  /// Sorted `key=value` lines of every setting that influences results.
  std::string canonical() const;
  /// FNV-1a of `canonical()`.
  std::uint64_t hash() const;
  void validate() const;
  /// The SNR for single-lambda commands: `lambda`, else a one-point grid.
  double single_lambda() const;
  int effective_workers() const;
};

ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// "a, b, c" or "start:stop:step" (stop included).
std::vector<double> parse_lambda_grid(const std::string& text);

std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace spiked
