#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spiked/priors.hpp"
#include "spiked/spectra.hpp"

namespace spiked {

enum class OnsagerMode { adaptive, fixed_from_replica };
enum class InitMode { pca, informative };
enum class ClampPolicy { error, clamp_to_range };
enum class KernelFlavor { serial, omp };

OnsagerMode parse_onsager_mode(const std::string& name);
InitMode parse_init_mode(const std::string& name);
ClampPolicy parse_clamp_policy(const std::string& name);
std::string to_string(OnsagerMode mode);
std::string to_string(InitMode mode);
std::string to_string(ClampPolicy policy);

struct TapConfig {
  double tau = 0.9;
  int max_iter = 2000;
  double tol = 1e-7;
  OnsagerMode onsager_mode = OnsagerMode::adaptive;
  InitMode init_mode = InitMode::pca;
  double init_correlation = 1.0;  // used by InitMode::informative
  ClampPolicy clamp_policy = ClampPolicy::clamp_to_range;
  KernelFlavor kernel = KernelFlavor::omp;
  double divergence_bound = 1.1;
  /// Start with m^{-1} = m^0 instead of zero, so a fixed-point start sees its
  /// own Onsager term on the first step.
  bool warm_memory = false;

  void validate() const;
};

struct TapRun {
  Eigen::VectorXd m_final;
  std::vector<double> q_tilde_history;
  std::vector<double> gamma_history;
  /// Spike MSE of each iterate; filled only when ground truth is supplied.
  std::vector<double> mse_history;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  int clamp_warnings = 0;
  double mse_spike = 0.0;
  double mse_vector = 0.0;
  double overlap = 0.0;
};

struct PcaInit {
  Eigen::VectorXd m0;
  double eigenvalue = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Two random starts disagreed: the top eigenspace is (numerically) degenerate.
  bool degenerate = false;
};

/// sqrt(N) times the leading eigenvector of Y by power iteration.
PcaInit pca_init(const Eigen::MatrixXd& Y, int power_iters, std::uint64_t seed);

/// sqrt(N) (c xhat + sqrt(1 - c^2) what), with what a random unit vector orthogonal to xhat.
Eigen::VectorXd informative_init(const Eigen::VectorXd& X_star, double c, std::uint64_t seed);

/// -R(1 - q) with the configured out-of-range handling; bumps `warnings` on clamps.
double onsager_gamma(const PushforwardLaw& law, double q_tilde, ClampPolicy policy, int& warnings);

TapRun run_tap(const Eigen::MatrixXd& JY, const Prior& prior, const PushforwardLaw& law,
               const Eigen::VectorXd& m0, const TapConfig& config,
               std::optional<double> replica_gamma = std::nullopt,
               const Eigen::VectorXd* X_star = nullptr);

struct Metrics {
  double mse_spike;
  double mse_vector;
  double overlap;
};

Metrics metrics(const Eigen::VectorXd& m, const Eigen::VectorXd& X_star, bool sign_symmetric = true);

/// Location z* > hi of the spike outlier, g(z*) = 1/lambda; empty below threshold.
std::optional<double> bbp_outlier(const SpectralDensity& rho, double lambda);

/// Squared overlap of the top eigenvector with the spike direction.
double pca_overlap_theory(const SpectralDensity& rho, double lambda);

}  // namespace spiked
