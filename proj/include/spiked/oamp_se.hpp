#pragma once

#include <string>
#include <vector>

#include "spiked/priors.hpp"
#include "spiked/spectra.hpp"

namespace spiked {

/// (1 - lambda PV(x))^2 + pi^2 lambda^2 rho(x)^2, where PV is `hilbert_pv`.
double phi(const SpectralDensity& rho, double lambda, double x);

struct StateEvolutionPoint {
  double theta = 0.0;
  double omega = 0.0;
  std::vector<double> phi_values;
  bool converged = false;
  /// Gaussian prior: dmmse is identically one, theta stays at zero.
  bool degenerate = false;
  bool dmmse_infinite = false;
  int iterations = 0;
  double residual = 0.0;
};

struct SeConfig {
  double damping = 0.5;
  double tol = 1e-10;
  int max_iter = 5000;
};

/// theta = 1/dmmse(omega) - 1,
/// omega = 1 - E[1/(phi + theta)] / E[phi/(phi + theta)].
StateEvolutionPoint se_fixed_point(const SpectralDensity& rho, const Prior& prior, double lambda,
                                   double init_omega = 0.9, const SeConfig& config = {});

struct EquivalenceReport {
  double lambda = 0.0;
  double theta = 0.0;
  double omega = 0.0;
  double m_se = 0.0;
  double mhat_se = 0.0;
  double m_replica = 0.0;
  double mhat_replica = 0.0;
  double sup_gap_phi = 0.0;
  std::string basin_se;
  std::string basin_replica;
  bool se_converged = false;
  bool replica_converged = false;
  bool degenerate = false;

  bool basins_match() const { return basin_se == basin_replica; }
  double gap_m() const;
  double gap_mhat() const;
};

/// Both sides started from their informative end.
EquivalenceReport replica_equivalence_check(const SpectralDensity& rho, const Potential& pot,
                                            const Prior& prior, double lambda);

}  // namespace spiked
