#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "spiked/priors.hpp"
#include "spiked/spectra.hpp"

namespace spiked {

/// Everything the replica equations need about the noise at one SNR.
class NoiseModel {
 public:
  NoiseModel(SpectralDensity rho, Potential pot, double lambda);

  double lambda() const noexcept { return coupling_.lambda(); }
  const SpectralDensity& density() const noexcept { return coupling_.density(); }
  const Potential& potential() const noexcept { return coupling_.potential(); }
  const EffectiveCoupling& coupling() const noexcept { return coupling_; }
  const PushforwardLaw& law() const noexcept { return law_; }
  const Eigen::MatrixXd& divided_differences() const noexcept { return dd_; }
  /// E_D V'(D) on the quadrature grid.
  double mean_dV() const noexcept { return mean_dV_; }

 private:
  EffectiveCoupling coupling_;
  PushforwardLaw law_;
  Eigen::MatrixXd dd_;
  double mean_dV_ = 0.0;
};

enum class InitLabel { uninformative, informative };
enum class InitPolicy { both, uninformative, informative };
/// Constant term of the Q equation: `derived` uses mhat - m/(1-m),
/// `literal` uses mhat - 1/(1-m).
enum class QConstant { derived, literal };

std::string to_string(InitLabel label);
InitPolicy parse_init_policy(const std::string& name);
QConstant parse_q_constant(const std::string& name);

struct SolverConfig {
  double damping = 0.5;
  double tol = 1e-12;
  int max_iter = 5000;
  InitPolicy init_policy = InitPolicy::both;
  QConstant q_constant = QConstant::derived;
  bool record_trace = false;
};

struct SaddlePoint {
  double lambda = 0.0;
  double m_star = 0.0;
  double mhat_star = 0.0;
  double f_rs = 0.0;
  InitLabel init_label = InitLabel::uninformative;
  bool converged = false;
  int iterations = 0;
  double residual_m = 0.0;
  double residual_mhat = 0.0;
  /// (m, mhat) after every update when `record_trace` is set.
  std::vector<std::pair<double, double>> trace;
};

/// Damped iteration mhat <- -R(1 - m), m <- overlap(mhat).
/// RangeError from the R-transform propagates with the offending argument.
SaddlePoint solve_fixed_point(const NoiseModel& noise, const Prior& prior, InitLabel init,
                              const SolverConfig& config = {});

/// Discretized Q profile at the quadrature nodes.
Eigen::VectorXd q_profile(const NoiseModel& noise, double m, double mhat,
                          QConstant qc = QConstant::derived);

/// 1 / (1/(1-m) - mhat - J(x_i)) at the nodes; throws if any denominator is nonpositive.
Eigen::VectorXd h_profile(const NoiseModel& noise, double m, double mhat);

/// Replica-symmetric potential f^RS(m, mhat).
double free_entropy_rs(const NoiseModel& noise, const Prior& prior, double m, double mhat,
                       QConstant qc = QConstant::derived);

/// f^RS - (lambda/2) E_D V'(D).
double free_entropy(const NoiseModel& noise, const Prior& prior, const SaddlePoint& sp);

/// Largest f_rs wins; near-ties go to the larger m_star.
SaddlePoint select_solution(const std::vector<SaddlePoint>& candidates);

/// Run the requested inits at one SNR and select.
SaddlePoint solve_replica(const NoiseModel& noise, const Prior& prior, const SolverConfig& config);

struct PhaseCurve {
  std::vector<double> lambdas;
  std::vector<double> m_star;
  std::vector<double> mhat_star;
  std::vector<double> mmse_spike;
  std::vector<double> mmse_vector;
  std::vector<double> mi_per_component;
  std::vector<double> surrogate_snr;
  std::vector<std::string> init_labels;
};

/// Grid points are solved concurrently; results are independent of thread count.
PhaseCurve phase_curve(const SpectralDensity& rho, const Potential& pot, const Prior& prior,
                       const std::vector<double>& lambda_grid, const SolverConfig& config = {});

/// lambda~ = sqrt(-R(1 - m*) / m*).
double gaussian_surrogate_snr(const PushforwardLaw& law, double m_star);

/// Semicircle density with V'(x) = x; the Gaussian-noise baseline.
NoiseModel gaussian_noise_model(double lambda);

}  // namespace spiked
