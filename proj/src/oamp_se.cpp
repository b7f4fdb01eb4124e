#include "spiked/oamp_se.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "spiked/error.hpp"
#include "spiked/replica.hpp"

namespace spiked {

namespace {

constexpr double kBasinThreshold = 1e-6;

std::string basin(double m) { return m > kBasinThreshold ? "informative" : "uninformative"; }

}  // namespace

double phi(const SpectralDensity& rho, double lambda, double x) {
  const double a = 1.0 - lambda * hilbert_pv(rho, x);
  const double b = std::numbers::pi * lambda * rho.pdf(x);
  return a * a + b * b;
}

StateEvolutionPoint se_fixed_point(const SpectralDensity& rho, const Prior& prior, double lambda,
                                   double init_omega, const SeConfig& config) {
  if (!(init_omega >= 0.0 && init_omega < 1.0)) throw ValidationError("initial omega must lie in [0, 1)");
  if (!(lambda >= 0.0)) throw ValidationError("signal-to-noise ratio must be nonnegative");

  StateEvolutionPoint pt;
  const auto& nodes = rho.nodes();
  const auto& w = rho.weights();
  pt.phi_values.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    pt.phi_values[i] = lambda == 0.0 ? 1.0 : phi(rho, lambda, nodes[i]);

  double mean_phi = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) mean_phi += w[i] * pt.phi_values[i];

  auto theta_of = [&](double omega, bool& infinite) {
    const DmmseValue d = dmmse(prior, omega);
    infinite = d.infinite;
    return d.infinite ? std::numeric_limits<double>::infinity() : 1.0 / d.value - 1.0;
  };
  auto omega_of = [&](double theta, bool infinite) {
    if (infinite) return 1.0 - 1.0 / mean_phi;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double s = pt.phi_values[i] + theta;
      if (!(s > 0.0)) throw NumericalError("phi + theta is nonpositive at a quadrature node");
      num += w[i] / s;
      den += w[i] * pt.phi_values[i] / s;
    }
    return 1.0 - num / den;
  };

  pt.degenerate = prior.is_gaussian();
  double omega = init_omega;
  bool infinite = false;
  for (int it = 1; it <= config.max_iter; ++it) {
    const double theta = theta_of(omega, infinite);
    double next = omega_of(theta, infinite);
    next = std::clamp(next, 0.0, std::nextafter(1.0, 0.0));
    const double delta = std::abs(next - omega);
    pt.iterations = it;
    if (delta <= config.tol) {
      omega = next;
      pt.converged = true;
      break;
    }
    omega = config.damping * omega + (1.0 - config.damping) * next;
  }
  pt.omega = omega;
  pt.theta = theta_of(omega, infinite);
  pt.dmmse_infinite = infinite;
  pt.residual = std::abs(omega_of(pt.theta, infinite) - omega);
  pt.converged = pt.converged && pt.residual <= 10.0 * config.tol;
  return pt;
}

double EquivalenceReport::gap_m() const { return std::abs(m_se - m_replica); }
double EquivalenceReport::gap_mhat() const { return std::abs(mhat_se - mhat_replica); }

EquivalenceReport replica_equivalence_check(const SpectralDensity& rho, const Potential& pot,
                                            const Prior& prior, double lambda) {
  EquivalenceReport rep;
  rep.lambda = lambda;

  const StateEvolutionPoint se = se_fixed_point(rho, prior, lambda, 0.9);
  rep.theta = se.theta;
  rep.omega = se.omega;
  rep.degenerate = se.degenerate;
  rep.se_converged = se.converged;
  rep.mhat_se = se.omega / (1.0 - se.omega);
  rep.m_se = 1.0 - scalar_mmse(prior, rep.mhat_se);
  rep.basin_se = basin(rep.m_se);

  const NoiseModel model(rho, pot, lambda);
  SolverConfig cfg;
  cfg.init_policy = InitPolicy::informative;
  const SaddlePoint sp = solve_fixed_point(model, prior, InitLabel::informative, cfg);
  rep.m_replica = sp.m_star;
  rep.mhat_replica = sp.mhat_star;
  rep.replica_converged = sp.converged;
  rep.basin_replica = basin(sp.m_star);

  const double width = rho.hi() - rho.lo();
  const double a = rho.lo() + 0.05 * width;
  const double b = rho.hi() - 0.05 * width;
  const auto& nodes = rho.nodes();
  const auto& j = model.coupling().values_at_nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < a || nodes[i] > b) continue;
    rep.sup_gap_phi = std::max(rep.sup_gap_phi, std::abs(1.0 - se.phi_values[i] - j[i]));
  }
  return rep;
}

}  // namespace spiked
