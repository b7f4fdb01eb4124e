#include "spiked/replica.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include "spiked/error.hpp"

namespace spiked {

namespace {

// 1 - m is floored here so that m -> 1 never asks R for s = 0.
constexpr double kMinArgument = 1e-15;
constexpr double kResidualTol = 1e-9;

double minus_r(const PushforwardLaw& law, double m) {
  const double s = std::max(1.0 - m, kMinArgument);
  try {
    return -r_transform(law, s);
  } catch (const RangeError& e) {
    std::ostringstream msg;
    msg << e.what() << " (at 1 - m = " << s << ")";
    throw RangeError(msg.str(), s, e.supremum());
  }
}

}  // namespace

NoiseModel::NoiseModel(SpectralDensity rho, Potential pot, double lambda)
    : coupling_(std::move(rho), std::move(pot), lambda),
      law_(pushforward_law(coupling_)),
      dd_(coupling_.divided_difference_matrix()) {
  const auto& w = coupling_.density().weights();
  const auto& dv = coupling_.dV_at_nodes();
  for (std::size_t i = 0; i < w.size(); ++i) mean_dV_ += w[i] * dv[i];
}

NoiseModel gaussian_noise_model(double lambda) {
  SpectralDensity rho = build_builtin_density(DensityKind::semicircle);
  Potential pot = analytic_potential(rho);
  return NoiseModel(std::move(rho), std::move(pot), lambda);
}

std::string to_string(InitLabel label) {
  return label == InitLabel::informative ? "informative" : "uninformative";
}

InitPolicy parse_init_policy(const std::string& name) {
  if (name == "both") return InitPolicy::both;
  if (name == "uninformative") return InitPolicy::uninformative;
  if (name == "informative") return InitPolicy::informative;
  throw ValidationError("unknown init policy '" + name + "'");
}

QConstant parse_q_constant(const std::string& name) {
  if (name == "derived") return QConstant::derived;
  if (name == "literal") return QConstant::literal;
  throw ValidationError("unknown q_constant '" + name + "'");
}

SaddlePoint solve_fixed_point(const NoiseModel& noise, const Prior& prior, InitLabel init,
                              const SolverConfig& config) {
  if (!(config.damping >= 0.0 && config.damping < 1.0))
    throw ValidationError("saddle-point damping must lie in [0, 1)");
  if (!(config.tol > 0.0)) throw ValidationError("saddle-point tolerance must be positive");

  SaddlePoint sp;
  sp.lambda = noise.lambda();
  sp.init_label = init;
  double m = init == InitLabel::informative ? 1.0 - 1e-4 : 1e-4;
  double mhat = 0.0;
  bool small_step = false;
  for (int it = 1; it <= config.max_iter; ++it) {
    mhat = std::max(minus_r(noise.law(), m), 0.0);
    const double m_new = overlap_of_snr(prior, mhat);
    const double next = config.damping * m + (1.0 - config.damping) * m_new;
    const double delta = std::abs(next - m);
    m = next;
    sp.iterations = it;
    if (config.record_trace) sp.trace.emplace_back(m, mhat);
    if (delta <= config.tol) {
      small_step = true;
      break;
    }
  }
  const double raw = minus_r(noise.law(), m);
  mhat = std::max(raw, 0.0);
  sp.m_star = m;
  sp.mhat_star = mhat;
  sp.residual_mhat = std::abs(mhat - raw);
  sp.residual_m = std::abs(m - overlap_of_snr(prior, mhat));
  sp.converged = small_step && sp.residual_m <= kResidualTol && sp.residual_mhat <= kResidualTol;
  sp.f_rs = free_entropy_rs(noise, prior, m, mhat, config.q_constant);
  return sp;
}

Eigen::VectorXd h_profile(const NoiseModel& noise, double m, double mhat) {
  if (!(m < 1.0)) throw ValidationError("free entropy requires m < 1");
  const auto& j = noise.coupling().values_at_nodes();
  const Eigen::Index n = static_cast<Eigen::Index>(j.size());
  Eigen::VectorXd h(n);
  const double base = 1.0 / (1.0 - m) - mhat;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double denom = base - j[static_cast<std::size_t>(i)];
    if (!(denom > 0.0)) throw NumericalError("nonpositive H denominator in free entropy");
    h[i] = 1.0 / denom;
  }
  return h;
}

Eigen::VectorXd q_profile(const NoiseModel& noise, double m, double mhat, QConstant qc) {
  const Eigen::VectorXd h = h_profile(noise, m, mhat);
  const Eigen::Index n = h.size();
  const Eigen::Map<const Eigen::VectorXd> w(noise.density().weights().data(), n);
  const double lam2 = noise.lambda() * noise.lambda();
  const double c = qc == QConstant::derived ? mhat - m / (1.0 - m) : mhat - 1.0 / (1.0 - m);
  const Eigen::VectorXd rhs = Eigen::VectorXd::Constant(n, c);
  if (lam2 == 0.0) return rhs;

  Eigen::MatrixXd A = -lam2 * noise.divided_differences() * w.cwiseProduct(h).asDiagonal();
  A.diagonal().array() += 1.0;

  auto acceptable = [&](const Eigen::VectorXd& q) {
    const double resid = (A * q - rhs).lpNorm<Eigen::Infinity>();
    return resid <= 1e-8 * (1.0 + std::abs(c) + q.lpNorm<Eigen::Infinity>());
  };
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rcond() > 1e-9) {
    Eigen::VectorXd q = lu.solve(rhs);
    if (acceptable(q)) return q;
  }
  // At fixed points with Gaussian noise or a Gaussian prior, I - K is
  // singular and the constant vanishes with it. Both sit at rounding level,
  // so take the minimum-norm solution when the system is consistent.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  cod.setThreshold(1e-9);
  Eigen::VectorXd q = cod.solve(rhs);
  if (!acceptable(q)) {
    const double resid = (A * q - rhs).lpNorm<Eigen::Infinity>();
    throw NumericalError("singular Q system (residual " + std::to_string(resid) + ")");
  }
  return q;
}

double free_entropy_rs(const NoiseModel& noise, const Prior& prior, double m, double mhat,
                       QConstant qc) {
  if (!(mhat >= 0.0)) throw ValidationError("free entropy requires mhat >= 0");
  const Eigen::VectorXd h = h_profile(noise, m, mhat);
  const Eigen::VectorXd q = q_profile(noise, m, mhat, qc);
  const Eigen::Index n = h.size();
  const Eigen::Map<const Eigen::VectorXd> w(noise.density().weights().data(), n);
  const double lam2 = noise.lambda() * noise.lambda();

  const Eigen::VectorXd u = w.cwiseProduct(q).cwiseProduct(h);
  const double coupling_term = lam2 == 0.0 ? 0.0 : -0.5 * lam2 * u.dot(noise.divided_differences() * u);
  const double inv = 1.0 / (1.0 - m);
  const double log_h = w.dot(h.array().log().matrix());
  // The last term carries the same constant as the Q equation.
  const double c = qc == QConstant::derived ? mhat - m * inv : mhat - inv;
  const double tail = w.dot((c - q.array().square()).matrix().cwiseProduct(h));

  return coupling_term - 0.5 * m * m * inv - 0.5 * std::log(1.0 - m) - 0.5 * m +
         log_partition(prior, mhat) + 0.5 * log_h - 0.5 * tail;
}

double free_entropy(const NoiseModel& noise, const Prior& /*prior*/, const SaddlePoint& sp) {
  return sp.f_rs - 0.5 * noise.lambda() * noise.mean_dV();
}

SaddlePoint select_solution(const std::vector<SaddlePoint>& candidates) {
  if (candidates.empty()) throw ValidationError("select_solution needs at least one candidate");
  const SaddlePoint* best = &candidates.front();
  for (const SaddlePoint& c : candidates) {
    const double df = c.f_rs - best->f_rs;
    if (df > 1e-12 || (std::abs(df) <= 1e-12 && c.m_star > best->m_star)) best = &c;
  }
  return *best;
}

SaddlePoint solve_replica(const NoiseModel& noise, const Prior& prior, const SolverConfig& config) {
  std::vector<InitLabel> inits;
  if (config.init_policy != InitPolicy::informative) inits.push_back(InitLabel::uninformative);
  if (config.init_policy != InitPolicy::uninformative) inits.push_back(InitLabel::informative);

  std::vector<SaddlePoint> converged;
  std::vector<SaddlePoint> stalled;
  std::string last_error;
  for (InitLabel init : inits) {
    try {
      SaddlePoint sp = solve_fixed_point(noise, prior, init, config);
      (sp.converged ? converged : stalled).push_back(std::move(sp));
    } catch (const NumericalError& e) {
      // A branch whose iterates leave the invertible range has no fixed point
      // reachable on the principal sheet; the other init decides.
      last_error = e.what();
    }
  }
  if (!converged.empty()) return select_solution(converged);
  if (!stalled.empty()) return select_solution(stalled);
  throw NumericalError("no replica fixed point found at lambda = " + std::to_string(noise.lambda()) +
                       ": " + last_error);
}

PhaseCurve phase_curve(const SpectralDensity& rho, const Potential& pot, const Prior& prior,
                       const std::vector<double>& lambda_grid, const SolverConfig& config) {
  if (lambda_grid.empty()) throw ValidationError("lambda grid is empty");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] >= 0.0)) throw ValidationError("lambda grid must be nonnegative");
    if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1]))
      throw ValidationError("lambda grid must be strictly increasing");
  }

  const NoiseModel null_model(rho, pot, 0.0);
  const SaddlePoint null_point = solve_replica(null_model, prior, config);
  const double f0 = free_entropy(null_model, prior, null_point);

  const std::size_t n = lambda_grid.size();
  PhaseCurve pc;
  pc.lambdas = lambda_grid;
  pc.m_star.assign(n, 0.0);
  pc.mhat_star.assign(n, 0.0);
  pc.mmse_spike.assign(n, 0.0);
  pc.mmse_vector.assign(n, 0.0);
  pc.mi_per_component.assign(n, 0.0);
  pc.surrogate_snr.assign(n, std::numeric_limits<double>::quiet_NaN());
  pc.init_labels.assign(n, "");
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    try {
      const NoiseModel model(rho, pot, lambda_grid[i]);
      const SaddlePoint sp = solve_replica(model, prior, config);
      pc.m_star[i] = sp.m_star;
      pc.mhat_star[i] = sp.mhat_star;
      pc.mmse_spike[i] = 1.0 - sp.m_star * sp.m_star;
      pc.mmse_vector[i] = 1.0 - sp.m_star;
      pc.mi_per_component[i] = lambda_grid[i] == 0.0 ? 0.0 : f0 - free_entropy(model, prior, sp);
      pc.init_labels[i] = to_string(sp.init_label) + (sp.converged ? "" : "(unconverged)");
      if (sp.m_star > 1e-8 && sp.m_star < 1.0) {
        try {
          pc.surrogate_snr[i] = gaussian_surrogate_snr(model.law(), sp.m_star);
        } catch (const NumericalError&) {
        }
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return pc;
}

double gaussian_surrogate_snr(const PushforwardLaw& law, double m_star) {
  if (!(m_star > 0.0 && m_star < 1.0)) throw ValidationError("surrogate SNR needs m* in (0, 1)");
  const double radicand = -r_transform(law, 1.0 - m_star) / m_star;
  if (radicand < 0.0) throw NumericalError("negative surrogate SNR radicand: non-physical fixed point");
  return std::sqrt(radicand);
}

}  // namespace spiked
