#include "spiked/tap.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "spiked/error.hpp"
#include "spiked/kernels.hpp"
#include "spiked/random.hpp"

namespace spiked {

namespace {

constexpr double kClampMargin = 1e-9;

}  // namespace

OnsagerMode parse_onsager_mode(const std::string& name) {
  if (name == "adaptive") return OnsagerMode::adaptive;
  if (name == "fixed_from_replica" || name == "fixed") return OnsagerMode::fixed_from_replica;
  throw ValidationError("unknown Onsager mode '" + name + "'");
}

InitMode parse_init_mode(const std::string& name) {
  if (name == "pca") return InitMode::pca;
  if (name == "informative") return InitMode::informative;
  throw ValidationError("unknown TAP init '" + name + "'");
}

ClampPolicy parse_clamp_policy(const std::string& name) {
  if (name == "error") return ClampPolicy::error;
  if (name == "clamp_to_range" || name == "clamp") return ClampPolicy::clamp_to_range;
  throw ValidationError("unknown clamp policy '" + name + "'");
}

std::string to_string(OnsagerMode mode) {
  return mode == OnsagerMode::adaptive ? "adaptive" : "fixed_from_replica";
}
std::string to_string(InitMode mode) { return mode == InitMode::pca ? "pca" : "informative"; }
std::string to_string(ClampPolicy policy) {
  return policy == ClampPolicy::error ? "error" : "clamp_to_range";
}

void TapConfig::validate() const {
  if (!(tau >= 0.0 && tau < 1.0)) throw ValidationError("tap.tau must lie in [0, 1)");
  if (!(tol > 0.0)) throw ValidationError("tap.tol must be positive");
  if (max_iter < 1) throw ValidationError("tap.max_iter must be at least 1");
  if (init_mode == InitMode::informative && !(init_correlation > 0.0 && init_correlation <= 1.0))
    throw ValidationError("tap.init_correlation must lie in (0, 1]");
  if (!(divergence_bound > 1.0)) throw ValidationError("divergence bound must exceed 1");
}

PcaInit pca_init(const Eigen::MatrixXd& Y, int power_iters, std::uint64_t seed) {
  if (Y.rows() != Y.cols() || Y.rows() == 0) throw ValidationError("pca_init needs a nonempty square matrix");
  if (power_iters < 1) throw ValidationError("pca_init needs at least one power iteration");
  const Eigen::Index n = Y.rows();
  Rng rng = make_rng(seed, Stream::power_iteration);
  std::normal_distribution<double> nd(0.0, 1.0);

  struct Pass {
    Eigen::VectorXd v;
    double rq;
    int iters;
    bool converged;
  };
  auto power = [&](double shift) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
    v.normalize();
    double rq = v.dot(Y * v);
    Pass p{v, rq, 0, false};
    for (int k = 1; k <= power_iters; ++k) {
      Eigen::VectorXd w = Y * p.v + shift * p.v;
      const double norm = w.norm();
      if (!(norm > 0.0)) break;
      p.v = w / norm;
      const double next = p.v.dot(Y * p.v);
      p.iters = k;
      const bool done = std::abs(next - p.rq) <= 1e-10 * std::max(1.0, std::abs(next));
      p.rq = next;
      if (done) {
        p.converged = true;
        break;
      }
    }
    return p;
  };

  // Power iteration finds the largest |eigenvalue|; if that one is negative,
  // shift the spectrum so the top of it dominates instead.
  double shift = 0.0;
  Pass a = power(shift);
  if (a.rq < 0.0) {
    shift = 2.0 * std::abs(a.rq);
    a = power(shift);
  }
  const Pass b = power(shift);

  PcaInit out;
  out.eigenvalue = a.rq;
  out.iterations = a.iters;
  out.converged = a.converged;
  out.degenerate = std::abs(a.v.dot(b.v)) < 1.0 - 1e-6;
  out.m0 = std::sqrt(static_cast<double>(n)) * a.v;
  return out;
}

Eigen::VectorXd informative_init(const Eigen::VectorXd& X_star, double c, std::uint64_t seed) {
  if (!(c > 0.0 && c <= 1.0)) throw ValidationError("initial correlation must lie in (0, 1]");
  const double xn = X_star.norm();
  if (!(xn > 0.0)) throw ValidationError("informative init needs a nonzero signal");
  const Eigen::Index n = X_star.size();
  const Eigen::VectorXd xhat = X_star / xn;
  Eigen::VectorXd v = c * xhat;
  if (c < 1.0) {
    Rng rng = make_rng(seed, Stream::init);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd w(n);
    double wn = 0.0;
    while (!(wn > 0.0)) {
      for (Eigen::Index i = 0; i < n; ++i) w[i] = nd(rng);
      w -= w.dot(xhat) * xhat;
      w -= w.dot(xhat) * xhat;
      wn = w.norm();
    }
    v += std::sqrt(1.0 - c * c) * (w / wn);
  }
  return std::sqrt(static_cast<double>(n)) * v;
}

double onsager_gamma(const PushforwardLaw& law, double q_tilde, ClampPolicy policy, int& warnings) {
  double s = 1.0 - q_tilde;
  const double sup = law.argument_supremum();
  if (!(s > 0.0) || s > sup) {
    if (policy == ClampPolicy::error) return -r_transform(law, s);
    s = std::clamp(s, kClampMargin, sup - kClampMargin);
    ++warnings;
  }
  return -r_transform(law, s);
}

Metrics metrics(const Eigen::VectorXd& m, const Eigen::VectorXd& X_star, bool sign_symmetric) {
  if (m.size() != X_star.size()) throw ValidationError("metrics: vector lengths differ");
  const double n = static_cast<double>(m.size());
  const double mx = m.dot(X_star);
  const double xx = X_star.squaredNorm();
  const double mm = m.squaredNorm();
  Metrics out;
  out.overlap = mx / n;
  out.mse_spike = std::max(0.0, (xx * xx + mm * mm - 2.0 * mx * mx) / (n * n));
  const double s = sign_symmetric && mx < 0.0 ? -1.0 : 1.0;
  out.mse_vector = (X_star - s * m).squaredNorm() / n;
  return out;
}

TapRun run_tap(const Eigen::MatrixXd& JY, const Prior& prior, const PushforwardLaw& law,
               const Eigen::VectorXd& m0, const TapConfig& config, std::optional<double> replica_gamma,
               const Eigen::VectorXd* X_star) {
  config.validate();
  const Eigen::Index n = m0.size();
  if (JY.rows() != n || JY.cols() != n) throw ValidationError("run_tap: JY and m0 sizes differ");
  const double nd = static_cast<double>(n);
  if (m0.squaredNorm() / nd > 1.0 + 1e-6) throw ValidationError("run_tap: initial ||m0||^2/N exceeds 1");
  if (config.onsager_mode == OnsagerMode::fixed_from_replica && !replica_gamma)
    throw ValidationError("run_tap: fixed_from_replica mode needs the replica Onsager coefficient");
  if (X_star && X_star->size() != n) throw ValidationError("run_tap: ground truth length differs");

  TapRun run;
  Eigen::VectorXd m = m0;
  Eigen::VectorXd m_prev = config.warm_memory ? Eigen::VectorXd(m0) : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd next(n);
  auto record_mse = [&](const Eigen::VectorXd& v) {
    if (X_star) run.mse_history.push_back(metrics(v, *X_star, prior.sign_symmetric()).mse_spike);
  };
  record_mse(m);

  for (int t = 0; t < config.max_iter; ++t) {
    const double q = m.squaredNorm() / nd;
    const double gamma = config.onsager_mode == OnsagerMode::fixed_from_replica
                             ? *replica_gamma
                             : onsager_gamma(law, q, config.clamp_policy, run.clamp_warnings);
    run.q_tilde_history.push_back(q);
    run.gamma_history.push_back(gamma);
    if (config.kernel == KernelFlavor::serial)
      kernels::serial::tap_update(JY, m, m_prev, gamma, config.tau, prior, next);
    else
      kernels::omp::tap_update(JY, m, m_prev, gamma, config.tau, prior, next);
    const double step = (next - m).norm() / std::sqrt(nd);
    m_prev.swap(m);
    m.swap(next);
    run.iterations = t + 1;
    record_mse(m);
    const double q_next = m.squaredNorm() / nd;
    if (!std::isfinite(q_next) || q_next < 0.0 || q_next > config.divergence_bound) {
      run.diverged = true;
      break;
    }
    if (step <= config.tol) {
      run.converged = true;
      break;
    }
  }
  run.m_final = m;
  if (X_star) {
    const Metrics mt = metrics(m, *X_star, prior.sign_symmetric());
    run.mse_spike = mt.mse_spike;
    run.mse_vector = mt.mse_vector;
    run.overlap = mt.overlap;
  }
  return run;
}

std::optional<double> bbp_outlier(const SpectralDensity& rho, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("BBP location needs lambda > 0");
  const double hi = rho.hi();
  const double delta = 1e-12 * std::max(1.0, std::abs(hi));
  const double target = 1.0 / lambda;
  const double g_edge = stieltjes_transform(rho, hi + delta);
  if (target >= g_edge) return std::nullopt;
  auto f = [&](double z) { return stieltjes_transform(rho, z) - target; };
  const double a = hi + delta;
  double b = hi + 2.0 * lambda;
  double fb = f(b);
  while (fb > 0.0) {
    b = hi + 2.0 * (b - hi);
    fb = f(b);
  }
  auto tol = [](double x, double y) { return std::abs(x - y) <= 1e-14 * std::max(1.0, std::abs(x)); };
  std::uintmax_t iters = 200;
  auto [lo, up] = boost::math::tools::toms748_solve(f, a, b, g_edge - target, fb, tol, iters);
  if (iters >= 200) throw NumericalError("BBP outlier root search did not converge");
  return 0.5 * (lo + up);
}

double pca_overlap_theory(const SpectralDensity& rho, double lambda) {
  const std::optional<double> z = bbp_outlier(rho, lambda);
  if (!z) return 0.0;
  const double gp = stieltjes_derivative(rho, *z);
  return std::clamp(-1.0 / (lambda * lambda * gp), 0.0, 1.0);
}

}  // namespace spiked
