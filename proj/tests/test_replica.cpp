#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "spiked/error.hpp"
#include "spiked/replica.hpp"

using namespace spiked;

namespace {

SpectralDensity builtin(DensityKind k) { return standardize(build_builtin_density(k)); }

NoiseModel builtin_model(DensityKind k, double lambda) {
  const SpectralDensity rho = builtin(k);
  return NoiseModel(rho, analytic_potential(rho), lambda);
}

double rademacher_overlap(double mhat) {
  return oracle::normal_expect([mhat](double z) { return std::tanh(mhat + std::sqrt(mhat) * z); }, 40000);
}

}  // namespace

TEST_CASE("Gaussian noise and Gaussian prior: m* = max(0, 1 - 1/lambda^2)") {
  const Prior g = Prior::gaussian();
  for (double lambda : {0.5, 1.5, 2.0, 3.0}) {
    CAPTURE(lambda);
    const NoiseModel model = gaussian_noise_model(lambda);
    const SaddlePoint sp = solve_replica(model, g, SolverConfig{});
    CHECK(sp.converged);
    CHECK(std::abs(sp.m_star - std::max(0.0, 1.0 - 1.0 / (lambda * lambda))) < 1e-4);
  }
}

TEST_CASE("Gaussian noise reduction: mhat = lambda^2 m along the iteration") {
  const double lambda = 2.0;
  const NoiseModel model = gaussian_noise_model(lambda);
  SolverConfig cfg;
  cfg.record_trace = true;
  const SaddlePoint sp = solve_fixed_point(model, Prior::rademacher(), InitLabel::informative, cfg);
  REQUIRE(sp.trace.size() > 3);
  // Each entry pairs the updated m with the mhat computed from the previous m.
  double worst = 0.0;
  double prev = 1.0 - 1e-4;
  for (const auto& [m, mhat] : sp.trace) {
    worst = std::max(worst, std::abs(mhat - lambda * lambda * prev));
    prev = m;
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("uninformative start above the Gaussian threshold leaves the R-transform range") {
  const NoiseModel model = gaussian_noise_model(2.0);
  try {
    solve_fixed_point(model, Prior::gaussian(), InitLabel::uninformative);
    FAIL("expected a range error");
  } catch (const RangeError& e) {
    CHECK(e.argument() == doctest::Approx(1.0 - 1e-4));
    CHECK(e.supremum() == doctest::Approx(0.5).epsilon(1e-6));
  }
  // solve_replica drops that branch and keeps the informative one.
  const SaddlePoint sp = solve_replica(model, Prior::gaussian(), SolverConfig{});
  CHECK(sp.m_star == doctest::Approx(0.75).epsilon(1e-8));
  CHECK(sp.init_label == InitLabel::informative);
}

TEST_CASE("quartic / Rademacher at lambda = 3 against a grid-scan oracle") {
  const NoiseModel model = builtin_model(DensityKind::quartic, 3.0);
  const PushforwardLaw& law = model.law();
  // m -> overlap(-R(1 - m)) - m, evaluated only with oracle pieces.
  auto F = [&](double m) {
    const double mhat = -oracle::r_transform(law.values, law.weights, 1.0 - m);
    return rademacher_overlap(std::max(mhat, 0.0)) - m;
  };
  double root = std::numeric_limits<double>::quiet_NaN();
  const int n = 400;
  double prev_m = 0.5;
  double prev_f = F(prev_m);
  for (int i = 1; i <= n; ++i) {
    // Denser near m = 1 where the informative root sits.
    const double m = 1.0 - 0.5 * std::pow(1e-8 / 0.5, static_cast<double>(i) / n);
    const double f = F(m);
    if ((f <= 0.0) != (prev_f <= 0.0)) root = oracle::bisect(F, prev_m, m, 80);
    prev_m = m;
    prev_f = f;
  }
  REQUIRE(std::isfinite(root));
  const SaddlePoint sp = solve_fixed_point(model, Prior::rademacher(), InitLabel::informative);
  CHECK(sp.converged);
  CHECK(std::abs(sp.m_star - root) < 1e-6);
  CHECK(sp.residual_m <= 1e-9);
  CHECK(sp.residual_mhat <= 1e-9);
}

TEST_CASE("Q from the linear solve matches Picard iteration") {
  const NoiseModel model = builtin_model(DensityKind::quartic, 3.0);
  const SaddlePoint sp = solve_fixed_point(model, Prior::rademacher(), InitLabel::informative);
  const double m = sp.m_star;
  const double mhat = sp.mhat_star;
  const double lambda = 3.0;

  const SpectralDensity& rho = model.density();
  const Potential& pot = model.potential();
  const auto& x = rho.nodes();
  const auto& w = rho.weights();
  const auto& J = model.coupling().values_at_nodes();
  const std::size_t n = x.size();
  std::vector<double> H(n);
  for (std::size_t j = 0; j < n; ++j) H[j] = 1.0 / (1.0 / (1.0 - m) - mhat - J[j]);
  auto dd = [&](std::size_t i, std::size_t j) {
    if (i == j) {
      const double h = 1e-5;
      return (pot(x[i] + h) - pot(x[i] - h)) / (2 * h);
    }
    return (pot(x[i]) - pot(x[j])) / (x[i] - x[j]);
  };
  const double c = mhat - m / (1.0 - m);
  std::vector<double> Q(n, c), next(n);
  for (int it = 0; it < 200; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += w[j] * dd(i, j) * H[j] * Q[j];
      next[i] = c + lambda * lambda * s;
    }
    Q.swap(next);
  }
  const Eigen::VectorXd q = q_profile(model, m, mhat);
  double sup = 0.0;
  for (std::size_t i = 0; i < n; ++i) sup = std::max(sup, std::abs(q[static_cast<Eigen::Index>(i)] - Q[i]));
  CHECK(sup < 1e-8);

  const Eigen::VectorXd h = h_profile(model, m, mhat);
  for (std::size_t i = 0; i < n; ++i) CHECK(h[static_cast<Eigen::Index>(i)] == doctest::Approx(H[i]).epsilon(1e-12));
  CHECK_THROWS_AS(h_profile(model, 0.999, 1e6), NumericalError);
}

TEST_CASE("branch selection agrees with a scan of the scalar potential") {
  // In Gaussian noise the free entropy at a fixed point is
  // F(m) - lambda^2 / 4 with F(q) = E log Z(lambda^2 q) - lambda^2 q^2 / 4.
  // A sparse prior below the spectral threshold has two fixed points and a
  // first-order jump between lambda = 0.85 and 0.9.
  const Prior p = Prior::sparse_rademacher(std::sqrt(0.05));
  for (double lam : {0.85, 0.9, 0.95}) {
    CAPTURE(lam);
    const NoiseModel model = gaussian_noise_model(lam);
    const double b = lam * lam;
    auto F = [&](double q) { return log_partition(p, b * q) - 0.25 * b * q * q; };
    double best = -1e300;
    double arg = 0.0;
    for (int k = 0; k <= 20000; ++k) {
      const double q = k / 20000.0;
      if (F(q) > best) {
        best = F(q);
        arg = q;
      }
    }
    const SaddlePoint lo = solve_fixed_point(model, p, InitLabel::uninformative);
    const SaddlePoint hi = solve_fixed_point(model, p, InitLabel::informative);
    REQUIRE(lo.converged);
    REQUIRE(hi.converged);
    CHECK(lo.m_star < 1e-8);
    CHECK(hi.m_star > 0.4);
    CHECK(lo.f_rs == doctest::Approx(F(lo.m_star) - 0.25 * b).epsilon(1e-9));
    CHECK(hi.f_rs == doctest::Approx(F(hi.m_star) - 0.25 * b).epsilon(1e-9));
    CHECK(solve_replica(model, p, SolverConfig{}).m_star == doctest::Approx(arg).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("select_solution ordering") {
  SaddlePoint a;
  a.m_star = 0.0;
  a.f_rs = -0.2;
  a.converged = true;
  SaddlePoint b;
  b.m_star = 0.75;
  b.mhat_star = 3.0;
  b.f_rs = -0.1;
  b.converged = true;
  CHECK(select_solution({a, b}).m_star == 0.75);
  CHECK(select_solution({a, b}).m_star == select_solution({b, a}).m_star);
  CHECK(select_solution({a}).m_star == 0.0);
  // Ties break toward the larger overlap.
  a.f_rs = b.f_rs;
  CHECK(select_solution({a, b}).m_star == 0.75);
  CHECK(select_solution({b, a}).m_star == 0.75);
  CHECK_THROWS_AS(select_solution({}), ValidationError);
}

TEST_CASE("both Q constants are evaluable and differ") {
  const NoiseModel model = builtin_model(DensityKind::quartic, 2.0);
  const SaddlePoint sp = solve_replica(model, Prior::rademacher(), SolverConfig{});
  const double d = free_entropy_rs(model, Prior::rademacher(), sp.m_star, sp.mhat_star, QConstant::derived);
  const double l = free_entropy_rs(model, Prior::rademacher(), sp.m_star, sp.mhat_star, QConstant::literal);
  CHECK(std::isfinite(d));
  CHECK(std::isfinite(l));
  CHECK(d != l);
}

TEST_CASE("phase curve invariants") {
  const SpectralDensity sc = builtin(DensityKind::semicircle);
  const Potential id([](double x) { return x; }, PotentialSource::analytic);
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(0.25 * i);
  const PhaseCurve pc = phase_curve(sc, id, Prior::gaussian(), grid);
  REQUIRE(pc.lambdas.size() == grid.size());
  CHECK(pc.mi_per_component[0] == 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double l = grid[i];
    CAPTURE(l);
    const double m = std::max(0.0, 1.0 - 1.0 / (l * l));
    CHECK(std::abs(pc.mmse_spike[i] - (1.0 - m * m)) < 1e-4);
    CHECK(pc.mmse_spike[i] == doctest::Approx(1.0 - pc.m_star[i] * pc.m_star[i]).epsilon(1e-15));
    CHECK(pc.mmse_vector[i] == doctest::Approx(1.0 - pc.m_star[i]).epsilon(1e-15));
    if (l < 1.0) CHECK(pc.mi_per_component[i] == doctest::Approx(l * l / 4.0).epsilon(1e-9));
    if (l > 1.0) CHECK(pc.surrogate_snr[i] == doctest::Approx(l).epsilon(1e-8));
    if (i > 0) {
      CHECK(pc.mmse_spike[i] <= pc.mmse_spike[i - 1] + 1e-12);
      CHECK(pc.mi_per_component[i] >= pc.mi_per_component[i - 1] - 1e-12);
    }
  }

  const SpectralDensity q = builtin(DensityKind::quartic);
  const PhaseCurve pq = phase_curve(q, analytic_potential(q), Prior::rademacher(), {0.0, 0.5, 1.0, 1.5, 2.0, 3.0});
  CHECK(pq.mi_per_component[0] == 0.0);
  for (std::size_t i = 1; i < pq.lambdas.size(); ++i) {
    CHECK(pq.mmse_spike[i] <= pq.mmse_spike[i - 1] + 1e-12);
    CHECK(pq.mi_per_component[i] >= pq.mi_per_component[i - 1] - 1e-12);
  }

  CHECK_THROWS_AS(phase_curve(q, analytic_potential(q), Prior::rademacher(), {}), ValidationError);
  CHECK_THROWS_AS(phase_curve(q, analytic_potential(q), Prior::rademacher(), {2.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(phase_curve(q, analytic_potential(q), Prior::rademacher(), {-1.0}), ValidationError);
}

TEST_CASE("reported saddle points satisfy the invariants") {
  for (DensityKind k : {DensityKind::quartic, DensityKind::sestic, DensityKind::marchenko_pastur}) {
    for (const Prior& p : {Prior::rademacher(), Prior::sparse_rademacher(), Prior::gaussian()}) {
      for (double lambda : {0.5, 1.5, 3.0}) {
        const SaddlePoint sp = solve_replica(builtin_model(k, lambda), p, SolverConfig{});
        CAPTURE(to_string(k));
        CAPTURE(lambda);
        CHECK(sp.m_star >= 0.0);
        CHECK(sp.m_star <= 1.0);
        CHECK(sp.mhat_star >= 0.0);
        if (sp.converged) {
          CHECK(sp.residual_m <= 1e-9);
          CHECK(sp.residual_mhat <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("Gaussian surrogate SNR round trip") {
  {
    const NoiseModel g = gaussian_noise_model(2.5);
    CHECK(gaussian_surrogate_snr(g.law(), 1.0 - 1.0 / 6.25) == doctest::Approx(2.5).epsilon(1e-8));
  }
  for (DensityKind k : {DensityKind::quartic, DensityKind::marchenko_pastur}) {
    for (const Prior& p : {Prior::rademacher(), Prior::sparse_rademacher()}) {
      for (double lambda : {1.5, 2.0, 3.0}) {
        const NoiseModel model = builtin_model(k, lambda);
        const SaddlePoint sp = solve_replica(model, p, SolverConfig{});
        REQUIRE(sp.converged);
        REQUIRE(sp.m_star > 0.0);
        const double lt = gaussian_surrogate_snr(model.law(), sp.m_star);
        const SaddlePoint back = solve_replica(gaussian_noise_model(lt), p, SolverConfig{});
        CAPTURE(lambda);
        CHECK(std::abs(back.m_star - sp.m_star) < 1e-8);
      }
    }
  }
  CHECK_THROWS_AS(gaussian_surrogate_snr(gaussian_noise_model(2.0).law(), 0.0), ValidationError);
}

TEST_CASE("Gaussian-noise mutual information matches the scalar variational formula") {
  // For V'(x) = x the model is the spiked Wigner model at SNR beta = lambda^2,
  // whose mutual information per component is
  //   beta/4 - max_q [psi(beta q) - beta q^2 / 4],
  // psi being the scalar-channel log partition. The max is taken over a dense
  // grid here, independently of the fixed-point solver.
  const SpectralDensity sc = builtin(DensityKind::semicircle);
  const Potential id([](double x) { return x; }, PotentialSource::analytic);
  const std::vector<double> grid{0.0, 0.5, 0.9, 1.2, 1.5, 2.0, 3.0};
  for (const Prior& p : {Prior::gaussian(), Prior::rademacher(), Prior::sparse_rademacher()}) {
    CAPTURE(to_string(p.kind()));
    const PhaseCurve pc = phase_curve(sc, id, p, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double beta = grid[i] * grid[i];
      auto F = [&](double q) { return log_partition(p, beta * q) - beta * q * q / 4.0; };
      double best = F(0.0);
      double arg = 0.0;
      for (int k = 1; k <= 2000; ++k) {
        const double q = k / 2000.0;
        if (F(q) > best) {
          best = F(q);
          arg = q;
        }
      }
      // Refine the maximizer with golden-section search.
      double a = std::max(0.0, arg - 1e-3);
      double b = std::min(1.0, arg + 1e-3);
      const double r = (std::sqrt(5.0) - 1.0) / 2.0;
      for (int it = 0; it < 100; ++it) {
        const double c = b - r * (b - a);
        const double d = a + r * (b - a);
        if (F(c) > F(d)) b = d; else a = c;
      }
      best = std::max(best, F(0.5 * (a + b)));
      CAPTURE(grid[i]);
      CHECK(pc.mi_per_component[i] == doctest::Approx(beta / 4.0 - best).epsilon(1e-8).scale(1.0));
    }
  }
}

TEST_CASE("free entropy vanishes at lambda = 0") {
  for (DensityKind k : {DensityKind::quartic, DensityKind::marchenko_pastur}) {
    const NoiseModel model = builtin_model(k, 0.0);
    CHECK(std::abs(free_entropy_rs(model, Prior::rademacher(), 0.0, 0.0)) < 1e-14);
  }
}

TEST_CASE("Q system at Gaussian-prior fixed points is singular and consistent") {
  // mhat = m / (1 - m) along the Gaussian overlap curve, so the constant
  // vanishes together with the smallest singular value of I - K.
  for (double lam : {1.5, 2.0, 3.0}) {
    CAPTURE(lam);
    const NoiseModel model = builtin_model(DensityKind::quartic, lam);
    const SaddlePoint sp = solve_fixed_point(model, Prior::gaussian(), InitLabel::informative);
    REQUIRE(sp.converged);
    CHECK(std::abs(sp.mhat_star - sp.m_star / (1.0 - sp.m_star)) < 1e-9);
    const Eigen::VectorXd q = q_profile(model, sp.m_star, sp.mhat_star);
    CHECK(q.lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(std::isfinite(sp.f_rs));
  }
}
