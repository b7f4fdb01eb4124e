#include <doctest.h>

#include <cmath>

#include "spiked/ensemble.hpp"
#include "spiked/error.hpp"
#include "spiked/experiments.hpp"
#include "spiked/replica.hpp"
#include "spiked/tap.hpp"

using namespace spiked;

namespace {

SpectralDensity builtin(DensityKind k) { return standardize(build_builtin_density(k)); }

NoiseModel builtin_model(DensityKind k, double lambda) {
  const SpectralDensity rho = builtin(k);
  return NoiseModel(rho, analytic_potential(rho), lambda);
}

}  // namespace

TEST_CASE("PCA initialization") {
  const int n = 50;
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(n, n);
  D(3, 3) = 2.0;
  const PcaInit p = pca_init(D, 2000, 1);
  CHECK(p.converged);
  CHECK_FALSE(p.degenerate);
  CHECK(p.eigenvalue == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(p.m0.squaredNorm() == doctest::Approx(n).epsilon(1e-12));
  CHECK(std::abs(p.m0[3]) == doctest::Approx(std::sqrt(double(n))).epsilon(1e-6));

  const PcaInit flat = pca_init(Eigen::MatrixXd::Identity(n, n), 50, 1);
  CHECK(flat.degenerate);

  // Largest |eigenvalue| is negative: the top of the spectrum must still win.
  Eigen::MatrixXd neg = Eigen::MatrixXd::Zero(n, n);
  neg.diagonal().setConstant(-0.5);
  neg(0, 0) = -5.0;
  neg(7, 7) = 1.0;
  const PcaInit q = pca_init(neg, 5000, 2);
  CHECK(q.eigenvalue == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(q.m0[7]) == doctest::Approx(std::sqrt(double(n))).epsilon(1e-6));

  CHECK_THROWS_AS(pca_init(Eigen::MatrixXd(2, 3), 10, 1), ValidationError);
  CHECK_THROWS_AS(pca_init(D, 0, 1), ValidationError);
}

TEST_CASE("informative initialization") {
  const Eigen::VectorXd x = sample_signal(Prior::rademacher(), 500, 4);
  for (double c : {0.1, 0.5, std::sqrt(0.5), std::sqrt(0.9), 0.99, 1.0}) {
    CAPTURE(c);
    const Eigen::VectorXd m0 = informative_init(x, c, 9);
    CHECK(m0.squaredNorm() / 500 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m0.dot(x) / (m0.norm() * x.norm()) == doctest::Approx(c).epsilon(1e-10));
  }
  CHECK(informative_init(x, 0.5, 9) == informative_init(x, 0.5, 9));
  CHECK((informative_init(x, 1.0, 9) - x).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK_THROWS_AS(informative_init(x, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(informative_init(x, 1.5, 1), ValidationError);
  CHECK_THROWS_AS(informative_init(Eigen::VectorXd::Zero(5), 0.5, 1), ValidationError);
}

TEST_CASE("metrics") {
  const Eigen::VectorXd x = sample_signal(Prior::rademacher(), 100, 5);
  Metrics m = metrics(x, x);
  CHECK(m.mse_spike == doctest::Approx(0.0).scale(1.0));
  CHECK(m.mse_vector == 0.0);
  CHECK(m.overlap == doctest::Approx(1.0));
  m = metrics(-x, x);
  CHECK(m.mse_spike == doctest::Approx(0.0).scale(1.0));
  CHECK(m.mse_vector == 0.0);
  CHECK(m.overlap == doctest::Approx(-1.0));
  CHECK(metrics(-x, x, false).mse_vector == doctest::Approx(4.0));
  m = metrics(Eigen::VectorXd::Zero(100), x);
  CHECK(m.mse_spike == doctest::Approx(1.0));
  CHECK(m.mse_vector == doctest::Approx(1.0));
  CHECK(m.overlap == 0.0);
  CHECK_THROWS_AS(metrics(x.head(3), x), ValidationError);
}

TEST_CASE("Onsager coefficient from the R-transform") {
  // Gaussian noise: -R(1 - q) = lambda^2 q on the invertible range.
  const NoiseModel g = gaussian_noise_model(2.0);
  int warnings = 0;
  CHECK(onsager_gamma(g.law(), 0.75, ClampPolicy::error, warnings) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(warnings == 0);
  CHECK_THROWS_AS(onsager_gamma(g.law(), 0.2, ClampPolicy::error, warnings), RangeError);
  const double clamped = onsager_gamma(g.law(), 0.2, ClampPolicy::clamp_to_range, warnings);
  CHECK(warnings == 1);
  CHECK(clamped == doctest::Approx(2.0).epsilon(1e-6));
  onsager_gamma(g.law(), 1.3, ClampPolicy::clamp_to_range, warnings);
  CHECK(warnings == 2);
}

TEST_CASE("TAP iteration contracts") {
  const int n = 120;
  const NoiseModel model = builtin_model(DensityKind::quartic, 0.0);
  const Eigen::MatrixXd JY = Eigen::MatrixXd::Zero(n, n);
  const Eigen::VectorXd x = sample_signal(Prior::rademacher(), n, 3);
  const Eigen::VectorXd m0 = informative_init(x, 0.6, 3);

  TapConfig cfg;
  cfg.tau = 0.0;
  cfg.max_iter = 1;
  cfg.onsager_mode = OnsagerMode::fixed_from_replica;
  // J vanishes at lambda = 0 and the first iterate sees m_prev = 0.
  TapRun r = run_tap(JY, Prior::rademacher(), model.law(), m0, cfg, 0.0, &x);
  CHECK(r.iterations == 1);
  CHECK(r.m_final.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(r.mse_history.size() == 2);
  CHECK(r.q_tilde_history.front() == doctest::Approx(1.0));

  cfg.tau = 0.9;
  r = run_tap(JY, Prior::rademacher(), model.law(), m0, cfg, 0.0);
  CHECK((r.m_final - 0.9 * m0).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(r.mse_history.empty());

  // The damped update is the stated convex combination.
  const Eigen::MatrixXd R = rotate_spectrum(Eigen::VectorXd::LinSpaced(n, -1.0, 1.0), n, 5);
  cfg.max_iter = 1;
  r = run_tap(R, Prior::rademacher(), model.law(), m0, cfg, 0.4);
  const Eigen::VectorXd field = R * m0;
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK(std::abs(r.m_final[i] - (0.9 * m0[i] + 0.1 * std::tanh(field[i]))) <= 1e-15);
  cfg.warm_memory = true;
  r = run_tap(R, Prior::rademacher(), model.law(), m0, cfg, 0.4);
  const Eigen::VectorXd warm = R * m0 + 0.4 * m0;
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK(std::abs(r.m_final[i] - (0.9 * m0[i] + 0.1 * std::tanh(warm[i]))) <= 1e-15);
  cfg.warm_memory = false;
  cfg.max_iter = 5;

  CHECK_THROWS_AS(run_tap(JY, Prior::rademacher(), model.law(), m0, cfg), ValidationError);
  CHECK_THROWS_AS(run_tap(JY, Prior::rademacher(), model.law(), 2.0 * m0, cfg, 0.0), ValidationError);
  cfg.tau = 1.0;
  CHECK_THROWS_AS(run_tap(JY, Prior::rademacher(), model.law(), m0, cfg, 0.0), ValidationError);
}

TEST_CASE("BBP outlier and PCA overlap theory") {
  const SpectralDensity sc = build_builtin_density(DensityKind::semicircle);
  // Semicircle: z* = lambda + 1/lambda and overlap^2 = 1 - 1/lambda^2.
  for (double lam : {1.5, 2.0, 3.0}) {
    CAPTURE(lam);
    CHECK(*bbp_outlier(sc, lam) == doctest::Approx(lam + 1.0 / lam).epsilon(1e-9));
    CHECK(pca_overlap_theory(sc, lam) == doctest::Approx(1.0 - 1.0 / (lam * lam)).epsilon(1e-8));
  }
  CHECK_FALSE(bbp_outlier(sc, 0.8).has_value());
  CHECK(pca_overlap_theory(sc, 1.0) == 0.0);
  CHECK(pca_overlap_theory(sc, 0.5) == 0.0);
  CHECK_THROWS_AS(bbp_outlier(sc, 0.0), ValidationError);
}

TEST_CASE("empirical PCA overlap at N = 1000") {
  const SpectralDensity sc = build_builtin_density(DensityKind::semicircle);
  double acc = 0.0;
  const int reps = 3;
  for (int r = 0; r < reps; ++r) {
    const Observation obs = make_observation(Prior::rademacher(), sc, 2.0, 1000, 40 + r);
    const PcaInit p = pca_init(obs.Y, 3000, 40 + r);
    const double o = p.m0.dot(obs.X_star) / 1000.0;
    acc += o * o;
  }
  CHECK(acc / reps == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("PCA initialization on spiked quartic noise") {
  // pca_overlap_theory is the squared overlap.
  const SpectralDensity q = builtin(DensityKind::quartic);
  const Observation obs = make_observation(Prior::rademacher(), q, 3.0, 1000, 2);
  const PcaInit p = pca_init(obs.Y, 3000, 2);
  CHECK(p.converged);
  const double o = std::abs(p.m0.dot(obs.X_star)) / 1000.0;
  CHECK(std::abs(o - std::sqrt(pca_overlap_theory(q, 3.0))) < 0.05);
}

TEST_CASE("TAP at N = 1000 matches the replica MMSE in most trials") {
  const NoiseModel model = builtin_model(DensityKind::quartic, 3.0);
  const SaddlePoint sp = solve_replica(model, Prior::rademacher(), SolverConfig{});
  TrialRequest req;
  req.lambda = 3.0;
  req.n = 1000;
  req.tap.tau = 0.9;
  req.tap.onsager_mode = OnsagerMode::fixed_from_replica;
  req.replica_gamma = sp.mhat_star;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  int close = 0;
  for (const TrialResult& t : run_trials(model, Prior::rademacher(), req, seeds, 0))
    close += t.included() && std::abs(t.mse_spike - (1.0 - sp.m_star * sp.m_star)) <= 0.05;
  CHECK(close >= 8);
}

TEST_CASE("small TAP runs approach the replica prediction") {
  const NoiseModel model = builtin_model(DensityKind::quartic, 3.0);
  const SaddlePoint sp = solve_replica(model, Prior::rademacher(), SolverConfig{});
  TrialRequest req;
  req.lambda = 3.0;
  req.n = 400;
  req.tap.onsager_mode = OnsagerMode::fixed_from_replica;
  req.replica_gamma = sp.mhat_star;
  const std::vector<TrialResult> runs = run_trials(model, Prior::rademacher(), req, {1, 2, 3}, 0);
  double mean = 0.0;
  for (const TrialResult& t : runs) {
    CHECK(t.included());
    CHECK(t.converged);
    mean += t.mse_spike / runs.size();
  }
  CHECK(std::abs(mean - (1.0 - sp.m_star * sp.m_star)) < 0.05);

  // The serial kernel reproduces the parallel run.
  req.tap.kernel = KernelFlavor::serial;
  const TrialResult s = run_trial(model, Prior::rademacher(), [&] {
    TrialRequest r = req;
    r.seed = 1;
    return r;
  }());
  CHECK(s.iterations == runs[0].iterations);
  CHECK(s.mse_spike == doctest::Approx(runs[0].mse_spike).epsilon(1e-9));
}

TEST_CASE("Rademacher TAP started at the replica fixed point stays there") {
  const double lambda = 2.0;
  const int n = 1000;
  const NoiseModel model = builtin_model(DensityKind::quartic, lambda);
  const SaddlePoint sp = solve_replica(model, Prior::rademacher(), SolverConfig{});
  for (std::uint64_t seed : {21, 22}) {
    CAPTURE(seed);
    const Observation obs = make_observation(Prior::rademacher(), model.density(), lambda, n, seed);
    const Eigen::MatrixXd JY = matrix_function_apply(obs.Y, [&](double v) { return model.coupling()(v); });
    const double c = std::sqrt(sp.m_star);
    const Eigen::VectorXd m0 = c * informative_init(obs.X_star, c, seed);

    TapConfig cfg;
    cfg.max_iter = 50;
    cfg.tol = 1e-14;
    cfg.onsager_mode = OnsagerMode::fixed_from_replica;
    cfg.warm_memory = true;
    const TapRun r = run_tap(JY, Prior::rademacher(), model.law(), m0, cfg, sp.mhat_star, &obs.X_star);
    CHECK_FALSE(r.diverged);
    REQUIRE(r.q_tilde_history.size() == 50);
    const double q0 = r.q_tilde_history.front();
    CHECK(q0 == doctest::Approx(sp.m_star).epsilon(1e-12));
    for (double q : r.q_tilde_history) CHECK(std::abs(q - q0) < 0.05);
  }
}
