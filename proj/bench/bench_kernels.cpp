// Serial reference against the OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "spiked/kernels.hpp"

using namespace spiked;

namespace {

struct Fixture {
  Eigen::MatrixXd JY;
  Eigen::VectorXd m;
  Eigen::VectorXd m_prev;
  Eigen::VectorXd out;

  explicit Fixture(int n) : JY(n, n), m(n), m_prev(n) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) JY(i, j) = JY(j, i) = nd(rng) / std::sqrt(double(n));
    for (int i = 0; i < n; ++i) {
      m[i] = 0.5 * nd(rng);
      m_prev[i] = 0.5 * nd(rng);
    }
  }
};

void BM_tap_update_serial(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  const Prior p = Prior::rademacher();
  for (auto _ : state) {
    kernels::serial::tap_update(f.JY, f.m, f.m_prev, 0.8, 0.9, p, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

void BM_tap_update_omp(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  const Prior p = Prior::rademacher();
  for (auto _ : state) {
    kernels::omp::tap_update(f.JY, f.m, f.m_prev, 0.8, 0.9, p, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

const EffectiveCoupling& quartic_coupling() {
  static const EffectiveCoupling jc = [] {
    const SpectralDensity rho = standardize(build_builtin_density(DensityKind::quartic));
    return EffectiveCoupling(rho, analytic_potential(rho), 2.0);
  }();
  return jc;
}

void BM_coupling_table_serial(benchmark::State& state) {
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(state.range(0), -2.5, 2.5);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::coupling_table(quartic_coupling(), x));
}

void BM_coupling_table_omp(benchmark::State& state) {
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(state.range(0), -2.5, 2.5);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::coupling_table(quartic_coupling(), x));
}

}  // namespace

BENCHMARK(BM_tap_update_serial)->Arg(500)->Arg(1000)->Arg(2000);
BENCHMARK(BM_tap_update_omp)->Arg(500)->Arg(1000)->Arg(2000);
BENCHMARK(BM_coupling_table_serial)->Arg(1000)->Arg(2000);
BENCHMARK(BM_coupling_table_omp)->Arg(1000)->Arg(2000);

BENCHMARK_MAIN();
