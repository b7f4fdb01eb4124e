#include "spiked/ensemble.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "spiked/error.hpp"
#include "spiked/random.hpp"

namespace spiked {

namespace {

// LAPACK dsyevd with gfortran's hidden string-length arguments.
using dsyevd_fn = void (*)(const char*, const char*, const int*, double*, const int*, double*, double*,
                           const int*, int*, const int*, int*, std::size_t, std::size_t);

struct EigenBackend {
  dsyevd_fn dsyevd = nullptr;
  std::string name = "eigen";
};

SymmetricEigen eigen_solve(const Eigen::MatrixXd& M, bool want_vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      M, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  SymmetricEigen out;
  out.values = es.eigenvalues();
  if (want_vectors) out.vectors = es.eigenvectors();
  return out;
}

SymmetricEigen lapack_solve(dsyevd_fn f, const Eigen::MatrixXd& M, bool want_vectors) {
  const int n = static_cast<int>(M.rows());
  SymmetricEigen out;
  out.vectors = M;
  out.values.resize(n);
  const char* jobz = want_vectors ? "V" : "N";
  int lwork = -1;
  int liwork = -1;
  int info = 0;
  double wq = 0.0;
  int iwq = 0;
  f(jobz, "L", &n, out.vectors.data(), &n, out.values.data(), &wq, &lwork, &iwq, &liwork, &info, 1, 1);
  if (info != 0) throw NumericalError("dsyevd workspace query failed");
  lwork = static_cast<int>(wq);
  liwork = iwq;
  std::vector<double> work(static_cast<std::size_t>(std::max(lwork, 1)));
  std::vector<int> iwork(static_cast<std::size_t>(std::max(liwork, 1)));
  f(jobz, "L", &n, out.vectors.data(), &n, out.values.data(), work.data(), &lwork, iwork.data(), &liwork,
    &info, 1, 1);
  if (info != 0) throw NumericalError("dsyevd failed with info = " + std::to_string(info));
  if (!want_vectors) out.vectors.resize(0, 0);
  return out;
}

// Some OpenBLAS builds pick AVX-512 kernels that return wrong dgemm results on
// virtualized CPUs. The library is loaded lazily so the core type can be
// pinned first, and the result is checked once before it is trusted.
EigenBackend load_backend() {
  EigenBackend b;
  const char* forced = std::getenv("SPIKED_EIGENSOLVER");
  if (forced && std::string(forced) == "eigen") return b;
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) setenv("OPENBLAS_CORETYPE", "Haswell", 0);
#endif
  void* handle = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
  if (!handle) handle = dlopen("liblapack.so.3", RTLD_NOW | RTLD_LOCAL);
  if (!handle) return b;
  auto f = reinterpret_cast<dsyevd_fn>(dlsym(handle, "dsyevd_"));
  if (!f) return b;
  using threads_fn = void (*)(int);
  if (auto set_threads = reinterpret_cast<threads_fn>(dlsym(handle, "openblas_set_num_threads")))
    set_threads(1);

  const int n = 400;
  Rng rng(0x5eed);
  Eigen::MatrixXd A(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) A(i, j) = A(j, i) = 2.0 * uniform01(rng) - 1.0;
  try {
    const SymmetricEigen e = lapack_solve(f, A, true);
    const double recon = (e.vectors * e.values.asDiagonal() * e.vectors.transpose() - A).cwiseAbs().maxCoeff();
    const double orth =
        (e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (recon > 1e-10 || orth > 1e-10) return b;
  } catch (const NumericalError&) {
    return b;
  }
  b.dsyevd = f;
  b.name = "lapack-dsyevd";
  return b;
}

const EigenBackend& backend() {
  static const EigenBackend b = load_backend();
  return b;
}

}  // namespace

std::string eigensolver_name() { return backend().name; }

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& M, bool want_vectors) {
  if (M.rows() != M.cols()) throw ValidationError("eigendecomposition needs a square matrix");
  if (M.rows() == 0) return {};
  if (!M.allFinite()) throw NumericalError("eigendecomposition of a matrix with non-finite entries");
  const EigenBackend& b = backend();
  return b.dsyevd ? lapack_solve(b.dsyevd, M, want_vectors) : eigen_solve(M, want_vectors);
}

Eigen::MatrixXd sample_haar_orthogonal(int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("Haar sample size must be positive");
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) G(i, j) = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  const auto& R = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

Eigen::MatrixXd rotate_spectrum(const Eigen::VectorXd& d, int n, std::uint64_t basis_seed) {
  if (d.size() != n) throw ValidationError("spectrum length does not match matrix size");
  const Eigen::MatrixXd O = sample_haar_orthogonal(n, basis_seed);
  Eigen::MatrixXd Z = O.transpose() * d.asDiagonal() * O;
  Z = 0.5 * (Z + Z.transpose()).eval();
  return Z;
}

Eigen::MatrixXd sample_noise(const SpectralDensity& rho, int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("noise size must be positive");
  const std::vector<double> d =
      sample_eigenvalues(rho, static_cast<std::size_t>(n), stream_seed(seed, Stream::eigenvalues));
  const Eigen::Map<const Eigen::VectorXd> dv(d.data(), n);
  return rotate_spectrum(dv, n, stream_seed(seed, Stream::basis));
}

Eigen::VectorXd sample_signal(const Prior& prior, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::signal);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = prior.sample(rng);
  return x;
}

Observation spike_noise(const Eigen::VectorXd& x_star, Eigen::MatrixXd Z, double lambda,
                        std::uint64_t seed, bool keep_noise) {
  if (!(lambda >= 0.0)) throw ValidationError("signal-to-noise ratio must be nonnegative");
  const Eigen::Index n = x_star.size();
  if (Z.rows() != n || Z.cols() != n) throw ValidationError("noise and signal sizes differ");
  Observation obs;
  obs.lambda = lambda;
  obs.n = static_cast<int>(n);
  obs.seed = seed;
  obs.X_star = x_star;
  obs.Y = Z;
  if (lambda != 0.0) obs.Y.noalias() += (lambda / static_cast<double>(n)) * x_star * x_star.transpose();
  if (keep_noise) obs.Z = std::move(Z);
  return obs;
}

Observation make_observation(const Prior& prior, const SpectralDensity& rho, double lambda, int n,
                             std::uint64_t seed, bool keep_noise) {
  if (!(lambda >= 0.0)) throw ValidationError("signal-to-noise ratio must be nonnegative");
  Eigen::VectorXd x = sample_signal(prior, n, seed);
  return spike_noise(x, sample_noise(rho, n, seed), lambda, seed, keep_noise);
}

Eigen::MatrixXd matrix_function_apply(const Eigen::MatrixXd& M,
                                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f) {
  const SymmetricEigen eig = symmetric_eigen(M);
  const Eigen::VectorXd fe = f(eig.values);
  if (fe.size() != eig.values.size()) throw ValidationError("matrix function changed the spectrum length");
  Eigen::MatrixXd out = eig.vectors * fe.asDiagonal() * eig.vectors.transpose();
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

Eigen::MatrixXd matrix_function_apply(const Eigen::MatrixXd& M, const std::function<double(double)>& f) {
  return matrix_function_apply(M, [&f](const Eigen::VectorXd& e) {
    Eigen::VectorXd r(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) r[i] = f(e[i]);
    return r;
  });
}

std::pair<EmpiricalSpectrum, SpectralDensity> ingest_empirical_spectrum(std::vector<double> values,
                                                                        int outliers) {
  if (values.empty()) throw ValidationError("empirical spectrum is empty");
  if (outliers < 0) throw ValidationError("outlier count must be nonnegative");
  if (static_cast<std::size_t>(outliers) >= values.size())
    throw ValidationError("outlier count must be smaller than the number of eigenvalues");

  std::sort(values.begin(), values.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
  values.erase(values.begin(), values.begin() + outliers);
  std::sort(values.begin(), values.end());

  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw ValidationError("empirical spectrum has zero variance after outlier removal");
  const double sd = std::sqrt(var);

  EmpiricalSpectrum rec;
  rec.removed_outliers = outliers;
  rec.shift = mean;
  rec.scale = sd;
  rec.eigenvalues.reserve(values.size());
  for (double v : values) rec.eigenvalues.push_back((v - mean) / sd);

  // Silverman's rule of thumb.
  const auto& e = rec.eigenvalues;
  auto quantile = [&e](double p) {
    const double pos = p * static_cast<double>(e.size() - 1);
    const std::size_t k = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(k);
    return k + 1 < e.size() ? e[k] * (1.0 - t) + e[k + 1] * t : e[k];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = 1.0;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(n, -0.2);

  auto data = std::make_shared<const std::vector<double>>(e);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  auto kde = [data, h, norm](double x) {
    double s = 0.0;
    for (double v : *data) {
      const double u = (x - v) / h;
      s += std::exp(-0.5 * u * u);
    }
    return s * norm;
  };
  const double lo = e.front();
  const double hi = e.back();
  if (!(hi > lo)) throw ValidationError("empirical spectrum collapses to a point");
  SpectralDensity raw = SpectralDensity::from_pdf(DensityKind::empirical, {{"bandwidth", h}}, lo, hi, kde);
  return {std::move(rec), standardize(raw)};
}

std::vector<double> read_eigenvalue_csv(std::istream& is) {
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    const std::string cell = line.substr(0, comma);
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (!std::isfinite(v)) throw std::invalid_argument("nonfinite");
      out.push_back(v);
    } catch (const std::exception&) {
      if (first) {
        first = false;
        continue;
      }
      throw ValidationError("eigenvalue CSV line " + std::to_string(lineno) + ": not a number");
    }
    first = false;
  }
  if (out.empty()) throw ValidationError("eigenvalue file contains no values");
  return out;
}

void dump_observation(const Observation& obs, const std::string& prefix) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw ValidationError("cannot open " + prefix + ".bin for writing");
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = obs.Y;
  bin.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
  std::ofstream js(prefix + ".json");
  if (!js) throw ValidationError("cannot open " + prefix + ".json for writing");
  nlohmann::json meta = {{"N", obs.n}, {"lambda", obs.lambda}, {"seed", obs.seed},
                         {"dtype", "float64"}, {"layout", "row-major"}};
  js << meta.dump(2) << '\n';
}

}  // namespace spiked
