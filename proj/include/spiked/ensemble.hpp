#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spiked/priors.hpp"
#include "spiked/spectra.hpp"

namespace spiked {

struct Observation {
  Eigen::MatrixXd Y;
  Eigen::VectorXd X_star;
  std::optional<Eigen::MatrixXd> Z;
  double lambda = 0.0;
  int n = 0;
  std::uint64_t seed = 0;
};

struct EmpiricalSpectrum {
  std::vector<double> eigenvalues;
  int removed_outliers = 0;
  double shift = 0.0;
  double scale = 1.0;
};

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

/// Symmetric eigensolver: LAPACK dsyevd when a working one can be loaded at
/// run time, Eigen's self-adjoint solver otherwise.
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& M, bool want_vectors = true);

/// Which backend `symmetric_eigen` uses ("lapack-dsyevd" or "eigen").
std::string eigensolver_name();

Eigen::MatrixXd sample_haar_orthogonal(int n, std::uint64_t seed);

/// Z = O^T diag(d) O with d drawn from rho and O Haar. Eigenvalues and basis
/// use separate streams derived from `seed`.
Eigen::MatrixXd sample_noise(const SpectralDensity& rho, int n, std::uint64_t seed);

/// Same construction from an explicit spectrum.
Eigen::MatrixXd rotate_spectrum(const Eigen::VectorXd& d, int n, std::uint64_t basis_seed);

Eigen::VectorXd sample_signal(const Prior& prior, int n, std::uint64_t seed);

Observation make_observation(const Prior& prior, const SpectralDensity& rho, double lambda, int n,
                             std::uint64_t seed, bool keep_noise = false);

/// Y = (lambda/N) x x^T + Z for a given noise matrix.
Observation spike_noise(const Eigen::VectorXd& x_star, Eigen::MatrixXd Z, double lambda,
                        std::uint64_t seed, bool keep_noise = false);

Eigen::MatrixXd matrix_function_apply(const Eigen::MatrixXd& M, const std::function<double(double)>& f);

/// Vectorized form: f receives all eigenvalues at once.
Eigen::MatrixXd matrix_function_apply(const Eigen::MatrixXd& M,
                                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f);

/// Drop the `outliers` largest-|value| entries, center and scale the rest,
/// and smooth them into a standardized density.
std::pair<EmpiricalSpectrum, SpectralDensity> ingest_empirical_spectrum(std::vector<double> values,
                                                                        int outliers);

/// One number per line; a non-numeric first line is treated as a header.
std::vector<double> read_eigenvalue_csv(std::istream& is);

/// Y as row-major float64 at `<prefix>.bin` plus `<prefix>.json`.
void dump_observation(const Observation& obs, const std::string& prefix);

}  // namespace spiked
