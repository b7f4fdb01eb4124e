#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace spiked {

enum class DensityKind {
  semicircle,
  quartic,
  sestic,
  marchenko_pastur,
  truncated_normal,
  empirical,
  tabulated,
};

DensityKind parse_density_kind(const std::string& name);
std::string to_string(DensityKind kind);

using ParamMap = std::map<std::string, double>;

/// Affine change of variable recorded by `standardize`: raw = shift + scale * current.
struct AffineMap {
  double shift = 0.0;
  double scale = 1.0;
};

/// Eigenvalue law of the noise on a single interval [lo, hi].
///
/// Integrals against the law are evaluated with Gauss-Legendre in the angular
/// variable x = c + h cos(theta); this absorbs the square-root vanishing at
/// the edges and keeps the edge Stieltjes value accurate. `weights()` are
/// probability masses at the nodes and sum to one; `measure()` are the plain
/// dx weights used by principal-value integrals.
class SpectralDensity {
 public:
  static constexpr int kDefaultNodes = 400;

  static SpectralDensity from_pdf(DensityKind kind, ParamMap params, double lo, double hi,
                                  std::function<double(double)> pdf,
                                  int n_nodes = kDefaultNodes);

  /// Rebuild from tabulated (node, weight, pdf) triples; pdf is linearly
  /// interpolated between nodes and the support defaults to the node range.
  static SpectralDensity from_table(std::vector<double> nodes, std::vector<double> weights,
                                    std::vector<double> pdf_values, double lo, double hi);

  DensityKind kind() const noexcept { return kind_; }
  const ParamMap& params() const noexcept { return params_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& measure() const noexcept { return measure_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  double pdf(double x) const;
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }
  const AffineMap& affine() const noexcept { return affine_; }

  /// E_D[f(D)] under the quadrature measure.
  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * f(nodes_[i]);
    return s;
  }

 private:
  friend SpectralDensity standardize(const SpectralDensity& rho);

  void finalize_moments();

  DensityKind kind_ = DensityKind::tabulated;
  ParamMap params_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> measure_;
  std::function<double(double)> pdf_;
  double mean_ = 0.0;
  double variance_ = 0.0;
  AffineMap affine_;
};

enum class PotentialSource { analytic, pv_reconstructed };

/// V'(x), the derivative of the matrix potential, valid on an interval
/// containing the support.
class Potential {
 public:
  Potential(std::function<double(double)> dV, PotentialSource source)
      : dV_(std::move(dV)), source_(source) {}

  double operator()(double x) const { return dV_(x); }
  PotentialSource source() const noexcept { return source_; }

 private:
  std::function<double(double)> dV_;
  PotentialSource source_;
};

/// J(x) = lambda V'(x) - lambda^2 E_D[(V'(x) - V'(D)) / (x - D)].
class EffectiveCoupling {
 public:
  EffectiveCoupling(SpectralDensity rho, Potential pot, double lambda);

  double operator()(double x) const;
  double lambda() const noexcept { return lambda_; }
  const SpectralDensity& density() const noexcept { return rho_; }
  const Potential& potential() const noexcept { return pot_; }

  /// V' and J at the quadrature nodes.
  const std::vector<double>& dV_at_nodes() const noexcept { return dV_nodes_; }
  const std::vector<double>& values_at_nodes() const noexcept { return j_nodes_; }

  /// Divided-difference kernel (V'(x_i) - V'(x_j)) / (x_i - x_j) on the node
  /// grid, with V''(x_i) on the diagonal.
  Eigen::MatrixXd divided_difference_matrix() const;

  /// Centered three-point estimate of V''(x).
  double second_derivative(double x) const;

 private:
  SpectralDensity rho_;
  Potential pot_;
  double lambda_;
  std::vector<double> dV_nodes_;
  std::vector<double> j_nodes_;
};

/// Law of J(D), D ~ rho_Z, carried on the quadrature nodes.
struct PushforwardLaw {
  std::vector<double> values;
  std::vector<double> weights;
  double edge_min = 0.0;
  double edge_max = 0.0;

  double stieltjes(double z) const;
  /// g(edge_max^+), the largest argument the R-transform accepts.
  double argument_supremum() const;
};

SpectralDensity build_builtin_density(DensityKind kind, const ParamMap& params = {});
SpectralDensity standardize(const SpectralDensity& rho);

double stieltjes_transform(const SpectralDensity& rho, double z);
double stieltjes_derivative(const SpectralDensity& rho, double z);
/// PV integral of rho(l) / (x - l) for x strictly inside the support.
double hilbert_pv(const SpectralDensity& rho, double x);

/// Closed-form V' for the built-in ensembles, expressed in the density's
/// current (possibly standardized) coordinates.
Potential analytic_potential(const SpectralDensity& rho);
/// V'(x) = 2 PV int rho(l)/(x - l) dl inside the support, 2 g(x) outside.
Potential potential_derivative_from_density(const SpectralDensity& rho);
/// Analytic potential when the kind has one, reconstruction otherwise.
Potential default_potential(const SpectralDensity& rho);

EffectiveCoupling effective_coupling(const SpectralDensity& rho, const Potential& pot,
                                     double lambda);
PushforwardLaw pushforward_law(const EffectiveCoupling& jc);

/// R(s) = zeta(s) - 1/s where g(zeta) = s and zeta > edge_max.
/// Throws RangeError when s exceeds `law.argument_supremum()`.
double r_transform(const PushforwardLaw& law, double s);

/// i.i.d. draws by inverse CDF on the quadrature grid.
std::vector<double> sample_eigenvalues(const SpectralDensity& rho, std::size_t n,
                                       std::uint64_t seed);

/// The CDF used by `sample_eigenvalues`, piecewise linear between grid knots.
double grid_cdf(const SpectralDensity& rho, double x);

void write_density_csv(std::ostream& os, const SpectralDensity& rho);
SpectralDensity read_density_csv(std::istream& is);

}  // namespace spiked
