#include "spiked/spectra.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "spiked/error.hpp"
#include "spiked/quadrature.hpp"
#include "spiked/random.hpp"

namespace spiked {

namespace {

constexpr double kPi = std::numbers::pi;

// Below this separation the divided difference switches to V''.
constexpr double kDiagonalGap = 1e-8;

double param_or(const ParamMap& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void check_keys(const ParamMap& params, std::initializer_list<const char*> allowed,
                DensityKind kind) {
  for (const auto& [key, value] : params) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok)
      throw ValidationError("unknown parameter '" + key + "' for density " + to_string(kind));
  }
}

double require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ValidationError(std::string("density parameter ") + name + " must be positive");
  return v;
}

// Piecewise-linear interpolation on sorted knots, constant outside.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (xs.empty()) return 0.0;
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - xs.begin());
  const double t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return ys[k - 1] + t * (ys[k] - ys[k - 1]);
}

}  // namespace

DensityKind parse_density_kind(const std::string& name) {
  if (name == "semicircle" || name == "gaussian" || name == "wigner") return DensityKind::semicircle;
  if (name == "quartic") return DensityKind::quartic;
  if (name == "sestic") return DensityKind::sestic;
  if (name == "marchenko_pastur" || name == "mp") return DensityKind::marchenko_pastur;
  if (name == "truncated_normal") return DensityKind::truncated_normal;
  if (name == "empirical") return DensityKind::empirical;
  if (name == "tabulated") return DensityKind::tabulated;
  throw ValidationError("unknown density kind '" + name + "'");
}

std::string to_string(DensityKind kind) {
  switch (kind) {
    case DensityKind::semicircle: return "semicircle";
    case DensityKind::quartic: return "quartic";
    case DensityKind::sestic: return "sestic";
    case DensityKind::marchenko_pastur: return "marchenko_pastur";
    case DensityKind::truncated_normal: return "truncated_normal";
    case DensityKind::empirical: return "empirical";
    case DensityKind::tabulated: return "tabulated";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// SpectralDensity

SpectralDensity SpectralDensity::from_pdf(DensityKind kind, ParamMap params, double lo, double hi,
                                          std::function<double(double)> pdf, int n_nodes) {
  if (!(hi > lo)) throw ValidationError("density support must satisfy lo < hi");
  if (n_nodes < 2) throw ValidationError("density needs at least two quadrature nodes");

  const QuadratureRule rule = gauss_legendre(n_nodes, 0.0, kPi);
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);

  SpectralDensity rho;
  rho.kind_ = kind;
  rho.params_ = std::move(params);
  rho.lo_ = lo;
  rho.hi_ = hi;
  const std::size_t n = rule.nodes.size();
  rho.nodes_.resize(n);
  rho.measure_.resize(n);
  rho.weights_.resize(n);
  // cos is decreasing on (0, pi): walk the rule backwards for ascending nodes.
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = n - 1 - k;
    const double theta = rule.nodes[r];
    rho.nodes_[k] = center + half * std::cos(theta);
    rho.measure_[k] = half * std::sin(theta) * rule.weights[r];
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double p = pdf(rho.nodes_[k]);
    if (!(p >= 0.0) || !std::isfinite(p)) throw NumericalError("density pdf is negative or not finite");
    rho.weights_[k] = rho.measure_[k] * p;
    total += rho.weights_[k];
  }
  if (!(total > 0.0)) throw NumericalError("density has zero mass on its support");
  for (double& w : rho.weights_) w /= total;
  const double inv_total = 1.0 / total;
  rho.pdf_ = [pdf = std::move(pdf), inv_total, lo, hi](double x) {
    if (x < lo || x > hi) return 0.0;
    return pdf(x) * inv_total;
  };
  rho.finalize_moments();
  return rho;
}

SpectralDensity SpectralDensity::from_table(std::vector<double> nodes, std::vector<double> weights,
                                            std::vector<double> pdf_values, double lo, double hi) {
  const std::size_t n = nodes.size();
  if (n == 0) throw ValidationError("density table is empty");
  if (weights.size() != n || pdf_values.size() != n)
    throw ValidationError("density table columns have different lengths");
  for (std::size_t i = 1; i < n; ++i)
    if (!(nodes[i] > nodes[i - 1])) throw ValidationError("density table nodes must be increasing");
  if (lo > nodes.front() || hi < nodes.back())
    throw ValidationError("density support does not contain the table nodes");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] >= 0.0) || !(pdf_values[i] >= 0.0))
      throw ValidationError("density table has negative weight or pdf");
    total += weights[i];
  }
  if (!(total > 0.0)) throw ValidationError("density table has zero total weight");

  SpectralDensity rho;
  rho.kind_ = DensityKind::tabulated;
  rho.lo_ = lo;
  rho.hi_ = hi;
  rho.nodes_ = nodes;
  rho.weights_.resize(n);
  rho.measure_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho.weights_[i] = weights[i] / total;
    if (pdf_values[i] > 0.0) {
      rho.measure_[i] = rho.weights_[i] / pdf_values[i];
    } else {
      const double left = i == 0 ? lo : 0.5 * (nodes[i] + nodes[i - 1]);
      const double right = i + 1 == n ? hi : 0.5 * (nodes[i] + nodes[i + 1]);
      rho.measure_[i] = right - left;
    }
  }
  rho.pdf_ = [xs = std::move(nodes), ys = std::move(pdf_values), lo, hi](double x) {
    if (x < lo || x > hi) return 0.0;
    return interpolate(xs, ys, x);
  };
  rho.finalize_moments();
  return rho;
}

double SpectralDensity::pdf(double x) const { return pdf_ ? pdf_(x) : 0.0; }

void SpectralDensity::finalize_moments() {
  double m = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) m += weights_[i] * nodes_[i];
  double v = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const double d = nodes_[i] - m;
    v += weights_[i] * d * d;
  }
  mean_ = m;
  variance_ = v;
}

// ---------------------------------------------------------------------------
// Built-in ensembles

SpectralDensity build_builtin_density(DensityKind kind, const ParamMap& params) {
  switch (kind) {
    case DensityKind::semicircle: {
      check_keys(params, {"radius"}, kind);
      const double r = require_positive(param_or(params, "radius", 2.0), "radius");
      return SpectralDensity::from_pdf(kind, {{"radius", r}}, -r, r, [r](double x) {
        return 2.0 / (kPi * r * r) * std::sqrt(std::max(r * r - x * x, 0.0));
      });
    }
    case DensityKind::quartic: {
      // V(x) = gamma x^4 / 4; normalization fixes 3 gamma a^4 = 1.
      check_keys(params, {"gamma"}, kind);
      const double g = require_positive(param_or(params, "gamma", 16.0 / 27.0), "gamma");
      const double a = std::pow(3.0 * g, -0.25);
      return SpectralDensity::from_pdf(kind, {{"gamma", g}, {"a", a}}, -2.0 * a, 2.0 * a,
                                       [g, a](double x) {
                                         const double s = std::max(4.0 * a * a - x * x, 0.0);
                                         return (2.0 * a * a * g + g * x * x) * std::sqrt(s) /
                                                (2.0 * kPi);
                                       });
    }
    case DensityKind::sestic: {
      // V(x) = xi x^6 / 6; normalization fixes 10 xi a^6 = 1.
      check_keys(params, {"xi"}, kind);
      const double xi = require_positive(param_or(params, "xi", 27.0 / 80.0), "xi");
      const double a = std::pow(10.0 * xi, -1.0 / 6.0);
      return SpectralDensity::from_pdf(
          kind, {{"xi", xi}, {"a", a}}, -2.0 * a, 2.0 * a, [xi, a](double x) {
            const double a2 = a * a;
            const double s = std::max(4.0 * a2 - x * x, 0.0);
            return (6.0 * a2 * a2 * xi + 2.0 * a2 * xi * x * x + xi * x * x * x * x) *
                   std::sqrt(s) / (2.0 * kPi);
          });
    }
    case DensityKind::marchenko_pastur: {
      check_keys(params, {"alpha", "sigma2"}, kind);
      const double alpha = require_positive(param_or(params, "alpha", 0.2), "alpha");
      if (alpha >= 1.0) throw ValidationError("marchenko_pastur requires alpha < 1");
      // Variance sigma^4 alpha = 1 unless overridden.
      const double s2 =
          require_positive(param_or(params, "sigma2", 1.0 / std::sqrt(alpha)), "sigma2");
      const double lm = s2 * std::pow(1.0 - std::sqrt(alpha), 2);
      const double lp = s2 * std::pow(1.0 + std::sqrt(alpha), 2);
      return SpectralDensity::from_pdf(
          kind, {{"alpha", alpha}, {"sigma2", s2}}, lm, lp, [alpha, s2, lm, lp](double x) {
            const double s = std::max((lp - x) * (x - lm), 0.0);
            return std::sqrt(s) / (2.0 * kPi * s2 * alpha * x);
          });
    }
    case DensityKind::truncated_normal: {
      check_keys(params, {"cutoff"}, kind);
      const double c = require_positive(param_or(params, "cutoff", 5.0), "cutoff");
      // Rescale so the truncated law has unit variance.
      const double phi_c = std::exp(-0.5 * c * c) / std::sqrt(2.0 * kPi);
      const double mass = std::erf(c / std::sqrt(2.0));
      const double var = 1.0 - 2.0 * c * phi_c / mass;
      const double sd = 1.0 / std::sqrt(var);
      return SpectralDensity::from_pdf(
          kind, {{"cutoff", c}, {"scale", sd}}, -c * sd, c * sd, [sd, mass](double x) {
            const double u = x / sd;
            return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * kPi) * sd * mass);
          });
    }
    case DensityKind::empirical:
    case DensityKind::tabulated:
      break;
  }
  throw ValidationError("density kind " + to_string(kind) + " is not a built-in");
}

SpectralDensity standardize(const SpectralDensity& rho) {
  const double var = rho.variance();
  if (!(var > 1e-14)) throw ValidationError("cannot standardize a degenerate (single-atom) density");
  const double mu = rho.mean();
  const double s = std::sqrt(var);

  SpectralDensity out = rho;
  out.lo_ = (rho.lo_ - mu) / s;
  out.hi_ = (rho.hi_ - mu) / s;
  for (std::size_t i = 0; i < out.nodes_.size(); ++i) {
    out.nodes_[i] = (rho.nodes_[i] - mu) / s;
    out.measure_[i] = rho.measure_[i] / s;
  }
  out.pdf_ = [inner = rho.pdf_, mu, s](double y) { return s * inner(mu + s * y); };
  out.affine_.shift = rho.affine_.shift + rho.affine_.scale * mu;
  out.affine_.scale = rho.affine_.scale * s;
  out.finalize_moments();
  return out;
}

// ---------------------------------------------------------------------------
// Transforms

double stieltjes_transform(const SpectralDensity& rho, double z) {
  if (z >= rho.lo() && z <= rho.hi())
    throw ValidationError("Stieltjes transform evaluated inside the support");
  return rho.expect([z](double x) { return 1.0 / (z - x); });
}

double stieltjes_derivative(const SpectralDensity& rho, double z) {
  if (z >= rho.lo() && z <= rho.hi())
    throw ValidationError("Stieltjes transform evaluated inside the support");
  return -rho.expect([z](double x) { return 1.0 / ((z - x) * (z - x)); });
}

double hilbert_pv(const SpectralDensity& rho, double x) {
  const double lo = rho.lo();
  const double hi = rho.hi();
  if (!(x > lo && x < hi)) throw ValidationError("principal value requires x strictly inside the support");
  const double px = rho.pdf(x);
  const auto& nodes = rho.nodes();
  const auto& measure = rho.measure();
  const auto& weights = rho.weights();
  const double scale = hi - lo;
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double d = x - nodes[i];
    if (std::abs(d) > 1e-13 * scale) {
      sum += (weights[i] - measure[i] * px) / d;
    } else {
      // Removable point: the integrand tends to -rho'(x).
      const double h = 1e-6 * scale;
      const double dp = (rho.pdf(x + h) - rho.pdf(x - h)) / (2.0 * h);
      sum -= measure[i] * dp;
    }
  }
  return sum + px * std::log((x - lo) / (hi - x));
}

// ---------------------------------------------------------------------------
// Potentials

Potential analytic_potential(const SpectralDensity& rho) {
  std::function<double(double)> raw;
  const ParamMap& p = rho.params();
  switch (rho.kind()) {
    case DensityKind::semicircle: {
      const double r = p.at("radius");
      const double c = 4.0 / (r * r);
      raw = [c](double x) { return c * x; };
      break;
    }
    case DensityKind::quartic: {
      const double g = p.at("gamma");
      raw = [g](double x) { return g * x * x * x; };
      break;
    }
    case DensityKind::sestic: {
      const double xi = p.at("xi");
      raw = [xi](double x) { return xi * x * x * x * x * x; };
      break;
    }
    case DensityKind::marchenko_pastur: {
      const double alpha = p.at("alpha");
      const double s2 = p.at("sigma2");
      raw = [alpha, s2](double x) { return 1.0 / (alpha * s2) + (1.0 - 1.0 / alpha) / x; };
      break;
    }
    default:
      throw ValidationError("no closed-form potential for density kind " + to_string(rho.kind()));
  }
  const AffineMap map = rho.affine();
  return Potential(
      [raw = std::move(raw), map](double y) { return map.scale * raw(map.shift + map.scale * y); },
      PotentialSource::analytic);
}

Potential potential_derivative_from_density(const SpectralDensity& rho) {
  auto shared = std::make_shared<const SpectralDensity>(rho);
  return Potential(
      [shared](double x) {
        const SpectralDensity& r = *shared;
        if (x > r.lo() && x < r.hi()) return 2.0 * hilbert_pv(r, x);
        return 2.0 * r.expect([x](double d) { return 1.0 / (x - d); });
      },
      PotentialSource::pv_reconstructed);
}

Potential default_potential(const SpectralDensity& rho) {
  switch (rho.kind()) {
    case DensityKind::semicircle:
    case DensityKind::quartic:
    case DensityKind::sestic:
    case DensityKind::marchenko_pastur:
      return analytic_potential(rho);
    default:
      return potential_derivative_from_density(rho);
  }
}

// ---------------------------------------------------------------------------
// Effective coupling

EffectiveCoupling::EffectiveCoupling(SpectralDensity rho, Potential pot, double lambda)
    : rho_(std::move(rho)), pot_(std::move(pot)), lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ValidationError("signal-to-noise ratio must be nonnegative");
  const auto& x = rho_.nodes();
  const std::size_t n = x.size();
  dV_nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i) dV_nodes_[i] = pot_(x[i]);
  const Eigen::MatrixXd K = divided_difference_matrix();
  const Eigen::Map<const Eigen::VectorXd> w(rho_.weights().data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd mean_dd = K * w;
  j_nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    j_nodes_[i] = lambda_ * dV_nodes_[i] - lambda_ * lambda_ * mean_dd[static_cast<Eigen::Index>(i)];
}

double EffectiveCoupling::second_derivative(double x) const {
  const double width = rho_.hi() - rho_.lo();
  double h = 1e-5 * std::max(width, 1.0);
  if (x > rho_.lo() && x < rho_.hi()) {
    const double edge_gap = std::min(x - rho_.lo(), rho_.hi() - x);
    h = std::min(h, 0.5 * edge_gap);
  }
  return (pot_(x + h) - pot_(x - h)) / (2.0 * h);
}

Eigen::MatrixXd EffectiveCoupling::divided_difference_matrix() const {
  const auto& x = rho_.nodes();
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = x[i] - x[j];
      const double v = std::abs(d) < kDiagonalGap
                           ? second_derivative(x[i])
                           : (dV_nodes_[i] - dV_nodes_[j]) / d;
      K(i, j) = v;
      K(j, i) = v;
    }
    K(i, i) = second_derivative(x[i]);
  }
  return K;
}

double EffectiveCoupling::operator()(double x) const {
  if (lambda_ == 0.0) return 0.0;
  const auto& nodes = rho_.nodes();
  const auto& w = rho_.weights();
  const double vx = pot_(x);
  double mean_dd = 0.0;
  double diag = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double d = x - nodes[j];
    if (std::abs(d) < kDiagonalGap) {
      if (std::isnan(diag)) diag = second_derivative(x);
      mean_dd += w[j] * diag;
    } else {
      mean_dd += w[j] * (vx - dV_nodes_[j]) / d;
    }
  }
  return lambda_ * vx - lambda_ * lambda_ * mean_dd;
}

EffectiveCoupling effective_coupling(const SpectralDensity& rho, const Potential& pot,
                                     double lambda) {
  return EffectiveCoupling(rho, pot, lambda);
}

// ---------------------------------------------------------------------------
// Pushforward law and R-transform

PushforwardLaw pushforward_law(const EffectiveCoupling& jc) {
  PushforwardLaw law;
  law.values = jc.values_at_nodes();
  law.weights = jc.density().weights();
  auto [mn, mx] = std::minmax_element(law.values.begin(), law.values.end());
  law.edge_min = *mn;
  law.edge_max = *mx;
  // J is continuous on the closed support; its extremes may sit at the
  // endpoints, which are not quadrature nodes.
  if (jc.lambda() != 0.0) {
    for (double e : {jc.density().lo(), jc.density().hi()}) {
      const double v = jc(e);
      if (std::isfinite(v)) {
        law.edge_min = std::min(law.edge_min, v);
        law.edge_max = std::max(law.edge_max, v);
      }
    }
  }
  return law;
}

double PushforwardLaw::stieltjes(double z) const {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += weights[i] / (z - values[i]);
  return s;
}

double PushforwardLaw::argument_supremum() const {
  const double delta = 1e-12 * std::max(1.0, std::abs(edge_max));
  return stieltjes(edge_max + delta);
}

double r_transform(const PushforwardLaw& law, double s) {
  if (!(s > 0.0) || !std::isfinite(s))
    throw ValidationError("R-transform argument must be positive");
  const double delta = 1e-12 * std::max(1.0, std::abs(law.edge_max));
  // Root of F(r) = E[(r - v) / (1 + s (r - v))], i.e. g(1/s + r) = s, written
  // so that small s does not cancel 1/s against zeta.
  auto F = [&law, s](double r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < law.values.size(); ++i) {
      const double u = r - law.values[i];
      acc += law.weights[i] * u / (1.0 + s * u);
    }
    return acc;
  };
  const double r_lo = law.edge_max + delta - 1.0 / s;
  const double f_lo = F(r_lo);
  if (f_lo > 0.0) {
    const double sup = law.argument_supremum();
    std::ostringstream msg;
    msg << "R-transform argument outside invertible range: s = " << s
        << " exceeds attainable supremum " << sup;
    throw RangeError(msg.str(), s, sup);
  }
  if (f_lo == 0.0) return r_lo;
  double step = 1.0;
  double r_hi = std::max(r_lo, law.edge_max) + step;
  double f_hi = F(r_hi);
  while (f_hi <= 0.0) {
    step *= 2.0;
    r_hi = std::max(r_lo, law.edge_max) + step;
    f_hi = F(r_hi);
    if (step > 1e12) throw NumericalError("R-transform bracket search failed");
  }
  auto tol = [](double a, double b) { return std::abs(a - b) <= 2e-15 * std::max(1.0, std::abs(a)); };
  std::uintmax_t max_iter = 300;
  auto [a, b] = boost::math::tools::toms748_solve(F, r_lo, r_hi, f_lo, f_hi, tol, max_iter);
  return 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

struct CdfKnots {
  std::vector<double> x;
  std::vector<double> c;
};

CdfKnots cdf_knots(const SpectralDensity& rho) {
  CdfKnots k;
  const auto& nodes = rho.nodes();
  const auto& w = rho.weights();
  k.x.reserve(nodes.size() + 2);
  k.c.reserve(nodes.size() + 2);
  k.x.push_back(rho.lo());
  k.c.push_back(0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double mid = acc + 0.5 * w[i];
    acc += w[i];
    if (nodes[i] > k.x.back()) {
      k.x.push_back(nodes[i]);
      k.c.push_back(mid);
    }
  }
  if (rho.hi() > k.x.back()) {
    k.x.push_back(rho.hi());
    k.c.push_back(1.0);
  } else {
    k.c.back() = 1.0;
  }
  return k;
}

}  // namespace

double grid_cdf(const SpectralDensity& rho, double x) {
  if (x <= rho.lo()) return 0.0;
  if (x >= rho.hi()) return 1.0;
  const CdfKnots k = cdf_knots(rho);
  return interpolate(k.x, k.c, x);
}

std::vector<double> sample_eigenvalues(const SpectralDensity& rho, std::size_t n,
                                       std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample size must be positive");
  const CdfKnots k = cdf_knots(rho);
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& v : out) {
    const double u = uniform01(rng);
    if (k.x.size() == 1) {
      v = k.x.front();
      continue;
    }
    auto it = std::upper_bound(k.c.begin(), k.c.end(), u);
    std::size_t j = static_cast<std::size_t>(it - k.c.begin());
    j = std::clamp<std::size_t>(j, 1, k.c.size() - 1);
    const double dc = k.c[j] - k.c[j - 1];
    const double t = dc > 0.0 ? (u - k.c[j - 1]) / dc : 0.0;
    v = k.x[j - 1] + t * (k.x[j] - k.x[j - 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_density_csv(std::ostream& os, const SpectralDensity& rho) {
  const auto old_prec = os.precision(17);
  os << "# kind=" << to_string(rho.kind()) << " lo=" << rho.lo() << " hi=" << rho.hi() << '\n';
  os << "node,weight,pdf\n";
  const auto& x = rho.nodes();
  const auto& w = rho.weights();
  for (std::size_t i = 0; i < x.size(); ++i) os << x[i] << ',' << w[i] << ',' << rho.pdf(x[i]) << '\n';
  os.precision(old_prec);
}

SpectralDensity read_density_csv(std::istream& is) {
  std::vector<double> x, w, p;
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = lo;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto grab = [&line](const std::string& key, double& out) {
        auto pos = line.find(key + "=");
        if (pos != std::string::npos) out = std::stod(line.substr(pos + key.size() + 1));
      };
      grab("lo", lo);
      grab("hi", hi);
      continue;
    }
    if (!header) {
      if (line.rfind("node,weight,pdf", 0) != 0)
        throw ValidationError("density CSV line " + std::to_string(lineno) +
                              ": expected header 'node,weight,pdf'");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
      throw ValidationError("density CSV line " + std::to_string(lineno) + ": expected 3 columns");
    try {
      x.push_back(std::stod(a));
      w.push_back(std::stod(b));
      p.push_back(std::stod(c));
    } catch (const std::exception&) {
      throw ValidationError("density CSV line " + std::to_string(lineno) + ": not a number");
    }
  }
  if (x.empty()) throw ValidationError("density CSV has no rows");
  if (std::isnan(lo)) lo = x.front();
  if (std::isnan(hi)) hi = x.back();
  return SpectralDensity::from_table(std::move(x), std::move(w), std::move(p), lo, hi);
}

}  // namespace spiked
