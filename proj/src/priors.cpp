#include "spiked/priors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <sstream>

#include "spiked/error.hpp"
#include "spiked/quadrature.hpp"

namespace spiked {

namespace {

constexpr double kAtomTol = 1e-9;

void check_snr(double mhat) {
  if (!(mhat >= 0.0) || std::isnan(mhat)) throw ValidationError("scalar channel SNR must be nonnegative");
}

// log sum_k p_k exp(a x_k - b x_k^2 / 2), plus the posterior mean if requested.
double log_weight(const std::vector<Atom>& atoms, double a, double b, double* mean_out) {
  double top = -std::numeric_limits<double>::infinity();
  for (const Atom& at : atoms) {
    if (at.prob <= 0.0) continue;
    top = std::max(top, std::log(at.prob) + a * at.value - 0.5 * b * at.value * at.value);
  }
  double z = 0.0;
  double num = 0.0;
  for (const Atom& at : atoms) {
    if (at.prob <= 0.0) continue;
    const double e =
        std::exp(std::log(at.prob) + a * at.value - 0.5 * b * at.value * at.value - top);
    z += e;
    num += e * at.value;
  }
  if (mean_out) *mean_out = num / z;
  return top + std::log(z);
}

// E_{Z,X}[f(X, Z)] with X ~ P_X and Z ~ N(0,1): the atom sum with the
// composite normal rule in Z, or a Gauss-Hermite product rule for a
// Gaussian prior.
template <class F>
double channel_expect(const Prior& prior, F&& f) {
  double acc = 0.0;
  if (prior.is_gaussian()) {
    const QuadratureRule& gh = standard_normal_rule();
    for (std::size_t i = 0; i < gh.nodes.size(); ++i)
      for (std::size_t k = 0; k < gh.nodes.size(); ++k)
        acc += gh.weights[i] * gh.weights[k] * f(gh.nodes[i], gh.nodes[k]);
    return acc;
  }
  const QuadratureRule& gh = channel_rule();
  for (const Atom& at : prior.atoms()) {
    if (at.prob <= 0.0) continue;
    double inner = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) inner += gh.weights[k] * f(at.value, gh.nodes[k]);
    acc += at.prob * inner;
  }
  return acc;
}

bool atoms_symmetric(const std::vector<Atom>& atoms) {
  for (const Atom& at : atoms) {
    if (at.value == 0.0) continue;
    double mirror = 0.0;
    for (const Atom& other : atoms)
      if (std::abs(other.value + at.value) <= 1e-12 * std::max(1.0, std::abs(at.value)))
        mirror += other.prob;
    double same = 0.0;
    for (const Atom& other : atoms)
      if (std::abs(other.value - at.value) <= 1e-12 * std::max(1.0, std::abs(at.value)))
        same += other.prob;
    if (std::abs(mirror - same) > 1e-12) return false;
  }
  return true;
}

double check_epsilon(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("prior epsilon must lie in (0, 1]");
  return eps;
}

}  // namespace

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::gaussian: return "gaussian";
    case PriorKind::rademacher: return "rademacher";
    case PriorKind::two_point: return "two_point";
    case PriorKind::sparse_rademacher: return "sparse_rademacher";
    case PriorKind::custom_atoms: return "custom";
  }
  return "unknown";
}

Prior Prior::gaussian() { return Prior{}; }

Prior Prior::rademacher() {
  Prior p;
  p.kind_ = PriorKind::rademacher;
  p.atoms_ = {{-1.0, 0.5}, {1.0, 0.5}};
  return p;
}

Prior Prior::two_point(double eps) {
  check_epsilon(eps);
  Prior p;
  p.kind_ = PriorKind::two_point;
  p.epsilon_ = eps;
  p.atoms_ = {{0.0, 1.0 - eps * eps}, {1.0 / eps, eps * eps}};
  p.sign_symmetric_ = false;
  return p;
}

Prior Prior::sparse_rademacher(double eps) {
  check_epsilon(eps);
  Prior p;
  p.kind_ = PriorKind::sparse_rademacher;
  p.epsilon_ = eps;
  p.atoms_ = {{-1.0 / eps, 0.5 * eps * eps}, {0.0, 1.0 - eps * eps}, {1.0 / eps, 0.5 * eps * eps}};
  return p;
}

Prior Prior::sparse_rademacher() { return sparse_rademacher(std::sqrt(0.3)); }

Prior Prior::custom(std::vector<Atom> atoms) {
  if (atoms.empty()) throw ValidationError("custom prior needs at least one atom");
  double total = 0.0;
  for (const Atom& at : atoms) {
    if (!(at.prob >= 0.0) || !std::isfinite(at.value))
      throw ValidationError("custom prior atoms need finite values and nonnegative probabilities");
    total += at.prob;
  }
  if (std::abs(total - 1.0) > kAtomTol)
    throw ValidationError("custom prior probabilities sum to " + std::to_string(total) + ", not 1");
  for (Atom& at : atoms) at.prob /= total;
  Prior p;
  p.kind_ = PriorKind::custom_atoms;
  p.atoms_ = std::move(atoms);
  if (std::abs(p.mean()) > kAtomTol) throw ValidationError("custom prior must have zero mean");
  if (std::abs(p.second_moment() - 1.0) > kAtomTol)
    throw ValidationError("custom prior must have unit second moment");
  p.sign_symmetric_ = atoms_symmetric(p.atoms_);
  return p;
}

double Prior::mean() const {
  double m = 0.0;
  for (const Atom& at : atoms_) m += at.prob * at.value;
  return m;
}

double Prior::second_moment() const {
  if (is_gaussian()) return 1.0;
  double m = 0.0;
  for (const Atom& at : atoms_) m += at.prob * at.value * at.value;
  return m;
}

double Prior::sample(Rng& rng) const {
  if (is_gaussian()) {
    std::normal_distribution<double> nd(0.0, 1.0);
    return nd(rng);
  }
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const Atom& at : atoms_) {
    acc += at.prob;
    if (u < acc) return at.value;
  }
  return atoms_.back().value;
}

Prior make_prior(const std::string& name, const ParamMap& params) {
  for (const auto& [key, v] : params)
    if (key != "epsilon") throw ValidationError("unknown prior parameter '" + key + "'");
  auto eps = params.find("epsilon");
  if (name == "gaussian" || name == "rademacher") {
    if (eps != params.end()) throw ValidationError("prior " + name + " takes no epsilon");
    return name == "gaussian" ? Prior::gaussian() : Prior::rademacher();
  }
  if (name == "two_point") return eps == params.end() ? Prior::two_point() : Prior::two_point(eps->second);
  if (name == "sparse_rademacher")
    return eps == params.end() ? Prior::sparse_rademacher() : Prior::sparse_rademacher(eps->second);
  throw ValidationError("unknown prior '" + name + "'");
}

Prior read_prior_csv(std::istream& is) {
  std::vector<Atom> atoms;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("value,prob", 0) != 0)
        throw ValidationError("prior CSV line " + std::to_string(lineno) + ": expected header 'value,prob'");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string a, b;
    if (!std::getline(row, a, ',') || !std::getline(row, b))
      throw ValidationError("prior CSV line " + std::to_string(lineno) + ": expected 2 columns");
    try {
      atoms.push_back({std::stod(a), std::stod(b)});
    } catch (const std::exception&) {
      throw ValidationError("prior CSV line " + std::to_string(lineno) + ": not a number");
    }
  }
  return Prior::custom(std::move(atoms));
}

double denoiser(const Prior& prior, double a, double b) {
  if (prior.is_gaussian()) {
    if (!(1.0 + b > 0.0)) throw ValidationError("gaussian denoiser needs 1 + b > 0");
    return a / (1.0 + b);
  }
  double mean = 0.0;
  log_weight(prior.atoms(), a, b, &mean);
  return mean;
}

double overlap_of_snr(const Prior& prior, double mhat) {
  check_snr(mhat);
  if (mhat == 0.0) return prior.is_gaussian() ? 0.0 : prior.mean() * prior.mean();
  if (prior.is_gaussian()) return mhat / (1.0 + mhat);
  const double s = std::sqrt(mhat);
  const double m = channel_expect(prior, [&](double x, double z) {
    return x * denoiser(prior, s * z + mhat * x, mhat);
  });
  return std::clamp(m, 0.0, 1.0);
}

double posterior_mean_square(const Prior& prior, double mhat) {
  check_snr(mhat);
  const double s = std::sqrt(mhat);
  return channel_expect(prior, [&](double x, double z) {
    const double e = denoiser(prior, s * z + mhat * x, mhat);
    return e * e;
  });
}

double scalar_mmse(const Prior& prior, double mhat) { return 1.0 - overlap_of_snr(prior, mhat); }

DmmseValue dmmse(const Prior& prior, double omega) {
  if (!(omega >= 0.0 && omega < 1.0)) throw ValidationError("dmmse requires omega in [0, 1)");
  const double snr = omega / (1.0 - omega);
  if (prior.is_gaussian()) return {1.0, false};
  const double mmse = scalar_mmse(prior, snr);
  if (mmse <= 0.0) return {0.0, false};
  const double inv = 1.0 / mmse - snr;
  if (!(inv > 1e-14 / mmse)) return {std::numeric_limits<double>::infinity(), true};
  return {1.0 / inv, false};
}

double log_partition(const Prior& prior, double mhat) {
  check_snr(mhat);
  if (prior.is_gaussian()) return -0.5 * std::log1p(mhat) + 0.5 * mhat;
  const double s = std::sqrt(mhat);
  return channel_expect(prior, [&](double x, double z) {
    return log_weight(prior.atoms(), s * z + mhat * x, mhat, nullptr);
  });
}

}  // namespace spiked
