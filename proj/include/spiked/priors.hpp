#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spiked/random.hpp"
#include "spiked/spectra.hpp"

namespace spiked {

enum class PriorKind { gaussian, rademacher, two_point, sparse_rademacher, custom_atoms };

std::string to_string(PriorKind kind);

struct Atom {
  double value;
  double prob;
};

/// Signal law P_X. Every kind except gaussian is a finite atom list.
class Prior {
 public:
  static Prior gaussian();
  static Prior rademacher();
  /// eps^2 delta_{1/eps} + (1 - eps^2) delta_0. Mean is eps, not zero.
  static Prior two_point(double eps = 0.125);
  /// (1 - eps^2) delta_0 + eps^2/2 (delta_{1/eps} + delta_{-1/eps}).
  static Prior sparse_rademacher(double eps);
  static Prior sparse_rademacher();
  /// Probabilities are renormalized; mean 0 and second moment 1 are enforced to 1e-9.
  static Prior custom(std::vector<Atom> atoms);

  PriorKind kind() const noexcept { return kind_; }
  bool is_gaussian() const noexcept { return kind_ == PriorKind::gaussian; }
  bool sign_symmetric() const noexcept { return sign_symmetric_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  double epsilon() const noexcept { return epsilon_; }
  double mean() const;
  double second_moment() const;

  double sample(Rng& rng) const;

 private:
  PriorKind kind_ = PriorKind::gaussian;
  std::vector<Atom> atoms_;
  double epsilon_ = 0.0;
  bool sign_symmetric_ = true;
};

/// Build from a config name; `params` may carry "epsilon".
Prior make_prior(const std::string& name, const ParamMap& params = {});

/// Two-column CSV `value,prob` (header required, # comments allowed).
Prior read_prior_csv(std::istream& is);

/// Posterior mean of x under P_X(x) exp(a x - b x^2 / 2).
double denoiser(const Prior& prior, double a, double b);

/// m(mhat) = E_{Z,X}[X <x>] for the channel sqrt(mhat) X + Z.
double overlap_of_snr(const Prior& prior, double mhat);

/// E_{Z,X}[<x>^2]; equals overlap_of_snr by the Nishimori identity.
double posterior_mean_square(const Prior& prior, double mhat);

/// 1 - overlap_of_snr.
double scalar_mmse(const Prior& prior, double mhat);

struct DmmseValue {
  double value;
  bool infinite;
};

/// 1/dmmse = 1/mmse(omega) - omega/(1 - omega), mmse(omega) = scalar_mmse(omega/(1 - omega)).
DmmseValue dmmse(const Prior& prior, double omega);

/// E_{Z,X} log int dP_X(x) exp(sqrt(mhat) Z x - mhat x^2/2 + mhat X x).
double log_partition(const Prior& prior, double mhat);

}  // namespace spiked
