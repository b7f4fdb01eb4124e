#pragma once

#include <vector>

namespace spiked {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1). Weights sum to one.
QuadratureRule gauss_hermite_normal(int n);

// Shared 61-point Gauss-Hermite rule for smooth integrands.
const QuadratureRule& standard_normal_rule();

// E[f(Z)] by composite Gauss-Legendre on [-cutoff, cutoff] against the normal
// density. Resolves the sharp tanh-like posterior means of discrete priors at
// large SNR, where a single Hermite rule loses several digits.
QuadratureRule composite_normal(int panels, int order, double cutoff);

// 96 panels of order 16 on [-12, 12].
const QuadratureRule& channel_rule();

}  // namespace spiked
