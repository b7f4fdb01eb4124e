#include "spiked/quadrature.hpp"

#include <gsl/gsl_integration.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "spiked/error.hpp"

namespace spiked {

namespace {

struct FixedDeleter {
  void operator()(gsl_integration_fixed_workspace* w) const { gsl_integration_fixed_free(w); }
};

QuadratureRule from_gsl(const gsl_integration_fixed_type* type, int n, double a, double b) {
  if (n < 1) throw ValidationError("quadrature order must be positive");
  std::unique_ptr<gsl_integration_fixed_workspace, FixedDeleter> ws(
      gsl_integration_fixed_alloc(type, static_cast<size_t>(n), a, b, 0.0, 0.0));
  if (!ws) throw NumericalError("gsl_integration_fixed_alloc failed");
  const double* x = gsl_integration_fixed_nodes(ws.get());
  const double* w = gsl_integration_fixed_weights(ws.get());
  QuadratureRule rule;
  rule.nodes.assign(x, x + n);
  rule.weights.assign(w, w + n);
  return rule;
}

}  // namespace

QuadratureRule gauss_legendre(int n, double a, double b) {
  return from_gsl(gsl_integration_fixed_legendre, n, a, b);
}

QuadratureRule gauss_hermite_normal(int n) {
  // GSL's Hermite weight is exp(-b (x - a)^2); b = 1/2 gives the normal kernel.
  QuadratureRule rule = from_gsl(gsl_integration_fixed_hermite, n, 0.0, 0.5);
  const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
  for (double& w : rule.weights) w /= total;
  return rule;
}

const QuadratureRule& standard_normal_rule() {
  static const QuadratureRule rule = gauss_hermite_normal(61);
  return rule;
}

QuadratureRule composite_normal(int panels, int order, double cutoff) {
  if (panels < 1 || order < 1 || !(cutoff > 0.0)) throw std::invalid_argument("bad composite rule shape");
  const QuadratureRule ref = gauss_legendre(order);
  const double width = 2.0 * cutoff / panels;
  QuadratureRule rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels * order));
  rule.weights.reserve(static_cast<std::size_t>(panels * order));
  for (int p = 0; p < panels; ++p) {
    const double mid = -cutoff + (p + 0.5) * width;
    for (std::size_t k = 0; k < ref.nodes.size(); ++k) {
      const double z = mid + 0.5 * width * ref.nodes[k];
      rule.nodes.push_back(z);
      rule.weights.push_back(0.5 * width * ref.weights[k] * std::exp(-0.5 * z * z));
    }
  }
  const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
  for (double& w : rule.weights) w /= total;
  return rule;
}

const QuadratureRule& channel_rule() {
  static const QuadratureRule rule = composite_normal(96, 16, 12.0);
  return rule;
}

}  // namespace spiked
