#include "spiked/kernels.hpp"

#include "spiked/error.hpp"

namespace spiked::kernels {

namespace {

void check_shapes(const Eigen::MatrixXd& JY, const Eigen::VectorXd& m, const Eigen::VectorXd& m_prev) {
  if (JY.rows() != JY.cols() || JY.rows() != m.size() || m.size() != m_prev.size())
    throw ValidationError("TAP update: matrix and vector sizes differ");
}

// Fail before entering a parallel region rather than inside it.
void check_gamma(const Prior& prior, double gamma) {
  if (prior.is_gaussian() && !(1.0 + gamma > 0.0))
    throw NumericalError("TAP update: gaussian denoiser needs 1 + gamma > 0");
}

}  // namespace

namespace serial {

void tap_update(const Eigen::MatrixXd& JY, const Eigen::VectorXd& m, const Eigen::VectorXd& m_prev,
                double gamma, double tau, const Prior& prior, Eigen::VectorXd& out) {
  check_shapes(JY, m, m_prev);
  check_gamma(prior, gamma);
  const Eigen::Index n = m.size();
  out.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double field = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) field += JY(j, i) * m[j];
    field += gamma * m_prev[i];
    out[i] = tau * m[i] + (1.0 - tau) * denoiser(prior, field, gamma);
  }
}

Eigen::VectorXd coupling_table(const EffectiveCoupling& jc, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = jc(x[i]);
  return out;
}

}  // namespace serial

namespace omp {

void tap_update(const Eigen::MatrixXd& JY, const Eigen::VectorXd& m, const Eigen::VectorXd& m_prev,
                double gamma, double tau, const Prior& prior, Eigen::VectorXd& out) {
  check_shapes(JY, m, m_prev);
  check_gamma(prior, gamma);
  const Eigen::Index n = m.size();
  out.resize(n);
  // JY is symmetric, so row i is the contiguous column i.
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double field = JY.col(i).dot(m) + gamma * m_prev[i];
    out[i] = tau * m[i] + (1.0 - tau) * denoiser(prior, field, gamma);
  }
}

Eigen::VectorXd coupling_table(const EffectiveCoupling& jc, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = jc(x[i]);
  return out;
}

}  // namespace omp

}  // namespace spiked::kernels
